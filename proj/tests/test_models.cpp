#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"

#include "asc/common.hpp"
#include "asc/models.hpp"

using namespace asc;
using model::DenseNetConfig;
using model::Patch;

namespace {

constexpr int64_t kSide = 128;

DenseNetConfig toy_config() {
  DenseNetConfig c;
  c.initial_channels = 8;
  c.block_layers = {1, 1, 1, 1};
  c.growth_rate = 4;
  c.bottleneck_factor = 2;
  c.compression = 1.0;
  c.num_classes = 2;
  return c;
}

// class 0: bright top half; class 1: bright bottom half
Patch striped_patch(int64_t label, uint64_t seed) {
  Patch p;
  p.segment_id = "p" + std::to_string(seed);
  p.label = label;
  p.pixels.resize(static_cast<size_t>(kSide * kSide));
  Rng rng(seed);
  for (int64_t r = 0; r < kSide; ++r)
    for (int64_t c = 0; c < kSide; ++c) {
      const bool top = r < kSide / 2;
      const double base = (top == (label == 0)) ? 1.0 : -1.0;
      p.pixels[static_cast<size_t>(r * kSide + c)] =
          static_cast<float>(base + 0.1 * rng.normal());
    }
  return p;
}

std::vector<Patch> striped_set(int per_class, uint64_t seed0) {
  std::vector<Patch> patches;
  for (int i = 0; i < per_class; ++i) {
    patches.push_back(striped_patch(0, seed0 + 2 * static_cast<uint64_t>(i)));
    patches.push_back(striped_patch(1, seed0 + 2 * static_cast<uint64_t>(i) + 1));
  }
  return patches;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("default structure walks 64 to 412 channels") {
  auto trace = model::structure(model::default_config(15));
  CHECK(trace.block_in_channels == std::vector<int64_t>{64, 100, 172, 316});
  CHECK(trace.block_out_channels == std::vector<int64_t>{100, 172, 316, 412});
  CHECK(trace.block_spatial == std::vector<int64_t>{128, 64, 32, 16});
  CHECK(trace.final_channels == 412);
  CHECK(trace.final_spatial == 16);
  REQUIRE(trace.layer_in_channels[1].size() == 6);
  CHECK(trace.layer_in_channels[1][0] == 100);
  CHECK(trace.layer_in_channels[1][5] == 160);
}

TEST_CASE("a two-layer first block grows 64 to 88") {
  auto config = model::default_config(15);
  config.block_layers = {2, 6, 12, 8};
  auto trace = model::structure(config);
  CHECK(trace.block_out_channels[0] == 88);

  config.compression = 0.5;
  trace = model::structure(config);
  CHECK(trace.block_in_channels[1] == 44);  // ceil(0.5 * 88)
}

TEST_CASE("multiscale block 1 uses the per-layer growth schedule") {
  auto config = model::default_config(15);
  config.block_layers = {4, 6, 12, 8};
  config.multiscale = model::default_multiscale_spec();
  auto trace = model::structure(config);
  CHECK(trace.block_out_channels[0] == 64 + 16 + 12 + 8 + 4);
  CHECK(trace.layer_in_channels[0][1] == 80);
  CHECK(trace.block_out_channels[1] == 104 + 6 * 12);
}

TEST_CASE("a degenerate multiscale spec reproduces the single-scale inventory") {
  auto plain_config = model::default_config(4);
  plain_config.block_layers = {2, 2, 2, 2};
  auto plain = model::build_densenet(plain_config, {"a", "b", "c", "d"}, 5);

  auto ms_config = plain_config;
  ms_config.multiscale = model::MultiScaleSpec{{{3, 12}, {3, 12}}};
  auto ms = model::build_multiscale_densenet(ms_config, {"a", "b", "c", "d"}, 5);

  CHECK(model::shape_inventory(plain) == model::shape_inventory(ms));
}

TEST_CASE("config validation rejects malformed setups") {
  auto bad = model::default_config(15);
  bad.block_layers = {3, 6, 12};
  CHECK_THROWS_AS(model::structure(bad), Error);

  bad = model::default_config(15);
  bad.compression = 0.0;
  CHECK_THROWS_AS(model::structure(bad), Error);
  bad.compression = 1.5;
  CHECK_THROWS_AS(model::structure(bad), Error);

  bad = model::default_config(1);
  CHECK_THROWS_AS(model::structure(bad), Error);

  auto ms = model::default_config(15);
  ms.block_layers = {2, 6, 12, 8};
  ms.multiscale = model::MultiScaleSpec{{{4, 12}, {3, 12}}};  // even width
  CHECK_THROWS_AS(model::structure(ms), Error);
  ms.multiscale = model::MultiScaleSpec{{{3, 12}, {5, 12}}};  // widening
  CHECK_THROWS_AS(model::structure(ms), Error);
  ms.multiscale = model::MultiScaleSpec{{{5, 8}, {3, 12}}};  // growth increases
  CHECK_THROWS_AS(model::structure(ms), Error);
  ms.multiscale = model::MultiScaleSpec{{{3, 12}}};  // wrong layer count
  CHECK_THROWS_AS(model::structure(ms), Error);

  CHECK_THROWS_AS(model::build_densenet(ms, {"a", "b"}, 1), Error);
  auto plain = model::default_config(15);
  CHECK_THROWS_AS(model::build_multiscale_densenet(plain, {"a", "b"}, 1), Error);
}

TEST_CASE("an untrained model is exactly uniform on zero input") {
  auto m = model::build_densenet(toy_config(), {"a", "b"}, 7);
  auto batch = ag::Tensor<float>::zeros({3, 1, kSide, kSide});
  auto logits = m.forward(batch, false);
  REQUIRE(logits.shape() == std::vector<int64_t>{3, 2});
  for (float v : logits.data()) CHECK(v == 0.0f);

  Patch zero;
  zero.segment_id = "z";
  zero.label = 0;
  zero.pixels.assign(static_cast<size_t>(kSide * kSide), 0.0f);
  auto pred = model::predict_segment(m, {&zero}, model::Aggregation::kMeanLogProb);
  REQUIRE(pred.posterior.size() == 2);
  CHECK(pred.posterior[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(pred.posterior[1] == doctest::Approx(0.5).epsilon(1e-9));

  auto wrong = ag::Tensor<float>::zeros({3, 1, 64, 64});
  CHECK_THROWS_AS(m.forward(wrong, false), Error);
  CHECK_THROWS_AS(model::predict_segment(m, {}, model::Aggregation::kMajority), Error);
}

TEST_CASE("identical rows in a batch produce identical logits") {
  auto m = model::build_densenet(toy_config(), {"a", "b"}, 9);
  auto one = striped_patch(0, 77);
  std::vector<float> data;
  for (int i = 0; i < 3; ++i) data.insert(data.end(), one.pixels.begin(), one.pixels.end());
  auto logits = m.forward(
      ag::Tensor<float>::from_data({3, 1, kSide, kSide}, std::move(data)), false);
  for (int64_t c = 0; c < 2; ++c) {
    CHECK(logits.data()[static_cast<size_t>(c)] == logits.data()[static_cast<size_t>(2 + c)]);
    CHECK(logits.data()[static_cast<size_t>(c)] == logits.data()[static_cast<size_t>(4 + c)]);
  }
}

TEST_CASE("a separable toy problem trains to perfect validation accuracy") {
  auto m = model::build_densenet(toy_config(), {"a", "b"}, 11);
  auto train_patches = striped_set(8, 1000);
  auto val_patches = striped_set(4, 2000);

  model::TrainOptions opts;
  opts.epochs = 20;
  opts.batch_size = 4;
  opts.lr = 3e-3;
  opts.seed = 5;
  auto log = model::train(m, train_patches, val_patches, opts);
  CHECK(log.best_val_accuracy == 1.0);
  CHECK(log.best_epoch <= 20);

  // the trained model serves segment predictions
  auto a0 = striped_patch(0, 3000), a1 = striped_patch(0, 3001), b0 = striped_patch(1, 3002);
  auto majority =
      model::predict_segment(m, {&a0, &a1, &b0}, model::Aggregation::kMajority);
  CHECK(majority.class_index == 0);
  double total = 0.0;
  for (double v : majority.posterior) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  auto single = model::predict_segment(m, {&b0}, model::Aggregation::kMeanLogProb);
  CHECK(single.class_index == 1);
}

TEST_CASE("training twice from the same seed writes the same log") {
  auto train_patches = striped_set(4, 4000);
  auto val_patches = striped_set(2, 5000);
  model::TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 4;
  opts.lr = 1e-3;
  opts.seed = 21;

  auto m1 = model::build_densenet(toy_config(), {"a", "b"}, 13);
  auto m2 = model::build_densenet(toy_config(), {"a", "b"}, 13);
  auto log1 = model::train(m1, train_patches, val_patches, opts);
  auto log2 = model::train(m2, train_patches, val_patches, opts);
  CHECK(log1.train_loss == log2.train_loss);
  CHECK(log1.val_accuracy == log2.val_accuracy);
  CHECK(log1.best_epoch == log2.best_epoch);
  for (size_t i = 0; i < m1.params.size(); ++i)
    CHECK(m1.params[i].tensor.data() == m2.params[i].tensor.data());
}

TEST_CASE("zero learning rate leaves the model untouched") {
  auto m = model::build_densenet(toy_config(), {"a", "b"}, 15);
  std::vector<std::vector<float>> before;
  for (const auto& p : m.params) before.push_back(p.tensor.data());
  auto stats_before = m.stats;

  auto train_patches = striped_set(3, 6000);
  model::TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 4;
  opts.lr = 0.0;
  auto log = model::train(m, train_patches, train_patches, opts);

  for (size_t i = 0; i < m.params.size(); ++i)
    CHECK(m.params[i].tensor.data() == before[i]);
  for (size_t i = 0; i < m.stats.size(); ++i) {
    CHECK(m.stats[i].mean == stats_before[i].mean);
    CHECK(m.stats[i].var == stats_before[i].var);
  }
  for (size_t e = 1; e < log.val_accuracy.size(); ++e)
    CHECK(log.val_accuracy[e] == log.val_accuracy[0]);

  CHECK_THROWS_AS(model::train(m, {}, train_patches, opts), Error);
  CHECK_THROWS_AS(model::train(m, train_patches, {}, opts), Error);
}

TEST_CASE("model checkpoints round trip") {
  auto dir = std::filesystem::temp_directory_path() / "asc_test_model";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  auto config = toy_config();
  config.compression = 0.75;
  auto m = model::build_densenet(config, {"cafe", "park"}, 17);
  // make the running stats non-trivial so the round trip covers them
  for (auto& s : m.stats)
    for (size_t i = 0; i < s.mean.size(); ++i) s.mean[i] = 0.01f * static_cast<float>(i + 1);

  model::ModelMeta meta;
  meta.best_epoch = 4;
  meta.seed = 99;
  model::save_model(dir / "m.ascp", m, meta);
  CHECK(std::filesystem::exists(dir / "m.ascp.manifest.txt"));

  auto loaded = model::load_model(dir / "m.ascp");
  CHECK(loaded.class_labels == m.class_labels);
  CHECK(loaded.config.compression == m.config.compression);
  CHECK(model::shape_inventory(loaded) == model::shape_inventory(m));
  for (size_t i = 0; i < m.params.size(); ++i)
    CHECK(loaded.params[i].tensor.data() == m.params[i].tensor.data());
  for (size_t i = 0; i < m.stats.size(); ++i) CHECK(loaded.stats[i].mean == m.stats[i].mean);

  // identical forward behavior and byte-identical re-save
  auto batch = ag::Tensor<float>::zeros({1, 1, kSide, kSide});
  Rng rng(23);
  for (auto& v : batch.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  auto y1 = m.forward(batch, false);
  auto y2 = loaded.forward(batch, false);
  CHECK(y1.data() == y2.data());

  model::save_model(dir / "m2.ascp", loaded, meta);
  CHECK(slurp(dir / "m.ascp") == slurp(dir / "m2.ascp"));
  CHECK(slurp(dir / "m.ascp.manifest.txt") == slurp(dir / "m2.ascp.manifest.txt"));
}
