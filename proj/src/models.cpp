#include "asc/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace asc::model {

namespace {

constexpr int64_t kPatchSide = 128;

void validate(const DenseNetConfig& c) {
  if (c.block_layers.size() != 4)
    raise(ErrorKind::kInvalidConfig, "exactly 4 dense blocks required");
  for (int64_t n : c.block_layers)
    if (n < 1) raise(ErrorKind::kInvalidConfig, "each block needs at least one layer");
  if (!(c.compression > 0.0 && c.compression <= 1.0))
    raise(ErrorKind::kInvalidConfig, strf("compression %g outside (0, 1]", c.compression));
  if (c.initial_channels < 1 || c.growth_rate < 1 || c.bottleneck_factor < 1)
    raise(ErrorKind::kInvalidConfig, "channel counts must be positive");
  if (c.num_classes < 2) raise(ErrorKind::kInvalidConfig, "need at least 2 classes");
  if (c.multiscale) {
    const auto& specs = c.multiscale->layer_specs;
    if (static_cast<int64_t>(specs.size()) != c.block_layers[0])
      raise(ErrorKind::kInvalidConfig,
            strf("multiscale spec has %zu layers but block 1 has %lld", specs.size(),
                 static_cast<long long>(c.block_layers[0])));
    for (size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].width < 1 || specs[i].width % 2 == 0)
        raise(ErrorKind::kInvalidConfig,
              strf("multiscale width %lld must be odd and positive",
                   static_cast<long long>(specs[i].width)));
      if (specs[i].width > 2 * kPatchSide - 1)
        raise(ErrorKind::kInvalidConfig, "multiscale width exceeds the padded input");
      if (specs[i].growth < 1)
        raise(ErrorKind::kInvalidConfig, "multiscale growth must be positive");
      if (i > 0 && specs[i].width > specs[i - 1].width)
        raise(ErrorKind::kInvalidConfig, "multiscale widths must be non-increasing");
      if (i > 0 && specs[i].growth > specs[i - 1].growth)
        raise(ErrorKind::kInvalidConfig, "multiscale growths must be non-increasing");
    }
  }
}

// (growth, temporal width) of a given dense layer under the config.
std::pair<int64_t, int64_t> layer_plan(const DenseNetConfig& c, size_t block, size_t layer) {
  if (block == 0 && c.multiscale) {
    const auto& s = c.multiscale->layer_specs[layer];
    return {s.growth, s.width};
  }
  return {c.growth_rate, 3};
}

int add_param(Model& m, std::string name, std::vector<int64_t> dims, Rng* rng, int64_t fan_in) {
  const int64_t n = [&] {
    int64_t p = 1;
    for (int64_t d : dims) p *= d;
    return p;
  }();
  std::vector<float> data(static_cast<size_t>(n), 0.0f);
  if (rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : data) x = static_cast<float>(rng->uniform(-bound, bound));
  }
  ag::Parameter<float> p;
  p.name = std::move(name);
  p.tensor = ag::Tensor<float>::from_data(std::move(dims), std::move(data), true);
  m.params.push_back(std::move(p));
  return static_cast<int>(m.params.size()) - 1;
}

int add_const_param(Model& m, std::string name, int64_t n, float value) {
  ag::Parameter<float> p;
  p.name = std::move(name);
  p.tensor =
      ag::Tensor<float>::from_data({n}, std::vector<float>(static_cast<size_t>(n), value), true);
  m.params.push_back(std::move(p));
  return static_cast<int>(m.params.size()) - 1;
}

BnRef add_bn(Model& m, const std::string& prefix, int64_t channels) {
  BnRef ref;
  ref.gamma = add_const_param(m, prefix + ".gamma", channels, 1.0f);
  ref.beta = add_const_param(m, prefix + ".beta", channels, 0.0f);
  m.stats.emplace_back(channels);
  m.stats_names.push_back(prefix);
  ref.stats = static_cast<int>(m.stats.size()) - 1;
  return ref;
}

Model build_impl(const DenseNetConfig& config, std::vector<std::string> class_labels,
                 uint64_t seed) {
  validate(config);
  Model m;
  m.config = config;
  m.class_labels = std::move(class_labels);
  Rng rng(seed);

  int64_t total_layers = 0;
  for (int64_t n : config.block_layers) total_layers += n;
  m.params.reserve(static_cast<size_t>(1 + 6 * total_layers + 3 * 3 + 4));
  m.stats.reserve(static_cast<size_t>(2 * total_layers + 3 + 1));

  m.stem.w = add_param(m, "stem.conv.w", {config.initial_channels, 1, 3, 3}, &rng, 9);
  m.stem.pad_h = m.stem.pad_w = 1;

  int64_t channels = config.initial_channels;
  for (size_t b = 0; b < 4; ++b) {
    std::vector<DenseLayerRef> block;
    for (size_t l = 0; l < static_cast<size_t>(config.block_layers[b]); ++l) {
      const auto [growth, width] = layer_plan(config, b, l);
      const int64_t bottleneck = config.bottleneck_factor * growth;
      const std::string prefix = strf("block%zu.layer%zu", b + 1, l + 1);
      DenseLayerRef layer;
      layer.bn1 = add_bn(m, prefix + ".bn1", channels);
      layer.conv1.w =
          add_param(m, prefix + ".conv1.w", {bottleneck, channels, 1, 1}, &rng, channels);
      layer.bn2 = add_bn(m, prefix + ".bn2", bottleneck);
      layer.conv2.w = add_param(m, prefix + ".conv2.w", {growth, bottleneck, 3, width}, &rng,
                                bottleneck * 3 * width);
      layer.conv2.pad_h = 1;
      layer.conv2.pad_w = (width - 1) / 2;
      block.push_back(layer);
      channels += growth;
    }
    m.blocks.push_back(std::move(block));
    if (b < 3) {
      const std::string prefix = strf("trans%zu", b + 1);
      TransitionRef trans;
      trans.bn = add_bn(m, prefix + ".bn", channels);
      const int64_t out =
          static_cast<int64_t>(std::ceil(config.compression * static_cast<double>(channels)));
      trans.conv.w = add_param(m, prefix + ".conv.w", {out, channels, 1, 1}, &rng, channels);
      m.transitions.push_back(trans);
      channels = out;
    }
  }

  m.tail_bn = add_bn(m, "tail.bn", channels);
  m.tail_w = add_param(m, "tail.linear.w", {config.num_classes, channels}, &rng, channels);
  m.tail_b = add_const_param(m, "tail.linear.b", config.num_classes, 0.0f);
  return m;
}

using FTensor = ag::Tensor<float>;

FTensor bn_relu(Model& m, const FTensor& x, const BnRef& bn, bool training) {
  auto h = ag::batchnorm2d(x, m.params[static_cast<size_t>(bn.gamma)].tensor,
                           m.params[static_cast<size_t>(bn.beta)].tensor,
                           m.stats[static_cast<size_t>(bn.stats)], training, m.bn_momentum);
  return ag::relu(h);
}

FTensor make_batch(const std::vector<Patch>& patches, const std::vector<int64_t>& idxs,
                   std::vector<int64_t>* labels) {
  const int64_t B = static_cast<int64_t>(idxs.size());
  std::vector<float> data(static_cast<size_t>(B * kPatchSide * kPatchSide));
  labels->clear();
  for (int64_t i = 0; i < B; ++i) {
    const Patch& p = patches[static_cast<size_t>(idxs[static_cast<size_t>(i)])];
    if (static_cast<int64_t>(p.pixels.size()) != kPatchSide * kPatchSide)
      raise(ErrorKind::kShapeMismatch, "patch is not 128x128: " + p.segment_id);
    std::copy(p.pixels.begin(), p.pixels.end(),
              data.begin() + i * kPatchSide * kPatchSide);
    labels->push_back(p.label);
  }
  return FTensor::from_data({B, 1, kPatchSide, kPatchSide}, std::move(data));
}

struct Snapshot {
  std::vector<std::vector<float>> param_data;
  std::vector<ag::BnStats<float>> stats;
};

Snapshot take_snapshot(const Model& m) {
  Snapshot s;
  for (const auto& p : m.params) s.param_data.push_back(p.tensor.data());
  s.stats = m.stats;
  return s;
}

void restore_snapshot(Model& m, const Snapshot& s) {
  for (size_t i = 0; i < m.params.size(); ++i) m.params[i].tensor.data() = s.param_data[i];
  m.stats = s.stats;
}

double eval_accuracy(Model& m, const std::vector<Patch>& patches, int64_t batch_size) {
  const int64_t n = static_cast<int64_t>(patches.size());
  int64_t correct = 0;
  std::vector<int64_t> labels;
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idxs;
    for (int64_t i = start; i < std::min(n, start + batch_size); ++i) idxs.push_back(i);
    auto logits = m.forward(make_batch(patches, idxs, &labels), false);
    const int64_t C = logits.shape()[1];
    for (size_t r = 0; r < idxs.size(); ++r) {
      const float* row = logits.data().data() + static_cast<int64_t>(r) * C;
      int64_t arg = 0;
      for (int64_t c = 1; c < C; ++c)
        if (row[c] > row[arg]) arg = c;
      if (arg == labels[r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::string join_csv(const std::vector<std::string>& parts) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

DenseNetConfig default_config(int64_t num_classes) {
  DenseNetConfig c;
  c.num_classes = num_classes;
  return c;
}

DenseNetConfig tiny_config(int64_t num_classes) {
  DenseNetConfig c;
  c.initial_channels = 16;
  c.block_layers = {2, 2, 2, 2};
  c.growth_rate = 8;
  c.bottleneck_factor = 4;
  c.compression = 1.0;
  c.num_classes = num_classes;
  return c;
}

MultiScaleSpec default_multiscale_spec() {
  return {{{9, 16}, {7, 12}, {5, 8}, {3, 4}}};
}

MultiScaleSpec tiny_multiscale_spec() {
  return {{{9, 12}, {3, 8}}};
}

Model build_densenet(const DenseNetConfig& config, std::vector<std::string> class_labels,
                     uint64_t seed) {
  if (config.multiscale)
    raise(ErrorKind::kInvalidConfig,
          "config carries a multiscale spec; use build_multiscale_densenet");
  return build_impl(config, std::move(class_labels), seed);
}

Model build_multiscale_densenet(const DenseNetConfig& config,
                                std::vector<std::string> class_labels, uint64_t seed) {
  if (!config.multiscale)
    raise(ErrorKind::kInvalidConfig, "multiscale spec missing from config");
  return build_impl(config, std::move(class_labels), seed);
}

ag::Tensor<float> Model::forward(const ag::Tensor<float>& batch, bool training) {
  if (batch.shape().size() != 4 || batch.shape()[1] != 1 || batch.shape()[2] != kPatchSide ||
      batch.shape()[3] != kPatchSide)
    raise(ErrorKind::kShapeMismatch, "forward expects [N,1,128,128] input");

  auto x = ag::conv2d(batch, params[static_cast<size_t>(stem.w)].tensor, stem.pad_h, stem.pad_w);
  for (size_t b = 0; b < blocks.size(); ++b) {
    for (const auto& layer : blocks[b]) {
      auto h = bn_relu(*this, x, layer.bn1, training);
      h = ag::conv2d(h, params[static_cast<size_t>(layer.conv1.w)].tensor, 0, 0);
      h = bn_relu(*this, h, layer.bn2, training);
      h = ag::conv2d(h, params[static_cast<size_t>(layer.conv2.w)].tensor, layer.conv2.pad_h,
                     layer.conv2.pad_w);
      x = ag::concat_channels<float>({x, h});
    }
    if (b < transitions.size()) {
      const auto& trans = transitions[b];
      auto h = bn_relu(*this, x, trans.bn, training);
      h = ag::conv2d(h, params[static_cast<size_t>(trans.conv.w)].tensor, 0, 0);
      x = ag::avg_pool_2x2(h);
    }
  }
  auto h = bn_relu(*this, x, tail_bn, training);
  h = ag::global_avg_pool(h);
  return ag::linear(h, params[static_cast<size_t>(tail_w)].tensor,
                    params[static_cast<size_t>(tail_b)].tensor);
}

std::vector<ag::Parameter<float>*> Model::trainable() {
  std::vector<ag::Parameter<float>*> out;
  for (auto& p : params)
    if (p.trainable) out.push_back(&p);
  return out;
}

StageTrace structure(const DenseNetConfig& config, int64_t input_spatial) {
  validate(config);
  StageTrace trace;
  int64_t channels = config.initial_channels;
  int64_t spatial = input_spatial;
  for (size_t b = 0; b < 4; ++b) {
    trace.block_in_channels.push_back(channels);
    trace.block_spatial.push_back(spatial);
    std::vector<int64_t> per_layer;
    for (size_t l = 0; l < static_cast<size_t>(config.block_layers[b]); ++l) {
      per_layer.push_back(channels);
      channels += layer_plan(config, b, l).first;
    }
    trace.layer_in_channels.push_back(std::move(per_layer));
    trace.block_out_channels.push_back(channels);
    if (b < 3) {
      channels =
          static_cast<int64_t>(std::ceil(config.compression * static_cast<double>(channels)));
      spatial /= 2;
    }
  }
  trace.final_channels = channels;
  trace.final_spatial = spatial;
  return trace;
}

std::vector<std::pair<std::string, std::vector<int64_t>>> shape_inventory(const Model& m) {
  std::vector<std::pair<std::string, std::vector<int64_t>>> out;
  for (const auto& p : m.params) out.emplace_back(p.name, p.tensor.shape());
  std::sort(out.begin(), out.end());
  return out;
}

TrainLog train(Model& m, const std::vector<Patch>& train_patches,
               const std::vector<Patch>& val_patches, const TrainOptions& opts) {
  if (train_patches.empty()) raise(ErrorKind::kEmptySplit, "train split is empty");
  if (val_patches.empty()) raise(ErrorKind::kEmptySplit, "validation split is empty");
  std::vector<int64_t> class_counts(static_cast<size_t>(m.config.num_classes), 0);
  for (const auto& p : train_patches) {
    if (p.label < 0 || p.label >= m.config.num_classes)
      raise(ErrorKind::kLabelOutOfRange, "train patch label outside class range");
    ++class_counts[static_cast<size_t>(p.label)];
  }
  for (size_t c = 0; c < class_counts.size(); ++c)
    if (class_counts[c] == 0)
      log_warn(strf("class %zu has no training patches", c));

  // With lr=0 nothing may move, including BN running stats: zero the update
  // momentum for the duration so evaluation stays frozen too.
  const double saved_momentum = m.bn_momentum;
  if (opts.lr == 0.0) m.bn_momentum = 0.0;

  Rng rng(opts.seed);
  ag::Adam<float> adam({opts.lr, 0.9, 0.999, 1e-8});
  auto trainable = m.trainable();

  TrainLog log;
  Snapshot best = take_snapshot(m);
  int64_t since_best = 0;
  const int64_t n = static_cast<int64_t>(train_patches.size());

  for (int64_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::vector<int64_t> labels;
    for (int64_t start = 0; start < n; start += opts.batch_size) {
      std::vector<int64_t> idxs(order.begin() + start,
                                order.begin() + std::min(n, start + opts.batch_size));
      auto logits = m.forward(make_batch(train_patches, idxs, &labels), true);
      auto loss = ag::softmax_cross_entropy(logits, labels);
      epoch_loss += loss.scalar() * static_cast<double>(idxs.size());
      if (opts.lr != 0.0) {
        loss.backward();
        adam.step(trainable);
      }
    }
    log.train_loss.push_back(epoch_loss / static_cast<double>(n));

    const double acc = eval_accuracy(m, val_patches, opts.batch_size);
    log.val_accuracy.push_back(acc);
    if (opts.verbose)
      log_info(strf("epoch %lld: train loss %.4f, val accuracy %.4f",
                    static_cast<long long>(epoch), log.train_loss.back(), acc));

    if (acc > log.best_val_accuracy || log.best_epoch == 0) {
      log.best_val_accuracy = acc;
      log.best_epoch = epoch;
      best = take_snapshot(m);
      since_best = 0;
    } else if (++since_best >= opts.early_stop_patience) {
      log.stopped_early = true;
      break;
    }
  }

  restore_snapshot(m, best);
  m.bn_momentum = saved_momentum;
  return log;
}

SegmentPrediction predict_segment(Model& m, const std::vector<const Patch*>& patches,
                                  Aggregation agg) {
  if (patches.empty()) raise(ErrorKind::kNoPatches, "predict_segment needs at least one patch");
  const int64_t P = static_cast<int64_t>(patches.size());
  const int64_t C = m.config.num_classes;
  std::vector<float> data(static_cast<size_t>(P * kPatchSide * kPatchSide));
  for (int64_t i = 0; i < P; ++i) {
    const Patch& p = *patches[static_cast<size_t>(i)];
    if (static_cast<int64_t>(p.pixels.size()) != kPatchSide * kPatchSide)
      raise(ErrorKind::kShapeMismatch, "patch is not 128x128: " + p.segment_id);
    std::copy(p.pixels.begin(), p.pixels.end(), data.begin() + i * kPatchSide * kPatchSide);
  }
  auto logits =
      m.forward(FTensor::from_data({P, 1, kPatchSide, kPatchSide}, std::move(data)), false);
  const auto logp = ag::log_softmax_rows(logits);

  std::vector<double> mean_logp(static_cast<size_t>(C), 0.0);
  for (int64_t i = 0; i < P; ++i)
    for (int64_t c = 0; c < C; ++c)
      mean_logp[static_cast<size_t>(c)] += logp[static_cast<size_t>(i * C + c)];
  for (auto& v : mean_logp) v /= static_cast<double>(P);

  const auto argmax_mean = [&] {
    int64_t arg = 0;
    for (int64_t c = 1; c < C; ++c)
      if (mean_logp[static_cast<size_t>(c)] > mean_logp[static_cast<size_t>(arg)]) arg = c;
    return arg;
  };

  SegmentPrediction pred;
  if (agg == Aggregation::kMeanLogProb) {
    pred.class_index = argmax_mean();
  } else {
    std::vector<int64_t> votes(static_cast<size_t>(C), 0);
    for (int64_t i = 0; i < P; ++i) {
      int64_t arg = 0;
      for (int64_t c = 1; c < C; ++c)
        if (logp[static_cast<size_t>(i * C + c)] > logp[static_cast<size_t>(i * C + arg)])
          arg = c;
      ++votes[static_cast<size_t>(arg)];
    }
    const int64_t top = *std::max_element(votes.begin(), votes.end());
    std::vector<int64_t> tied;
    for (int64_t c = 0; c < C; ++c)
      if (votes[static_cast<size_t>(c)] == top) tied.push_back(c);
    if (tied.size() == 1) {
      pred.class_index = tied[0];
    } else {
      pred.class_index = tied[0];
      for (int64_t c : tied)
        if (mean_logp[static_cast<size_t>(c)] > mean_logp[static_cast<size_t>(pred.class_index)])
          pred.class_index = c;
    }
  }

  // Normalized exp(mean log prob) doubles as the reported posterior.
  double mx = mean_logp[0];
  for (double v : mean_logp) mx = std::max(mx, v);
  double denom = 0.0;
  pred.posterior.resize(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    pred.posterior[static_cast<size_t>(c)] = std::exp(mean_logp[static_cast<size_t>(c)] - mx);
    denom += pred.posterior[static_cast<size_t>(c)];
  }
  for (auto& v : pred.posterior) v /= denom;
  return pred;
}

void save_model(const std::filesystem::path& path, const Model& m, const ModelMeta& meta) {
  std::vector<ag::NamedArray> arrays;
  for (const auto& p : m.params)
    arrays.push_back({p.name, p.tensor.shape(), p.tensor.data()});
  for (size_t i = 0; i < m.stats.size(); ++i) {
    const auto& s = m.stats[i];
    arrays.push_back({m.stats_names[i] + ".running_mean",
                      {static_cast<int64_t>(s.mean.size())},
                      s.mean});
    arrays.push_back({m.stats_names[i] + ".running_var",
                      {static_cast<int64_t>(s.var.size())},
                      s.var});
  }
  ag::save_checkpoint(path, arrays);

  std::ofstream os(path.string() + ".manifest.txt", std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot write model manifest");
  const auto& c = m.config;
  os << "model_kind = " << (c.multiscale ? "msdensenet" : "densenet") << "\n";
  os << "initial_channels = " << c.initial_channels << "\n";
  {
    std::vector<std::string> parts;
    for (int64_t v : c.block_layers) parts.push_back(std::to_string(v));
    os << "block_layers = " << join_csv(parts) << "\n";
  }
  os << "growth_rate = " << c.growth_rate << "\n";
  os << "bottleneck_factor = " << c.bottleneck_factor << "\n";
  os << strf("compression = %.17g\n", c.compression);
  os << "num_classes = " << c.num_classes << "\n";
  if (c.multiscale) {
    std::vector<std::string> parts;
    for (const auto& s : c.multiscale->layer_specs)
      parts.push_back(std::to_string(s.width) + ":" + std::to_string(s.growth));
    os << "multiscale = " << join_csv(parts) << "\n";
  }
  os << "classes = " << join_csv(m.class_labels) << "\n";
  os << "best_epoch = " << meta.best_epoch << "\n";
  os << "seed = " << meta.seed << "\n";
  if (!os) raise(ErrorKind::kIOFailure, "model manifest write failed");
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path.string() + ".manifest.txt");
  if (!is) raise(ErrorKind::kMissingFile, "missing model manifest for " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      raise(ErrorKind::kMalformedHeader, "model manifest missing key '" + key + "'");
    return it->second;
  };

  DenseNetConfig c;
  c.initial_channels = std::stoll(need("initial_channels"));
  c.block_layers.clear();
  for (const auto& s : split_csv(need("block_layers"))) c.block_layers.push_back(std::stoll(s));
  c.growth_rate = std::stoll(need("growth_rate"));
  c.bottleneck_factor = std::stoll(need("bottleneck_factor"));
  c.compression = std::stod(need("compression"));
  c.num_classes = std::stoll(need("num_classes"));
  if (kv.count("multiscale")) {
    MultiScaleSpec spec;
    for (const auto& s : split_csv(kv["multiscale"])) {
      const auto colon = s.find(':');
      if (colon == std::string::npos)
        raise(ErrorKind::kMalformedHeader, "bad multiscale entry '" + s + "'");
      spec.layer_specs.push_back(
          {std::stoll(s.substr(0, colon)), std::stoll(s.substr(colon + 1))});
    }
    c.multiscale = std::move(spec);
  }

  Model m = build_impl(c, split_csv(need("classes")), 0);

  std::map<std::string, ag::NamedArray> by_name;
  for (auto& a : ag::load_checkpoint(path)) by_name[a.name] = std::move(a);
  auto fetch = [&](const std::string& name, const std::vector<int64_t>& dims)
      -> const ag::NamedArray& {
    auto it = by_name.find(name);
    if (it == by_name.end())
      raise(ErrorKind::kMalformedHeader, "checkpoint missing array '" + name + "'");
    if (it->second.dims != dims)
      raise(ErrorKind::kShapeMismatch, "checkpoint shape mismatch for '" + name + "'");
    return it->second;
  };
  for (auto& p : m.params) p.tensor.data() = fetch(p.name, p.tensor.shape()).data;
  for (size_t i = 0; i < m.stats.size(); ++i) {
    auto& s = m.stats[i];
    s.mean = fetch(m.stats_names[i] + ".running_mean",
                   {static_cast<int64_t>(s.mean.size())})
                 .data;
    s.var =
        fetch(m.stats_names[i] + ".running_var", {static_cast<int64_t>(s.var.size())}).data;
  }
  return m;
}

}  // namespace asc::model
