#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "asc/common.hpp"
#include "asc/feature_store.hpp"

using namespace asc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("asc_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

dsp::FeatureRecord make_record(const std::string& id, const std::string& label, int64_t rows,
                               int64_t cols, uint64_t seed) {
  dsp::FeatureRecord rec;
  rec.segment_id = id;
  rec.label = label;
  rec.rows = rows;
  rec.cols = cols;
  rec.sample_variance = 0.5 + static_cast<double>(seed);
  Rng rng(seed);
  rec.data.resize(static_cast<size_t>(rows * cols));
  for (auto& v : rec.data) v = static_cast<float>(rng.uniform(-20.0, 5.0));
  return rec;
}

}  // namespace

TEST_CASE("record files survive a write-read-write cycle byte for byte") {
  auto dir = fresh_dir("ascf_roundtrip");
  auto rec = make_record("seg", "park", 40, 7, 3);

  feat::write_record_file(dir / "a.bin", rec);
  auto loaded = feat::read_record_file(dir / "a.bin");
  CHECK(loaded.rows == 40);
  CHECK(loaded.cols == 7);
  CHECK(loaded.data == rec.data);

  feat::write_record_file(dir / "b.bin", loaded);
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
}

TEST_CASE("record reader rejects junk") {
  auto dir = fresh_dir("ascf_junk");
  CHECK_THROWS_WITH_AS(feat::read_record_file(dir / "absent.bin"), doctest::Contains("absent"),
                       Error);
  {
    std::ofstream os(dir / "junk.bin", std::ios::binary);
    os << "not a record";
  }
  try {
    feat::read_record_file(dir / "junk.bin");
    FAIL("expected a malformed-header error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMalformedHeader);
  }
}

TEST_CASE("store writer and reader round trip") {
  auto dir = fresh_dir("store_roundtrip");
  auto a = make_record("scene/a#0", "park", 4, 6, 1);
  auto b = make_record("b#1", "street", 4, 6, 2);
  auto c = make_record("c#0@2", "park", 5, 60, 3);
  c.kind = dsp::FeatureKind::kMfcc;

  feat::StoreWriter writer(dir, {"park", "street"});
  writer.add(a);
  writer.add(b);
  writer.add(c);
  writer.finish();

  CHECK(fs::exists(dir / "records" / "scene__a#0.bin"));

  auto store = feat::open_store(dir);
  CHECK(store.class_labels == std::vector<std::string>{"park", "street"});
  REQUIRE(store.rows.size() == 3);
  CHECK(store.find("nope") == nullptr);

  const auto* row = store.find("c#0@2");
  REQUIRE(row != nullptr);
  CHECK(row->kind == "mfcc");
  CHECK(row->sample_variance == doctest::Approx(3.5).epsilon(1e-15));

  auto back = feat::load_record(store, *row);
  CHECK(back.segment_id == "c#0@2");
  CHECK(back.label == "park");
  CHECK(back.kind == dsp::FeatureKind::kMfcc);
  CHECK(back.rows == 5);
  CHECK(back.cols == 60);
  CHECK(back.data == c.data);
}

TEST_CASE("manifest shape must match the record file") {
  auto dir = fresh_dir("store_mismatch");
  feat::StoreWriter writer(dir, {"park"});
  writer.add(make_record("seg", "park", 4, 6, 9));
  writer.finish();

  auto store = feat::open_store(dir);
  feat::ManifestRow bad = store.rows[0];
  bad.cols += 1;
  try {
    feat::load_record(store, bad);
    FAIL("expected a dimension mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimensionMismatch);
  }
}

TEST_CASE("opening a store requires its index files") {
  auto dir = fresh_dir("store_empty");
  try {
    feat::open_store(dir);
    FAIL("expected a missing-file error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingFile);
  }
}

TEST_CASE("record file names are filesystem safe") {
  CHECK(feat::record_file_name("a/b") == "a__b.bin");
  CHECK(feat::record_file_name("a\\b") == "a__b.bin");
  CHECK(feat::record_file_name("plain#0@1") == "plain#0@1.bin");
}

TEST_CASE("pgm rendering scales to full range with low bands at the bottom") {
  auto dir = fresh_dir("pgm");
  dsp::FeatureRecord rec;
  rec.segment_id = "img";
  rec.label = "park";
  rec.rows = 2;
  rec.cols = 3;
  rec.data = {0.0f, 1.0f, 2.0f, 3.0f, 4.0f, 5.0f};
  feat::write_pgm(dir / "img.pgm", rec);

  std::string bytes = slurp(dir / "img.pgm");
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(bytes.substr(0, header.size()) == header);
  // top scanline is the highest band (row 1), bottom is row 0
  const auto* px = reinterpret_cast<const uint8_t*>(bytes.data() + header.size());
  CHECK(px[0] == 153);
  CHECK(px[1] == 204);
  CHECK(px[2] == 255);
  CHECK(px[3] == 0);
  CHECK(px[4] == 51);
  CHECK(px[5] == 102);

  dsp::FeatureRecord empty;
  CHECK_THROWS_AS(feat::write_pgm(dir / "none.pgm", empty), Error);
}
