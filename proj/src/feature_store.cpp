#include "asc/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace asc::feat {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'A', 'S', 'C', 'F'};
constexpr uint32_t kVersion = 1;

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, '\t')) fields.push_back(field);
  return fields;
}

}  // namespace

const ManifestRow* FeatureStore::find(const std::string& segment_id) const {
  for (const auto& row : rows)
    if (row.segment_id == segment_id) return &row;
  return nullptr;
}

std::string record_file_name(const std::string& segment_id) {
  std::string name;
  name.reserve(segment_id.size() + 4);
  for (char c : segment_id) {
    if (c == '/' || c == '\\')
      name += "__";
    else
      name += c;
  }
  return name + ".bin";
}

void write_record_file(const fs::path& path, const dsp::FeatureRecord& record) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot open for write: " + path.string());
  os.write(kMagic, 4);
  bin::write_u32(os, kVersion);
  bin::write_u32(os, static_cast<uint32_t>(record.rows));
  bin::write_u32(os, static_cast<uint32_t>(record.cols));
  bin::write_f32_array(os, record.data.data(), record.data.size());
  if (!os) raise(ErrorKind::kIOFailure, "write failed: " + path.string());
}

dsp::FeatureRecord read_record_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::kMissingFile, "cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    raise(ErrorKind::kMalformedHeader, "not an ASCF file: " + path.string());
  const uint32_t version = bin::read_u32(is);
  if (version != kVersion)
    raise(ErrorKind::kMalformedHeader, strf("unsupported ASCF version %u", version));
  dsp::FeatureRecord record;
  record.rows = bin::read_u32(is);
  record.cols = bin::read_u32(is);
  record.data.resize(static_cast<size_t>(record.rows * record.cols));
  bin::read_f32_array(is, record.data.data(), record.data.size());
  return record;
}

StoreWriter::StoreWriter(fs::path dir, std::vector<std::string> class_labels)
    : dir_(std::move(dir)), class_labels_(std::move(class_labels)) {
  fs::create_directories(dir_ / "records");
}

void StoreWriter::add(const dsp::FeatureRecord& record) {
  const std::string rel = "records/" + record_file_name(record.segment_id);
  write_record_file(dir_ / rel, record);
  ManifestRow row;
  row.segment_id = record.segment_id;
  row.label = record.label;
  row.kind = dsp::feature_kind_name(record.kind);
  row.rows = record.rows;
  row.cols = record.cols;
  row.relative_path = rel;
  row.sample_variance = record.sample_variance;
  rows_.push_back(std::move(row));
}

void StoreWriter::finish() {
  if (finished_) return;
  finished_ = true;
  std::ofstream manifest(dir_ / "manifest.tsv", std::ios::trunc);
  if (!manifest) raise(ErrorKind::kIOFailure, "cannot write manifest.tsv");
  manifest << "segment_id\tlabel\tkind\trows\tcols\trelative_path\tsample_variance\n";
  for (const auto& row : rows_) {
    manifest << row.segment_id << '\t' << row.label << '\t' << row.kind << '\t' << row.rows << '\t'
             << row.cols << '\t' << row.relative_path << '\t'
             << strf("%.17g", row.sample_variance) << '\n';
  }
  if (!manifest) raise(ErrorKind::kIOFailure, "manifest write failed");

  std::ofstream labels(dir_ / "labels.txt", std::ios::trunc);
  if (!labels) raise(ErrorKind::kIOFailure, "cannot write labels.txt");
  for (const auto& label : class_labels_) labels << label << '\n';
}

FeatureStore open_store(const fs::path& dir) {
  FeatureStore store;
  store.dir = dir;

  std::ifstream labels(dir / "labels.txt");
  if (!labels) raise(ErrorKind::kMissingFile, "missing labels.txt in " + dir.string());
  std::string line;
  while (std::getline(labels, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) store.class_labels.push_back(line);
  }

  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) raise(ErrorKind::kMissingFile, "missing manifest.tsv in " + dir.string());
  bool header = true;
  while (std::getline(manifest, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto fields = split_tsv(line);
    if (fields.size() != 7)
      raise(ErrorKind::kMalformedHeader, "manifest.tsv row needs 7 columns: " + line);
    ManifestRow row;
    row.segment_id = fields[0];
    row.label = fields[1];
    row.kind = fields[2];
    row.rows = std::stoll(fields[3]);
    row.cols = std::stoll(fields[4]);
    row.relative_path = fields[5];
    row.sample_variance = std::stod(fields[6]);
    store.rows.push_back(std::move(row));
  }
  return store;
}

dsp::FeatureRecord load_record(const FeatureStore& store, const ManifestRow& row) {
  dsp::FeatureRecord record = read_record_file(store.dir / row.relative_path);
  record.segment_id = row.segment_id;
  record.label = row.label;
  record.kind = dsp::feature_kind_from_name(row.kind);
  record.sample_variance = row.sample_variance;
  if (record.rows != row.rows || record.cols != row.cols)
    raise(ErrorKind::kDimensionMismatch,
          "manifest shape does not match record file for " + row.segment_id);
  return record;
}

void write_pgm(const fs::path& path, const dsp::FeatureRecord& record) {
  if (record.data.empty()) raise(ErrorKind::kEmptyFeature, "cannot render empty record");
  float lo = record.data[0], hi = record.data[0];
  for (float x : record.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const float range = hi > lo ? hi - lo : 1.0f;

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot open for write: " + path.string());
  os << "P5\n" << record.cols << " " << record.rows << "\n255\n";
  std::vector<uint8_t> scanline(static_cast<size_t>(record.cols));
  for (int64_t r = record.rows - 1; r >= 0; --r) {  // low bands at the bottom
    for (int64_t c = 0; c < record.cols; ++c) {
      const float x = (record.at(r, c) - lo) / range;
      scanline[static_cast<size_t>(c)] = static_cast<uint8_t>(std::lround(x * 255.0f));
    }
    os.write(reinterpret_cast<const char*>(scanline.data()),
             static_cast<std::streamsize>(scanline.size()));
  }
  if (!os) raise(ErrorKind::kIOFailure, "write failed: " + path.string());
}

}  // namespace asc::feat
