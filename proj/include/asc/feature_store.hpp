#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "asc/dsp.hpp"

namespace asc::feat {

// One line of manifest.tsv.
struct ManifestRow {
  std::string segment_id;
  std::string label;
  std::string kind;  // "logmel" or "mfcc"
  int64_t rows = 0;
  int64_t cols = 0;
  std::string relative_path;
  double sample_variance = 0.0;
};

// A feature directory: manifest.tsv, labels.txt, and one "ASCF" binary file
// per record under records/.
struct FeatureStore {
  std::filesystem::path dir;
  std::vector<std::string> class_labels;
  std::vector<ManifestRow> rows;

  const ManifestRow* find(const std::string& segment_id) const;
};

// Record files: magic "ASCF", version u32, rows u32, cols u32, then
// rows*cols float32 little-endian, row-major.
void write_record_file(const std::filesystem::path& path, const dsp::FeatureRecord& record);
dsp::FeatureRecord read_record_file(const std::filesystem::path& path);

class StoreWriter {
 public:
  StoreWriter(std::filesystem::path dir, std::vector<std::string> class_labels);
  // Writes the record file and queues its manifest row.
  void add(const dsp::FeatureRecord& record);
  // Writes manifest.tsv and labels.txt.
  void finish();

 private:
  std::filesystem::path dir_;
  std::vector<std::string> class_labels_;
  std::vector<ManifestRow> rows_;
  bool finished_ = false;
};

FeatureStore open_store(const std::filesystem::path& dir);

dsp::FeatureRecord load_record(const FeatureStore& store, const ManifestRow& row);

// 8-bit binary PGM rendering of a log-mel record, min-max scaled, low bands
// at the bottom.
void write_pgm(const std::filesystem::path& path, const dsp::FeatureRecord& record);

// Filesystem-safe name for a segment id ('/' -> "__").
std::string record_file_name(const std::string& segment_id);

}  // namespace asc::feat
