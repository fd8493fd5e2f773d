#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "asc/common.hpp"
#include "asc/dsp.hpp"

namespace asc::cur {

// One curation candidate: a segment id plus the statistic the rule looks at
// (per-record variance for the dropout rule, RMS dBFS for the silence rule).
struct Entry {
  std::string segment_id;
  double statistic = 0.0;
};

struct CurationResult {
  std::vector<Entry> kept;     // original input order
  std::vector<Entry> dropped;  // ascending (statistic, segment_id) order
};

// Population variance over every cell of the record, two-pass.
double sample_variance(const dsp::FeatureRecord& record);

// Drops the floor(ratio * N) lowest-statistic entries; ties break on segment_id.
CurationResult cull_low_variance(const std::vector<Entry>& entries, double ratio);

// Drops every entry whose statistic (dBFS) falls strictly below the threshold.
CurationResult cull_silence(const std::vector<Entry>& entries, double threshold_dbfs);

int64_t drop_count(int64_t n, double ratio);

void write_report(const std::filesystem::path& path, const CurationResult& result);
CurationResult read_report(const std::filesystem::path& path);

}  // namespace asc::cur
