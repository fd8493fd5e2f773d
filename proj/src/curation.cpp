#include "asc/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace asc::cur {

double sample_variance(const dsp::FeatureRecord& record) {
  if (record.data.empty()) raise(ErrorKind::kEmptyFeature, "variance of empty record");
  const size_t n = record.data.size();
  double mean = 0.0;
  for (float x : record.data) mean += x;
  mean /= static_cast<double>(n);
  double accum = 0.0;
  for (float x : record.data) {
    const double d = x - mean;
    accum += d * d;
  }
  return accum / static_cast<double>(n);
}

int64_t drop_count(int64_t n, double ratio) {
  // The nudge keeps exact grid points (0.1 * 200 = 20) from landing one short
  // after a downward rounding in the product.
  return static_cast<int64_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

CurationResult cull_low_variance(const std::vector<Entry>& entries, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    raise(ErrorKind::kInvalidRange, strf("curation ratio %g outside [0, 1]", ratio));
  const int64_t n = static_cast<int64_t>(entries.size());
  const int64_t k = drop_count(n, ratio);

  std::vector<const Entry*> order(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) order[i] = &entries[i];
  std::sort(order.begin(), order.end(), [](const Entry* a, const Entry* b) {
    if (a->statistic != b->statistic) return a->statistic < b->statistic;
    return a->segment_id < b->segment_id;
  });

  CurationResult result;
  std::unordered_set<const Entry*> doomed;
  for (int64_t i = 0; i < k; ++i) {
    result.dropped.push_back(*order[static_cast<size_t>(i)]);
    doomed.insert(order[static_cast<size_t>(i)]);
  }
  for (const auto& entry : entries)
    if (!doomed.count(&entry)) result.kept.push_back(entry);
  return result;
}

CurationResult cull_silence(const std::vector<Entry>& entries, double threshold_dbfs) {
  CurationResult result;
  for (const auto& entry : entries) {
    if (entry.statistic < threshold_dbfs)
      result.dropped.push_back(entry);
    else
      result.kept.push_back(entry);
  }
  std::sort(result.dropped.begin(), result.dropped.end(), [](const Entry& a, const Entry& b) {
    if (a.statistic != b.statistic) return a.statistic < b.statistic;
    return a.segment_id < b.segment_id;
  });
  return result;
}

void write_report(const std::filesystem::path& path, const CurationResult& result) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot open for write: " + path.string());
  os << "segment_id\tstatistic\tdecision\n";
  for (const auto& entry : result.kept)
    os << entry.segment_id << '\t' << strf("%.17g", entry.statistic) << "\tkept\n";
  for (const auto& entry : result.dropped)
    os << entry.segment_id << '\t' << strf("%.17g", entry.statistic) << "\tdropped\n";
  if (!os) raise(ErrorKind::kIOFailure, "report write failed: " + path.string());
}

CurationResult read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorKind::kMissingFile, "cannot open " + path.string());
  CurationResult result;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    Entry entry;
    std::string statistic, decision;
    if (!std::getline(ss, entry.segment_id, '\t') || !std::getline(ss, statistic, '\t') ||
        !std::getline(ss, decision))
      raise(ErrorKind::kMalformedHeader, "bad report row: " + line);
    entry.statistic = std::stod(statistic);
    if (decision == "kept")
      result.kept.push_back(entry);
    else if (decision == "dropped")
      result.dropped.push_back(entry);
    else
      raise(ErrorKind::kMalformedHeader, "unknown decision '" + decision + "'");
  }
  return result;
}

}  // namespace asc::cur
