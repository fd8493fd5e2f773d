#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "asc/common.hpp"
#include "asc/dsp.hpp"
#include "asc/feature_store.hpp"
#include "asc/gmm.hpp"
#include "asc/models.hpp"

namespace asc::harness {

struct SegmentMeta {
  std::string relative_path;
  std::string label;
};

struct FoldSplit {
  int fold = 0;  // 1-based
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct Metadata {
  std::vector<std::string> class_labels;
  std::vector<SegmentMeta> segments;
  std::vector<FoldSplit> folds;

  int64_t label_index(const std::string& label) const;
};

// Reads labels.txt, meta.tsv and fold{1..4}_{train,test}.tsv from a dataset
// directory and validates the fold structure.
Metadata load_metadata(const std::filesystem::path& dataset_dir);

// "scene03/seg007.wav" -> "scene03/seg007"
std::string strip_extension(const std::string& relative_path);

struct FeaturizeOptions {
  dsp::FeatureKind kind = dsp::FeatureKind::kLogMel;
  double segment_seconds = 10.0;
  double frame_ms = 40.0;
  double overlap = 0.5;
  double floor_eps = 1e-10;
  bool dump_images = false;
};

// Decodes every clip listed in meta.tsv, segments it, extracts features and
// writes a feature store under store_dir. Returns the number of records.
int64_t featurize_dataset(const std::filesystem::path& dataset_dir,
                          const std::filesystem::path& store_dir,
                          const FeaturizeOptions& opts);

enum class ModelKind { kGmm, kDenseNet, kMsDenseNet };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

enum class CurationMethod { kVariance, kSilence };

const char* curation_method_name(CurationMethod method);
CurationMethod curation_method_from_name(const std::string& name);

struct CurationConfig {
  CurationMethod method = CurationMethod::kVariance;
  double ratio = 0.0;            // variance method
  double threshold_dbfs = -60.0; // silence method
};

struct CvOptions {
  ModelKind model_kind = ModelKind::kGmm;
  CurationConfig curation;
  uint64_t seed = 42;
  int64_t gmm_components = 32;
  int64_t gmm_max_iters = 50;
  bool tiny_preset = false;
  model::TrainOptions train;
  model::Aggregation aggregation = model::Aggregation::kMeanLogProb;
  std::filesystem::path audio_dir;  // required by silence curation
};

struct ExperimentResult {
  std::string model;
  std::string curation_method;
  double curation_ratio = 0.0;
  double curation_threshold_dbfs = 0.0;
  uint64_t seed = 0;
  std::vector<std::string> class_labels;
  std::vector<double> fold_accuracy;
  double mean_cv_accuracy = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // row = true, col = predicted
  std::vector<int64_t> fold_train_total;
  std::vector<int64_t> fold_train_dropped;
};

struct SegmentRef {
  std::string segment_id;
  int64_t label = -1;  // index into class_labels
};

using Classifier = std::function<int64_t(const SegmentRef&)>;
using ClassifierFactory =
    std::function<Classifier(const std::vector<SegmentRef>& train, int fold)>;
using SegmentsOf = std::function<std::vector<SegmentRef>(const SegmentMeta&)>;
using CurationStatistic = std::function<double(const SegmentRef&)>;

// Core fold loop with injectable segment expansion, curation statistic and
// classifier so it can be exercised without features or training.
ExperimentResult run_cv_generic(const Metadata& meta,
                                const SegmentsOf& segments_of,
                                const CurationStatistic& statistic,
                                const CurationConfig& curation,
                                const ClassifierFactory& make_classifier,
                                const std::filesystem::path& work_dir,
                                ExperimentResult result);

ExperimentResult run_cv(const feat::FeatureStore& store, const Metadata& meta,
                        const CvOptions& opts,
                        const std::filesystem::path& work_dir);

// Store records for the given clip paths, labels resolved against meta.
std::vector<SegmentRef> expand(const feat::FeatureStore& store, const Metadata& meta,
                               const std::vector<std::string>& relative_paths);

// Statistic used by the configured curation method over store records.
CurationStatistic make_statistic(const feat::FeatureStore& store, const Metadata& meta,
                                 const CvOptions& opts);

// Trains one network on the given (already curated) training refs; carves a
// stratified validation split internally.
model::Model train_on_refs(const feat::FeatureStore& store, const Metadata& meta,
                           const std::vector<SegmentRef>& kept, int fold,
                           const CvOptions& opts, model::TrainLog* log);

// Per-class EM fits over the given training refs.
gmm::GmmBank fit_bank_on_refs(const feat::FeatureStore& store, const Metadata& meta,
                              const std::vector<SegmentRef>& kept, int fold,
                              const CvOptions& opts);

struct EvalResult {
  double accuracy = 0.0;
  int64_t count = 0;
  std::vector<std::vector<int64_t>> confusion;  // row = true, col = predicted
};

EvalResult evaluate_model(model::Model& m, const feat::FeatureStore& store,
                          const std::vector<SegmentRef>& test, model::Aggregation agg);
EvalResult evaluate_bank(const gmm::GmmBank& bank, const feat::FeatureStore& store,
                         const std::vector<SegmentRef>& test);

void write_results_jsonl(const std::filesystem::path& path,
                         const std::vector<ExperimentResult>& results);
std::vector<ExperimentResult> read_results_jsonl(const std::filesystem::path& path);

// report.md plus one confusion_<n>.csv per experiment.
void write_report(const std::vector<ExperimentResult>& results,
                  const std::filesystem::path& out_dir);

}  // namespace asc::harness
