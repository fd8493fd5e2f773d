#include "asc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "asc/audio_io.hpp"
#include "asc/curation.hpp"
#include "asc/gmm.hpp"

namespace fs = std::filesystem;

namespace asc::harness {

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorKind::kMissingFile, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

uint64_t mix_seed(uint64_t base, uint64_t salt) {
  uint64_t s = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  return splitmix64_next(s);
}

Mat record_to_mat(const dsp::FeatureRecord& record) {
  Mat m(record.rows, record.cols);
  for (int64_t i = 0; i < record.rows * record.cols; ++i)
    m.v[static_cast<size_t>(i)] = record.data[static_cast<size_t>(i)];
  return m;
}

}  // namespace

int64_t Metadata::label_index(const std::string& label) const {
  for (size_t i = 0; i < class_labels.size(); ++i)
    if (class_labels[i] == label) return static_cast<int64_t>(i);
  return -1;
}

std::string strip_extension(const std::string& relative_path) {
  size_t dot = relative_path.rfind('.');
  size_t slash = relative_path.find_last_of("/\\");
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return relative_path;
  return relative_path.substr(0, dot);
}

Metadata load_metadata(const fs::path& dataset_dir) {
  Metadata meta;
  meta.class_labels = read_lines(dataset_dir / "labels.txt");
  std::set<std::string> label_set(meta.class_labels.begin(), meta.class_labels.end());
  if (meta.class_labels.empty())
    raise(ErrorKind::kMalformedHeader, "labels.txt is empty in " + dataset_dir.string());

  std::set<std::string> known;
  for (const std::string& line : read_lines(dataset_dir / "meta.tsv")) {
    auto fields = split_tabs(line);
    if (fields.size() != 2)
      raise(ErrorKind::kMalformedHeader, "meta.tsv row needs 2 columns: " + line);
    if (!label_set.count(fields[1]))
      raise(ErrorKind::kUnknownLabel,
            strf("label '%s' for segment '%s' is not in labels.txt", fields[1].c_str(),
                 fields[0].c_str()));
    if (!known.insert(fields[0]).second)
      raise(ErrorKind::kOverlappingFolds, "duplicate meta.tsv entry: " + fields[0]);
    meta.segments.push_back({fields[0], fields[1]});
  }
  if (meta.segments.empty())
    raise(ErrorKind::kEmptySplit, "meta.tsv lists no segments in " + dataset_dir.string());

  std::map<std::string, int> test_count;
  for (int k = 1; k <= 4; ++k) {
    FoldSplit fold;
    fold.fold = k;
    fold.train = read_lines(dataset_dir / strf("fold%d_train.tsv", k));
    fold.test = read_lines(dataset_dir / strf("fold%d_test.tsv", k));
    std::set<std::string> train_set, test_set;
    for (const std::string& p : fold.train) {
      if (!known.count(p))
        raise(ErrorKind::kMissingFile,
              strf("fold%d_train.tsv references '%s' which is not in meta.tsv", k, p.c_str()));
      if (!train_set.insert(p).second)
        raise(ErrorKind::kOverlappingFolds,
              strf("fold%d_train.tsv lists '%s' twice", k, p.c_str()));
    }
    for (const std::string& p : fold.test) {
      if (!known.count(p))
        raise(ErrorKind::kMissingFile,
              strf("fold%d_test.tsv references '%s' which is not in meta.tsv", k, p.c_str()));
      if (!test_set.insert(p).second)
        raise(ErrorKind::kOverlappingFolds,
              strf("fold%d_test.tsv lists '%s' twice", k, p.c_str()));
      if (train_set.count(p))
        raise(ErrorKind::kOverlappingFolds,
              strf("'%s' is in both train and test of fold %d", p.c_str(), k));
      ++test_count[p];
    }
    for (const auto& sm : meta.segments)
      if (!train_set.count(sm.relative_path) && !test_set.count(sm.relative_path))
        raise(ErrorKind::kIncompleteFolds,
              strf("'%s' is in neither train nor test of fold %d",
                   sm.relative_path.c_str(), k));
    meta.folds.push_back(std::move(fold));
  }
  for (const auto& sm : meta.segments) {
    auto it = test_count.find(sm.relative_path);
    if (it == test_count.end())
      raise(ErrorKind::kIncompleteFolds,
            "'" + sm.relative_path + "' never appears in a test fold");
    if (it->second > 1)
      raise(ErrorKind::kOverlappingFolds,
            strf("'%s' appears in %d test folds", sm.relative_path.c_str(), it->second));
  }
  return meta;
}

int64_t featurize_dataset(const fs::path& dataset_dir, const fs::path& store_dir,
                          const FeaturizeOptions& opts) {
  Metadata meta = load_metadata(dataset_dir);
  feat::StoreWriter writer(store_dir, meta.class_labels);
  fs::path image_dir = store_dir / "images";
  if (opts.dump_images) fs::create_directories(image_dir);

  int fb_sr = -1, fb_nfft = -1;
  dsp::MelFilterbank fb128, fb40;
  int64_t count = 0;
  for (const auto& sm : meta.segments) {
    fs::path wav = dataset_dir / sm.relative_path;
    if (!fs::exists(wav))
      raise(ErrorKind::kMissingFile, "meta.tsv references missing file " + wav.string());
    audio::AudioClip clip = audio::decode_wav_file(wav);
    auto segments = audio::segment_clip(clip, opts.segment_seconds);
    if (segments.empty())
      log_warn(sm.relative_path + " is shorter than one segment window; skipped");
    const std::string base = strip_extension(sm.relative_path);
    for (size_t i = 0; i < segments.size(); ++i) {
      const std::string id = strf("%s#%zu", base.c_str(), i);
      dsp::Spectrogram spec = dsp::stft_magnitude(segments[i], opts.frame_ms, opts.overlap);
      if (clip.sample_rate_hz != fb_sr || spec.n_fft != fb_nfft) {
        double nyq = clip.sample_rate_hz / 2.0;
        fb128 = dsp::mel_filterbank(clip.sample_rate_hz, spec.n_fft, 128, 0.0, nyq);
        fb40 = dsp::mel_filterbank(clip.sample_rate_hz, spec.n_fft, 40, 0.0, nyq);
        fb_sr = clip.sample_rate_hz;
        fb_nfft = spec.n_fft;
      }
      dsp::FeatureRecord logmel = dsp::log_mel(spec, fb128, opts.floor_eps, id, sm.label);
      logmel.sample_variance = cur::sample_variance(logmel);
      if (opts.dump_images) {
        std::string img = feat::record_file_name(id);
        img.resize(img.size() - 4);  // drop ".bin"
        feat::write_pgm(image_dir / (img + ".pgm"), logmel);
      }
      if (opts.kind == dsp::FeatureKind::kLogMel) {
        writer.add(logmel);
      } else {
        dsp::FeatureRecord lm40 = dsp::log_mel(spec, fb40, opts.floor_eps, id, sm.label);
        Mat coeffs = dsp::mfcc_frames(lm40);
        Mat full = dsp::delta_features(coeffs);
        dsp::FeatureRecord rec;
        rec.segment_id = id;
        rec.label = sm.label;
        rec.kind = dsp::FeatureKind::kMfcc;
        rec.rows = full.rows;
        rec.cols = full.cols;
        rec.data.resize(static_cast<size_t>(full.numel()));
        for (int64_t j = 0; j < full.numel(); ++j)
          rec.data[static_cast<size_t>(j)] = static_cast<float>(full.v[static_cast<size_t>(j)]);
        rec.sample_variance = logmel.sample_variance;
        writer.add(rec);
      }
      ++count;
    }
  }
  writer.finish();
  return count;
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGmm: return "gmm";
    case ModelKind::kDenseNet: return "densenet";
    case ModelKind::kMsDenseNet: return "msdensenet";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "gmm") return ModelKind::kGmm;
  if (name == "densenet") return ModelKind::kDenseNet;
  if (name == "msdensenet") return ModelKind::kMsDenseNet;
  raise(ErrorKind::kInvalidArgument, "unknown model kind '" + name + "'");
}

const char* curation_method_name(CurationMethod method) {
  return method == CurationMethod::kVariance ? "variance" : "silence";
}

CurationMethod curation_method_from_name(const std::string& name) {
  if (name == "variance") return CurationMethod::kVariance;
  if (name == "silence") return CurationMethod::kSilence;
  raise(ErrorKind::kInvalidArgument, "unknown curation method '" + name + "'");
}

ExperimentResult run_cv_generic(const Metadata& meta, const SegmentsOf& segments_of,
                                const CurationStatistic& statistic,
                                const CurationConfig& curation,
                                const ClassifierFactory& make_classifier,
                                const fs::path& work_dir, ExperimentResult result) {
  result.class_labels = meta.class_labels;
  result.curation_method = curation_method_name(curation.method);
  result.curation_ratio = curation.ratio;
  result.curation_threshold_dbfs = curation.threshold_dbfs;
  const int64_t num_classes = static_cast<int64_t>(meta.class_labels.size());
  result.confusion.assign(static_cast<size_t>(num_classes),
                          std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
  result.fold_accuracy.clear();
  result.fold_train_total.clear();
  result.fold_train_dropped.clear();

  std::map<std::string, std::vector<SegmentRef>> expanded;
  for (const auto& sm : meta.segments) expanded[sm.relative_path] = segments_of(sm);

  for (const FoldSplit& fold : meta.folds) {
    std::vector<SegmentRef> train_refs;
    for (const std::string& p : fold.train)
      for (const SegmentRef& r : expanded[p]) train_refs.push_back(r);
    std::vector<SegmentRef> test_refs;
    for (const std::string& p : fold.test)
      for (const SegmentRef& r : expanded[p]) test_refs.push_back(r);
    if (train_refs.empty() || test_refs.empty())
      raise(ErrorKind::kEmptySplit, strf("fold %d has an empty split", fold.fold));

    std::vector<cur::Entry> entries;
    entries.reserve(train_refs.size());
    for (const SegmentRef& r : train_refs) entries.push_back({r.segment_id, statistic(r)});
    cur::CurationResult culled = curation.method == CurationMethod::kVariance
                                     ? cur::cull_low_variance(entries, curation.ratio)
                                     : cur::cull_silence(entries, curation.threshold_dbfs);
    if (!work_dir.empty()) {
      fs::create_directories(work_dir);
      cur::write_report(work_dir / strf("fold%d_curation.tsv", fold.fold), culled);
    }
    result.fold_train_total.push_back(static_cast<int64_t>(train_refs.size()));
    result.fold_train_dropped.push_back(static_cast<int64_t>(culled.dropped.size()));

    std::set<std::string> kept_ids;
    for (const cur::Entry& e : culled.kept) kept_ids.insert(e.segment_id);
    std::vector<SegmentRef> kept_refs;
    kept_refs.reserve(kept_ids.size());
    for (const SegmentRef& r : train_refs)
      if (kept_ids.count(r.segment_id)) kept_refs.push_back(r);
    if (kept_refs.empty())
      raise(ErrorKind::kEmptySplit,
            strf("curation dropped every training segment in fold %d", fold.fold));

    Classifier classify = make_classifier(kept_refs, fold.fold);
    int64_t correct = 0;
    for (const SegmentRef& r : test_refs) {
      int64_t pred = classify(r);
      if (pred < 0 || pred >= num_classes)
        raise(ErrorKind::kLabelOutOfRange,
              strf("classifier produced class %lld for '%s'",
                   static_cast<long long>(pred), r.segment_id.c_str()));
      result.confusion[static_cast<size_t>(r.label)][static_cast<size_t>(pred)]++;
      if (pred == r.label) ++correct;
    }
    result.fold_accuracy.push_back(static_cast<double>(correct) /
                                   static_cast<double>(test_refs.size()));
  }

  double sum = 0.0;
  for (double a : result.fold_accuracy) sum += a;
  result.mean_cv_accuracy = sum / static_cast<double>(result.fold_accuracy.size());
  return result;
}

namespace {

// Expands a metadata row into the store records produced from its clip.
SegmentsOf store_segments_of(const feat::FeatureStore& store, const Metadata& meta) {
  auto by_base = std::make_shared<std::map<std::string, std::vector<std::string>>>();
  for (const auto& row : store.rows) {
    size_t pos = row.segment_id.rfind('#');
    std::string base = pos == std::string::npos ? row.segment_id : row.segment_id.substr(0, pos);
    (*by_base)[base].push_back(row.segment_id);
  }
  const Metadata* mp = &meta;
  return [by_base, mp](const SegmentMeta& sm) {
    auto it = by_base->find(strip_extension(sm.relative_path));
    if (it == by_base->end() || it->second.empty())
      raise(ErrorKind::kMissingFile,
            "feature store has no records for '" + sm.relative_path + "'");
    int64_t label = mp->label_index(sm.label);
    std::vector<SegmentRef> refs;
    refs.reserve(it->second.size());
    for (const std::string& id : it->second) refs.push_back({id, label});
    return refs;
  };
}

CurationStatistic variance_statistic(const feat::FeatureStore& store) {
  auto by_id = std::make_shared<std::map<std::string, double>>();
  for (const auto& row : store.rows) (*by_id)[row.segment_id] = row.sample_variance;
  return [by_id](const SegmentRef& r) {
    auto it = by_id->find(r.segment_id);
    if (it == by_id->end())
      raise(ErrorKind::kMissingFile, "no manifest entry for '" + r.segment_id + "'");
    return it->second;
  };
}

CurationStatistic silence_statistic(const Metadata& meta, const fs::path& audio_dir,
                                    double segment_seconds) {
  if (audio_dir.empty())
    raise(ErrorKind::kInvalidConfig, "silence curation needs the audio directory");
  auto base_to_rel = std::make_shared<std::map<std::string, std::string>>();
  for (const auto& sm : meta.segments)
    (*base_to_rel)[strip_extension(sm.relative_path)] = sm.relative_path;
  auto cache = std::make_shared<std::map<std::string, double>>();
  fs::path dir = audio_dir;
  return [base_to_rel, cache, dir, segment_seconds](const SegmentRef& r) {
    auto hit = cache->find(r.segment_id);
    if (hit != cache->end()) return hit->second;
    size_t pos = r.segment_id.rfind('#');
    std::string base = pos == std::string::npos ? r.segment_id : r.segment_id.substr(0, pos);
    auto rel = base_to_rel->find(base);
    if (rel == base_to_rel->end())
      raise(ErrorKind::kMissingFile, "segment '" + r.segment_id + "' matches no clip");
    audio::AudioClip clip = audio::decode_wav_file(dir / rel->second);
    auto segments = audio::segment_clip(clip, segment_seconds);
    for (size_t i = 0; i < segments.size(); ++i)
      (*cache)[strf("%s#%zu", base.c_str(), i)] = audio::rms_dbfs(segments[i]);
    hit = cache->find(r.segment_id);
    if (hit == cache->end())
      raise(ErrorKind::kMissingFile, "clip too short to cover '" + r.segment_id + "'");
    return hit->second;
  };
}

std::vector<model::Patch> load_patches(const feat::FeatureStore& store,
                                       const SegmentRef& ref) {
  const feat::ManifestRow* row = store.find(ref.segment_id);
  if (!row) raise(ErrorKind::kMissingFile, "no record for '" + ref.segment_id + "'");
  dsp::FeatureRecord record = feat::load_record(store, *row);
  std::vector<dsp::FeatureRecord> crops = dsp::patchify(record, 128);
  std::vector<model::Patch> patches;
  patches.reserve(crops.size());
  for (auto& c : crops) {
    model::Patch p;
    p.segment_id = c.segment_id;
    p.label = ref.label;
    p.pixels = std::move(c.data);
    patches.push_back(std::move(p));
  }
  return patches;
}

}  // namespace

std::vector<SegmentRef> expand(const feat::FeatureStore& store, const Metadata& meta,
                               const std::vector<std::string>& relative_paths) {
  SegmentsOf fn = store_segments_of(store, meta);
  std::map<std::string, const SegmentMeta*> by_rel;
  for (const auto& sm : meta.segments) by_rel[sm.relative_path] = &sm;
  std::vector<SegmentRef> refs;
  for (const std::string& p : relative_paths) {
    auto it = by_rel.find(p);
    if (it == by_rel.end())
      raise(ErrorKind::kMissingFile, "'" + p + "' is not in meta.tsv");
    for (SegmentRef& r : fn(*it->second)) refs.push_back(std::move(r));
  }
  return refs;
}

CurationStatistic make_statistic(const feat::FeatureStore& store, const Metadata& meta,
                                 const CvOptions& opts) {
  return opts.curation.method == CurationMethod::kVariance
             ? variance_statistic(store)
             : silence_statistic(meta, opts.audio_dir, 10.0);
}

gmm::GmmBank fit_bank_on_refs(const feat::FeatureStore& store, const Metadata& meta,
                              const std::vector<SegmentRef>& kept, int fold,
                              const CvOptions& opts) {
  const int64_t num_classes = static_cast<int64_t>(meta.class_labels.size());
  std::vector<std::vector<const SegmentRef*>> per_class(static_cast<size_t>(num_classes));
  for (const SegmentRef& r : kept) per_class[static_cast<size_t>(r.label)].push_back(&r);

  gmm::GmmBank bank;
  bank.class_labels = meta.class_labels;
  bank.feature_kind = "mfcc60";
  for (int64_t c = 0; c < num_classes; ++c) {
    const auto& refs = per_class[static_cast<size_t>(c)];
    if (refs.empty())
      raise(ErrorKind::kEmptySplit,
            strf("class '%s' has no training segments in fold %d",
                 meta.class_labels[static_cast<size_t>(c)].c_str(), fold));
    int64_t total_rows = 0, dim = -1;
    std::vector<dsp::FeatureRecord> records;
    records.reserve(refs.size());
    for (const SegmentRef* r : refs) {
      const feat::ManifestRow* row = store.find(r->segment_id);
      if (!row) raise(ErrorKind::kMissingFile, "no record for '" + r->segment_id + "'");
      records.push_back(feat::load_record(store, *row));
      if (dim < 0) dim = records.back().cols;
      if (records.back().cols != dim)
        raise(ErrorKind::kDimensionMismatch, "inconsistent feature dimension in store");
      total_rows += records.back().rows;
    }
    Mat frames(total_rows, dim);
    int64_t at = 0;
    for (const auto& rec : records) {
      for (int64_t i = 0; i < rec.rows * rec.cols; ++i)
        frames.v[static_cast<size_t>(at * dim + i)] = rec.data[static_cast<size_t>(i)];
      at += rec.rows;
    }
    gmm::EmOptions eo;
    eo.max_iters = opts.gmm_max_iters;
    eo.seed = mix_seed(opts.seed,
                       300 + static_cast<uint64_t>(fold) * 64 + static_cast<uint64_t>(c));
    bank.mixtures.push_back(gmm::em_fit(frames, opts.gmm_components, eo).gmm);
  }
  return bank;
}

model::Model train_on_refs(const feat::FeatureStore& store, const Metadata& meta,
                           const std::vector<SegmentRef>& kept, int fold,
                           const CvOptions& opts, model::TrainLog* log) {
  const int64_t num_classes = static_cast<int64_t>(meta.class_labels.size());
  // Stratified validation carve, by segment so patches never straddle it.
  std::vector<std::vector<int64_t>> per_class(static_cast<size_t>(num_classes));
  for (size_t i = 0; i < kept.size(); ++i)
    per_class[static_cast<size_t>(kept[i].label)].push_back(static_cast<int64_t>(i));
  Rng carve(mix_seed(opts.seed, 200 + static_cast<uint64_t>(fold)));
  std::set<int64_t> val_idx;
  for (auto& list : per_class) {
    carve.shuffle(list);
    int64_t n = static_cast<int64_t>(list.size());
    if (n < 2) continue;
    int64_t take = std::min<int64_t>(n - 1, std::max<int64_t>(1, std::llround(0.15 * n)));
    for (int64_t i = 0; i < take; ++i) val_idx.insert(list[static_cast<size_t>(i)]);
  }
  std::vector<model::Patch> train_patches, val_patches;
  for (size_t i = 0; i < kept.size(); ++i) {
    auto patches = load_patches(store, kept[i]);
    auto& sink = val_idx.count(static_cast<int64_t>(i)) ? val_patches : train_patches;
    for (auto& p : patches) sink.push_back(std::move(p));
  }
  if (val_patches.empty()) {
    // Too little data to carve validation; reuse the training patches.
    val_patches = train_patches;
  }

  model::DenseNetConfig config = opts.tiny_preset ? model::tiny_config(num_classes)
                                                  : model::default_config(num_classes);
  model::Model m;
  uint64_t build_seed = mix_seed(opts.seed, 100 + static_cast<uint64_t>(fold));
  if (opts.model_kind == ModelKind::kMsDenseNet) {
    config.multiscale =
        opts.tiny_preset ? model::tiny_multiscale_spec() : model::default_multiscale_spec();
    config.block_layers[0] = static_cast<int64_t>(config.multiscale->layer_specs.size());
    m = model::build_multiscale_densenet(config, meta.class_labels, build_seed);
  } else {
    m = model::build_densenet(config, meta.class_labels, build_seed);
  }
  model::TrainOptions topts = opts.train;
  topts.seed = mix_seed(opts.seed, static_cast<uint64_t>(fold));
  model::TrainLog tl = model::train(m, train_patches, val_patches, topts);
  log_info(strf("fold %d: best epoch %lld, val accuracy %.4f", fold,
                static_cast<long long>(tl.best_epoch), tl.best_val_accuracy));
  if (log) *log = tl;
  return m;
}

EvalResult evaluate_model(model::Model& m, const feat::FeatureStore& store,
                          const std::vector<SegmentRef>& test, model::Aggregation agg) {
  const int64_t num_classes = static_cast<int64_t>(m.class_labels.size());
  EvalResult r;
  r.confusion.assign(static_cast<size_t>(num_classes),
                     std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
  int64_t correct = 0;
  for (const SegmentRef& ref : test) {
    std::vector<model::Patch> patches = load_patches(store, ref);
    std::vector<const model::Patch*> view;
    view.reserve(patches.size());
    for (const auto& p : patches) view.push_back(&p);
    int64_t pred = model::predict_segment(m, view, agg).class_index;
    r.confusion[static_cast<size_t>(ref.label)][static_cast<size_t>(pred)]++;
    if (pred == ref.label) ++correct;
  }
  r.count = static_cast<int64_t>(test.size());
  r.accuracy = r.count ? static_cast<double>(correct) / static_cast<double>(r.count) : 0.0;
  return r;
}

EvalResult evaluate_bank(const gmm::GmmBank& bank, const feat::FeatureStore& store,
                         const std::vector<SegmentRef>& test) {
  const int64_t num_classes = static_cast<int64_t>(bank.class_labels.size());
  EvalResult r;
  r.confusion.assign(static_cast<size_t>(num_classes),
                     std::vector<int64_t>(static_cast<size_t>(num_classes), 0));
  int64_t correct = 0;
  for (const SegmentRef& ref : test) {
    const feat::ManifestRow* row = store.find(ref.segment_id);
    if (!row) raise(ErrorKind::kMissingFile, "no record for '" + ref.segment_id + "'");
    Mat frames = record_to_mat(feat::load_record(store, *row));
    int64_t pred = gmm::classify_segment(bank, frames).class_index;
    r.confusion[static_cast<size_t>(ref.label)][static_cast<size_t>(pred)]++;
    if (pred == ref.label) ++correct;
  }
  r.count = static_cast<int64_t>(test.size());
  r.accuracy = r.count ? static_cast<double>(correct) / static_cast<double>(r.count) : 0.0;
  return r;
}

namespace {

ClassifierFactory gmm_factory(const feat::FeatureStore& store, const Metadata& meta,
                              const CvOptions& opts) {
  const feat::FeatureStore* sp = &store;
  const Metadata* mp = &meta;
  CvOptions o = opts;
  return [sp, mp, o](const std::vector<SegmentRef>& train, int fold) -> Classifier {
    auto bp = std::make_shared<gmm::GmmBank>(fit_bank_on_refs(*sp, *mp, train, fold, o));
    return [bp, sp](const SegmentRef& r) {
      const feat::ManifestRow* row = sp->find(r.segment_id);
      if (!row) raise(ErrorKind::kMissingFile, "no record for '" + r.segment_id + "'");
      Mat frames = record_to_mat(feat::load_record(*sp, *row));
      return gmm::classify_segment(*bp, frames).class_index;
    };
  };
}

ClassifierFactory network_factory(const feat::FeatureStore& store, const Metadata& meta,
                                  const CvOptions& opts) {
  const feat::FeatureStore* sp = &store;
  const Metadata* mp = &meta;
  CvOptions o = opts;
  return [sp, mp, o](const std::vector<SegmentRef>& train, int fold) -> Classifier {
    auto mptr = std::make_shared<model::Model>(
        train_on_refs(*sp, *mp, train, fold, o, nullptr));
    model::Aggregation agg = o.aggregation;
    return [mptr, sp, agg](const SegmentRef& r) {
      std::vector<model::Patch> patches = load_patches(*sp, r);
      std::vector<const model::Patch*> view;
      view.reserve(patches.size());
      for (const auto& p : patches) view.push_back(&p);
      return model::predict_segment(*mptr, view, agg).class_index;
    };
  };
}

}  // namespace

ExperimentResult run_cv(const feat::FeatureStore& store, const Metadata& meta,
                        const CvOptions& opts, const fs::path& work_dir) {
  if (store.rows.empty())
    raise(ErrorKind::kEmptySplit, "feature store has no records");
  const std::string want = opts.model_kind == ModelKind::kGmm ? "mfcc" : "logmel";
  if (store.rows.front().kind != want)
    raise(ErrorKind::kInvalidConfig,
          strf("%s needs a %s feature store, found '%s'", model_kind_name(opts.model_kind),
               want.c_str(), store.rows.front().kind.c_str()));
  if (store.class_labels != meta.class_labels)
    log_warn("feature store class list differs from dataset labels.txt; using the dataset");

  ExperimentResult tmpl;
  tmpl.model = model_kind_name(opts.model_kind);
  tmpl.seed = opts.seed;

  CurationStatistic statistic = make_statistic(store, meta, opts);
  ClassifierFactory factory = opts.model_kind == ModelKind::kGmm
                                  ? gmm_factory(store, meta, opts)
                                  : network_factory(store, meta, opts);
  return run_cv_generic(meta, store_segments_of(store, meta), statistic, opts.curation,
                        factory, work_dir, std::move(tmpl));
}

void write_results_jsonl(const fs::path& path, const std::vector<ExperimentResult>& results) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot write " + path.string());
  for (const ExperimentResult& r : results) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["curation_method"] = r.curation_method;
    j["curation_ratio"] = r.curation_ratio;
    j["curation_threshold_dbfs"] = r.curation_threshold_dbfs;
    j["seed"] = r.seed;
    j["class_labels"] = r.class_labels;
    j["fold_accuracy"] = r.fold_accuracy;
    j["mean_cv_accuracy"] = r.mean_cv_accuracy;
    j["fold_train_total"] = r.fold_train_total;
    j["fold_train_dropped"] = r.fold_train_dropped;
    j["confusion"] = r.confusion;
    os << j.dump() << "\n";
  }
  if (!os) raise(ErrorKind::kIOFailure, "failed writing " + path.string());
}

std::vector<ExperimentResult> read_results_jsonl(const fs::path& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorKind::kMissingFile, "cannot open " + path.string());
  std::vector<ExperimentResult> results;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(ErrorKind::kMalformedHeader, "invalid JSON line in " + path.string());
    ExperimentResult r;
    r.model = j.at("model").get<std::string>();
    r.curation_method = j.at("curation_method").get<std::string>();
    r.curation_ratio = j.at("curation_ratio").get<double>();
    r.curation_threshold_dbfs = j.at("curation_threshold_dbfs").get<double>();
    r.seed = j.at("seed").get<uint64_t>();
    r.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    r.fold_accuracy = j.at("fold_accuracy").get<std::vector<double>>();
    r.mean_cv_accuracy = j.at("mean_cv_accuracy").get<double>();
    r.fold_train_total = j.at("fold_train_total").get<std::vector<int64_t>>();
    r.fold_train_dropped = j.at("fold_train_dropped").get<std::vector<int64_t>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<int64_t>>>();
    results.push_back(std::move(r));
  }
  return results;
}

namespace {

int method_rank(const std::string& model) {
  if (model == "gmm") return 0;
  if (model == "densenet") return 1;
  if (model == "msdensenet") return 2;
  return 3;
}

std::string curation_cell(const ExperimentResult& r) {
  if (r.curation_method == "variance")
    return strf("variance, ratio %.4g", r.curation_ratio);
  return strf("silence, threshold %.4g dBFS", r.curation_threshold_dbfs);
}

}  // namespace

void write_report(const std::vector<ExperimentResult>& results, const fs::path& out_dir) {
  if (results.empty()) raise(ErrorKind::kEmptySplit, "no results to report");
  fs::create_directories(out_dir);
  std::vector<size_t> order(results.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const ExperimentResult &ra = results[a], &rb = results[b];
    int qa = method_rank(ra.model), qb = method_rank(rb.model);
    if (qa != qb) return qa < qb;
    if (ra.curation_ratio != rb.curation_ratio) return ra.curation_ratio < rb.curation_ratio;
    if (ra.curation_threshold_dbfs != rb.curation_threshold_dbfs)
      return ra.curation_threshold_dbfs < rb.curation_threshold_dbfs;
    return ra.seed < rb.seed;
  });

  std::ofstream md(out_dir / "report.md", std::ios::trunc);
  if (!md) raise(ErrorKind::kIOFailure, "cannot write report.md");
  md << "# Cross-validation report\n\n";
  md << "| # | Method | Curation | Mean CV accuracy | Fold accuracies |\n";
  md << "| --- | --- | --- | --- | --- |\n";
  for (size_t n = 0; n < order.size(); ++n) {
    const ExperimentResult& r = results[order[n]];
    std::string folds;
    for (size_t i = 0; i < r.fold_accuracy.size(); ++i) {
      if (i) folds += ", ";
      folds += strf("%.4f", r.fold_accuracy[i]);
    }
    md << strf("| %zu | %s | %s | %.4f | %s |\n", n + 1, r.model.c_str(),
               curation_cell(r).c_str(), r.mean_cv_accuracy, folds.c_str());
  }

  md << "\n## Per-class accuracy\n";
  for (size_t n = 0; n < order.size(); ++n) {
    const ExperimentResult& r = results[order[n]];
    md << strf("\n### Experiment %zu: %s, %s\n\n", n + 1, r.model.c_str(),
               curation_cell(r).c_str());
    md << "| Class | Accuracy | Support |\n| --- | --- | --- |\n";
    for (size_t c = 0; c < r.class_labels.size(); ++c) {
      int64_t row_sum = 0;
      for (int64_t v : r.confusion[c]) row_sum += v;
      std::string acc = row_sum > 0
                            ? strf("%.4f", static_cast<double>(r.confusion[c][c]) /
                                               static_cast<double>(row_sum))
                            : std::string("n/a");
      md << strf("| %s | %s | %lld |\n", r.class_labels[c].c_str(), acc.c_str(),
                 static_cast<long long>(row_sum));
    }
    md << strf("\nConfusion matrix: [confusion_%zu.csv](confusion_%zu.csv)\n", n + 1, n + 1);
  }
  if (!md) raise(ErrorKind::kIOFailure, "failed writing report.md");

  for (size_t n = 0; n < order.size(); ++n) {
    const ExperimentResult& r = results[order[n]];
    std::ofstream csv(out_dir / strf("confusion_%zu.csv", n + 1), std::ios::trunc);
    if (!csv) raise(ErrorKind::kIOFailure, "cannot write confusion csv");
    csv << "true\\predicted";
    for (const std::string& label : r.class_labels) csv << "," << label;
    csv << "\n";
    for (size_t c = 0; c < r.class_labels.size(); ++c) {
      csv << r.class_labels[c];
      for (int64_t v : r.confusion[c]) csv << "," << v;
      csv << "\n";
    }
  }
}

}  // namespace asc::harness
