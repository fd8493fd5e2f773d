#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "asc/audio_io.hpp"
#include "asc/autograd.hpp"
#include "asc/common.hpp"
#include "asc/curation.hpp"
#include "asc/dsp.hpp"
#include "asc/feature_store.hpp"
#include "asc/gmm.hpp"
#include "asc/harness.hpp"
#include "asc/models.hpp"
#include "asc/synthgen.hpp"

namespace fs = std::filesystem;
using namespace asc;

namespace {

using KV = std::vector<std::pair<std::string, std::string>>;

void write_manifest(const fs::path& path, const KV& kv) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) raise(ErrorKind::kIOFailure, "cannot write " + path.string());
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  if (!os) raise(ErrorKind::kIOFailure, "failed writing " + path.string());
}

std::string fnum(double v) { return strf("%.17g", v); }
std::string inum(int64_t v) { return strf("%lld", static_cast<long long>(v)); }
std::string unum(uint64_t v) { return strf("%llu", static_cast<unsigned long long>(v)); }

std::vector<harness::SegmentRef> filter_kept(const std::vector<harness::SegmentRef>& refs,
                                             const cur::CurationResult& culled) {
  std::set<std::string> kept_ids;
  for (const auto& e : culled.kept) kept_ids.insert(e.segment_id);
  std::vector<harness::SegmentRef> kept;
  kept.reserve(kept_ids.size());
  for (const auto& r : refs)
    if (kept_ids.count(r.segment_id)) kept.push_back(r);
  return kept;
}

cur::CurationResult curate_refs(const std::vector<harness::SegmentRef>& refs,
                                const harness::CurationStatistic& statistic,
                                const harness::CurationConfig& cfg) {
  std::vector<cur::Entry> entries;
  entries.reserve(refs.size());
  for (const auto& r : refs) entries.push_back({r.segment_id, statistic(r)});
  return cfg.method == harness::CurationMethod::kVariance
             ? cur::cull_low_variance(entries, cfg.ratio)
             : cur::cull_silence(entries, cfg.threshold_dbfs);
}

void print_eval(const harness::EvalResult& res, const std::vector<std::string>& labels) {
  std::cout << strf("accuracy %.4f over %lld segments\n", res.accuracy,
                    static_cast<long long>(res.count));
  for (size_t c = 0; c < labels.size(); ++c) {
    int64_t row_sum = 0;
    for (int64_t v : res.confusion[c]) row_sum += v;
    double acc = row_sum ? static_cast<double>(res.confusion[c][c]) / row_sum : 0.0;
    std::cout << strf("  %-12s %.4f (%lld)\n", labels[c].c_str(), acc,
                      static_cast<long long>(row_sum));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic scene classification toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read flags from a key = value config file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  int threads = 0;
  bool deterministic = false;
  app.add_option("--threads", threads, "Worker thread cap")
      ->envname("ASC_THREADS")
      ->capture_default_str();
  app.add_flag("--deterministic", deterministic,
               "Bit-stable mode: forces single-threaded execution");

  // synth ---------------------------------------------------------------
  struct {
    std::string out;
    int64_t classes = 5, per_class = 40;
    uint64_t seed = 42;
    double outlier_frac = 0.0;
    bool mislabel = false;
    double segment_seconds = 10.0;
    int sample_rate = 44100;
  } sy;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scene dataset");
  synth->fallthrough();
  synth->add_option("--out", sy.out, "Output dataset directory")->required();
  synth->add_option("--classes", sy.classes, "Number of scene classes")->capture_default_str();
  synth->add_option("--segments-per-class", sy.per_class, "Segments per class")
      ->capture_default_str();
  synth->add_option("--seed", sy.seed, "Master seed")->capture_default_str();
  synth->add_option("--outlier-frac", sy.outlier_frac,
                    "Fraction of training-destined segments replaced by near-constant outliers")
      ->capture_default_str();
  synth->add_flag("--mislabel-outliers", sy.mislabel,
                  "Give outliers a wrong class label in meta.tsv");
  synth->add_option("--segment-seconds", sy.segment_seconds, "Segment length in seconds")
      ->capture_default_str();
  synth->add_option("--sample-rate", sy.sample_rate, "Sample rate in Hz")->capture_default_str();

  // featurize -----------------------------------------------------------
  struct {
    std::string data, out;
    std::string feature = "logmel128";
    bool dump_image = false;
    double frame_ms = 40.0, overlap = 0.5, segment_seconds = 10.0;
  } fz;
  CLI::App* featurize = app.add_subcommand("featurize", "Extract features from a dataset");
  featurize->fallthrough();
  featurize->add_option("--data", fz.data, "Dataset directory (wavs + meta.tsv)")->required();
  featurize->add_option("--out", fz.out, "Feature store directory")->required();
  featurize->add_option("--feature", fz.feature, "Feature kind")
      ->check(CLI::IsMember({"logmel128", "mfcc60"}))
      ->capture_default_str();
  featurize->add_flag("--dump-image", fz.dump_image,
                      "Also write PGM renderings of the log-mel images");
  featurize->add_option("--frame-ms", fz.frame_ms, "Analysis frame length, ms")
      ->capture_default_str();
  featurize->add_option("--overlap", fz.overlap, "Frame overlap fraction")->capture_default_str();
  featurize->add_option("--segment-seconds", fz.segment_seconds, "Segment window, seconds")
      ->capture_default_str();

  // curate ----------------------------------------------------------------
  struct {
    std::string store, out, audio;
    std::string method = "variance";
    double ratio = 0.0, threshold_dbfs = -60.0;
  } cu;
  CLI::App* curate = app.add_subcommand("curate", "Rank and drop low-information segments");
  curate->fallthrough();
  curate->add_option("--store", cu.store, "Feature store directory")->required();
  curate->add_option("--method", cu.method, "Curation rule")
      ->check(CLI::IsMember({"variance", "silence"}))
      ->capture_default_str();
  curate->add_option("--ratio", cu.ratio, "Fraction to drop (variance method)")
      ->capture_default_str();
  curate->add_option("--threshold-dbfs", cu.threshold_dbfs, "Drop below this level (silence)")
      ->capture_default_str();
  curate->add_option("--audio", cu.audio, "Dataset directory with wavs (silence method)");
  curate->add_option("--out", cu.out, "Report TSV path (default <store>/curation.tsv)");

  // train -----------------------------------------------------------------
  struct {
    std::string store, data, out;
    std::string model = "densenet", preset = "default", method = "variance";
    int fold = 1;
    double ratio = 0.0, threshold_dbfs = -60.0, lr = 1e-3;
    int64_t epochs = 30, batch_size = 32, patience = 10;
    uint64_t seed = 42;
  } tr;
  CLI::App* train = app.add_subcommand("train", "Train a network on one fold's training split");
  train->fallthrough();
  train->add_option("--store", tr.store, "Log-mel feature store")->required();
  train->add_option("--data", tr.data, "Dataset directory (fold definitions)")->required();
  train->add_option("--out", tr.out, "Checkpoint path to write")->required();
  train->add_option("--model", tr.model, "Architecture")
      ->check(CLI::IsMember({"densenet", "msdensenet"}))
      ->capture_default_str();
  train->add_option("--preset", tr.preset, "Size preset")
      ->check(CLI::IsMember({"default", "tiny"}))
      ->capture_default_str();
  train->add_option("--fold", tr.fold, "Fold whose training split to use")
      ->check(CLI::Range(1, 4))
      ->capture_default_str();
  train->add_option("--method", tr.method, "Curation rule for the training split")
      ->check(CLI::IsMember({"variance", "silence"}))
      ->capture_default_str();
  train->add_option("--ratio", tr.ratio, "Curation drop fraction")->capture_default_str();
  train->add_option("--threshold-dbfs", tr.threshold_dbfs, "Silence threshold")
      ->capture_default_str();
  train->add_option("--epochs", tr.epochs, "Max epochs")->capture_default_str();
  train->add_option("--batch-size", tr.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--patience", tr.patience, "Early stopping patience")->capture_default_str();
  train->add_option("--seed", tr.seed, "Run seed")->capture_default_str();

  // baseline-gmm ------------------------------------------------------------
  struct {
    std::string store, data, out;
    int fold = 1;
    int64_t components = 32, max_iters = 50;
    double ratio = 0.0;
    uint64_t seed = 42;
  } bg;
  CLI::App* baseline =
      app.add_subcommand("baseline-gmm", "Fit per-class Gaussian mixtures on one fold");
  baseline->fallthrough();
  baseline->add_option("--store", bg.store, "MFCC feature store")->required();
  baseline->add_option("--data", bg.data, "Dataset directory (fold definitions)")->required();
  baseline->add_option("--out", bg.out, "Mixture bank path to write")->required();
  baseline->add_option("--fold", bg.fold, "Fold whose training split to use")
      ->check(CLI::Range(1, 4))
      ->capture_default_str();
  baseline->add_option("--components", bg.components, "Mixture components per class")
      ->capture_default_str();
  baseline->add_option("--max-iters", bg.max_iters, "EM iteration cap")->capture_default_str();
  baseline->add_option("--ratio", bg.ratio, "Variance curation drop fraction")
      ->capture_default_str();
  baseline->add_option("--seed", bg.seed, "Run seed")->capture_default_str();

  // evaluate ----------------------------------------------------------------
  struct {
    std::string checkpoint, store, data;
    int fold = 1;
    std::string aggregation = "mean-logprob";
  } ev;
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "Score a checkpoint on one fold's test split");
  evaluate->fallthrough();
  evaluate->add_option("--checkpoint", ev.checkpoint, "Model (.ascp) or mixture bank (.ascg)")
      ->required();
  evaluate->add_option("--store", ev.store, "Feature store matching the checkpoint")->required();
  evaluate->add_option("--data", ev.data, "Dataset directory (fold definitions)")->required();
  evaluate->add_option("--fold", ev.fold, "Fold whose test split to score")
      ->check(CLI::Range(1, 4))
      ->capture_default_str();
  evaluate->add_option("--aggregation", ev.aggregation, "Patch vote aggregation")
      ->check(CLI::IsMember({"mean-logprob", "majority"}))
      ->capture_default_str();

  // cv ------------------------------------------------------------------
  struct {
    std::string store, data, out;
    std::string model = "msdensenet", method = "variance", preset = "default";
    double ratio = 0.0, threshold_dbfs = -60.0, lr = 1e-3;
    int64_t components = 32, epochs = 30, batch_size = 32, patience = 10;
    uint64_t seed = 42;
  } cvf;
  CLI::App* cv = app.add_subcommand("cv", "Run 4-fold cross-validation");
  cv->fallthrough();
  cv->add_option("--store", cvf.store, "Feature store directory")->required();
  cv->add_option("--data", cvf.data, "Dataset directory")->required();
  cv->add_option("--out", cvf.out, "Output directory for results.jsonl")->required();
  cv->add_option("--model", cvf.model, "Classifier")
      ->check(CLI::IsMember({"gmm", "densenet", "msdensenet"}))
      ->capture_default_str();
  cv->add_option("--method", cvf.method, "Curation rule")
      ->check(CLI::IsMember({"variance", "silence"}))
      ->capture_default_str();
  cv->add_option("--ratio", cvf.ratio, "Curation drop fraction")->capture_default_str();
  cv->add_option("--threshold-dbfs", cvf.threshold_dbfs, "Silence threshold")
      ->capture_default_str();
  cv->add_option("--preset", cvf.preset, "Network size preset")
      ->check(CLI::IsMember({"default", "tiny"}))
      ->capture_default_str();
  cv->add_option("--components", cvf.components, "GMM components per class")
      ->capture_default_str();
  cv->add_option("--epochs", cvf.epochs, "Max epochs")->capture_default_str();
  cv->add_option("--batch-size", cvf.batch_size, "Minibatch size")->capture_default_str();
  cv->add_option("--lr", cvf.lr, "Adam learning rate")->capture_default_str();
  cv->add_option("--patience", cvf.patience, "Early stopping patience")->capture_default_str();
  cv->add_option("--seed", cvf.seed, "Run seed")->capture_default_str();

  // report ------------------------------------------------------------------
  struct {
    std::vector<std::string> results;
    std::string out;
  } rp;
  CLI::App* report = app.add_subcommand("report", "Render results files into a markdown report");
  report->fallthrough();
  report->add_option("--results", rp.results, "One or more results.jsonl files")->required();
  report->add_option("--out", rp.out, "Report output directory")->required();

  // gradcheck ---------------------------------------------------------------
  struct {
    uint64_t seed = 42;
    int points = 5;
  } gc;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference check of every operator");
  gradcheck->fallthrough();
  gradcheck->add_option("--seed", gc.seed, "Sweep seed")->capture_default_str();
  gradcheck->add_option("--points", gc.points, "Random points per operator")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (deterministic)
    set_thread_count(1);
  else if (threads > 0)
    set_thread_count(threads);

  try {
    if (*synth) {
      synth::GenerateOptions o;
      o.num_classes = sy.classes;
      o.segments_per_class = sy.per_class;
      o.seed = sy.seed;
      o.outlier_frac = sy.outlier_frac;
      o.outlier_mislabel = sy.mislabel;
      o.segment_seconds = sy.segment_seconds;
      o.sample_rate_hz = sy.sample_rate;
      synth::GenerateSummary summary = synth::generate_dataset(o, sy.out);
      write_manifest(fs::path(sy.out) / "run_manifest.txt",
                     {{"command", "synth"},
                      {"out", sy.out},
                      {"classes", inum(sy.classes)},
                      {"segments_per_class", inum(sy.per_class)},
                      {"seed", unum(sy.seed)},
                      {"outlier_frac", fnum(sy.outlier_frac)},
                      {"mislabel_outliers", sy.mislabel ? "true" : "false"},
                      {"segment_seconds", fnum(sy.segment_seconds)},
                      {"sample_rate_hz", inum(sy.sample_rate)}});
      std::cout << strf("wrote %lld wav files (%lld outliers) under %s\n",
                        static_cast<long long>(summary.num_wavs),
                        static_cast<long long>(summary.num_outliers), sy.out.c_str());
    } else if (*featurize) {
      harness::FeaturizeOptions o;
      o.kind = fz.feature == "mfcc60" ? dsp::FeatureKind::kMfcc : dsp::FeatureKind::kLogMel;
      o.dump_images = fz.dump_image;
      o.frame_ms = fz.frame_ms;
      o.overlap = fz.overlap;
      o.segment_seconds = fz.segment_seconds;
      int64_t n = harness::featurize_dataset(fz.data, fz.out, o);
      write_manifest(fs::path(fz.out) / "run_manifest.txt",
                     {{"command", "featurize"},
                      {"data", fz.data},
                      {"out", fz.out},
                      {"feature", fz.feature},
                      {"dump_image", fz.dump_image ? "true" : "false"},
                      {"frame_ms", fnum(fz.frame_ms)},
                      {"overlap", fnum(fz.overlap)},
                      {"segment_seconds", fnum(fz.segment_seconds)}});
      std::cout << strf("wrote %lld feature records to %s\n", static_cast<long long>(n),
                        fz.out.c_str());
    } else if (*curate) {
      feat::FeatureStore store = feat::open_store(cu.store);
      fs::path out = cu.out.empty() ? fs::path(cu.store) / "curation.tsv" : fs::path(cu.out);
      cur::CurationResult result;
      if (cu.method == "variance") {
        std::vector<cur::Entry> entries;
        entries.reserve(store.rows.size());
        for (const auto& row : store.rows)
          entries.push_back({row.segment_id, row.sample_variance});
        result = cur::cull_low_variance(entries, cu.ratio);
      } else {
        if (cu.audio.empty())
          raise(ErrorKind::kInvalidConfig, "--method silence needs --audio <dataset dir>");
        harness::Metadata meta = harness::load_metadata(cu.audio);
        harness::CvOptions o;
        o.curation.method = harness::CurationMethod::kSilence;
        o.audio_dir = cu.audio;
        harness::CurationStatistic statistic = harness::make_statistic(store, meta, o);
        std::vector<cur::Entry> entries;
        entries.reserve(store.rows.size());
        for (const auto& row : store.rows)
          entries.push_back({row.segment_id, statistic({row.segment_id, 0})});
        result = cur::cull_silence(entries, cu.threshold_dbfs);
      }
      cur::write_report(out, result);
      write_manifest(out.string() + ".run_manifest.txt",
                     {{"command", "curate"},
                      {"store", cu.store},
                      {"method", cu.method},
                      {"ratio", fnum(cu.ratio)},
                      {"threshold_dbfs", fnum(cu.threshold_dbfs)},
                      {"out", out.string()}});
      std::cout << strf("kept %zu, dropped %zu -> %s\n", result.kept.size(),
                        result.dropped.size(), out.string().c_str());
    } else if (*train) {
      feat::FeatureStore store = feat::open_store(tr.store);
      harness::Metadata meta = harness::load_metadata(tr.data);
      harness::CvOptions o;
      o.model_kind = harness::model_kind_from_name(tr.model);
      o.tiny_preset = tr.preset == "tiny";
      o.seed = tr.seed;
      o.curation.method = harness::curation_method_from_name(tr.method);
      o.curation.ratio = tr.ratio;
      o.curation.threshold_dbfs = tr.threshold_dbfs;
      o.audio_dir = tr.data;
      o.train.epochs = tr.epochs;
      o.train.batch_size = tr.batch_size;
      o.train.lr = tr.lr;
      o.train.early_stop_patience = tr.patience;
      auto refs = harness::expand(store, meta, meta.folds[static_cast<size_t>(tr.fold - 1)].train);
      cur::CurationResult culled =
          curate_refs(refs, harness::make_statistic(store, meta, o), o.curation);
      cur::write_report(tr.out + ".curation.tsv", culled);
      model::TrainLog log;
      model::Model m =
          harness::train_on_refs(store, meta, filter_kept(refs, culled), tr.fold, o, &log);
      model::save_model(tr.out, m, {log.best_epoch, tr.seed});
      write_manifest(tr.out + ".run_manifest.txt",
                     {{"command", "train"},
                      {"store", tr.store},
                      {"data", tr.data},
                      {"out", tr.out},
                      {"model", tr.model},
                      {"preset", tr.preset},
                      {"fold", inum(tr.fold)},
                      {"method", tr.method},
                      {"ratio", fnum(tr.ratio)},
                      {"threshold_dbfs", fnum(tr.threshold_dbfs)},
                      {"epochs", inum(tr.epochs)},
                      {"batch_size", inum(tr.batch_size)},
                      {"lr", fnum(tr.lr)},
                      {"patience", inum(tr.patience)},
                      {"seed", unum(tr.seed)}});
      std::cout << strf("saved %s (best epoch %lld, val accuracy %.4f)\n", tr.out.c_str(),
                        static_cast<long long>(log.best_epoch), log.best_val_accuracy);
    } else if (*baseline) {
      feat::FeatureStore store = feat::open_store(bg.store);
      harness::Metadata meta = harness::load_metadata(bg.data);
      harness::CvOptions o;
      o.model_kind = harness::ModelKind::kGmm;
      o.seed = bg.seed;
      o.gmm_components = bg.components;
      o.gmm_max_iters = bg.max_iters;
      o.curation.ratio = bg.ratio;
      const auto& fold = meta.folds[static_cast<size_t>(bg.fold - 1)];
      auto refs = harness::expand(store, meta, fold.train);
      cur::CurationResult culled =
          curate_refs(refs, harness::make_statistic(store, meta, o), o.curation);
      gmm::GmmBank bank =
          harness::fit_bank_on_refs(store, meta, filter_kept(refs, culled), bg.fold, o);
      gmm::save_bank(bg.out, bank);
      harness::EvalResult res =
          harness::evaluate_bank(bank, store, harness::expand(store, meta, fold.test));
      write_manifest(bg.out + ".run_manifest.txt",
                     {{"command", "baseline-gmm"},
                      {"store", bg.store},
                      {"data", bg.data},
                      {"out", bg.out},
                      {"fold", inum(bg.fold)},
                      {"components", inum(bg.components)},
                      {"max_iters", inum(bg.max_iters)},
                      {"ratio", fnum(bg.ratio)},
                      {"seed", unum(bg.seed)}});
      std::cout << strf("saved %s\n", bg.out.c_str());
      print_eval(res, bank.class_labels);
    } else if (*evaluate) {
      feat::FeatureStore store = feat::open_store(ev.store);
      harness::Metadata meta = harness::load_metadata(ev.data);
      auto test = harness::expand(store, meta,
                                  meta.folds[static_cast<size_t>(ev.fold - 1)].test);
      char magic[4] = {0, 0, 0, 0};
      {
        std::ifstream is(ev.checkpoint, std::ios::binary);
        if (!is) raise(ErrorKind::kMissingFile, "cannot open " + ev.checkpoint);
        is.read(magic, 4);
      }
      harness::EvalResult res;
      std::vector<std::string> labels;
      if (std::string(magic, 4) == "ASCP") {
        model::Model m = model::load_model(ev.checkpoint);
        if (m.class_labels != meta.class_labels)
          raise(ErrorKind::kUnknownLabel, "checkpoint class list differs from labels.txt");
        model::Aggregation agg = ev.aggregation == "majority" ? model::Aggregation::kMajority
                                                              : model::Aggregation::kMeanLogProb;
        res = harness::evaluate_model(m, store, test, agg);
        labels = m.class_labels;
      } else if (std::string(magic, 4) == "ASCG") {
        gmm::GmmBank bank = gmm::load_bank(ev.checkpoint);
        if (!bank.class_labels.empty() && bank.class_labels != meta.class_labels)
          raise(ErrorKind::kUnknownLabel, "mixture bank class list differs from labels.txt");
        res = harness::evaluate_bank(bank, store, test);
        labels = meta.class_labels;
      } else {
        raise(ErrorKind::kUnsupportedFormat, ev.checkpoint + " is neither ASCP nor ASCG");
      }
      std::cout << strf("checkpoint %s, fold %d\n", ev.checkpoint.c_str(), ev.fold);
      print_eval(res, labels);
    } else if (*cv) {
      feat::FeatureStore store = feat::open_store(cvf.store);
      harness::Metadata meta = harness::load_metadata(cvf.data);
      harness::CvOptions o;
      o.model_kind = harness::model_kind_from_name(cvf.model);
      o.curation.method = harness::curation_method_from_name(cvf.method);
      o.curation.ratio = cvf.ratio;
      o.curation.threshold_dbfs = cvf.threshold_dbfs;
      o.seed = cvf.seed;
      o.gmm_components = cvf.components;
      o.tiny_preset = cvf.preset == "tiny";
      o.train.epochs = cvf.epochs;
      o.train.batch_size = cvf.batch_size;
      o.train.lr = cvf.lr;
      o.train.early_stop_patience = cvf.patience;
      o.audio_dir = cvf.data;
      harness::ExperimentResult result = harness::run_cv(store, meta, o, cvf.out);
      harness::write_results_jsonl(fs::path(cvf.out) / "results.jsonl", {result});
      write_manifest(fs::path(cvf.out) / "run_manifest.txt",
                     {{"command", "cv"},
                      {"store", cvf.store},
                      {"data", cvf.data},
                      {"out", cvf.out},
                      {"model", cvf.model},
                      {"method", cvf.method},
                      {"ratio", fnum(cvf.ratio)},
                      {"threshold_dbfs", fnum(cvf.threshold_dbfs)},
                      {"preset", cvf.preset},
                      {"components", inum(cvf.components)},
                      {"epochs", inum(cvf.epochs)},
                      {"batch_size", inum(cvf.batch_size)},
                      {"lr", fnum(cvf.lr)},
                      {"patience", inum(cvf.patience)},
                      {"seed", unum(cvf.seed)}});
      std::string folds;
      for (size_t i = 0; i < result.fold_accuracy.size(); ++i) {
        if (i) folds += ", ";
        folds += strf("%.4f", result.fold_accuracy[i]);
      }
      std::cout << strf("%s mean CV accuracy %.4f (folds: %s)\n", cvf.model.c_str(),
                        result.mean_cv_accuracy, folds.c_str());
    } else if (*report) {
      std::vector<harness::ExperimentResult> all;
      for (const std::string& f : rp.results)
        for (auto& r : harness::read_results_jsonl(f)) all.push_back(std::move(r));
      harness::write_report(all, rp.out);
      KV kv{{"command", "report"}, {"out", rp.out}};
      for (const std::string& f : rp.results) kv.push_back({"results", f});
      write_manifest(fs::path(rp.out) / "run_manifest.txt", kv);
      std::cout << strf("wrote %s/report.md (%zu experiments)\n", rp.out.c_str(), all.size());
    } else if (*gradcheck) {
      auto suite = ag::op_gradient_suite(gc.seed, gc.points);
      bool ok = true;
      for (const auto& [name, err] : suite) {
        std::cout << strf("%-26s max rel err %.3e\n", name.c_str(), err);
        if (!(err < 1e-5)) ok = false;
      }
      std::cout << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
      return ok ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.kind()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
