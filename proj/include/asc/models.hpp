#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asc/autograd.hpp"
#include "asc/optim.hpp"

namespace asc::model {

struct MultiScaleLayerSpec {
  int64_t width = 3;   // temporal kernel width, odd
  int64_t growth = 12;
};

struct MultiScaleSpec {
  std::vector<MultiScaleLayerSpec> layer_specs;  // applied to block 1, one per layer
};

struct DenseNetConfig {
  int64_t initial_channels = 64;
  std::vector<int64_t> block_layers = {3, 6, 12, 8};
  int64_t growth_rate = 12;
  int64_t bottleneck_factor = 4;
  double compression = 1.0;
  int64_t num_classes = 15;
  std::optional<MultiScaleSpec> multiscale;
};

DenseNetConfig default_config(int64_t num_classes);
DenseNetConfig tiny_config(int64_t num_classes);
MultiScaleSpec default_multiscale_spec();  // [(9,16),(7,12),(5,8),(3,4)]
MultiScaleSpec tiny_multiscale_spec();     // matches tiny block 1 layer count

// A 128x128 network input crop plus its provenance.
struct Patch {
  std::string segment_id;
  int64_t label = -1;
  std::vector<float> pixels;  // 128*128 row-major (mel band x frame)
};

// Indices below address Model::params / Model::stats; both vectors are fixed
// at build time so indices stay valid.
struct ConvRef {
  int w = -1;
  int64_t pad_h = 0, pad_w = 0;
};
struct BnRef {
  int gamma = -1, beta = -1, stats = -1;
};
struct DenseLayerRef {
  BnRef bn1;
  ConvRef conv1;
  BnRef bn2;
  ConvRef conv2;
};
struct TransitionRef {
  BnRef bn;
  ConvRef conv;
};

struct Model {
  DenseNetConfig config;
  std::vector<std::string> class_labels;
  std::vector<ag::Parameter<float>> params;
  std::vector<ag::BnStats<float>> stats;
  std::vector<std::string> stats_names;  // BN prefix per stats entry
  double bn_momentum = 0.1;

  ConvRef stem;
  std::vector<std::vector<DenseLayerRef>> blocks;
  std::vector<TransitionRef> transitions;
  BnRef tail_bn;
  int tail_w = -1, tail_b = -1;

  ag::Tensor<float> forward(const ag::Tensor<float>& batch, bool training);
  std::vector<ag::Parameter<float>*> trainable();
};

Model build_densenet(const DenseNetConfig& config, std::vector<std::string> class_labels,
                     uint64_t seed);
Model build_multiscale_densenet(const DenseNetConfig& config,
                                std::vector<std::string> class_labels, uint64_t seed);

// Channel/shape bookkeeping derived from the config alone.
struct StageTrace {
  std::vector<int64_t> block_in_channels;
  std::vector<int64_t> block_out_channels;
  std::vector<int64_t> block_spatial;                 // spatial size entering each block
  std::vector<std::vector<int64_t>> layer_in_channels;  // per block, per layer
  int64_t final_channels = 0;                         // into global average pool
  int64_t final_spatial = 0;
};
StageTrace structure(const DenseNetConfig& config, int64_t input_spatial = 128);

std::vector<std::pair<std::string, std::vector<int64_t>>> shape_inventory(const Model& m);

struct TrainOptions {
  int64_t epochs = 30;
  int64_t batch_size = 32;
  double lr = 1e-3;
  uint64_t seed = 42;
  int64_t early_stop_patience = 10;
  bool verbose = false;
};

struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  int64_t best_epoch = 0;  // 1-based epoch whose parameters the model keeps
  double best_val_accuracy = 0.0;
  bool stopped_early = false;
};

TrainLog train(Model& m, const std::vector<Patch>& train_patches,
               const std::vector<Patch>& val_patches, const TrainOptions& opts);

enum class Aggregation { kMeanLogProb, kMajority };

struct SegmentPrediction {
  int64_t class_index = -1;
  std::vector<double> posterior;
};

SegmentPrediction predict_segment(Model& m, const std::vector<const Patch*>& patches,
                                  Aggregation agg);

struct ModelMeta {
  int64_t best_epoch = 0;
  uint64_t seed = 0;
};

void save_model(const std::filesystem::path& path, const Model& m, const ModelMeta& meta);
Model load_model(const std::filesystem::path& path);

}  // namespace asc::model
