#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "twnn/datasets.hpp"
#include "twnn/models.hpp"
#include "twnn/oracles.hpp"
#include "twnn/training.hpp"
#include "twnn/wormhole.hpp"

namespace twnn {

/// Resolved settings echoed at the top of every run, as `key = value` lines
/// that can be fed back through --config.
using RunHeader = std::vector<std::pair<std::string, std::string>>;
void write_run_header(std::ostream& out, const std::string& command, const RunHeader& header);
RunHeader describe(const TrainConfig& config);

// ---- sine-wave generation ----

/// Wave 0.5 + 0.5 * amplitude * sin(2 pi frequency t), t = 0..sequence_length-1.
/// Each sample is a window of `window` consecutive values; its target is the
/// same window shifted one step ahead, so the last component is the forecast.
struct SineTaskSpec {
  std::size_t sequence_length = 10000;
  /// Windows used; 0 takes every window of the sequence.
  std::size_t sample_count = 0;
  double split = 0.8;
  double frequency = 0.01;
  double amplitude = 0.8;
  std::size_t window = 4;
  std::size_t hidden = 16;

  void validate() const;
  RunHeader describe() const;
};

std::vector<double> sine_sequence(const SineTaskSpec& spec);

struct SineData {
  Dataset train;
  Dataset validation;
  /// Sequence index of each validation sample's forecast.
  std::vector<std::size_t> validation_t;
};
SineData sine_data(const SineTaskSpec& spec);

/// One net block under fix, output layer zero-initialized (constant 0.5).
ResidualStack build_sine_model(const SineTaskSpec& spec, const TrainConfig& config);

struct WavePoint {
  std::size_t t = 0;
  double target = 0.0;
  double prediction = 0.0;
};

struct SineTaskResult {
  TrainRecord record;
  ResidualStack model;
  /// One-step forecasts over the validation part of the sequence.
  std::vector<WavePoint> wave;
  double wave_mse = 0.0;
};

/// Learning rate 0.001, tolerance 0.001, max_iter 300, and
/// 300 epochs of batch-16 SGD.
TrainConfig sine_train_defaults();

SineTaskResult run_sine_task(const SineTaskSpec& spec, const TrainConfig& config);
/// Header `t,target,prediction`.
void write_wave_csv(std::ostream& out, const std::vector<WavePoint>& wave);

// ---- image classification ----

enum class DatasetKind { MnistIdx, Cifar10Binary };
const char* to_string(DatasetKind kind) noexcept;
DatasetKind parse_dataset_kind(const std::string& name);

inline constexpr const char* kMnistImagesFile = "train-images-idx3-ubyte";
inline constexpr const char* kMnistLabelsFile = "train-labels-idx1-ubyte";
inline constexpr const char* kCifarBatchFile = "data_batch_1.bin";

struct ImageTaskSpec {
  DatasetKind dataset_kind = DatasetKind::MnistIdx;
  std::filesystem::path data_dir;
  /// Training samples, class-balanced.
  std::size_t subset_size = 1000;
  /// Held-out samples scored after training, class-balanced.
  std::size_t holdout_size = 500;
  std::size_t classes = 10;
  std::size_t image_rows = 28;
  std::size_t image_cols = 28;
  std::size_t image_channels = 1;
  /// Block width after the fixed input projection.
  std::size_t width = 64;
  /// Per-block max_iter overrides; missing entries use the train config.
  std::vector<int> block_max_iter;

  std::size_t pixels() const { return image_rows * image_cols * image_channels; }
  void validate(const TrainConfig& config) const;
  RunHeader describe() const;
};

/// Image spec for a dataset kind with its native geometry (28x28x1 or 32x32x3).
ImageTaskSpec image_spec_for(DatasetKind kind);

/// Writes class-balanced synthetic images in the spec's format into data_dir.
void write_synthetic_dataset(const ImageTaskSpec& spec, std::size_t count, std::uint64_t seed);
LabeledImages load_image_dataset(const ImageTaskSpec& spec);

/// Samples as rows, one-hot targets.
Dataset to_dataset(const LabeledImages& images, std::size_t classes);

/// Fixed random projection to `width`, `depth` residual tanh blocks, and a
/// zero-initialized readout (an untrained model predicts class 0 everywhere).
ResidualStack build_image_model(const ImageTaskSpec& spec, std::size_t depth, const TrainConfig& config);

struct AccuracyReport {
  std::size_t correct = 0;
  std::size_t evaluated = 0;
  double accuracy() const { return evaluated ? static_cast<double>(correct) / static_cast<double>(evaluated) : 0.0; }
};
/// Top-1 by argmax of the readout; ties go to the lower class index.
AccuracyReport top1_accuracy(const ResidualStack& model, const Dataset& data);

struct ImageTaskResult {
  TrainRecord record;
  ResidualStack model;
  AccuracyReport untrained;
  AccuracyReport heldout;
  BlockClassification classification;
};

/// Learning rate 0.5, tolerance 0.001, max_iter 300, batch 64, 3 epochs.
TrainConfig image_train_defaults();

ImageTaskResult run_image_task(const ImageTaskSpec& spec, std::size_t model_depth, const TrainConfig& config);

// ---- gradient check ----

enum class GradcheckMapKind { Linear, Mlp };
GradcheckMapKind parse_gradcheck_map(const std::string& name);

struct GradcheckSpec {
  GradcheckMapKind map = GradcheckMapKind::Mlp;
  /// linear: {n} (a = 0.5, state of width n). mlp: {d, h, o} with d == o.
  std::vector<std::size_t> dims{4, 8, 4};
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
  /// Independent random maps checked.
  int instances = 1;
  /// Random (z_bar, x_dot) pairs per map in the duality suite.
  int duality_pairs = 100;

  RunHeader describe() const;
};

struct GradcheckReport {
  std::vector<oracles::OracleReport> suites;
  bool pass = false;
  /// Set when the check could not run at all.
  std::string failure;
};

GradcheckReport run_gradcheck(const GradcheckSpec& spec);
void write_gradcheck_report(std::ostream& out, const GradcheckReport& report);

}  // namespace twnn
