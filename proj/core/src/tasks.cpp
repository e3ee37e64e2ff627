#include "twnn/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>

#include "twnn/error.hpp"
#include "twnn/fixpoint.hpp"
#include "twnn/rng.hpp"

namespace twnn {

namespace {

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
std::string num(T v) requires std::is_integral_v<T> {
  return std::to_string(v);
}

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); }

constexpr std::uint64_t kInitStream = 0x1a2b3c4d5e6f7081ULL;

}  // namespace

void write_run_header(std::ostream& out, const std::string& command, const RunHeader& header) {
  out << "# twnn " << command << '\n';
  for (const auto& [k, v] : header) out << k << " = " << v << '\n';
}

RunHeader describe(const TrainConfig& c) {
  return {{"learning-rate", num(c.learning_rate)},
          {"tolerance", num(c.tolerance)},
          {"loss-threshold", num(c.loss_threshold)},
          {"batch-size", num(c.batch_size)},
          {"max-iter", num(c.max_iter)},
          {"epochs", num(c.epochs)},
          {"seed", num(c.seed)},
          {"hop-budget", num(c.backward_hop_budget)}};
}

// ---- sine ----

void SineTaskSpec::validate() const {
  if (sequence_length < 2) invalid("sequence_length must be >= 2");
  if (!(split > 0.0 && split < 1.0)) invalid("split must be in (0, 1)");
  if (!std::isfinite(frequency)) invalid("frequency must be finite");
  if (!(amplitude >= 0.0 && amplitude <= 1.0)) invalid("amplitude must be in [0, 1]");
  if (window == 0) invalid("window must be positive");
  if (window >= sequence_length) invalid("window must be shorter than sequence_length");
  if (hidden == 0) invalid("hidden must be positive");
  const std::size_t windows = std::min(sequence_length - window, sample_count ? sample_count : sequence_length);
  const auto n_train = static_cast<std::size_t>(split * static_cast<double>(windows));
  if (n_train == 0 || n_train == windows) invalid("split leaves an empty train or validation set");
}

RunHeader SineTaskSpec::describe() const {
  return {{"sequence-length", num(sequence_length)}, {"sample-count", num(sample_count)},
          {"split", num(split)},                     {"frequency", num(frequency)},
          {"amplitude", num(amplitude)},             {"window", num(window)},
          {"hidden", num(hidden)}};
}

std::vector<double> sine_sequence(const SineTaskSpec& spec) {
  std::vector<double> seq(spec.sequence_length);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    seq[t] = 0.5 + 0.5 * spec.amplitude * std::sin(2.0 * std::numbers::pi * spec.frequency * static_cast<double>(t));
  }
  return seq;
}

SineData sine_data(const SineTaskSpec& spec) {
  spec.validate();
  const auto seq = sine_sequence(spec);
  const std::size_t k = spec.window;
  std::size_t windows = seq.size() - k;
  if (spec.sample_count) windows = std::min(windows, spec.sample_count);
  const auto n_train = static_cast<std::size_t>(spec.split * static_cast<double>(windows));

  auto fill = [&](std::size_t begin, std::size_t end) {
    Dataset d{Tensor::zeros({end - begin, k}), Tensor::zeros({end - begin, k})};
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t j = 0; j < k; ++j) {
        d.inputs.at(s - begin, j) = seq[s + j];
        d.targets.at(s - begin, j) = seq[s + j + 1];
      }
    }
    return d;
  };
  SineData out{fill(0, n_train), fill(n_train, windows), {}};
  for (std::size_t s = n_train; s < windows; ++s) out.validation_t.push_back(s + k);
  return out;
}

ResidualStack build_sine_model(const SineTaskSpec& spec, const TrainConfig& config) {
  Rng rng(config.seed ^ kInitStream);
  EquilibriumBlock block;
  block.kind = BlockKind::Net;
  block.params = MlpParams::contractive_init(spec.window, spec.hidden, spec.window, rng);
  block.params.w2 = Tensor::zeros(block.params.w2.shape());
  block.fix.tolerance = config.tolerance;
  block.fix.max_iter = config.max_iter;
  ResidualStack stack;
  stack.blocks.push_back(std::move(block));
  return stack;
}

TrainConfig sine_train_defaults() {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 300;
  return c;
}

SineTaskResult run_sine_task(const SineTaskSpec& spec, const TrainConfig& config) {
  config.validate();
  const SineData data = sine_data(spec);
  SineTaskResult out;
  out.model = build_sine_model(spec, config);
  out.record = train(out.model, data.train, config);

  std::vector<std::size_t> idx(data.validation.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor pred = out.model.forward(data.validation.input_columns(idx));
  const std::size_t last = spec.window - 1;
  double se = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const WavePoint p{data.validation_t[i], data.validation.targets.at(i, last), pred.at(last, i)};
    se += (p.target - p.prediction) * (p.target - p.prediction);
    out.wave.push_back(p);
  }
  out.wave_mse = se / static_cast<double>(idx.size());
  return out;
}

void write_wave_csv(std::ostream& out, const std::vector<WavePoint>& wave) {
  out << "t,target,prediction\n";
  for (const auto& p : wave) out << p.t << ',' << num(p.target) << ',' << num(p.prediction) << '\n';
}

// ---- image ----

const char* to_string(DatasetKind kind) noexcept {
  return kind == DatasetKind::MnistIdx ? "mnist-idx" : "cifar10-binary";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "mnist-idx") return DatasetKind::MnistIdx;
  if (name == "cifar10-binary") return DatasetKind::Cifar10Binary;
  invalid("dataset must be mnist-idx or cifar10-binary, got '" + name + "'");
}

ImageTaskSpec image_spec_for(DatasetKind kind) {
  ImageTaskSpec s;
  s.dataset_kind = kind;
  if (kind == DatasetKind::Cifar10Binary) {
    s.image_rows = 32;
    s.image_cols = 32;
    s.image_channels = 3;
  }
  return s;
}

void ImageTaskSpec::validate(const TrainConfig& config) const {
  if (subset_size < config.batch_size) invalid("subset_size must be >= batch_size");
  if (classes < 2 || classes > 10) invalid("classes must be in [2, 10]");
  if (subset_size % classes != 0) invalid("subset_size must be a multiple of classes");
  if (holdout_size == 0 || holdout_size % classes != 0) invalid("holdout_size must be a positive multiple of classes");
  if (width == 0) invalid("width must be positive");
  const bool mnist_dims = image_rows == 28 && image_cols == 28 && image_channels == 1;
  const bool cifar_dims = image_rows == 32 && image_cols == 32 && image_channels == 3;
  if (dataset_kind == DatasetKind::MnistIdx && !mnist_dims) invalid("image dimensions must be 28x28x1 for mnist-idx");
  if (dataset_kind == DatasetKind::Cifar10Binary && !cifar_dims) {
    invalid("image dimensions must be 32x32x3 for cifar10-binary");
  }
  for (int m : block_max_iter) {
    if (m < 1) invalid("block_max_iter entries must be >= 1");
  }
}

RunHeader ImageTaskSpec::describe() const {
  std::string overrides;
  for (std::size_t i = 0; i < block_max_iter.size(); ++i) {
    overrides += (i ? "," : "") + std::to_string(block_max_iter[i]);
  }
  RunHeader h{{"dataset", to_string(dataset_kind)}, {"data-dir", data_dir.string()},
              {"subset-size", num(subset_size)},    {"holdout-size", num(holdout_size)},
              {"classes", num(classes)},            {"width", num(width)}};
  if (!overrides.empty()) h.emplace_back("block-max-iter", overrides);
  return h;
}

void write_synthetic_dataset(const ImageTaskSpec& spec, std::size_t count, std::uint64_t seed) {
  const ByteImages img =
      synthesize_images(count, spec.classes, spec.image_rows, spec.image_cols, spec.image_channels, seed);
  std::filesystem::create_directories(spec.data_dir);
  if (spec.dataset_kind == DatasetKind::MnistIdx) {
    write_mnist_idx(spec.data_dir / kMnistImagesFile, spec.data_dir / kMnistLabelsFile, img.pixels, img.labels,
                    static_cast<std::uint32_t>(spec.image_rows), static_cast<std::uint32_t>(spec.image_cols));
  } else {
    write_cifar10_binary(spec.data_dir / kCifarBatchFile, img.pixels, img.labels);
  }
}

LabeledImages load_image_dataset(const ImageTaskSpec& spec) {
  LabeledImages data = spec.dataset_kind == DatasetKind::MnistIdx
                           ? load_mnist_idx(spec.data_dir / kMnistImagesFile, spec.data_dir / kMnistLabelsFile)
                           : load_cifar10_binary(spec.data_dir / kCifarBatchFile);
  if (data.pixels() != spec.pixels()) {
    throw Error(ErrorKind::ShapeMismatch, "dataset has " + std::to_string(data.pixels()) + " pixels per image, expected " +
                                              std::to_string(spec.pixels()));
  }
  return data;
}

Dataset to_dataset(const LabeledImages& images, std::size_t classes) {
  Dataset d{images.images, Tensor::zeros({images.size(), classes})};
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto l = static_cast<std::size_t>(images.label(i));
    if (l >= classes) throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(l) + " >= classes");
    d.targets.at(i, l) = 1.0;
  }
  return d;
}

ResidualStack build_image_model(const ImageTaskSpec& spec, std::size_t depth, const TrainConfig& config) {
  if (depth == 0) invalid("model depth must be positive");
  Rng rng(config.seed ^ kInitStream);
  ResidualStack stack;
  const double p = 3.0 * std::sqrt(3.0 / static_cast<double>(spec.pixels()));
  stack.input_projection = rng.uniform_tensor({spec.width, spec.pixels()}, -p, p);
  for (std::size_t i = 0; i < depth; ++i) {
    EquilibriumBlock block;
    block.kind = BlockKind::Residual;
    block.activation = Activation::Tanh;
    block.params = MlpParams::contractive_init(spec.width, spec.width, spec.width, rng, 0.5);
    block.fix.tolerance = config.tolerance;
    block.fix.max_iter = i < spec.block_max_iter.size() ? spec.block_max_iter[i] : config.max_iter;
    stack.blocks.push_back(std::move(block));
  }
  stack.readout = Readout{Tensor::zeros({spec.classes, spec.width}), Tensor::zeros({spec.classes})};
  return stack;
}

AccuracyReport top1_accuracy(const ResidualStack& model, const Dataset& data) {
  AccuracyReport r;
  std::vector<std::size_t> idx;
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(data.size(), begin + kChunk); ++i) idx.push_back(i);
    const Tensor pred = model.forward(data.input_columns(idx));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < pred.rows(); ++c) {
        if (pred.at(c, j) > pred.at(best, j)) best = c;
      }
      if (data.targets.at(idx[j], best) == 1.0) ++r.correct;
      ++r.evaluated;
    }
  }
  return r;
}

TrainConfig image_train_defaults() {
  TrainConfig c;
  c.learning_rate = 0.5;
  c.epochs = 3;
  return c;
}

ImageTaskResult run_image_task(const ImageTaskSpec& spec, std::size_t model_depth, const TrainConfig& config) {
  config.validate();
  spec.validate(config);
  const LabeledImages all = load_image_dataset(spec);
  const LabeledImages subset = balanced_subset(all, spec.subset_size + spec.holdout_size, spec.classes);

  // Class-interleaved, so any prefix that is a multiple of `classes` is balanced.
  auto slice = [&](std::size_t begin, std::size_t end) {
    LabeledImages part{Tensor::zeros({end - begin, subset.pixels()}), Tensor::zeros({end - begin})};
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t p = 0; p < subset.pixels(); ++p) part.images.at(r - begin, p) = subset.images.at(r, p);
      part.labels[r - begin] = subset.labels[r];
    }
    return to_dataset(part, spec.classes);
  };
  const Dataset train_set = slice(0, spec.subset_size);
  const Dataset heldout = slice(spec.subset_size, spec.subset_size + spec.holdout_size);

  ImageTaskResult out;
  out.model = build_image_model(spec, model_depth, config);
  out.untrained = top1_accuracy(out.model, heldout);
  out.record = train(out.model, train_set, config);
  out.heldout = top1_accuracy(out.model, heldout);
  if (out.record.last_plan) out.classification = classify_blocks(*out.record.last_plan);
  return out;
}

// ---- gradcheck ----

GradcheckMapKind parse_gradcheck_map(const std::string& name) {
  if (name == "linear") return GradcheckMapKind::Linear;
  if (name == "mlp") return GradcheckMapKind::Mlp;
  invalid("map must be linear or mlp, got '" + name + "'");
}

RunHeader GradcheckSpec::describe() const {
  std::string d;
  for (std::size_t i = 0; i < dims.size(); ++i) d += (i ? "," : "") + std::to_string(dims[i]);
  return {{"map", map == GradcheckMapKind::Linear ? "linear" : "mlp"},
          {"dims", d},
          {"seed", num(seed)},
          {"tolerance", num(tolerance)},
          {"instances", num(instances)},
          {"duality-pairs", num(duality_pairs)}};
}

namespace {

constexpr std::size_t kMaxFdCoordinates = 1024;
constexpr double kLinearCoefficient = 0.5;

struct CheckInstance {
  std::unique_ptr<DifferentiableMap> map;
  LeafSet inputs;
  Tensor x0;
};

CheckInstance make_instance(const GradcheckSpec& spec, Rng& rng) {
  CheckInstance inst;
  if (spec.map == GradcheckMapKind::Linear) {
    const std::size_t n = spec.dims.at(0);
    inst.map = std::make_unique<LinearMap>(kLinearCoefficient);
    inst.inputs.set(leaf::kInput, n == 1 ? Tensor::scalar(1.0) : rng.uniform_tensor({n}, -1.0, 1.0));
    inst.x0 = Tensor::zeros(inst.inputs.at(leaf::kInput).shape());
    return inst;
  }
  const std::size_t d = spec.dims[0], h = spec.dims[1];
  MlpParams p = MlpParams::contractive_init(d, h, d, rng);
  p.b1 = rng.uniform_tensor({h}, -0.5, 0.5);
  p.b2 = rng.uniform_tensor({d}, -0.5, 0.5);
  inst.map = std::make_unique<NetMap>();
  inst.inputs = p.leaves();
  inst.inputs.set(leaf::kInput, rng.uniform_tensor({d, 1}, -1.0, 1.0));
  inst.x0 = Tensor::zeros({d, 1});
  return inst;
}

std::string check_dims(const GradcheckSpec& spec) {
  if (!(spec.tolerance > 0.0)) return "tolerance must be positive";
  if (spec.instances < 1) return "instances must be >= 1";
  if (spec.duality_pairs < 1) return "duality_pairs must be >= 1";
  std::size_t coords = 0;
  if (spec.map == GradcheckMapKind::Linear) {
    if (spec.dims.size() != 1 || spec.dims[0] == 0) return "dims for linear must be a single positive width";
    coords = spec.dims[0];
  } else {
    if (spec.dims.size() != 3) return "dims for mlp must be d,h,o";
    const std::size_t d = spec.dims[0], h = spec.dims[1], o = spec.dims[2];
    if (d == 0 || h == 0) return "dims must be positive";
    if (d != o) return "dims for mlp need d == o";
    coords = 2 * d * h + h + 2 * d;
  }
  if (coords > kMaxFdCoordinates) return "dims give too many coordinates for finite differences";
  return {};
}

double bundle_inner(const CotangentBundle& a, const LeafSet& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) s += inner(a.at(b.name(i)), b.value(i));
  return s;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckSpec& spec) {
  GradcheckReport report;
  report.failure = check_dims(spec);
  if (!report.failure.empty()) return report;

  FixConfig tight;
  tight.tolerance = 1e-13;
  tight.max_iter = 20000;

  oracles::OracleReport fd{"fd vs adjoint", 0.0, 0.0, 0, spec.tolerance, true};
  oracles::OracleReport dual{"tangent/adjoint duality", 0.0, 0.0, 0, spec.tolerance, true};
  oracles::OracleReport unrolled{"implicit vs unrolled", 0.0, 0.0, 0, spec.tolerance, true};

  Rng rng(spec.seed);
  for (int k = 0; k < spec.instances; ++k) {
    const CheckInstance inst = make_instance(spec, rng);
    const DifferentiableMap& g = *inst.map;
    const FixResult fwd = fix_forward(g, inst.inputs, inst.x0, tight);
    const Tensor z_bar = rng.uniform_tensor(fwd.z.shape(), -1.0, 1.0);
    const AdjointFixResult adj = fix_adjoint(g, fwd.z, inst.inputs, z_bar, tight, fwd.converged);

    const Tensor& z_star = fwd.z;
    const oracles::ScalarFn f = [&](const LeafSet& leaves) {
      return inner(z_bar, oracles::solve_fixed_point(g, leaves, z_star, 1e-15, 100000));
    };
    oracles::merge(fd, oracles::compare_bundles("fd", oracles::fd_gradient(f, inst.inputs), adj.leaf_cotangents,
                                                spec.tolerance));

    const CotangentBundle unrolled_grad = oracles::unrolled_fix_gradient(g, inst.x0, inst.inputs, tight, z_bar);
    oracles::merge(unrolled,
                   oracles::compare_bundles("unrolled", unrolled_grad, adj.leaf_cotangents, spec.tolerance));

    for (int p = 0; p < spec.duality_pairs; ++p) {
      LeafSet x_dot;
      for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
        x_dot.set(inst.inputs.name(i), rng.uniform_tensor(inst.inputs.value(i).shape(), -1.0, 1.0));
      }
      const Tensor zb = rng.uniform_tensor(z_star.shape(), -1.0, 1.0);
      const Tensor tz = fix_tangent(g, z_star, inst.inputs, x_dot, tight, fwd.converged).tangent;
      const CotangentBundle tx = fix_adjoint(g, z_star, inst.inputs, zb, tight, fwd.converged).leaf_cotangents;
      const double lhs = inner(zb, tz);
      const double rhs = bundle_inner(tx, x_dot);
      const double abs_err = std::abs(lhs - rhs);
      dual.max_abs_error = std::max(dual.max_abs_error, abs_err);
      dual.max_rel_error = std::max(dual.max_rel_error, abs_err / std::max({std::abs(lhs), std::abs(rhs), 1e-12}));
      ++dual.cases_run;
    }
  }
  dual.pass = dual.max_rel_error <= dual.tolerance;
  fd.pass = fd.max_rel_error <= fd.tolerance;
  unrolled.pass = unrolled.max_rel_error <= unrolled.tolerance;
  report.suites = {fd, dual, unrolled};
  report.pass = fd.pass && dual.pass && unrolled.pass;
  return report;
}

void write_gradcheck_report(std::ostream& out, const GradcheckReport& report) {
  if (!report.failure.empty()) {
    out << "FAIL: " << report.failure << '\n';
    return;
  }
  for (const auto& s : report.suites) {
    out << (s.pass ? "PASS " : "FAIL ") << s.name << ": max_rel_error=" << num(s.max_rel_error)
        << " max_abs_error=" << num(s.max_abs_error) << " cases=" << s.cases_run << " tolerance=" << num(s.tolerance)
        << '\n';
  }
  out << (report.pass ? "gradcheck passed" : "gradcheck failed") << '\n';
}

}  // namespace twnn
