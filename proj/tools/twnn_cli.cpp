#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "twnn/checkpoint.hpp"
#include "twnn/config_file.hpp"
#include "twnn/error.hpp"
#include "twnn/tasks.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct SineArgs {
  twnn::SineTaskSpec spec;
  twnn::TrainConfig train;
};

struct ImageArgs {
  twnn::ImageTaskSpec spec;
  twnn::TrainConfig train;
  std::string dataset = "mnist-idx";
  std::string data_dir;
  std::size_t synthetic = 2000;
  std::size_t depth = 2;
  std::string block_max_iter;
};

struct GradcheckArgs {
  twnn::GradcheckSpec spec;
  std::string map = "mlp";
  std::string dims = "4,8,4";
};

struct Common {
  std::string config;
  std::string out = "twnn-out";
};

void add_common(CLI::App* cmd, Common& c, std::uint64_t& seed) {
  cmd->add_option("--seed", seed, "RNG seed");
  cmd->add_option("--config", c.config, "key = value file; flags override it");
  cmd->add_option("--out", c.out, "output directory");
}

void add_train_options(CLI::App* cmd, twnn::TrainConfig& t) {
  cmd->add_option("--learning-rate", t.learning_rate);
  cmd->add_option("--tolerance", t.tolerance, "fixed-point residual tolerance");
  cmd->add_option("--loss-threshold", t.loss_threshold, "block loss that lets the controller advance");
  cmd->add_option("--batch-size", t.batch_size);
  cmd->add_option("--max-iter", t.max_iter, "fixed-point iterations per block and batch");
  cmd->add_option("--epochs", t.epochs);
  cmd->add_option("--hop-budget", t.backward_hop_budget, "backward hops per batch");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw twnn::Error(twnn::ErrorKind::Io, "cannot write " + path.string());
  f.precision(17);
  return f;
}

twnn::RunHeader concat(twnn::RunHeader a, const twnn::RunHeader& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void emit_header(const fs::path& out, const std::string& command, const twnn::RunHeader& header) {
  twnn::write_run_header(std::cout, command, header);
  auto f = open_out(out / "run.txt");
  twnn::write_run_header(f, command, header);
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* field) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= text.size() && !text.empty()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw twnn::Error(twnn::ErrorKind::InvalidArgument,
                        std::string(field) + ": '" + item + "' is not a non-negative integer");
    }
    pos = comma + 1;
  }
  return out;
}

int run_sine(const Common& c, SineArgs& a) {
  a.train.validate();
  a.spec.validate();
  fs::create_directories(c.out);
  emit_header(c.out, "train-sine", concat(twnn::describe(a.train), a.spec.describe()));

  const twnn::SineTaskResult r = twnn::run_sine_task(a.spec, a.train);
  {
    auto f = open_out(fs::path(c.out) / "metrics.csv");
    r.record.write_metrics_csv(f);
  }
  {
    auto f = open_out(fs::path(c.out) / "wave.csv");
    twnn::write_wave_csv(f, r.wave);
  }
  twnn::save_checkpoint(fs::path(c.out) / "checkpoint.bin", r.model);

  const auto losses = r.record.epoch_mean_loss();
  if (!losses.empty()) {
    std::cout << "first epoch loss: " << losses.front() << "\nlast epoch loss: " << losses.back() << '\n';
  }
  std::cout << "approximate gradients: " << r.record.approximate_gradient_count() << '\n'
            << "generated wave mse: " << r.wave_mse << '\n';
  return 0;
}

int run_image(const Common& c, ImageArgs& a) {
  const auto kind = twnn::parse_dataset_kind(a.dataset);
  twnn::ImageTaskSpec spec = twnn::image_spec_for(kind);
  spec.subset_size = a.spec.subset_size;
  spec.holdout_size = a.spec.holdout_size;
  spec.classes = a.spec.classes;
  spec.width = a.spec.width;
  spec.block_max_iter = parse_list<int>(a.block_max_iter, "block_max_iter");
  a.train.validate();
  spec.validate(a.train);
  if (a.depth == 0) throw twnn::Error(twnn::ErrorKind::InvalidArgument, "depth must be positive");

  fs::create_directories(c.out);
  if (a.data_dir.empty()) {
    spec.data_dir = fs::path(c.out) / "data";
    twnn::write_synthetic_dataset(spec, a.synthetic, a.train.seed);
  } else {
    spec.data_dir = a.data_dir;
  }
  twnn::RunHeader header = concat(twnn::describe(a.train), spec.describe());
  header.emplace_back("depth", std::to_string(a.depth));
  if (a.data_dir.empty()) header.emplace_back("synthetic", std::to_string(a.synthetic));
  emit_header(c.out, "train-image", header);

  const twnn::ImageTaskResult r = twnn::run_image_task(spec, a.depth, a.train);
  {
    auto f = open_out(fs::path(c.out) / "metrics.csv");
    r.record.write_metrics_csv(f);
  }
  twnn::save_checkpoint(fs::path(c.out) / "checkpoint.bin", r.model);

  auto f = open_out(fs::path(c.out) / "report.txt");
  for (std::ostream* os : {static_cast<std::ostream*>(&std::cout), static_cast<std::ostream*>(&f)}) {
    *os << "untrained accuracy: " << r.untrained.accuracy() << '\n'
        << "held-out accuracy: " << r.heldout.accuracy() << " (" << r.heldout.correct << "/" << r.heldout.evaluated
        << ")\n"
        << "backward hops: " << r.record.backward_hops() << '\n';
    *os << "Dw:";
    for (auto b : r.classification.useful) *os << ' ' << b;
    *os << "\nDp:";
    for (auto b : r.classification.passive) *os << ' ' << b;
    *os << '\n';
  }
  return 0;
}

int run_grad(const Common& c, GradcheckArgs& a, bool out_given) {
  a.spec.map = twnn::parse_gradcheck_map(a.map);
  a.spec.dims = parse_list<std::size_t>(a.dims, "dims");
  twnn::write_run_header(std::cout, "gradcheck", a.spec.describe());
  const twnn::GradcheckReport report = twnn::run_gradcheck(a.spec);
  twnn::write_gradcheck_report(std::cout, report);
  if (out_given) {
    fs::create_directories(c.out);
    auto f = open_out(fs::path(c.out) / "gradcheck.txt");
    twnn::write_run_header(f, "gradcheck", a.spec.describe());
    twnn::write_gradcheck_report(f, report);
  }
  return report.pass ? 0 : kExitFailure;
}

// Finds `--config FILE` / `--config=FILE` among the raw arguments.
std::optional<std::string> find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal wormhole equilibrium networks: training tasks and gradient checks"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  SineArgs sine;
  sine.train = twnn::sine_train_defaults();
  ImageArgs image;
  image.train = twnn::image_train_defaults();
  GradcheckArgs grad;

  auto* sine_cmd = app.add_subcommand("train-sine", "fit a sine wave with one equilibrium net block");
  add_common(sine_cmd, common, sine.train.seed);
  add_train_options(sine_cmd, sine.train);
  sine_cmd->add_option("--sequence-length", sine.spec.sequence_length);
  sine_cmd->add_option("--sample-count", sine.spec.sample_count, "windows used (0: all)");
  sine_cmd->add_option("--split", sine.spec.split, "train fraction");
  sine_cmd->add_option("--frequency", sine.spec.frequency, "cycles per sample");
  sine_cmd->add_option("--amplitude", sine.spec.amplitude);
  sine_cmd->add_option("--window", sine.spec.window);
  sine_cmd->add_option("--hidden", sine.spec.hidden);

  auto* image_cmd = app.add_subcommand("train-image", "classify images with a wormhole-controlled residual stack");
  add_common(image_cmd, common, image.train.seed);
  add_train_options(image_cmd, image.train);
  image_cmd->add_option("--dataset", image.dataset, "mnist-idx or cifar10-binary");
  image_cmd->add_option("--data-dir", image.data_dir, "dataset directory; omitted: synthesize one under --out");
  image_cmd->add_option("--synthetic", image.synthetic, "synthetic sample count when --data-dir is omitted");
  image_cmd->add_option("--subset-size", image.spec.subset_size);
  image_cmd->add_option("--holdout-size", image.spec.holdout_size);
  image_cmd->add_option("--classes", image.spec.classes);
  image_cmd->add_option("--width", image.spec.width);
  image_cmd->add_option("--depth", image.depth);
  image_cmd->add_option("--block-max-iter", image.block_max_iter, "comma-separated per-block max_iter overrides");

  auto* grad_cmd = app.add_subcommand("gradcheck", "verify implicit gradients against independent oracles");
  add_common(grad_cmd, common, grad.spec.seed);
  grad_cmd->add_option("--map", grad.map, "linear or mlp");
  grad_cmd->add_option("--dims", grad.dims, "linear: n; mlp: d,h,o");
  grad_cmd->add_option("--tolerance", grad.spec.tolerance, "relative error allowed per suite");
  grad_cmd->add_option("--instances", grad.spec.instances);
  grad_cmd->add_option("--duality-pairs", grad.spec.duality_pairs);

  std::vector<std::string> raw(argv + 1, argv + argc);
  std::vector<std::string> args;
  try {
    if (!raw.empty()) args.push_back(raw.front());
    if (const auto path = find_config(raw)) {
      for (auto& s : twnn::config_arguments(twnn::load_config(*path))) args.push_back(std::move(s));
    }
    args.insert(args.end(), raw.begin() + (raw.empty() ? 0 : 1), raw.end());
  } catch (const twnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sine_cmd) return run_sine(common, sine);
    if (*image_cmd) return run_image(common, image);
    return run_grad(common, grad, grad_cmd->count("--out") > 0);
  } catch (const twnn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == twnn::ErrorKind::InvalidArgument ? kExitUsage : kExitFailure;
  }
}
