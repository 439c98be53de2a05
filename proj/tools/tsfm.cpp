// tsfm: synthesize datasets, train and evaluate detectors, check gradients
// and export learned filters.
//
// Exit status: 0 success, 1 usage or validation error, 2 I/O or format
// error, 3 numeric failure (non-finite loss, failed gradient check).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsfm/checkpoint.hpp"
#include "tsfm/dataset.hpp"
#include "tsfm/error.hpp"
#include "tsfm/eval.hpp"
#include "tsfm/filter.hpp"
#include "tsfm/gradcheck.hpp"
#include "tsfm/superevent.hpp"
#include "tsfm/synthetic.hpp"
#include "tsfm/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw tsfm::DataError(tsfm::DataError::Kind::kIo, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw tsfm::DataError(tsfm::DataError::Kind::kBadValue, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw tsfm::DataError(tsfm::DataError::Kind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw tsfm::DataError(tsfm::DataError::Kind::kIo, "write failed: " + path.string());
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Assigns `value` to `field` only when the flag was given on the command line,
// so flags override the config file which overrides the defaults.
template <typename T, typename U>
void overlay(const CLI::Option* opt, const T& value, U& field) {
  if (opt->count() > 0) field = static_cast<U>(value);
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  std::size_t videos = 0, min_frames = 0, max_frames = 0, feature_dim = 0;
  double noise = 0.0;
  CLI::Option *seed_opt, *videos_opt, *min_opt, *max_opt, *dim_opt, *noise_opt;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--config", a.config, "SynthConfig JSON file");
  a.seed_opt = cmd->add_option("--seed", a.seed, "Generator seed");
  a.videos_opt = cmd->add_option("--videos", a.videos, "Number of videos")->check(CLI::PositiveNumber);
  a.min_opt = cmd->add_option("--min-frames", a.min_frames, "Shortest video");
  a.max_opt = cmd->add_option("--max-frames", a.max_frames, "Longest video");
  a.dim_opt = cmd->add_option("--feature-dim", a.feature_dim, "Feature dimension D");
  a.noise_opt = cmd->add_option("--noise", a.noise, "RMS norm of the per-frame noise");
}

int run_synth(const SynthArgs& a) {
  tsfm::SynthConfig cfg;
  if (!a.config.empty()) cfg = tsfm::SynthConfig::from_json(read_json_file(a.config));
  overlay(a.seed_opt, a.seed, cfg.seed);
  overlay(a.videos_opt, a.videos, cfg.videos);
  overlay(a.min_opt, a.min_frames, cfg.min_frames);
  overlay(a.max_opt, a.max_frames, cfg.max_frames);
  overlay(a.dim_opt, a.feature_dim, cfg.feature_dim);
  overlay(a.noise_opt, a.noise, cfg.noise);
  cfg.validate();

  const tsfm::Dataset data = tsfm::generate_synthetic(cfg);
  const fs::path manifest = tsfm::save_dataset(data, a.out);
  write_json_file(fs::path(a.out) / "synth_config.json", cfg.to_json());

  const tsfm::SynthStats stats = tsfm::synth_stats(data, cfg);
  std::cout << "manifest " << manifest.string() << '\n'
            << "videos " << stats.videos << '\n'
            << "classes " << stats.classes << '\n'
            << "frames " << stats.frames << '\n';
  for (std::size_t c = 0; c < stats.classes; ++c) {
    std::printf("positive_rate %s %.4f\n", data.class_names[c].c_str(), stats.positive_rate[c]);
  }
  const double pct = stats.rule_segments == 0
                         ? 100.0
                         : 100.0 * static_cast<double>(stats.rule_satisfied) /
                               static_cast<double>(stats.rule_segments);
  std::printf("paired_rule %zu/%zu satisfied (%.2f%%)\n", stats.rule_satisfied,
              stats.rule_segments, pct);
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config, variant;
  double lr = 0, dropout = 0, lr_decay_factor = 0;
  std::size_t iters = 0, batch = 0, filters = 0, gaussians = 0, kernel = 0, lr_decay_every = 0;
  std::uint64_t seed = 0;
  CLI::Option *variant_opt, *lr_opt, *iters_opt, *batch_opt, *filters_opt, *gaussians_opt,
      *dropout_opt, *seed_opt, *kernel_opt, *decay_every_opt, *decay_factor_opt;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a detector and write a checkpoint");
  cmd->add_option("--data", a.data, "Dataset manifest")->required();
  cmd->add_option("--out", a.out, "Checkpoint path")->required();
  cmd->add_option("--config", a.config, "TrainConfig JSON file");
  a.variant_opt = cmd->add_option("--variant", a.variant,
                                  "baseline|max|mean|pyramid3|single|attended|relative");
  a.lr_opt = cmd->add_option("--lr", a.lr, "Adam learning rate (default 0.1)");
  a.iters_opt = cmd->add_option("--iters", a.iters, "Optimizer steps (default 5000)");
  a.batch_opt = cmd->add_option("--batch", a.batch, "Videos per step (default 32)");
  a.filters_opt = cmd->add_option("--filters", a.filters, "Shared filters M (default 5)");
  a.gaussians_opt =
      cmd->add_option("--gaussians", a.gaussians, "Distributions per filter N (default 3)");
  a.dropout_opt = cmd->add_option("--dropout", a.dropout, "Input dropout (default 0.5)");
  a.seed_opt = cmd->add_option("--seed", a.seed, "Initialization and sampling seed");
  a.kernel_opt = cmd->add_option("--kernel-length", a.kernel,
                                 "Relative kernel length L, odd (default 15)");
  a.decay_every_opt = cmd->add_option("--lr-decay-every", a.lr_decay_every,
                                      "Iterations between decays (default 1000)");
  a.decay_factor_opt =
      cmd->add_option("--lr-decay-factor", a.lr_decay_factor, "Decay factor (default 0.1)");
}

tsfm::TrainConfig train_config(const TrainArgs& a) {
  tsfm::TrainConfig cfg;
  if (!a.config.empty()) cfg = tsfm::TrainConfig::from_json(read_json_file(a.config));
  if (a.variant_opt->count() > 0) cfg.variant = tsfm::parse_variant(a.variant);
  overlay(a.lr_opt, a.lr, cfg.lr);
  overlay(a.iters_opt, a.iters, cfg.iterations);
  overlay(a.batch_opt, a.batch, cfg.batch_size);
  overlay(a.filters_opt, a.filters, cfg.filters);
  overlay(a.gaussians_opt, a.gaussians, cfg.distributions);
  overlay(a.dropout_opt, a.dropout, cfg.dropout);
  overlay(a.seed_opt, a.seed, cfg.seed);
  overlay(a.kernel_opt, a.kernel, cfg.kernel_length);
  overlay(a.decay_every_opt, a.lr_decay_every, cfg.lr_decay_every);
  overlay(a.decay_factor_opt, a.lr_decay_factor, cfg.lr_decay_factor);
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a) {
  const tsfm::TrainConfig cfg = train_config(a);
  const tsfm::Dataset data = tsfm::load_dataset(a.data);

  std::cout << "iter,lr,loss\n";
  const auto result = tsfm::train(cfg, data, [](const tsfm::IterationRecord& r) {
    std::cout << r.iteration << ',' << format_double(r.lr) << ',' << format_double(r.loss)
              << '\n';
  });
  std::cout.flush();
  tsfm::save_checkpoint(a.out, result.state);

  const tsfm::EvalReport report = tsfm::evaluate(result.state, data);
  std::cerr << "checkpoint " << a.out << '\n'
            << "train_map " << format_double(report.map) << '\n';
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string data, model;
  bool as_json = false;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Per-frame mAP of a checkpoint on a dataset");
  cmd->add_option("--data", a.data, "Dataset manifest")->required();
  cmd->add_option("--model", a.model, "Checkpoint path")->required();
  cmd->add_flag("--json", a.as_json, "Emit the tsfm-eval JSON report");
}

int run_eval(const EvalArgs& a) {
  const tsfm::ModelState model = tsfm::load_checkpoint(a.model);
  const tsfm::Dataset data = tsfm::load_dataset(a.data);
  const tsfm::EvalReport report = tsfm::evaluate(model, data);
  if (a.as_json) {
    std::cout << report.to_json().dump(2) << '\n';
  } else {
    std::cout << report.to_table() << "map " << format_double(report.map) << '\n';
  }
  return kOk;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::string variant = "all";
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  bool as_json = false;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a) {
  auto* cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  cmd->add_option("--variant", a.variant, "Variant name or 'all'");
  cmd->add_option("--seed", a.seed, "First instance seed");
  cmd->add_option("--seeds", a.seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  cmd->add_flag("--json", a.as_json, "Emit one JSON report per line");
}

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<tsfm::Variant> variants;
  if (a.variant == "all") {
    variants.assign(tsfm::kAllVariants.begin(), tsfm::kAllVariants.end());
  } else {
    variants.push_back(tsfm::parse_variant(a.variant));
  }
  bool all_passed = true;
  for (tsfm::Variant v : variants) {
    for (std::uint64_t s = a.seed; s < a.seed + a.seeds; ++s) {
      const auto report = tsfm::gradcheck(tsfm::random_instance(v, s));
      all_passed = all_passed && report.passed;
      if (a.as_json) {
        std::cout << report.to_json().dump() << '\n';
        continue;
      }
      double worst = 0.0;
      for (const auto& g : report.groups) worst = std::max(worst, g.max_relative_error);
      std::printf("%-9s seed %-4llu T %-3zu max_rel_err %.3e %s\n",
                  std::string(tsfm::to_string(v)).c_str(),
                  static_cast<unsigned long long>(s), report.frames, worst,
                  report.passed ? "PASS" : "FAIL");
      for (const auto& g : report.failing_groups()) std::printf("  failing group %s\n", g.c_str());
    }
  }
  return all_passed ? kOk : kNumeric;
}

// ---- export-filters --------------------------------------------------------

struct ExportArgs {
  std::string model, out;
  std::size_t frames = 0;
};

void add_export(CLI::App& app, ExportArgs& a) {
  auto* cmd = app.add_subcommand("export-filters",
                                 "Write per-class attention-combined filters as JSON");
  cmd->add_option("--model", a.model, "Checkpoint path")->required();
  cmd->add_option("--T", a.frames, "Frames to materialize at")->required()->check(
      CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "Output JSON path")->required();
}

json matrix_rows(const tsfm::Matrix<double>& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// Schema "tsfm-filters" version 1:
//   variant, T, distributions, class_names,
//   filters[m]   = {centers_hat[N], widths_hat[N], values[T][N]}
//   attention[c] = M weights summing to 1 (one-hot for the single variant)
//   combined[c]  = {class, values[T][N]} with values = sum_m attention[c][m] * F_m
json export_filters(const tsfm::ModelState& model, std::size_t frames) {
  const tsfm::ModelShape& shape = model.shape;
  if (shape.filter_count() == 0) {
    throw UsageError("variant '" + std::string(tsfm::to_string(shape.variant)) +
                     "' has no temporal structure filters");
  }
  const auto params = model.params.cast<double>();
  const std::size_t M = shape.filter_count();
  const std::size_t C = shape.classes;
  const std::size_t N = shape.distributions;

  std::vector<tsfm::MaterializedFilter<double>> filters;
  json filters_json = json::array();
  for (const auto& f : params.filters) {
    auto mat = tsfm::materialize_filter(f, frames);
    filters_json.push_back({{"centers_hat", mat.centers_hat},
                            {"widths_hat", mat.widths_hat},
                            {"values", matrix_rows(mat.values)}});
    filters.push_back(std::move(mat));
  }

  tsfm::Matrix<double> attention(C, M);
  if (shape.uses_attention()) {
    attention = tsfm::soft_attention(tsfm::AttentionWeights<double>{params.attention});
  } else {
    for (std::size_t c = 0; c < C; ++c) attention(c, c) = 1.0;
  }

  json combined = json::array();
  for (std::size_t c = 0; c < C; ++c) {
    tsfm::Matrix<double> sum(frames, N);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t i = 0; i < sum.size(); ++i) {
        sum.flat()[i] += attention(c, m) * filters[m].values.flat()[i];
      }
    }
    combined.push_back({{"class", model.class_names[c]}, {"values", matrix_rows(sum)}});
  }

  return {{"format", "tsfm-filters"},
          {"version", 1},
          {"variant", std::string(tsfm::to_string(shape.variant))},
          {"T", frames},
          {"distributions", N},
          {"class_names", model.class_names},
          {"filters", std::move(filters_json)},
          {"attention", matrix_rows(attention)},
          {"combined", std::move(combined)}};
}

int run_export(const ExportArgs& a) {
  const tsfm::ModelState model = tsfm::load_checkpoint(a.model);
  write_json_file(a.out, export_filters(model, a.frames));
  std::cout << "wrote " << a.out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal structure filters and super-events for activity detection"};
  app.require_subcommand(1);

  SynthArgs synth;
  TrainArgs train;
  EvalArgs eval;
  GradcheckArgs gradcheck;
  ExportArgs exporter;
  add_synth(app, synth);
  add_train(app, train);
  add_eval(app, eval);
  add_gradcheck(app, gradcheck);
  add_export(app, exporter);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (app.got_subcommand("synth")) return run_synth(synth);
    if (app.got_subcommand("train")) return run_train(train);
    if (app.got_subcommand("eval")) return run_eval(eval);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(gradcheck);
    if (app.got_subcommand("export-filters")) return run_export(exporter);
  } catch (const tsfm::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const tsfm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {  // includes ShapeError
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const json::exception& e) {
    std::cerr << "error: invalid config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
