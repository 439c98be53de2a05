#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsfm/dataset.hpp"
#include "tsfm/matrix.hpp"

namespace tsfm {

/// Two ambiguous classes that share one emission vector. Class a only ever
/// follows `trigger`, class b only ever follows `alt_trigger`; the gap is the
/// number of empty frames between the trigger's last frame and the ambiguous
/// event's first frame. Each video picks one branch per rule, and its trigger
/// event always covers frame round(anchor * (T - 1)).
struct PairedRule {
  std::size_t trigger = 0;
  std::size_t alt_trigger = 1;
  std::size_t gap_min = 5;
  std::size_t gap_max = 15;
  double anchor = 0.25;
};

struct SynthConfig {
  std::size_t videos = 200;
  std::size_t min_frames = 100;
  std::size_t max_frames = 300;
  std::size_t feature_dim = 16;
  std::size_t base_classes = 4;
  std::vector<PairedRule> rules = {PairedRule{0, 1, 5, 15, 0.25},
                                   PairedRule{2, 3, 5, 15, 0.65}};
  // RMS norm of the per-frame Gaussian noise vector, on the scale of the
  // unit-norm emissions; each component has std noise / sqrt(D).
  double noise = 0.5;
  std::size_t event_min = 8;
  std::size_t event_max = 20;
  // Events per video for base classes that are not triggers of any rule.
  std::size_t free_events_min = 1;
  std::size_t free_events_max = 2;
  std::uint64_t seed = 0;

  /// Base classes first, then (a, b) for every rule.
  std::size_t classes() const noexcept { return base_classes + 2 * rules.size(); }
  std::size_t ambiguous_a(std::size_t rule) const noexcept { return base_classes + 2 * rule; }
  std::size_t ambiguous_b(std::size_t rule) const noexcept { return base_classes + 2 * rule + 1; }
  std::vector<std::string> class_names() const;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Unit-norm emission per class (C x D); ambiguous pairs share a row.
Matrix<float> class_emissions(const SynthConfig& config);

/// Deterministic in `config` (including the seed). Throws DataError when an
/// event cannot be placed within 100 attempts.
Dataset generate_synthetic(const SynthConfig& config);

/// Generates `config.videos + test_videos` videos with shared emissions and
/// splits them into (train, test).
std::pair<Dataset, Dataset> generate_synthetic_split(const SynthConfig& config,
                                                     std::size_t test_videos);

struct SynthStats {
  std::size_t videos = 0;
  std::size_t classes = 0;
  std::size_t frames = 0;
  std::vector<double> positive_rate;  // per class
  std::size_t rule_segments = 0;      // ambiguous segments scanned
  std::size_t rule_satisfied = 0;     // preceded by the right trigger at a legal gap
};

/// Scans labels for dataset statistics and paired-rule compliance.
SynthStats synth_stats(const Dataset& dataset, const SynthConfig& config);

}  // namespace tsfm
