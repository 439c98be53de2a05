#include "tsfm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tsfm/error.hpp"
#include "tsfm/filter.hpp"

namespace tsfm {
namespace {

constexpr int kMaxPlacementAttempts = 100;

struct Event {
  std::size_t cls;
  std::size_t start;
  std::size_t length;
};

std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool is_free(const std::vector<bool>& busy, std::size_t begin, std::size_t end) {
  return std::none_of(busy.begin() + begin, busy.begin() + end, [](bool b) { return b; });
}

void occupy(std::vector<bool>& busy, std::size_t begin, std::size_t end) {
  std::fill(busy.begin() + begin, busy.begin() + end, true);
}

// One full placement attempt; returns false if something did not fit.
bool place_events(const SynthConfig& cfg, const std::vector<bool>& is_trigger,
                  std::size_t frames, Rng& rng, std::vector<Event>& events) {
  events.clear();
  std::vector<bool> busy(frames, false);

  for (std::size_t r = 0; r < cfg.rules.size(); ++r) {
    const PairedRule& rule = cfg.rules[r];
    const bool branch_a = std::bernoulli_distribution(0.5)(rng);
    const std::size_t trigger = branch_a ? rule.trigger : rule.alt_trigger;
    const std::size_t target = branch_a ? cfg.ambiguous_a(r) : cfg.ambiguous_b(r);

    const std::size_t trigger_len = uniform_size(rng, cfg.event_min, cfg.event_max);
    const std::size_t gap = uniform_size(rng, rule.gap_min, rule.gap_max);
    const std::size_t target_len = uniform_size(rng, cfg.event_min, cfg.event_max);
    const auto anchor = static_cast<std::size_t>(
        std::lround(rule.anchor * static_cast<double>(frames - 1)));
    if (trigger_len > frames) return false;

    const std::size_t lo = anchor + 1 >= trigger_len ? anchor + 1 - trigger_len : 0;
    const std::size_t hi = std::min(anchor, frames - trigger_len);
    if (lo > hi) return false;
    const std::size_t start = uniform_size(rng, lo, hi);
    const std::size_t target_start = start + trigger_len + gap;
    const std::size_t end = target_start + target_len;
    if (end > frames || !is_free(busy, start, end)) return false;
    occupy(busy, start, end);
    events.push_back({trigger, start, trigger_len});
    events.push_back({target, target_start, target_len});
  }

  for (std::size_t c = 0; c < cfg.base_classes; ++c) {
    if (is_trigger[c]) continue;
    const std::size_t count = uniform_size(rng, cfg.free_events_min, cfg.free_events_max);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t len = uniform_size(rng, cfg.event_min, cfg.event_max);
      if (len > frames) return false;
      const std::size_t start = uniform_size(rng, 0, frames - len);
      if (!is_free(busy, start, start + len)) return false;
      occupy(busy, start, start + len);
      events.push_back({c, start, len});
    }
  }
  return true;
}

Video render_video(const SynthConfig& cfg, const Matrix<float>& emissions,
                   std::size_t index, Rng& rng) {
  std::vector<bool> is_trigger(cfg.base_classes, false);
  for (const auto& rule : cfg.rules) {
    is_trigger[rule.trigger] = true;
    is_trigger[rule.alt_trigger] = true;
  }

  const std::size_t frames = uniform_size(rng, cfg.min_frames, cfg.max_frames);
  std::vector<Event> events;
  int attempt = 0;
  while (!place_events(cfg, is_trigger, frames, rng, events)) {
    if (++attempt >= kMaxPlacementAttempts) {
      throw DataError(DataError::Kind::kBadValue,
                      "synthetic: could not place events in a " +
                          std::to_string(frames) + "-frame video after " +
                          std::to_string(kMaxPlacementAttempts) + " attempts");
    }
  }

  char id[32];
  std::snprintf(id, sizeof(id), "video%04zu", index);
  Video video{id, Matrix<float>(frames, cfg.feature_dim),
              LabelMask(frames, cfg.classes())};
  for (const Event& e : events) {
    for (std::size_t t = e.start; t < e.start + e.length; ++t) {
      video.labels(t, e.cls) = 1;
      auto v = video.features.row(t);
      const auto emission = emissions.row(e.cls);
      for (std::size_t d = 0; d < v.size(); ++d) v[d] += emission[d];
    }
  }
  if (cfg.noise > 0.0) {
    std::normal_distribution<double> normal(
        0.0, cfg.noise / std::sqrt(static_cast<double>(cfg.feature_dim)));
    for (auto& x : video.features.flat()) x += static_cast<float>(normal(rng));
  }
  return video;
}

}  // namespace

std::vector<std::string> SynthConfig::class_names() const {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < base_classes; ++c) names.push_back("base" + std::to_string(c));
  for (std::size_t r = 0; r < rules.size(); ++r) {
    names.push_back("rule" + std::to_string(r) + "_a");
    names.push_back("rule" + std::to_string(r) + "_b");
  }
  return names;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synth config: " + msg); };
  if (videos == 0) fail("videos must be >= 1");
  if (min_frames == 0 || min_frames > max_frames) fail("need 1 <= min_frames <= max_frames");
  if (feature_dim == 0) fail("feature_dim must be >= 1");
  if (classes() == 0) fail("no classes");
  if (event_min == 0 || event_min > event_max) fail("need 1 <= event_min <= event_max");
  if (free_events_min > free_events_max) fail("free_events_min > free_events_max");
  if (!(noise >= 0.0) || !std::isfinite(noise)) fail("noise must be finite and >= 0");
  for (const auto& rule : rules) {
    if (rule.trigger >= base_classes || rule.alt_trigger >= base_classes) {
      fail("rule triggers must be base classes");
    }
    if (rule.trigger == rule.alt_trigger) fail("rule triggers must differ");
    if (rule.gap_min > rule.gap_max) fail("gap_min > gap_max");
    if (!(rule.anchor >= 0.0 && rule.anchor <= 1.0)) fail("anchor must lie in [0, 1]");
  }
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json rules_json = nlohmann::json::array();
  for (const auto& r : rules) {
    rules_json.push_back({{"trigger", r.trigger},
                          {"alt_trigger", r.alt_trigger},
                          {"gap_min", r.gap_min},
                          {"gap_max", r.gap_max},
                          {"anchor", r.anchor}});
  }
  return {{"videos", videos},
          {"min_frames", min_frames},
          {"max_frames", max_frames},
          {"feature_dim", feature_dim},
          {"base_classes", base_classes},
          {"rules", std::move(rules_json)},
          {"noise", noise},
          {"event_min", event_min},
          {"event_max", event_max},
          {"free_events_min", free_events_min},
          {"free_events_max", free_events_max},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto take = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("videos", c.videos);
  take("min_frames", c.min_frames);
  take("max_frames", c.max_frames);
  take("feature_dim", c.feature_dim);
  take("base_classes", c.base_classes);
  take("noise", c.noise);
  take("event_min", c.event_min);
  take("event_max", c.event_max);
  take("free_events_min", c.free_events_min);
  take("free_events_max", c.free_events_max);
  take("seed", c.seed);
  if (j.contains("rules")) {
    c.rules.clear();
    for (const auto& r : j.at("rules")) {
      PairedRule rule;
      rule.trigger = r.at("trigger").get<std::size_t>();
      rule.alt_trigger = r.at("alt_trigger").get<std::size_t>();
      rule.gap_min = r.value("gap_min", rule.gap_min);
      rule.gap_max = r.value("gap_max", rule.gap_max);
      rule.anchor = r.value("anchor", rule.anchor);
      c.rules.push_back(rule);
    }
  }
  return c;
}

Matrix<float> class_emissions(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<float> emissions(config.classes(), config.feature_dim);
  for (std::size_t c = 0; c < config.base_classes + config.rules.size(); ++c) {
    std::vector<double> e(config.feature_dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : e) {
        x = normal(rng);
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    // Rows 0..B-1 are base classes; row B + r holds rule r's shared emission.
    const bool shared = c >= config.base_classes;
    const std::size_t row = shared ? config.ambiguous_a(c - config.base_classes) : c;
    for (std::size_t d = 0; d < e.size(); ++d) {
      emissions(row, d) = static_cast<float>(e[d] / norm);
    }
    if (shared) {
      const auto src = emissions.row(row);
      std::copy(src.begin(), src.end(), emissions.row(row + 1).begin());
    }
  }
  return emissions;
}

std::pair<Dataset, Dataset> generate_synthetic_split(const SynthConfig& config,
                                                     std::size_t test_videos) {
  config.validate();
  const Matrix<float> emissions = class_emissions(config);
  // Videos use their own stream so that changing the video count never
  // changes the emissions.
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::pair<Dataset, Dataset> out;
  for (Dataset* d : {&out.first, &out.second}) {
    d->class_names = config.class_names();
    d->feature_dim = config.feature_dim;
  }
  for (std::size_t i = 0; i < config.videos + test_videos; ++i) {
    Dataset& target = i < config.videos ? out.first : out.second;
    target.videos.push_back(render_video(config, emissions, i, rng));
  }
  return out;
}

Dataset generate_synthetic(const SynthConfig& config) {
  return generate_synthetic_split(config, 0).first;
}

SynthStats synth_stats(const Dataset& dataset, const SynthConfig& config) {
  SynthStats stats;
  stats.videos = dataset.videos.size();
  stats.classes = dataset.classes();
  stats.positive_rate.assign(stats.classes, 0.0);
  for (const auto& v : dataset.videos) {
    stats.frames += v.labels.rows();
    for (std::size_t t = 0; t < v.labels.rows(); ++t) {
      for (std::size_t c = 0; c < stats.classes; ++c) stats.positive_rate[c] += v.labels(t, c);
    }
  }
  for (auto& r : stats.positive_rate) {
    r = stats.frames ? r / static_cast<double>(stats.frames) : 0.0;
  }

  for (const auto& v : dataset.videos) {
    const std::size_t frames = v.labels.rows();
    for (std::size_t r = 0; r < config.rules.size(); ++r) {
      const PairedRule& rule = config.rules[r];
      for (const bool is_a : {true, false}) {
        const std::size_t cls = is_a ? config.ambiguous_a(r) : config.ambiguous_b(r);
        const std::size_t trigger = is_a ? rule.trigger : rule.alt_trigger;
        if (cls >= v.labels.cols() || trigger >= v.labels.cols()) continue;
        for (std::size_t t = 0; t < frames; ++t) {
          if (!v.labels(t, cls) || (t > 0 && v.labels(t - 1, cls))) continue;
          ++stats.rule_segments;
          // Walk back over the gap to the trigger's last frame.
          std::size_t gap = 0;
          std::size_t s = t;
          while (s > 0 && !v.labels(s - 1, trigger)) {
            --s;
            ++gap;
          }
          if (s > 0 && gap >= rule.gap_min && gap <= rule.gap_max) ++stats.rule_satisfied;
        }
      }
    }
  }
  return stats;
}

}  // namespace tsfm
