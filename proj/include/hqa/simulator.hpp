#pragma once

// Synthetic episodes with planted clusters of qualified frames.
//
// Each episode is a sequence of feature vectors. Qualified frames are drawn
// around one class mean, unqualified frames around another; additive noise is
// smoothed over a 3-frame window so neighbouring frames are correlated. Class
// means are unit vectors; raw noise has per-component standard deviation
// sqrt(feature_dim) / signal_to_noise before smoothing. The video label is 1
// when the fraction of qualified frames reaches a threshold.

#include "hqa/errors.hpp"
#include "hqa/reward.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace hqa {

/// Row-major N x feature_dim matrix of single-precision features.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct Episode {
  std::string id;
  FeatureMatrix features;
  FrameLabels frame_labels;
  int video_label = 0;

  std::size_t size() const { return frame_labels.size(); }

  friend bool operator==(const Episode&, const Episode&) = default;
};

using Corpus = std::vector<Episode>;

struct SplitCorpus {
  Corpus train;
  Corpus test;
};

struct SimConfig {
  std::size_t n_frames = 128;
  std::size_t feature_dim = 16;
  std::pair<std::size_t, std::size_t> cluster_count_range{1, 3};
  std::pair<std::size_t, std::size_t> cluster_width_range{8, 32};
  double overlap_probability = 0.25;
  double signal_to_noise = 5.0;
  double video_quality_threshold = 0.25;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_frames < 1) throw ConfigError("n_frames must be >= 1");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (cluster_count_range.first > cluster_count_range.second) {
      throw ConfigError("cluster_count_range: min > max");
    }
    if (cluster_width_range.first > cluster_width_range.second) {
      throw ConfigError("cluster_width_range: min > max");
    }
    if (cluster_width_range.first < 1) throw ConfigError("cluster_width_range: min must be >= 1");
    if (cluster_count_range.second > 0 && cluster_width_range.second > n_frames) {
      throw ConfigError("cluster_width_range: max width " + std::to_string(cluster_width_range.second) +
                        " exceeds n_frames " + std::to_string(n_frames));
    }
    if (!(overlap_probability >= 0.0 && overlap_probability <= 1.0)) {
      throw ConfigError("overlap_probability must lie in [0,1]");
    }
    if (!(signal_to_noise > 0.0) || !std::isfinite(signal_to_noise)) {
      throw ConfigError("signal_to_noise must be a positive finite number");
    }
    if (!(video_quality_threshold >= 0.0 && video_quality_threshold <= 1.0)) {
      throw ConfigError("video_quality_threshold must lie in [0,1]");
    }
  }
};

inline void to_json(nlohmann::json& j, const SimConfig& c) {
  j = nlohmann::json{{"n_frames", c.n_frames},
                     {"feature_dim", c.feature_dim},
                     {"cluster_count_range", {c.cluster_count_range.first, c.cluster_count_range.second}},
                     {"cluster_width_range", {c.cluster_width_range.first, c.cluster_width_range.second}},
                     {"overlap_probability", c.overlap_probability},
                     {"signal_to_noise", c.signal_to_noise},
                     {"video_quality_threshold", c.video_quality_threshold},
                     {"seed", c.seed}};
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline void read_range(const nlohmann::json& j, const char* key, std::pair<std::size_t, std::size_t>& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned()) {
    throw ConfigError(std::string("field '") + key + "': expected [min, max] of non-negative integers");
  }
  out = {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const char* what) {
  for (const auto& item : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError(std::string("unknown ") + what + " field '" + item.key() + "'");
    }
  }
}

inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream),
                    std::uint32_t(stream >> 32), std::uint32_t(index), std::uint32_t(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, SimConfig& c) {
  if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"n_frames", "feature_dim", "cluster_count_range", "cluster_width_range",
                               "overlap_probability", "signal_to_noise", "video_quality_threshold", "seed"},
                              "simulation config");
  detail::read_field(j, "n_frames", c.n_frames);
  detail::read_field(j, "feature_dim", c.feature_dim);
  detail::read_range(j, "cluster_count_range", c.cluster_count_range);
  detail::read_range(j, "cluster_width_range", c.cluster_width_range);
  detail::read_field(j, "overlap_probability", c.overlap_probability);
  detail::read_field(j, "signal_to_noise", c.signal_to_noise);
  detail::read_field(j, "video_quality_threshold", c.video_quality_threshold);
  detail::read_field(j, "seed", c.seed);
}

/// Class-conditional means shared by every episode of a corpus (depends on the seed only).
struct ClassMeans {
  std::vector<double> qualified;
  std::vector<double> unqualified;
};

inline ClassMeans class_means(const SimConfig& config) {
  auto rng = detail::seeded_engine(config.seed, 0x6d65616e73ULL, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto unit_vector = [&] {
    std::vector<double> v(config.feature_dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : v) {
        x = normal(rng);
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };
  ClassMeans means;
  means.qualified = unit_vector();
  means.unqualified = unit_vector();
  return means;
}

inline int video_label_for(std::span<const Label> labels, double threshold) {
  const auto qualified = std::size_t(std::count(labels.begin(), labels.end(), Label{1}));
  return double(qualified) / double(labels.size()) >= threshold ? 1 : 0;
}

inline std::string episode_id(std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "ep-" + digits;
}

/// Deterministic in (config.seed, index).
inline Episode generate_episode(const SimConfig& config, std::size_t index) {
  config.validate();
  const ClassMeans means = class_means(config);
  auto rng = detail::seeded_engine(config.seed, 0x657069736f6465ULL, index);
  const std::size_t n = config.n_frames;

  Episode ep;
  ep.id = episode_id(index);
  ep.frame_labels.assign(n, 0);

  std::uniform_int_distribution<std::size_t> count_dist(config.cluster_count_range.first,
                                                        config.cluster_count_range.second);
  std::uniform_int_distribution<std::size_t> width_dist(config.cluster_width_range.first,
                                                        config.cluster_width_range.second);
  std::bernoulli_distribution overlap(config.overlap_probability);

  const std::size_t clusters = count_dist(rng);
  std::size_t prev_start = 0;
  std::size_t prev_end = 0;
  for (std::size_t k = 0; k < clusters; ++k) {
    const std::size_t width = width_dist(rng);
    const std::size_t max_start = n - width;
    std::size_t start = 0;
    if (k > 0 && overlap(rng)) {
      // Start inside the previous cluster so the two runs merge.
      const std::size_t lo = std::min(prev_start, max_start);
      const std::size_t hi = std::min(prev_end, max_start);
      start = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    } else {
      start = std::uniform_int_distribution<std::size_t>(0, max_start)(rng);
    }
    std::fill_n(ep.frame_labels.begin() + std::ptrdiff_t(start), width, Label{1});
    prev_start = start;
    prev_end = start + width - 1;
  }

  const std::size_t dim = config.feature_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> raw(n * dim);
  for (double& x : raw) x = normal(rng);

  ep.features = FeatureMatrix(n, dim);
  const double scale = std::sqrt(double(dim)) / config.signal_to_noise;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t > 0 ? t - 1 : 0;
    const std::size_t hi = std::min(n - 1, t + 1);
    const auto& mean = ep.frame_labels[t] == 1 ? means.qualified : means.unqualified;
    for (std::size_t c = 0; c < dim; ++c) {
      double smoothed = 0.0;
      for (std::size_t s = lo; s <= hi; ++s) smoothed += raw[s * dim + c];
      smoothed /= double(hi - lo + 1);
      ep.features(t, c) = float(mean[c] + scale * smoothed);
    }
  }

  ep.video_label = video_label_for(ep.frame_labels, config.video_quality_threshold);
  return ep;
}

/// Train episodes use indices [0, n_train), test episodes [n_train, n_train + n_test).
inline SplitCorpus generate_corpus(const SimConfig& config, std::size_t n_train, std::size_t n_test) {
  config.validate();
  SplitCorpus corpus;
  corpus.train.reserve(n_train);
  corpus.test.reserve(n_test);
  for (std::size_t i = 0; i < n_train; ++i) corpus.train.push_back(generate_episode(config, i));
  for (std::size_t i = 0; i < n_test; ++i) corpus.test.push_back(generate_episode(config, n_train + i));
  return corpus;
}

}  // namespace hqa
