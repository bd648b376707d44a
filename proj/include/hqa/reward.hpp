#pragma once

// Reward shaping for frame selection and video rating.
//
// A binary frame-quality track is decomposed into rectangular pulses (maximal
// runs of qualified frames). Each pulse is smoothed into a trapezoid whose
// ramps give partial credit to frames near a qualified cluster, and the
// per-frame reward profile is the pointwise maximum (upper envelope) of all
// trapezoids. Frames that are not under any ramp or plateau score -1, which
// penalises selecting unqualified frames far from every cluster.

#include "hqa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hqa {

using Label = std::uint8_t;
using FrameLabels = std::vector<Label>;

struct Pulse {
  std::size_t tau = 0;        // first frame of the run
  std::size_t delta_tau = 0;  // run length minus one; plateau covers [tau, tau + delta_tau]

  friend bool operator==(const Pulse&, const Pulse&) = default;
};

using PulseTrain = std::vector<Pulse>;

struct TrapezoidParams {
  double d = 5.0;      // ramp width in frames
  double a_max = 1.0;  // plateau amplitude

  void validate() const {
    if (!(d >= 1.0) || !std::isfinite(d)) {
      throw ConfigError("trapezoid ramp width d must be >= 1, got " + std::to_string(d));
    }
    if (!(a_max > 0.0) || !std::isfinite(a_max)) {
      throw ConfigError("trapezoid amplitude a_max must be > 0, got " + std::to_string(a_max));
    }
  }
};

using RewardProfile = std::vector<double>;

inline constexpr double kOutsidePenalty = -1.0;

inline void validate_labels(std::span<const Label> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) {
      throw ContractViolation("frame label at index " + std::to_string(i) + " is " +
                              std::to_string(int(labels[i])) + ", expected 0 or 1");
    }
  }
}

/// One pulse per maximal run of 1s; a run over frames f..l gives (tau=f, delta_tau=l-f).
inline PulseTrain pulses_from_labels(std::span<const Label> labels) {
  validate_labels(labels);
  PulseTrain pulses;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] == 0) {
      ++i;
      continue;
    }
    const std::size_t first = i;
    while (i + 1 < labels.size() && labels[i + 1] == 1) ++i;
    pulses.push_back({first, i - first});
    ++i;
  }
  return pulses;
}

/// Inverse of pulses_from_labels: the 0/1 indicator of the union of plateaus.
inline FrameLabels indicator_from_pulses(std::span<const Pulse> pulses, std::size_t n) {
  FrameLabels labels(n, 0);
  for (const Pulse& p : pulses) {
    if (p.tau + p.delta_tau >= n) {
      throw ContractViolation("pulse (" + std::to_string(p.tau) + "," + std::to_string(p.delta_tau) +
                              ") extends past frame " + std::to_string(n - 1));
    }
    std::fill(labels.begin() + std::ptrdiff_t(p.tau), labels.begin() + std::ptrdiff_t(p.tau + p.delta_tau + 1),
              Label{1});
  }
  return labels;
}

/// Trapezoidal wave for one pulse, evaluated at (possibly non-integer) position `id`.
///
/// Rising ramp on [tau - d, tau), plateau a_max on [tau, tau + delta_tau], falling
/// ramp on (tau + delta_tau, tau + delta_tau + d], -1 elsewhere. The ramp fraction
/// is formed before scaling by a_max so both ramps reach a_max exactly at the
/// plateau edges.
inline double trapezoid_value(double id, double tau, double delta_tau, const TrapezoidParams& params) {
  const double d = params.d;
  const double plateau_end = tau + delta_tau;
  if (id >= tau && id <= plateau_end) return params.a_max;
  if (id >= tau - d && id < tau) return params.a_max * ((id - tau + d) / d);
  if (id > plateau_end && id <= plateau_end + d) return params.a_max * ((plateau_end + d - id) / d);
  return kOutsidePenalty;
}

inline double trapezoid_value(std::size_t id, const Pulse& pulse, const TrapezoidParams& params) {
  return trapezoid_value(double(id), double(pulse.tau), double(pulse.delta_tau), params);
}

/// Pointwise-maximum envelope of the trapezoids of every pulse, sampled at frames 0..n-1.
inline RewardProfile envelope_profile(std::span<const Pulse> pulses, std::size_t n, const TrapezoidParams& params) {
  params.validate();
  RewardProfile profile(n, kOutsidePenalty);
  const auto reach = std::size_t(std::floor(params.d));
  for (const Pulse& p : pulses) {
    if (p.tau + p.delta_tau >= n) {
      throw ContractViolation("pulse (" + std::to_string(p.tau) + "," + std::to_string(p.delta_tau) +
                              ") lies outside an episode of " + std::to_string(n) + " frames");
    }
    // Outside [tau - d, tau + delta_tau + d] the trapezoid is -1 and cannot raise the envelope.
    const std::size_t lo = p.tau > reach ? p.tau - reach : 0;
    const std::size_t hi = std::min(n - 1, p.tau + p.delta_tau + reach);
    for (std::size_t id = lo; id <= hi; ++id) {
      profile[id] = std::max(profile[id], trapezoid_value(id, p, params));
    }
  }
  return profile;
}

inline RewardProfile envelope_profile(std::span<const Label> labels, const TrapezoidParams& params) {
  return envelope_profile(pulses_from_labels(labels), labels.size(), params);
}

/// Mean over all frames of action * profile; unselected frames contribute 0.
inline double frame_reward(std::span<const Label> actions, std::span<const double> profile) {
  if (actions.size() != profile.size()) {
    throw ContractViolation("frame_reward: " + std::to_string(actions.size()) + " actions vs " +
                            std::to_string(profile.size()) + " profile values");
  }
  if (actions.empty()) throw ContractViolation("frame_reward: empty episode");
  double sum = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] > 1) throw ContractViolation("frame_reward: action at index " + std::to_string(i) + " is not 0/1");
    if (actions[i] == 1) sum += profile[i];
  }
  return sum / double(actions.size());
}

namespace detail {

inline void check_video_inputs(double q_hat, int q_v) {
  if (!(q_hat >= 0.0 && q_hat <= 1.0)) {
    throw ContractViolation("video_reward: predicted quality " + std::to_string(q_hat) + " outside [0,1]");
  }
  if (q_v != 0 && q_v != 1) {
    throw ContractViolation("video_reward: video label " + std::to_string(q_v) + " is not 0/1");
  }
}

}  // namespace detail

/// Cubic penalty on the video-level prediction error: -|q_hat - q_v|^3.
inline double video_reward(double q_hat, int q_v) {
  detail::check_video_inputs(q_hat, q_v);
  const double err = std::abs(q_hat - double(q_v));
  return -err * err * err;
}

/// d video_reward / d q_hat = -3 |q_hat - q_v|^2 sign(q_hat - q_v).
inline double video_reward_derivative(double q_hat, int q_v) {
  detail::check_video_inputs(q_hat, q_v);
  const double diff = q_hat - double(q_v);
  return -3.0 * diff * std::abs(diff);
}

inline double total_reward(double r_sub, double r_sup, double beta) { return r_sub + beta * r_sup; }

}  // namespace hqa
