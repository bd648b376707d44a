#pragma once

// Independent reference computations used only by the tests. None of these
// call into the code paths they are used to check.

#include "hqa/agents.hpp"
#include "hqa/params.hpp"
#include "hqa/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace hqa::oracle {

// Maximal runs found by scanning for 0->1 and 1->0 transitions on a zero-padded copy.
inline std::vector<std::pair<std::size_t, std::size_t>> runs(const FrameLabels& labels) {
  std::vector<int> padded(labels.size() + 2, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) padded[i + 1] = labels[i];
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i < padded.size(); ++i) {
    if (padded[i] == 1 && padded[i - 1] == 0) start = i - 1;
    if (padded[i] == 0 && padded[i - 1] == 1) out.emplace_back(start, (i - 2) - start);
  }
  return out;
}

// Trapezoid with the amplitude/d ratio taken first, every branch tested literally.
inline double trapezoid_branches(double id, double tau, double dtau, double d, double a_max) {
  std::vector<double> candidates;
  if (tau - d <= id && id <= tau) candidates.push_back(a_max / d * (id - tau + d));
  if (tau <= id && id <= tau + dtau) candidates.push_back(a_max);
  if (tau + dtau <= id && id <= tau + dtau + d) candidates.push_back(a_max / d * (tau + dtau + d - id));
  if (candidates.empty()) return -1.0;
  // On shared boundaries every matching branch agrees; take the first.
  return candidates.front();
}

inline std::vector<double> envelope_brute_force(const FrameLabels& labels, double d, double a_max) {
  const auto pulses = runs(labels);
  std::vector<double> out(labels.size(), -1.0);
  for (std::size_t id = 0; id < labels.size(); ++id) {
    double best = -1.0;
    bool any = false;
    for (const auto& [tau, dtau] : pulses) {
      const double v = trapezoid_branches(double(id), double(tau), double(dtau), d, a_max);
      best = any ? std::max(best, v) : v;
      any = true;
    }
    out[id] = any ? best : -1.0;
  }
  return out;
}

// Exact ratio test `a` vs `b` at relative tolerance.
inline bool close_rel(double a, double b, double rel) {
  if (a == b) return true;
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

// O(P*N) pairwise Mann-Whitney.
inline double auc_pairwise(const std::vector<double>& scores, const FrameLabels& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / double(pairs);
}

// Log-probability of a fixed action set, recomputed through the forward pass only.
inline double log_prob_of(const PolicyParams& params, const Episode& episode, const FrameLabels& actions,
                          int video_action) {
  const PolicyForward fw = policy_forward(params, episode);
  double lp = video_action == 1 ? std::log(fw.sup.prob) : std::log(1.0 - fw.sup.prob);
  for (std::size_t t = 0; t < actions.size(); ++t) {
    lp += actions[t] == 1 ? std::log(fw.sub.probs[t]) : std::log(1.0 - fw.sub.probs[t]);
  }
  return lp;
}

// Central differences of f over every component of params.
inline std::vector<double> central_differences(PolicyParams params, const std::function<double(const PolicyParams&)>& f,
                                               double step) {
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params.values[i];
    params.values[i] = orig + step;
    const double up = f(params);
    params.values[i] = orig - step;
    const double down = f(params);
    params.values[i] = orig;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

// Relative error with an absolute floor so near-zero components compare sensibly.
inline double gradient_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace hqa::oracle
