#pragma once

// Binary classification metrics: ACC / SEN / SPE / PRE / F1 / AUC.
// The positive class is 1 ("qualified").

#include "hqa/errors.hpp"
#include "hqa/reward.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hqa {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.size() != labels.size()) {
    throw ContractViolation("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                            std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw ContractViolation("confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0, y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p && !y) ++c.fp;
    else if (!p && y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// Which ratios had a zero denominator (and were reported as 0).
struct DegenerateFlags {
  bool sen = false;
  bool spe = false;
  bool pre = false;
  bool f1 = false;

  bool any() const { return sen || spe || pre || f1; }
};

struct BinaryMetrics {
  double acc = 0.0;
  double sen = 0.0;
  double spe = 0.0;
  double pre = 0.0;
  double f1 = 0.0;
  DegenerateFlags degenerate;
};

inline BinaryMetrics metrics_from_confusion(const ConfusionCounts& c) {
  if (c.total() == 0) throw ContractViolation("metrics_from_confusion: no items");
  BinaryMetrics m;
  auto ratio = [](std::size_t num, std::size_t den, bool& flag) {
    if (den == 0) {
      flag = true;
      return 0.0;
    }
    return double(num) / double(den);
  };
  m.acc = double(c.tp + c.tn) / double(c.total());
  m.sen = ratio(c.tp, c.tp + c.fn, m.degenerate.sen);
  m.spe = ratio(c.tn, c.tn + c.fp, m.degenerate.spe);
  m.pre = ratio(c.tp, c.tp + c.fp, m.degenerate.pre);
  if (m.pre + m.sen > 0.0) {
    m.f1 = 2.0 * m.pre * m.sen / (m.pre + m.sen);
  } else {
    m.degenerate.f1 = true;
  }
  return m;
}

namespace detail {

inline void check_auc_inputs(std::span<const double> scores, std::span<const Label> labels, std::size_t& pos,
                             std::size_t& neg) {
  if (scores.size() != labels.size()) {
    throw ContractViolation("auc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                            " labels");
  }
  pos = std::size_t(std::count_if(labels.begin(), labels.end(), [](Label l) { return l != 0; }));
  neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedAucError("auc: labels contain a single class");
}

}  // namespace detail

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), from average ranks.
inline double auc(std::span<const double> scores, std::span<const Label> labels) {
  std::size_t pos = 0, neg = 0;
  detail::check_auc_inputs(scores, labels, pos, neg);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are 1-based; tied groups share their average rank (kept doubled to stay integral).
  std::size_t doubled_rank_sum = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const std::size_t doubled_avg = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] != 0) doubled_rank_sum += doubled_avg;
    }
    i = j + 1;
  }
  // U = R_pos - pos(pos+1)/2, all doubled.
  const double u_doubled = double(doubled_rank_sum) - double(pos) * double(pos + 1);
  return u_doubled / (2.0 * double(pos) * double(neg));
}

/// Area under the empirical ROC curve by trapezoidal integration over distinct thresholds.
inline double auc_trapezoid(std::span<const double> scores, std::span<const Label> labels) {
  std::size_t pos = 0, neg = 0;
  detail::check_auc_inputs(scores, labels, pos, neg);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Accumulate in integer counts; area = sum (fp_step) * (tp_prev + tp_now) / 2.
  std::size_t tp = 0, fp = 0;
  double twice_area = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t dtp = 0, dfp = 0;
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      if (labels[idx[i]] != 0) ++dtp;
      else ++dfp;
      ++i;
    }
    twice_area += double(dfp) * double(2 * tp + dtp);
    tp += dtp;
    fp += dfp;
  }
  return twice_area / (2.0 * double(pos) * double(neg));
}

enum class Level { Frame, Video };

inline const char* level_name(Level l) { return l == Level::Frame ? "frame" : "video"; }

struct MetricsReport {
  Level level = Level::Frame;
  std::size_t n_items = 0;
  ConfusionCounts counts;
  BinaryMetrics metrics;
  std::optional<double> auc;  // empty when the labels at this level are single-class
};

inline MetricsReport make_report(Level level, std::span<const Label> predictions, std::span<const double> scores,
                                 std::span<const Label> labels) {
  MetricsReport r;
  r.level = level;
  r.n_items = labels.size();
  r.counts = confusion(predictions, labels);
  r.metrics = metrics_from_confusion(r.counts);
  try {
    r.auc = hqa::auc(scores, labels);
  } catch (const UndefinedAucError&) {
    r.auc.reset();
  }
  return r;
}

namespace detail {

inline double percent2(double x) { return std::round(x * 10000.0) / 100.0; }

}  // namespace detail

/// JSON with raw fractions at full precision and percentages rounded to two decimals.
inline nlohmann::json report_to_json(const MetricsReport& r) {
  const BinaryMetrics& m = r.metrics;
  nlohmann::json raw = {{"acc", m.acc}, {"sen", m.sen}, {"spe", m.spe}, {"pre", m.pre}, {"f1", m.f1}};
  nlohmann::json pct = {{"ACC", detail::percent2(m.acc)}, {"SEN", detail::percent2(m.sen)},
                        {"SPE", detail::percent2(m.spe)}, {"PRE", detail::percent2(m.pre)},
                        {"F1", detail::percent2(m.f1)}};
  raw["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
  pct["AUC"] = r.auc ? nlohmann::json(detail::percent2(*r.auc)) : nlohmann::json("--");
  return {{"level", level_name(r.level)},
          {"averaging", r.level == Level::Frame ? "micro" : "per-episode"},
          {"n_items", r.n_items},
          {"confusion", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
          {"raw", raw},
          {"percent", pct},
          {"degenerate",
           {{"sen", m.degenerate.sen}, {"spe", m.degenerate.spe}, {"pre", m.degenerate.pre}, {"f1", m.degenerate.f1},
            {"auc_undefined", !r.auc.has_value()}}}};
}

}  // namespace hqa
