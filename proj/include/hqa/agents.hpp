#pragma once

// Subordinate (frame selection) and superordinate (video rating) policies.
//
// Subordinate agent, per frame t:
//   e_t = tanh(W_e x_t + b_e)
//   bidirectional single-gate recurrence over e (forward: t = 0..N-1,
//   backward: t = N-1..0), each direction
//     z_t = sigmoid(W_z e_t + U_z h_prev + b_z)
//     c_t = tanh(W_c e_t + U_c h_prev + b_c)
//     h_t = (1 - z_t) * h_prev + z_t * c_t
//   f_t = [h_fwd_t ; h_bwd_t]
//   p_t = sigmoid(w_o . f_t + b_o)
//
// Superordinate agent:
//   u_t = tanh(conv_k(x)_t + b)        zero-padded temporal convolution
//   f_v = mean_t u_t,  f_f = mean_t f_t  (zeroed when use_sub_features is off)
//   q   = sigmoid(w_v . f_v + w_f . f_f + b)
//
// Gradients are derived by hand; `backward` accepts arbitrary upstream
// gradients on the frame logits and the video logit so the same routine serves
// the score-function gradient, the pathwise video-reward term, and supervised
// warm-up.

#include "hqa/errors.hpp"
#include "hqa/params.hpp"
#include "hqa/reward.hpp"
#include "hqa/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hqa {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Logits are clamped here so probabilities stay strictly inside (0,1) in double precision.
inline constexpr double kLogitClamp = 30.0;

inline double sigmoid(double x) {
  x = std::clamp(x, -kLogitClamp, kLogitClamp);
  return 1.0 / (1.0 + std::exp(-x));
}

namespace detail {

// out += W x, W is rows x cols.
inline void matvec_add(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
                       std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    out[r] += acc;
  }
}

// out += W^T y.
inline void matTvec_add(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> y,
                        std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += wr[c] * yr;
  }
}

// dW += y x^T.
inline void outer_add(std::span<double> dw, std::size_t rows, std::size_t cols, std::span<const double> y,
                      std::span<const double> x) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* dr = dw.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dr[c] += yr * x[c];
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Recurrence blocks for one direction, starting at FwdWz or BwdWz.
struct RecurrentBlocks {
  BlockId wz, uz, bz, wc, uc, bc;
  static RecurrentBlocks at(BlockId base) {
    const auto b = std::size_t(base);
    return {BlockId(b), BlockId(b + 1), BlockId(b + 2), BlockId(b + 3), BlockId(b + 4), BlockId(b + 5)};
  }
};

struct DirectionCache {
  Matrix gate;   // z_t
  Matrix cand;   // c_t
  Matrix state;  // h_t
};

}  // namespace detail

/// Intermediate values of the subordinate forward pass, kept for backprop.
struct SubCache {
  Matrix input;  // x as doubles
  Matrix enc;    // e_t
  detail::DirectionCache fwd;
  detail::DirectionCache bwd;
  Matrix features;  // f_t = [h_fwd ; h_bwd]
  std::vector<double> logits;
  std::vector<double> probs;
};

struct SupCache {
  Matrix conv;                      // u_t
  std::vector<double> video_pool;   // f_v
  std::vector<double> frame_pool;   // mean f_t (zeros when fusion is off)
  double logit = 0.0;
  double prob = 0.5;
};

struct PolicyForward {
  SubCache sub;
  SupCache sup;
};

namespace detail {

inline void check_episode_dims(const PolicyParams& params, const Episode& episode) {
  if (episode.size() == 0) throw ContractViolation("episode '" + episode.id + "' has no frames");
  if (episode.features.rows != episode.size()) {
    throw ContractViolation("episode '" + episode.id + "': " + std::to_string(episode.features.rows) +
                            " feature rows vs " + std::to_string(episode.size()) + " labels");
  }
  if (episode.features.cols != params.model.feature_dim) {
    throw ContractViolation("episode '" + episode.id + "': feature_dim " + std::to_string(episode.features.cols) +
                            " does not match model feature_dim " + std::to_string(params.model.feature_dim));
  }
}

inline void run_direction(const PolicyParams& p, RecurrentBlocks blk, const Matrix& enc, bool reverse,
                          DirectionCache& cache) {
  const std::size_t n = enc.rows, h = p.model.hidden;
  cache.gate = Matrix(n, h);
  cache.cand = Matrix(n, h);
  cache.state = Matrix(n, h);
  std::vector<double> zero(h, 0.0), az(h), ac(h);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    std::span<const double> prev = step == 0 ? std::span<const double>(zero)
                                             : cache.state.row(reverse ? t + 1 : t - 1);
    std::copy(p.block(blk.bz).begin(), p.block(blk.bz).end(), az.begin());
    std::copy(p.block(blk.bc).begin(), p.block(blk.bc).end(), ac.begin());
    matvec_add(p.block(blk.wz), h, h, enc.row(t), az);
    matvec_add(p.block(blk.uz), h, h, prev, az);
    matvec_add(p.block(blk.wc), h, h, enc.row(t), ac);
    matvec_add(p.block(blk.uc), h, h, prev, ac);
    for (std::size_t i = 0; i < h; ++i) {
      const double z = sigmoid(az[i]);
      const double c = std::tanh(ac[i]);
      cache.gate(t, i) = z;
      cache.cand(t, i) = c;
      cache.state(t, i) = (1.0 - z) * prev[i] + z * c;
    }
  }
}

// Backprop through one direction. `dfeat_offset` picks this direction's half of df.
inline void backprop_direction(const PolicyParams& p, RecurrentBlocks blk, const Matrix& enc,
                               const DirectionCache& cache, bool reverse, const Matrix& dfeat,
                               std::size_t dfeat_offset, Matrix& denc, PolicyGradient& g) {
  const std::size_t n = enc.rows, h = p.model.hidden;
  std::vector<double> zero(h, 0.0), carry(h, 0.0), dh(h), daz(h), dac(h), next_carry(h);
  // Walk opposite to the recurrence's own direction.
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? step : n - 1 - step;
    const bool first = reverse ? t == n - 1 : t == 0;
    std::span<const double> prev = first ? std::span<const double>(zero)
                                         : cache.state.row(reverse ? t + 1 : t - 1);
    for (std::size_t i = 0; i < h; ++i) {
      dh[i] = dfeat(t, dfeat_offset + i) + carry[i];
      const double z = cache.gate(t, i), c = cache.cand(t, i);
      daz[i] = dh[i] * (c - prev[i]) * z * (1.0 - z);
      dac[i] = dh[i] * z * (1.0 - c * c);
      next_carry[i] = dh[i] * (1.0 - z);
    }
    outer_add(g.block(blk.wz), h, h, daz, enc.row(t));
    outer_add(g.block(blk.uz), h, h, daz, prev);
    outer_add(g.block(blk.wc), h, h, dac, enc.row(t));
    outer_add(g.block(blk.uc), h, h, dac, prev);
    auto gbz = g.block(blk.bz);
    auto gbc = g.block(blk.bc);
    for (std::size_t i = 0; i < h; ++i) {
      gbz[i] += daz[i];
      gbc[i] += dac[i];
    }
    matTvec_add(p.block(blk.wz), h, h, daz, denc.row(t));
    matTvec_add(p.block(blk.wc), h, h, dac, denc.row(t));
    matTvec_add(p.block(blk.uz), h, h, daz, next_carry);
    matTvec_add(p.block(blk.uc), h, h, dac, next_carry);
    carry.swap(next_carry);
  }
}

}  // namespace detail

inline SubCache sub_forward_cached(const PolicyParams& params, const Episode& episode) {
  detail::check_episode_dims(params, episode);
  const std::size_t n = episode.size(), d = params.model.feature_dim, h = params.model.hidden;
  SubCache cache;
  cache.input = Matrix(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < d; ++c) cache.input(t, c) = double(episode.features(t, c));
  }
  cache.enc = Matrix(n, h);
  const auto enc_b = params.block(BlockId::EncB);
  for (std::size_t t = 0; t < n; ++t) {
    auto row = cache.enc.row(t);
    std::copy(enc_b.begin(), enc_b.end(), row.begin());
    detail::matvec_add(params.block(BlockId::EncW), h, d, cache.input.row(t), row);
    for (double& v : row) v = std::tanh(v);
  }
  detail::run_direction(params, detail::RecurrentBlocks::at(BlockId::FwdWz), cache.enc, false, cache.fwd);
  detail::run_direction(params, detail::RecurrentBlocks::at(BlockId::BwdWz), cache.enc, true, cache.bwd);

  cache.features = Matrix(n, 2 * h);
  cache.logits.resize(n);
  cache.probs.resize(n);
  const auto head_w = params.block(BlockId::HeadW);
  const double head_b = params.block(BlockId::HeadB)[0];
  for (std::size_t t = 0; t < n; ++t) {
    auto f = cache.features.row(t);
    std::copy(cache.fwd.state.row(t).begin(), cache.fwd.state.row(t).end(), f.begin());
    std::copy(cache.bwd.state.row(t).begin(), cache.bwd.state.row(t).end(), f.begin() + std::ptrdiff_t(h));
    cache.logits[t] = head_b + detail::dot(head_w, f);
    cache.probs[t] = sigmoid(cache.logits[t]);
  }
  return cache;
}

struct SubOutput {
  std::vector<double> frame_probs;
  Matrix sub_features;  // N x 2*hidden
};

inline SubOutput sub_forward(const PolicyParams& params, const Episode& episode) {
  SubCache cache = sub_forward_cached(params, episode);
  return {std::move(cache.probs), std::move(cache.features)};
}

inline SupCache sup_forward_cached(const PolicyParams& params, const Episode& episode, const Matrix& sub_features) {
  detail::check_episode_dims(params, episode);
  const std::size_t n = episode.size(), d = params.model.feature_dim, h = params.model.hidden;
  const std::size_t ch = params.model.conv_channels, k = params.model.conv_width;
  if (sub_features.rows != n || sub_features.cols != 2 * h) {
    throw ContractViolation("sup_forward: sub_features is " + std::to_string(sub_features.rows) + "x" +
                            std::to_string(sub_features.cols) + ", expected " + std::to_string(n) + "x" +
                            std::to_string(2 * h));
  }
  SupCache cache;
  cache.conv = Matrix(n, ch);
  const auto conv_w = params.block(BlockId::ConvW);
  const auto conv_b = params.block(BlockId::ConvB);
  const std::ptrdiff_t pad = std::ptrdiff_t(k - 1) / 2;
  cache.video_pool.assign(ch, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      double a = conv_b[c];
      for (std::size_t tap = 0; tap < k; ++tap) {
        const std::ptrdiff_t src = std::ptrdiff_t(t) + std::ptrdiff_t(tap) - pad;
        if (src < 0 || src >= std::ptrdiff_t(n)) continue;
        const double* w = conv_w.data() + c * k * d + tap * d;
        for (std::size_t j = 0; j < d; ++j) a += w[j] * double(episode.features(std::size_t(src), j));
      }
      const double u = std::tanh(a);
      cache.conv(t, c) = u;
      cache.video_pool[c] += u;
    }
  }
  for (double& v : cache.video_pool) v /= double(n);

  cache.frame_pool.assign(2 * h, 0.0);
  if (params.model.use_sub_features) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < 2 * h; ++i) cache.frame_pool[i] += sub_features(t, i);
    }
    for (double& v : cache.frame_pool) v /= double(n);
  }
  cache.logit = params.block(BlockId::FuseB)[0] + detail::dot(params.block(BlockId::FuseWv), cache.video_pool) +
                detail::dot(params.block(BlockId::FuseWf), cache.frame_pool);
  cache.prob = sigmoid(cache.logit);
  return cache;
}

/// Predicted probability that the whole episode is of acceptable quality.
inline double sup_forward(const PolicyParams& params, const Episode& episode, const Matrix& sub_features) {
  return sup_forward_cached(params, episode, sub_features).prob;
}

inline PolicyForward policy_forward(const PolicyParams& params, const Episode& episode) {
  PolicyForward out;
  out.sub = sub_forward_cached(params, episode);
  out.sup = sup_forward_cached(params, episode, out.sub.features);
  return out;
}

/// Gradient of  sum_t dlogits[t] * logit_t + dlogit_video * logit_video  w.r.t. all parameters.
/// With `include_sup` false the video term is ignored and superordinate blocks stay zero.
inline PolicyGradient policy_backward(const PolicyParams& params, const Episode& episode, const PolicyForward& fw,
                                      std::span<const double> dlogits, double dlogit_video, bool include_sup = true) {
  const std::size_t n = episode.size(), d = params.model.feature_dim, h = params.model.hidden;
  if (dlogits.size() != n) throw ContractViolation("policy_backward: upstream gradient length mismatch");
  PolicyGradient g = params.zeros_like();
  if (!include_sup) dlogit_video = 0.0;

  // Superordinate head and temporal convolution.
  std::vector<double> dframe_pool(2 * h, 0.0);
  if (dlogit_video != 0.0) {
    const std::size_t ch = params.model.conv_channels, k = params.model.conv_width;
    const SupCache& sc = fw.sup;
    g.block(BlockId::FuseB)[0] += dlogit_video;
    auto gwv = g.block(BlockId::FuseWv);
    auto gwf = g.block(BlockId::FuseWf);
    for (std::size_t c = 0; c < ch; ++c) gwv[c] += dlogit_video * sc.video_pool[c];
    for (std::size_t i = 0; i < 2 * h; ++i) gwf[i] += dlogit_video * sc.frame_pool[i];
    if (params.model.use_sub_features) {
      const auto wf = params.block(BlockId::FuseWf);
      for (std::size_t i = 0; i < 2 * h; ++i) dframe_pool[i] = dlogit_video * wf[i];
    }
    const auto wv = params.block(BlockId::FuseWv);
    auto gconv_w = g.block(BlockId::ConvW);
    auto gconv_b = g.block(BlockId::ConvB);
    const std::ptrdiff_t pad = std::ptrdiff_t(k - 1) / 2;
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double u = sc.conv(t, c);
        const double da = dlogit_video * wv[c] / double(n) * (1.0 - u * u);
        if (da == 0.0) continue;
        gconv_b[c] += da;
        for (std::size_t tap = 0; tap < k; ++tap) {
          const std::ptrdiff_t src = std::ptrdiff_t(t) + std::ptrdiff_t(tap) - pad;
          if (src < 0 || src >= std::ptrdiff_t(n)) continue;
          double* gw = gconv_w.data() + c * k * d + tap * d;
          for (std::size_t j = 0; j < d; ++j) gw[j] += da * fw.sub.input(std::size_t(src), j);
        }
      }
    }
  }

  // Subordinate head.
  const SubCache& cache = fw.sub;
  Matrix dfeat(n, 2 * h);
  const auto head_w = params.block(BlockId::HeadW);
  auto ghead_w = g.block(BlockId::HeadW);
  double ghead_b = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dl = dlogits[t];
    ghead_b += dl;
    const auto f = cache.features.row(t);
    auto df = dfeat.row(t);
    for (std::size_t i = 0; i < 2 * h; ++i) {
      ghead_w[i] += dl * f[i];
      df[i] = dl * head_w[i] + dframe_pool[i] / double(n);
    }
  }
  g.block(BlockId::HeadB)[0] = ghead_b;

  Matrix denc(n, h);
  detail::backprop_direction(params, detail::RecurrentBlocks::at(BlockId::FwdWz), cache.enc, cache.fwd, false, dfeat,
                             0, denc, g);
  detail::backprop_direction(params, detail::RecurrentBlocks::at(BlockId::BwdWz), cache.enc, cache.bwd, true, dfeat,
                             h, denc, g);

  auto genc_w = g.block(BlockId::EncW);
  auto genc_b = g.block(BlockId::EncB);
  std::vector<double> da(h);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < h; ++i) {
      const double e = cache.enc(t, i);
      da[i] = denc(t, i) * (1.0 - e * e);
      genc_b[i] += da[i];
    }
    detail::outer_add(genc_w, h, d, da, cache.input.row(t));
  }
  return g;
}

struct ActionTrace {
  std::vector<Label> frame_actions;
  std::vector<double> frame_probs;
  int video_action = 0;
  double video_prob = 0.5;
  double log_prob_sum = 0.0;
};

inline double bernoulli_log_prob(int action, double p) { return action == 1 ? std::log(p) : std::log1p(-p); }

inline double trace_log_prob(std::span<const Label> actions, std::span<const double> probs, int video_action,
                             double video_prob) {
  double lp = bernoulli_log_prob(video_action, video_prob);
  for (std::size_t i = 0; i < actions.size(); ++i) lp += bernoulli_log_prob(actions[i], probs[i]);
  return lp;
}

namespace detail {

inline void check_probs(std::span<const double> frame_probs, double video_prob) {
  for (std::size_t i = 0; i < frame_probs.size(); ++i) {
    if (!(frame_probs[i] > 0.0 && frame_probs[i] < 1.0)) {
      throw ContractViolation("frame probability at index " + std::to_string(i) + " is outside (0,1)");
    }
  }
  if (!(video_prob > 0.0 && video_prob < 1.0)) throw ContractViolation("video probability is outside (0,1)");
}

}  // namespace detail

/// Independent Bernoulli draw per frame, then one for the video; deterministic in `rng_seed`.
inline ActionTrace sample_actions(std::span<const double> frame_probs, double video_prob, std::uint64_t rng_seed) {
  detail::check_probs(frame_probs, video_prob);
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  ActionTrace trace;
  trace.frame_probs.assign(frame_probs.begin(), frame_probs.end());
  trace.frame_actions.resize(frame_probs.size());
  for (std::size_t i = 0; i < frame_probs.size(); ++i) trace.frame_actions[i] = uni(rng) < frame_probs[i] ? 1 : 0;
  trace.video_prob = video_prob;
  trace.video_action = uni(rng) < video_prob ? 1 : 0;
  trace.log_prob_sum = trace_log_prob(trace.frame_actions, trace.frame_probs, trace.video_action, video_prob);
  return trace;
}

/// Threshold at 0.5; exact ties go to the positive class.
inline ActionTrace greedy_actions(std::span<const double> frame_probs, double video_prob) {
  detail::check_probs(frame_probs, video_prob);
  ActionTrace trace;
  trace.frame_probs.assign(frame_probs.begin(), frame_probs.end());
  trace.frame_actions.resize(frame_probs.size());
  for (std::size_t i = 0; i < frame_probs.size(); ++i) trace.frame_actions[i] = frame_probs[i] >= 0.5 ? 1 : 0;
  trace.video_prob = video_prob;
  trace.video_action = video_prob >= 0.5 ? 1 : 0;
  trace.log_prob_sum = trace_log_prob(trace.frame_actions, trace.frame_probs, trace.video_action, video_prob);
  return trace;
}

inline constexpr double kStaleTraceTolerance = 1e-9;

/// Exact gradient of trace.log_prob_sum with respect to every parameter of both agents.
inline PolicyGradient log_prob_gradient(const PolicyParams& params, const Episode& episode,
                                        const ActionTrace& trace) {
  const PolicyForward fw = policy_forward(params, episode);
  const std::size_t n = episode.size();
  if (trace.frame_actions.size() != n || trace.frame_probs.size() != n) {
    throw ContractViolation("log_prob_gradient: trace length does not match episode '" + episode.id + "'");
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (std::abs(fw.sub.probs[t] - trace.frame_probs[t]) > kStaleTraceTolerance) {
      throw ContractViolation("log_prob_gradient: stale trace, frame " + std::to_string(t) + " probability " +
                              std::to_string(trace.frame_probs[t]) + " vs recomputed " +
                              std::to_string(fw.sub.probs[t]));
    }
  }
  if (std::abs(fw.sup.prob - trace.video_prob) > kStaleTraceTolerance) {
    throw ContractViolation("log_prob_gradient: stale trace, video probability differs from recomputed value");
  }
  std::vector<double> dlogits(n);
  for (std::size_t t = 0; t < n; ++t) dlogits[t] = double(trace.frame_actions[t]) - fw.sub.probs[t];
  return policy_backward(params, episode, fw, dlogits, double(trace.video_action) - fw.sup.prob);
}

}  // namespace hqa
