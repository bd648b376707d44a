#pragma once

// Learnable weights of both agents, stored in one flat vector.
//
// Every tensor is a named block (offset, rows, cols) inside `values`, so the
// whole parameter set can be indexed component-by-component for finite
// difference checks, updated by a single optimizer loop, and serialised as a
// list of named tensors. Subordinate-agent blocks come first, followed by the
// superordinate-agent blocks.

#include "hqa/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hqa {

struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t hidden = 32;         // encoder width and per-direction recurrent state size
  std::size_t conv_channels = 8;   // temporal convolution channels of the superordinate encoder
  std::size_t conv_width = 3;      // temporal kernel width (frames)
  bool use_sub_features = true;    // feed pooled subordinate features into the video head

  void validate() const {
    if (feature_dim < 1 || hidden < 1 || conv_channels < 1 || conv_width < 1) {
      throw ConfigError("model dimensions must all be >= 1");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
  j = nlohmann::json{{"feature_dim", m.feature_dim},
                     {"hidden", m.hidden},
                     {"conv_channels", m.conv_channels},
                     {"conv_width", m.conv_width},
                     {"use_sub_features", m.use_sub_features}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
  try {
    if (j.contains("feature_dim")) j.at("feature_dim").get_to(m.feature_dim);
    if (j.contains("hidden")) j.at("hidden").get_to(m.hidden);
    if (j.contains("conv_channels")) j.at("conv_channels").get_to(m.conv_channels);
    if (j.contains("conv_width")) j.at("conv_width").get_to(m.conv_width);
    if (j.contains("use_sub_features")) j.at("use_sub_features").get_to(m.use_sub_features);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

enum class BlockId : std::size_t {
  // subordinate agent
  EncW, EncB,
  FwdWz, FwdUz, FwdBz, FwdWc, FwdUc, FwdBc,
  BwdWz, BwdUz, BwdBz, BwdWc, BwdUc, BwdBc,
  HeadW, HeadB,
  // superordinate agent
  ConvW, ConvB,
  FuseWv, FuseWf, FuseB,
  Count
};

inline constexpr std::size_t kBlockCount = std::size_t(BlockId::Count);
inline constexpr std::size_t kFirstSupBlock = std::size_t(BlockId::ConvW);

inline constexpr std::array<std::string_view, kBlockCount> kBlockNames = {
    "sub.encoder.weight",  "sub.encoder.bias",
    "sub.forward.w_gate",  "sub.forward.u_gate",  "sub.forward.b_gate",
    "sub.forward.w_cand",  "sub.forward.u_cand",  "sub.forward.b_cand",
    "sub.backward.w_gate", "sub.backward.u_gate", "sub.backward.b_gate",
    "sub.backward.w_cand", "sub.backward.u_cand", "sub.backward.b_cand",
    "sub.head.weight",     "sub.head.bias",
    "sup.conv.weight",     "sup.conv.bias",
    "sup.fuse.video_weight", "sup.fuse.frame_weight", "sup.fuse.bias",
};

struct Block {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool is_bias = false;

  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
public:
  ParamLayout() = default;

  explicit ParamLayout(const ModelConfig& m) {
    m.validate();
    const std::size_t d = m.feature_dim, h = m.hidden, c = m.conv_channels, k = m.conv_width;
    auto set = [&](BlockId id, std::size_t rows, std::size_t cols, bool bias) {
      blocks_[std::size_t(id)] = {0, rows, cols, bias};
    };
    set(BlockId::EncW, h, d, false);
    set(BlockId::EncB, h, 1, true);
    for (BlockId base : {BlockId::FwdWz, BlockId::BwdWz}) {
      const auto b = std::size_t(base);
      set(BlockId(b + 0), h, h, false);
      set(BlockId(b + 1), h, h, false);
      set(BlockId(b + 2), h, 1, true);
      set(BlockId(b + 3), h, h, false);
      set(BlockId(b + 4), h, h, false);
      set(BlockId(b + 5), h, 1, true);
    }
    set(BlockId::HeadW, 1, 2 * h, false);
    set(BlockId::HeadB, 1, 1, true);
    set(BlockId::ConvW, c, k * d, false);
    set(BlockId::ConvB, c, 1, true);
    set(BlockId::FuseWv, 1, c, false);
    set(BlockId::FuseWf, 1, 2 * h, false);
    set(BlockId::FuseB, 1, 1, true);

    std::size_t offset = 0;
    for (std::size_t i = 0; i < kBlockCount; ++i) {
      if (i == kFirstSupBlock) sub_size_ = offset;
      blocks_[i].offset = offset;
      offset += blocks_[i].size();
    }
    total_ = offset;
  }

  const Block& operator[](BlockId id) const { return blocks_[std::size_t(id)]; }
  const Block& at(std::size_t i) const { return blocks_.at(i); }
  std::size_t total() const { return total_; }
  std::size_t sub_size() const { return sub_size_; }

  /// Name of the block containing flat index `i`.
  std::string_view block_name_of(std::size_t i) const {
    for (std::size_t b = 0; b < kBlockCount; ++b) {
      if (i >= blocks_[b].offset && i < blocks_[b].offset + blocks_[b].size()) return kBlockNames[b];
    }
    return "<out of range>";
  }

private:
  std::array<Block, kBlockCount> blocks_{};
  std::size_t total_ = 0;
  std::size_t sub_size_ = 0;
};

/// Flat parameter (or gradient) vector of both agents.
struct PolicyParams {
  ModelConfig model;
  ParamLayout layout;
  std::vector<double> values;

  PolicyParams() = default;
  explicit PolicyParams(const ModelConfig& m) : model(m), layout(m), values(layout.total(), 0.0) {}

  std::span<double> block(BlockId id) {
    const Block& b = layout[id];
    return {values.data() + b.offset, b.size()};
  }
  std::span<const double> block(BlockId id) const {
    const Block& b = layout[id];
    return {values.data() + b.offset, b.size()};
  }

  std::span<double> sub_values() { return {values.data(), layout.sub_size()}; }
  std::span<double> sup_values() { return {values.data() + layout.sub_size(), values.size() - layout.sub_size()}; }
  std::span<const double> sub_values() const { return {values.data(), layout.sub_size()}; }
  std::span<const double> sup_values() const {
    return {values.data() + layout.sub_size(), values.size() - layout.sub_size()};
  }

  std::size_t size() const { return values.size(); }

  /// Same shape, all zeros.
  PolicyParams zeros_like() const { return PolicyParams(model); }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.model == b.model && a.values == b.values;
  }
};

using PolicyGradient = PolicyParams;

/// Weights uniform in [-scale, scale] from a seeded generator; biases zero.
inline PolicyParams init_params(const ModelConfig& model, std::uint64_t seed, double scale = 0.1) {
  PolicyParams p(model);
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 0x696e6974u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> uni(-scale, scale);
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const Block& blk = p.layout.at(b);
    if (blk.is_bias) continue;
    for (std::size_t i = 0; i < blk.size(); ++i) p.values[blk.offset + i] = uni(rng);
  }
  return p;
}

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json checkpoint_to_json(const PolicyParams& p) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const Block& blk = p.layout.at(b);
    std::vector<double> vals(p.values.begin() + std::ptrdiff_t(blk.offset),
                             p.values.begin() + std::ptrdiff_t(blk.offset + blk.size()));
    tensors.push_back({{"name", kBlockNames[b]}, {"shape", {blk.rows, blk.cols}}, {"values", vals}});
  }
  return {{"format_version", kCheckpointFormatVersion}, {"model", p.model}, {"tensors", tensors}};
}

inline PolicyParams checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("format_version") || !j.contains("model") || !j.contains("tensors")) {
    throw ParseError("checkpoint must contain format_version, model and tensors");
  }
  if (j["format_version"] != kCheckpointFormatVersion) {
    throw ParseError("unsupported checkpoint format_version " + j["format_version"].dump());
  }
  PolicyParams p(j["model"].get<ModelConfig>());
  const auto& tensors = j["tensors"];
  if (!tensors.is_array() || tensors.size() != kBlockCount) {
    throw ParseError("checkpoint must hold " + std::to_string(kBlockCount) + " tensors");
  }
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const auto& t = tensors[b];
    const Block& blk = p.layout.at(b);
    const std::string name = t.value("name", "");
    if (name != kBlockNames[b]) {
      throw ParseError("tensor " + std::to_string(b) + ": expected '" + std::string(kBlockNames[b]) + "', found '" +
                       name + "'");
    }
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != blk.rows || shape[1] != blk.cols) {
      throw ParseError("tensor '" + name + "': expected shape [" + std::to_string(blk.rows) + "," +
                       std::to_string(blk.cols) + "], found " + t.at("shape").dump());
    }
    const auto vals = t.at("values").get<std::vector<double>>();
    if (vals.size() != blk.size()) {
      throw ParseError("tensor '" + name + "': expected " + std::to_string(blk.size()) + " values, found " +
                       std::to_string(vals.size()));
    }
    std::copy(vals.begin(), vals.end(), p.values.begin() + std::ptrdiff_t(blk.offset));
  }
  return p;
}

inline void write_checkpoint(const PolicyParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_json(p).dump() << '\n';
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline PolicyParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'");
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace hqa
