#pragma once

// JSON Lines corpus files, one episode per line:
//   {"id": str, "video_label": 0|1, "frame_labels": [0|1,...], "features": [[f32,...],...]}
// Features are written in shortest round-trip float form, so reading a file
// back reproduces the in-memory episode exactly.

#include "hqa/errors.hpp"
#include "hqa/format.hpp"
#include "hqa/simulator.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace hqa {

inline std::string episode_to_jsonl(const Episode& ep) {
  std::string line;
  line.reserve(ep.features.data.size() * 11 + ep.frame_labels.size() * 2 + 64);
  line += "{\"id\":";
  line += nlohmann::json(ep.id).dump();
  line += ",\"video_label\":";
  line += std::to_string(ep.video_label);
  line += ",\"frame_labels\":[";
  for (std::size_t i = 0; i < ep.frame_labels.size(); ++i) {
    if (i) line += ',';
    line += char('0' + ep.frame_labels[i]);
  }
  line += "],\"features\":[";
  for (std::size_t r = 0; r < ep.features.rows; ++r) {
    if (r) line += ',';
    line += '[';
    for (std::size_t c = 0; c < ep.features.cols; ++c) {
      if (c) line += ',';
      detail::append_float(line, ep.features(r, c));
    }
    line += ']';
  }
  line += "]}";
  return line;
}

inline void write_corpus(std::ostream& out, std::span<const Episode> corpus) {
  for (const Episode& ep : corpus) out << episode_to_jsonl(ep) << '\n';
}

inline void write_corpus(std::span<const Episode> corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_corpus(out, corpus);
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline Episode episode_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  for (const char* key : {"id", "video_label", "frame_labels", "features"}) {
    if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
  }
  Episode ep;
  if (!j["id"].is_string()) throw ParseError("field 'id' must be a string");
  ep.id = j["id"].get<std::string>();

  const auto& vl = j["video_label"];
  if (!vl.is_number_integer() || (vl.get<int>() != 0 && vl.get<int>() != 1)) {
    throw ParseError("field 'video_label' must be 0 or 1");
  }
  ep.video_label = vl.get<int>();

  const auto& fl = j["frame_labels"];
  if (!fl.is_array() || fl.empty()) throw ParseError("field 'frame_labels' must be a non-empty array");
  ep.frame_labels.reserve(fl.size());
  for (std::size_t i = 0; i < fl.size(); ++i) {
    if (!fl[i].is_number_integer() || (fl[i].get<int>() != 0 && fl[i].get<int>() != 1)) {
      throw ParseError("frame_labels[" + std::to_string(i) + "] must be 0 or 1");
    }
    ep.frame_labels.push_back(Label(fl[i].get<int>()));
  }

  const auto& feats = j["features"];
  if (!feats.is_array() || feats.size() != ep.frame_labels.size()) {
    throw ParseError("field 'features' must have one row per frame label (" +
                     std::to_string(ep.frame_labels.size()) + ")");
  }
  const std::size_t cols = feats[0].is_array() ? feats[0].size() : 0;
  if (cols == 0) throw ParseError("features[0] must be a non-empty array");
  ep.features = FeatureMatrix(feats.size(), cols);
  for (std::size_t r = 0; r < feats.size(); ++r) {
    const auto& row = feats[r];
    if (!row.is_array() || row.size() != cols) {
      throw ParseError("features[" + std::to_string(r) + "] must have " + std::to_string(cols) + " values");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) {
        throw ParseError("features[" + std::to_string(r) + "][" + std::to_string(c) + "] is not a number");
      }
      ep.features(r, c) = float(row[c].get<double>());
    }
  }
  return ep;
}

/// Blank lines are skipped; an empty stream is an empty corpus.
inline Corpus read_corpus(std::istream& in, const std::string& source = "<stream>") {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::size_t record = corpus.size() + 1;
    try {
      corpus.push_back(episode_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source + ": line " + std::to_string(line_no) + " (record " + std::to_string(record) +
                       "): " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(source + ": line " + std::to_string(line_no) + " (record " + std::to_string(record) +
                       "): " + e.what());
    }
  }
  return corpus;
}

inline Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open corpus file '" + path.string() + "'");
  return read_corpus(in, path.string());
}

}  // namespace hqa
