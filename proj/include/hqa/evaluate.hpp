#pragma once

// Greedy inference over a corpus and the two-level metric reports.
// Frame metrics pool every frame of every episode (micro-averaging); video
// metrics use one decision per episode. AUC uses the pre-threshold probabilities.

#include "hqa/agents.hpp"
#include "hqa/format.hpp"
#include "hqa/metrics.hpp"
#include "hqa/params.hpp"
#include "hqa/simulator.hpp"

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace hqa {

struct EpisodePrediction {
  std::string id;
  ActionTrace trace;
  FrameLabels frame_labels;
  int video_label = 0;
};

struct Evaluation {
  MetricsReport frame;
  MetricsReport video;
  std::vector<EpisodePrediction> predictions;
};

inline EpisodePrediction predict_episode(const PolicyParams& params, const Episode& episode) {
  const PolicyForward fw = policy_forward(params, episode);
  return {episode.id, greedy_actions(fw.sub.probs, fw.sup.prob), episode.frame_labels, episode.video_label};
}

inline Evaluation evaluate_corpus(const PolicyParams& params, std::span<const Episode> corpus) {
  if (corpus.empty()) throw ContractViolation("evaluate_corpus: empty corpus");
  Evaluation ev;
  FrameLabels frame_pred, frame_true, video_pred, video_true;
  std::vector<double> frame_scores, video_scores;
  for (const Episode& ep : corpus) {
    EpisodePrediction p = predict_episode(params, ep);
    frame_pred.insert(frame_pred.end(), p.trace.frame_actions.begin(), p.trace.frame_actions.end());
    frame_scores.insert(frame_scores.end(), p.trace.frame_probs.begin(), p.trace.frame_probs.end());
    frame_true.insert(frame_true.end(), ep.frame_labels.begin(), ep.frame_labels.end());
    video_pred.push_back(Label(p.trace.video_action));
    video_scores.push_back(p.trace.video_prob);
    video_true.push_back(Label(ep.video_label));
    ev.predictions.push_back(std::move(p));
  }
  ev.frame = make_report(Level::Frame, frame_pred, frame_scores, frame_true);
  ev.video = make_report(Level::Video, video_pred, video_scores, video_true);
  return ev;
}

inline nlohmann::json evaluation_to_json(const Evaluation& ev) {
  return {{"frame", report_to_json(ev.frame)}, {"video", report_to_json(ev.video)}};
}

/// CSV `episode_id,frame_idx,prob,action,label`, one row per frame.
inline void write_prediction_dump(std::ostream& out, const Evaluation& ev) {
  out << "episode_id,frame_idx,prob,action,label\n";
  std::string line;
  for (const EpisodePrediction& p : ev.predictions) {
    for (std::size_t t = 0; t < p.frame_labels.size(); ++t) {
      line = p.id;
      line += ',';
      line += std::to_string(t);
      line += ',';
      detail::append_double(line, p.trace.frame_probs[t]);
      line += ',';
      line += char('0' + p.trace.frame_actions[t]);
      line += ',';
      line += char('0' + p.frame_labels[t]);
      out << line << '\n';
    }
  }
}

}  // namespace hqa
