#include "hqa/evaluate.hpp"
#include "hqa/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hqa;

TEST(Confusion, Examples) {
  EXPECT_EQ(confusion(FrameLabels{1, 0, 1}, FrameLabels{1, 0, 1}), (ConfusionCounts{2, 0, 1, 0}));
  EXPECT_EQ(confusion(FrameLabels{1, 1}, FrameLabels{0, 0}).fp, 2u);
  EXPECT_EQ(confusion(FrameLabels{0, 1, 1, 0}, FrameLabels{1, 1, 0, 0}), (ConfusionCounts{1, 1, 1, 1}));
  EXPECT_THROW(confusion(FrameLabels{1}, FrameLabels{1, 0}), ContractViolation);
}

TEST(Metrics, BalancedCounts) {
  const BinaryMetrics m = metrics_from_confusion({1, 1, 1, 1});
  for (double v : {m.acc, m.sen, m.spe, m.pre, m.f1}) EXPECT_DOUBLE_EQ(v, 0.5);
  EXPECT_FALSE(m.degenerate.any());
}

TEST(Metrics, PerfectPrediction) {
  const BinaryMetrics m = metrics_from_confusion({3, 0, 4, 0});
  for (double v : {m.acc, m.sen, m.spe, m.pre, m.f1}) EXPECT_EQ(v, 1.0);
}

TEST(Metrics, DegenerateDenominatorsAreFlagged) {
  const BinaryMetrics m = metrics_from_confusion({0, 0, 5, 2});
  EXPECT_EQ(m.pre, 0.0);
  EXPECT_TRUE(m.degenerate.pre);
  EXPECT_TRUE(m.degenerate.f1);
  EXPECT_FALSE(m.degenerate.sen);
  const BinaryMetrics all_neg = metrics_from_confusion({0, 0, 3, 0});
  EXPECT_TRUE(all_neg.degenerate.sen);
  EXPECT_EQ(all_neg.sen, 0.0);
}

TEST(Metrics, BoundsAndHarmonicMean) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    ConfusionCounts c{rng() % 6, rng() % 6, rng() % 6, rng() % 6};
    if (c.total() == 0) continue;
    const BinaryMetrics m = metrics_from_confusion(c);
    for (double v : {m.acc, m.sen, m.spe, m.pre, m.f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    if (m.pre + m.sen > 0) EXPECT_DOUBLE_EQ(m.f1, 2 * m.pre * m.sen / (m.pre + m.sen));
  }
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.1}, FrameLabels{1, 0}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.5, 0.5}, FrameLabels{1, 0}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.8, 0.6, 0.4, 0.2}, FrameLabels{1, 0, 1, 0}), 0.75);
  EXPECT_EQ(auc_trapezoid(std::vector<double>{0.8, 0.6, 0.4, 0.2}, FrameLabels{1, 0, 1, 0}), 0.75);
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, FrameLabels{1, 1}), UndefinedAucError);
  EXPECT_THROW(auc_trapezoid(std::vector<double>{0.1, 0.2}, FrameLabels{0, 0}), UndefinedAucError);
}

TEST(Auc, ThreeRoutesAgree) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng() % 99;
    std::vector<double> scores(n);
    FrameLabels labels(n);
    // Coarse grid scores so ties are common.
    for (std::size_t k = 0; k < n; ++k) {
      scores[k] = double(rng() % 12) / 11.0;
      labels[k] = Label(rng() % 2);
    }
    labels[0] = 1;
    labels[1] = 0;
    const double mw = auc(scores, labels);
    EXPECT_NEAR(mw, auc_trapezoid(scores, labels), 1e-12);
    EXPECT_NEAR(mw, oracle::auc_pairwise(scores, labels), 1e-12);
  }
}

TEST(Auc, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> uni(-3.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> scores(30), mapped(30);
    FrameLabels labels(30);
    for (std::size_t k = 0; k < 30; ++k) {
      scores[k] = uni(rng);
      mapped[k] = std::exp(2.0 * scores[k]) + 5.0;
      labels[k] = Label(k % 3 == 0);
    }
    EXPECT_EQ(auc(scores, labels), auc(mapped, labels));
  }
}

TEST(Auc, ComplementSymmetryWithoutTies) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> scores(25);
    FrameLabels labels(25), flipped(25);
    for (std::size_t k = 0; k < 25; ++k) {
      scores[k] = uni(rng);
      labels[k] = Label(k % 2);
      flipped[k] = Label(1 - labels[k]);
    }
    EXPECT_NEAR(auc(scores, labels) + auc(scores, flipped), 1.0, 1e-15);
  }
}

namespace {

// Two-frame-state model: feature +1 on qualified frames, -1 elsewhere, saturated gates.
PolicyParams oracle_policy() {
  ModelConfig m;
  m.feature_dim = 1;
  m.hidden = 1;
  m.conv_channels = 1;
  m.conv_width = 1;
  PolicyParams p(m);
  p.block(BlockId::EncW)[0] = 2.0;
  for (BlockId base : {BlockId::FwdWz, BlockId::BwdWz}) {
    p.block(BlockId(std::size_t(base) + 2))[0] = 40.0;  // gate bias: always take the candidate
    p.block(BlockId(std::size_t(base) + 3))[0] = 3.0;   // candidate input weight
  }
  p.block(BlockId::HeadW)[0] = 5.0;
  p.block(BlockId::HeadW)[1] = 5.0;
  p.block(BlockId::ConvW)[0] = 1.0;
  p.block(BlockId::FuseWv)[0] = 20.0;
  return p;
}

Episode signed_episode(const std::string& id, const FrameLabels& labels, double threshold) {
  Episode ep;
  ep.id = id;
  ep.frame_labels = labels;
  ep.features = FeatureMatrix(labels.size(), 1);
  for (std::size_t t = 0; t < labels.size(); ++t) ep.features(t, 0) = labels[t] ? 1.0f : -1.0f;
  ep.video_label = video_label_for(labels, threshold);
  return ep;
}

}  // namespace

TEST(EvaluateCorpus, PerfectPolicyScoresOne) {
  const Corpus corpus{signed_episode("a", {1, 1, 1, 0, 0}, 0.5), signed_episode("b", {0, 1, 0, 0}, 0.5),
                      signed_episode("c", {1, 0, 1, 1}, 0.5)};
  const Evaluation ev = evaluate_corpus(oracle_policy(), corpus);
  for (const MetricsReport* r : {&ev.frame, &ev.video}) {
    const BinaryMetrics& m = r->metrics;
    for (double v : {m.acc, m.sen, m.spe, m.pre, m.f1}) EXPECT_EQ(v, 1.0);
    ASSERT_TRUE(r->auc.has_value());
    EXPECT_EQ(*r->auc, 1.0);
  }
  EXPECT_EQ(ev.frame.n_items, 13u);
  EXPECT_EQ(ev.video.n_items, 3u);
}

TEST(EvaluateCorpus, ZeroWeightsPredictEverythingPositive) {
  SimConfig s;
  s.n_frames = 20;
  s.feature_dim = 3;
  s.cluster_width_range = {2, 6};
  const Corpus corpus = generate_corpus(s, 6, 0).train;
  ModelConfig m;
  m.feature_dim = 3;
  m.hidden = 2;
  const Evaluation ev = evaluate_corpus(PolicyParams(m), corpus);
  EXPECT_EQ(ev.frame.metrics.sen, 1.0);
  EXPECT_EQ(ev.frame.metrics.spe, 0.0);
  EXPECT_EQ(*ev.frame.auc, 0.5);
  EXPECT_EQ(ev.video.metrics.sen, ev.video.counts.tp + ev.video.counts.fn > 0 ? 1.0 : 0.0);
  EXPECT_EQ(ev.video.metrics.spe, 0.0);
}

TEST(EvaluateCorpus, DeterministicAndOrderIndependent) {
  SimConfig s;
  s.n_frames = 16;
  s.feature_dim = 3;
  s.cluster_width_range = {2, 6};
  Corpus corpus = generate_corpus(s, 5, 0).train;
  ModelConfig m;
  m.feature_dim = 3;
  m.hidden = 3;
  const PolicyParams p = init_params(m, 21, 0.8);
  const nlohmann::json first = evaluation_to_json(evaluate_corpus(p, corpus));
  EXPECT_EQ(evaluation_to_json(evaluate_corpus(p, corpus)), first);
  std::reverse(corpus.begin(), corpus.end());
  const Evaluation rev = evaluate_corpus(p, corpus);
  EXPECT_EQ(report_to_json(rev.frame), first["frame"]);
  EXPECT_EQ(report_to_json(rev.video)["raw"], first["video"]["raw"]);
}

TEST(EvaluateCorpus, SingleClassVideoLevelReportsMissingAuc) {
  const Corpus corpus{signed_episode("a", {1, 1, 0}, 0.5), signed_episode("b", {1, 0, 1}, 0.5)};
  const Evaluation ev = evaluate_corpus(oracle_policy(), corpus);
  EXPECT_FALSE(ev.video.auc.has_value());
  const nlohmann::json j = report_to_json(ev.video);
  EXPECT_EQ(j["percent"]["AUC"], "--");
  EXPECT_TRUE(j["raw"]["auc"].is_null());
  EXPECT_TRUE(j["degenerate"]["auc_undefined"].get<bool>());
}

TEST(EvaluateCorpus, EmptyCorpusRejected) {
  EXPECT_THROW(evaluate_corpus(oracle_policy(), Corpus{}), ContractViolation);
}

TEST(Report, JsonLayout) {
  MetricsReport r;
  r.level = Level::Frame;
  r.n_items = 3;
  r.counts = {1, 1, 1, 0};
  r.metrics = metrics_from_confusion(r.counts);
  r.auc = 2.0 / 3.0;
  const nlohmann::json j = report_to_json(r);
  EXPECT_EQ(j["averaging"], "micro");
  EXPECT_EQ(j["percent"]["ACC"].get<double>(), 66.67);
  EXPECT_EQ(j["percent"]["AUC"].get<double>(), 66.67);
  EXPECT_EQ(j["raw"]["acc"].get<double>(), 2.0 / 3.0);
  EXPECT_EQ(j["confusion"]["tp"], 1);
}

TEST(PredictionDump, OneRowPerFrame) {
  const Corpus corpus{signed_episode("a", {1, 0}, 0.5), signed_episode("b", {0, 1, 1}, 0.5)};
  std::ostringstream out;
  write_prediction_dump(out, evaluate_corpus(oracle_policy(), corpus));
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 6);
  EXPECT_EQ(s.substr(0, s.find('\n')), "episode_id,frame_idx,prob,action,label");
  EXPECT_NE(s.find("\nb,2,"), std::string::npos);
}
