#include "hqa/corpus_io.hpp"
#include "hqa/simulator.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

using namespace hqa;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.n_frames = 64;
  c.feature_dim = 4;
  c.seed = 99;
  return c;
}

std::size_t count_ones(const FrameLabels& l) { return std::size_t(std::count(l.begin(), l.end(), Label{1})); }

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hqa_sim_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(GenerateEpisode, NoClustersMeansNoQualifiedFrames) {
  SimConfig c = small_config();
  c.cluster_count_range = {0, 0};
  const Episode ep = generate_episode(c, 3);
  EXPECT_EQ(count_ones(ep.frame_labels), 0u);
  EXPECT_EQ(ep.video_label, 0);
}

TEST(GenerateEpisode, DeterministicForSeedAndIndex) {
  const SimConfig c = small_config();
  EXPECT_EQ(generate_episode(c, 5), generate_episode(c, 5));
  EXPECT_NE(generate_episode(c, 5).features, generate_episode(c, 6).features);
}

TEST(GenerateEpisode, VideoLabelFromCoverage) {
  SimConfig c;
  c.cluster_count_range = {1, 1};
  c.cluster_width_range = {58, 58};  // 58 / 128 = 45%
  c.video_quality_threshold = 0.3;
  const Episode ep = generate_episode(c, 0);
  EXPECT_EQ(count_ones(ep.frame_labels), 58u);
  EXPECT_EQ(ep.video_label, 1);
  c.video_quality_threshold = 0.5;
  EXPECT_EQ(generate_episode(c, 0).video_label, 0);
}

TEST(GenerateEpisode, ShapesAndLabelRule) {
  const SimConfig c;
  for (std::size_t i = 0; i < 50; ++i) {
    const Episode ep = generate_episode(c, i);
    ASSERT_EQ(ep.size(), 128u);
    ASSERT_EQ(ep.features.rows, 128u);
    ASSERT_EQ(ep.features.cols, 16u);
    const double frac = double(count_ones(ep.frame_labels)) / 128.0;
    ASSERT_EQ(ep.video_label, frac >= c.video_quality_threshold ? 1 : 0);
    // Merged clusters still decompose into disjoint, non-adjacent runs.
    const PulseTrain pulses = pulses_from_labels(ep.frame_labels);
    for (std::size_t k = 1; k < pulses.size(); ++k) {
      ASSERT_GT(pulses[k].tau, pulses[k - 1].tau + pulses[k - 1].delta_tau + 1);
    }
    ASSERT_EQ(indicator_from_pulses(pulses, ep.size()), ep.frame_labels);
  }
}

TEST(GenerateEpisode, OverlapMergesClusters) {
  SimConfig c;
  c.cluster_count_range = {2, 2};
  c.cluster_width_range = {10, 10};
  c.overlap_probability = 1.0;
  for (std::size_t i = 0; i < 20; ++i) {
    const Episode ep = generate_episode(c, i);
    EXPECT_EQ(pulses_from_labels(ep.frame_labels).size(), 1u);
    EXPECT_GE(count_ones(ep.frame_labels), 10u);
    EXPECT_LE(count_ones(ep.frame_labels), 20u);
  }
}

TEST(GenerateEpisode, ClusterWiderThanEpisodeIsConfigError) {
  SimConfig c = small_config();
  c.cluster_width_range = {10, 65};
  EXPECT_THROW(generate_episode(c, 0), ConfigError);
}

TEST(SimConfig, ValidationAndJson) {
  SimConfig c;
  c.overlap_probability = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig{};
  c.cluster_count_range = {3, 1};
  EXPECT_THROW(c.validate(), ConfigError);

  SimConfig d = small_config();
  d.signal_to_noise = 12.5;
  const SimConfig back = nlohmann::json(d).get<SimConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(d));
  EXPECT_THROW(nlohmann::json({{"n_frame", 3}}).get<SimConfig>(), ConfigError);
}

TEST(GenerateEpisode, HighSnrFeaturesSeparateAlongMeanDirection) {
  SimConfig c;
  c.signal_to_noise = 10.0;
  const ClassMeans means = class_means(c);
  std::vector<double> dir(c.feature_dim), mid(c.feature_dim);
  for (std::size_t j = 0; j < c.feature_dim; ++j) {
    dir[j] = means.qualified[j] - means.unqualified[j];
    mid[j] = 0.5 * (means.qualified[j] + means.unqualified[j]);
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    const Episode ep = generate_episode(c, i);
    for (std::size_t t = 0; t < ep.size(); ++t) {
      double s = 0.0;
      for (std::size_t j = 0; j < c.feature_dim; ++j) s += (double(ep.features(t, j)) - mid[j]) * dir[j];
      correct += (s > 0.0) == (ep.frame_labels[t] == 1);
      ++total;
    }
  }
  EXPECT_GE(double(correct) / double(total), 0.99);
}

TEST(GenerateCorpus, DisjointDeterministicSplits) {
  const SimConfig c = small_config();
  const SplitCorpus empty = generate_corpus(c, 0, 0);
  EXPECT_TRUE(empty.train.empty());
  EXPECT_TRUE(empty.test.empty());

  const SplitCorpus a = generate_corpus(c, 10, 5);
  ASSERT_EQ(a.train.size(), 10u);
  ASSERT_EQ(a.test.size(), 5u);
  std::set<std::string> ids;
  for (const auto& e : a.train) ids.insert(e.id);
  for (const auto& e : a.test) ids.insert(e.id);
  EXPECT_EQ(ids.size(), 15u);

  auto checksum = [](const SplitCorpus& s) {
    std::ostringstream out;
    write_corpus(out, s.train);
    write_corpus(out, s.test);
    return std::hash<std::string>{}(out.str());
  };
  EXPECT_EQ(checksum(a), checksum(generate_corpus(c, 10, 5)));
}

TEST(CorpusIo, RoundTripIsExact) {
  const SplitCorpus s = generate_corpus(small_config(), 3, 0);
  const auto path = temp_file("roundtrip.jsonl");
  write_corpus(s.train, path);
  const Corpus back = read_corpus(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, s.train[i].id);
    EXPECT_EQ(back[i].frame_labels, s.train[i].frame_labels);
    EXPECT_EQ(back[i].video_label, s.train[i].video_label);
    for (std::size_t k = 0; k < back[i].features.data.size(); ++k) {
      ASSERT_NEAR(back[i].features.data[k], s.train[i].features.data[k], 1e-9);
    }
  }
  EXPECT_EQ(back, s.train);
}

TEST(CorpusIo, TruncatedFileNamesFailingRecord) {
  const SplitCorpus s = generate_corpus(small_config(), 2, 0);
  std::ostringstream out;
  write_corpus(out, s.train);
  const std::string text = out.str();
  std::istringstream in(text.substr(0, text.size() - 40));
  try {
    read_corpus(in, "truncated.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(CorpusIo, EmptyFileIsEmptyCorpus) {
  const auto path = temp_file("empty.jsonl");
  { std::ofstream(path).flush(); }
  EXPECT_TRUE(read_corpus(path).empty());
}

TEST(CorpusIo, RejectsStructuralErrors) {
  std::istringstream bad_label(R"({"id":"a","video_label":1,"frame_labels":[0,3],"features":[[1],[2]]})");
  EXPECT_THROW(read_corpus(bad_label), ParseError);
  std::istringstream ragged(R"({"id":"a","video_label":1,"frame_labels":[0,1],"features":[[1,2],[2]]})");
  EXPECT_THROW(read_corpus(ragged), ParseError);
  std::istringstream rows(R"({"id":"a","video_label":0,"frame_labels":[0,1,1],"features":[[1],[2]]})");
  EXPECT_THROW(read_corpus(rows), ParseError);
}
