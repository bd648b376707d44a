#pragma once

// Command implementations behind the `hqa` executable. Each command writes
// its outputs through a staging area (temp names, renamed together at the
// end) and records a manifest.json that `rerun` can replay.

#include "hqa/hqa.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kManifestName = "manifest.json";

struct SimulateOptions {
  SimConfig config;
  std::size_t n_train = 200;
  std::size_t n_test = 50;
  std::filesystem::path out_dir;
};

struct RewardProfileOptions {
  FrameLabels labels;
  std::string source = "--labels";
  TrapezoidParams reward;
  std::filesystem::path out_dir;
};

struct TrainOptions {
  std::filesystem::path corpus;
  TrainConfig config;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  bool infer_feature_dim = true;     // take model.feature_dim from the corpus
  bool quiet = false;
  std::filesystem::path out_dir;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::filesystem::path out_dir;
};

struct RerunOptions {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> out_dir;  // defaults to the recorded output directory
};

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err);
int cmd_reward_profile(const RewardProfileOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);
int cmd_rerun(const RerunOptions& opts, std::ostream& out, std::ostream& err);

/// Full command line, args[0] being the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "0,1,1" or "011"; throws ParseError naming the first bad index.
FrameLabels parse_labels(const std::string& text);

std::string sha256_file(const std::filesystem::path& path);

/// Line chart with one polyline per series over a shared x axis.
struct ChartSeries {
  std::string name;
  std::string color;
  std::vector<double> values;
};

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::vector<double>& xs,
                           const std::vector<ChartSeries>& series);

}  // namespace hqa::cli
