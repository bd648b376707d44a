#include "hqa_cli.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

namespace hqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fixed(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string absolute_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

json load_json(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + what + " '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(what + " '" + path.string() + "': " + e.what());
  }
}

// Files are written under temporary names and renamed into place only when the
// whole command has succeeded; on failure everything staged is removed again,
// together with any directories this object created.
class StagedOutputs {
public:
  explicit StagedOutputs(fs::path dir) : dir_(std::move(dir)) {
    note_missing_dirs(dir_, created_);
    fs::create_directories(dir_);
  }

  StagedOutputs(const StagedOutputs&) = delete;
  StagedOutputs& operator=(const StagedOutputs&) = delete;

  ~StagedOutputs() {
    if (committed_) return;
    std::error_code ec;
    for (const Entry& e : entries_) fs::remove(e.temp, ec);
    for (const fs::path& d : sub_created_) fs::remove(d, ec);
    for (const fs::path& d : created_) fs::remove(d, ec);
  }

  void write(const std::string& rel, const std::function<void(std::ostream&)>& body) {
    const fs::path final_path = dir_ / rel;
    if (!fs::exists(final_path.parent_path())) {
      std::vector<fs::path> missing;
      note_missing_dirs(final_path.parent_path(), missing);
      fs::create_directories(final_path.parent_path());
      sub_created_.insert(sub_created_.begin(), missing.begin(), missing.end());
    }
    Entry e{rel, final_path, final_path};
    e.temp += ".partial";
    entries_.push_back(e);
    std::ofstream out(e.temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + e.temp.string() + "' for writing");
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("write to '" + e.temp.string() + "' failed");
  }

  void write(const std::string& rel, const std::string& content) {
    write(rel, [&](std::ostream& out) { out << content; });
  }

  /// Adds the output list and end time, writes the manifest and renames everything into place.
  void finish(json manifest) {
    json outputs = json::array();
    for (const Entry& e : entries_) {
      outputs.push_back({{"path", e.rel}, {"bytes", fs::file_size(e.temp)}, {"sha256", sha256_file(e.temp)}});
    }
    manifest["outputs"] = outputs;
    manifest["output_dir"] = absolute_string(dir_);
    manifest["finished_at"] = utc_now();
    write(kManifestName, manifest.dump(2) + "\n");
    for (const Entry& e : entries_) fs::rename(e.temp, e.final_path);
    committed_ = true;
  }

  const fs::path& dir() const { return dir_; }

private:
  struct Entry {
    std::string rel;
    fs::path final_path;
    fs::path temp;
  };

  static void note_missing_dirs(const fs::path& dir, std::vector<fs::path>& out) {
    std::error_code ec;
    for (fs::path p = fs::absolute(dir); !p.empty() && !fs::exists(p, ec); p = p.parent_path()) {
      out.push_back(p);
      if (p == p.parent_path()) break;
    }
  }

  fs::path dir_;
  std::vector<Entry> entries_;
  std::vector<fs::path> created_;      // deepest first
  std::vector<fs::path> sub_created_;  // deepest first
  bool committed_ = false;
};

json base_manifest(const std::string& command, const std::string& started) {
  return {{"command", command}, {"tool_version", kToolVersion}, {"started_at", started}, {"inputs", json::object()}};
}

json input_record(const fs::path& path) { return {{"path", absolute_string(path)}, {"sha256", sha256_file(path)}}; }

double prevalence(const FrameLabels& labels) {
  if (labels.empty()) return 0.0;
  return double(std::count(labels.begin(), labels.end(), Label{1})) / double(labels.size());
}

void print_corpus_summary(std::ostream& out, const std::string& name, const Corpus& corpus) {
  FrameLabels frames, videos;
  for (const Episode& ep : corpus) {
    frames.insert(frames.end(), ep.frame_labels.begin(), ep.frame_labels.end());
    videos.push_back(Label(ep.video_label));
  }
  out << name << ": " << corpus.size() << " episodes, " << frames.size() << " frames, qualified frames "
      << fixed(100.0 * prevalence(frames), 2) << "%, qualified videos " << fixed(100.0 * prevalence(videos), 2)
      << "%\n";
}

void check_feature_dims(const Corpus& corpus, std::size_t expected, const std::string& what,
                        const fs::path& corpus_path) {
  for (const Episode& ep : corpus) {
    if (ep.features.cols != expected) {
      throw ParseError(what + " expects feature_dim " + std::to_string(expected) + ", but episode '" + ep.id +
                       "' in '" + corpus_path.string() + "' has " + std::to_string(ep.features.cols) +
                       " features per frame");
    }
  }
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string labels_to_string(const FrameLabels& labels) {
  std::string s;
  for (Label l : labels) s += char('0' + l);
  return s;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), std::streamsize(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), std::size_t(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof(byte), "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

FrameLabels parse_labels(const std::string& text) {
  FrameLabels labels;
  std::size_t index = 0;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    if (token != "0" && token != "1") {
      throw ParseError("label at index " + std::to_string(index) + " is '" + token + "', expected 0 or 1");
    }
    labels.push_back(Label(token[0] - '0'));
    ++index;
    token.clear();
  };
  const bool separated = text.find_first_of(", \t\n") != std::string::npos;
  for (char c : text) {
    if (c == ',' || c == ' ' || c == '\t' || c == '\n') {
      flush();
    } else if (separated) {
      token += c;
    } else {
      token = std::string(1, c);
      flush();
    }
  }
  flush();
  if (labels.empty()) throw ParseError("no labels given");
  return labels;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::vector<double>& xs,
                           const std::vector<ChartSeries>& series) {
  constexpr double width = 720, height = 360, left = 64, right = 150, top = 36, bottom = 48;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  if (!xs.empty()) {
    x_lo = *std::min_element(xs.begin(), xs.end());
    x_hi = *std::max_element(xs.begin(), xs.end());
  }
  bool any = false;
  for (const ChartSeries& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      y_lo = any ? std::min(y_lo, v) : v;
      y_hi = any ? std::max(y_hi, v) : v;
      any = true;
    }
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  svg << "<g stroke=\"#888\" stroke-width=\"1\">\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\"/>\n";
  svg << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fixed(py(v) + 4, 1) << "\" text-anchor=\"end\">" << fixed(v, 3)
        << "</text>\n";
    const double x = x_lo + (x_hi - x_lo) * i / 4.0;
    svg << "<text x=\"" << fixed(px(x), 1) << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">"
        << fixed(x, 0) << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
      << xml_escape(x_label) << "</text>\n</g>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const ChartSeries& s = series[k];
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.values.size() && i < xs.size(); ++i) {
      if (!std::isfinite(s.values[i])) continue;
      svg << fixed(px(xs[i]), 2) << ',' << fixed(py(s.values[i]), 2) << ' ';
    }
    svg << "\"/>\n";
    const double ly = top + 14 + 18 * double(k);
    svg << "<rect x=\"" << left + plot_w + 16 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"3\" fill=\""
        << s.color << "\"/>\n";
    svg << "<text x=\"" << left + plot_w + 34 << "\" y=\"" << ly - 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

int cmd_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream&) {
  const std::string started = utc_now();
  opts.config.validate();
  const SplitCorpus corpus = generate_corpus(opts.config, opts.n_train, opts.n_test);
  StagedOutputs staged(opts.out_dir);
  staged.write("train.jsonl", [&](std::ostream& s) { write_corpus(s, corpus.train); });
  staged.write("test.jsonl", [&](std::ostream& s) { write_corpus(s, corpus.test); });
  json m = base_manifest("simulate", started);
  m["config"] = opts.config;
  m["seeds"] = {{"simulation", opts.config.seed}};
  m["options"] = {{"n_train", opts.n_train}, {"n_test", opts.n_test}};
  staged.finish(m);
  print_corpus_summary(out, "train", corpus.train);
  print_corpus_summary(out, "test", corpus.test);
  out << "wrote " << (staged.dir() / "train.jsonl").string() << " and " << (staged.dir() / "test.jsonl").string()
      << '\n';
  return kExitOk;
}

int cmd_reward_profile(const RewardProfileOptions& opts, std::ostream& out, std::ostream&) {
  const std::string started = utc_now();
  if (opts.labels.empty()) throw ParseError("no labels given");
  opts.reward.validate();
  const RewardProfile env = envelope_profile(opts.labels, opts.reward);
  StagedOutputs staged(opts.out_dir);
  staged.write("profile.csv", [&](std::ostream& s) {
    s << "frame,label,envelope\n";
    std::string line;
    for (std::size_t t = 0; t < env.size(); ++t) {
      line = std::to_string(t);
      line += ',';
      line += char('0' + opts.labels[t]);
      line += ',';
      detail::append_double(line, env[t]);
      s << line << '\n';
    }
  });
  std::vector<double> xs(env.size()), label_track(env.size());
  for (std::size_t t = 0; t < env.size(); ++t) {
    xs[t] = double(t);
    label_track[t] = opts.reward.a_max * double(opts.labels[t]);
  }
  staged.write("profile.svg", svg_line_chart("Shaped frame reward", "frame", xs,
                                             {{"envelope", "#1f77b4", env}, {"label x a_max", "#aaaaaa", label_track}}));
  json m = base_manifest("reward-profile", started);
  m["config"] = {{"ramp_width", opts.reward.d}, {"amplitude", opts.reward.a_max}};
  m["seeds"] = json::object();
  m["options"] = {{"labels", labels_to_string(opts.labels)}, {"source", opts.source}};
  staged.finish(m);
  const PulseTrain pulses = pulses_from_labels(opts.labels);
  out << env.size() << " frames, " << pulses.size() << " pulse(s), "
      << std::count(env.begin(), env.end(), opts.reward.a_max) << " frame(s) at the plateau\n";
  out << "wrote " << (staged.dir() / "profile.csv").string() << '\n';
  return kExitOk;
}

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream&) {
  const std::string started = utc_now();
  const Corpus corpus = read_corpus(opts.corpus);
  if (corpus.empty()) throw ConfigError("training corpus '" + opts.corpus.string() + "' is empty");
  TrainConfig config = opts.config;
  if (opts.infer_feature_dim) config.model.feature_dim = corpus.front().features.cols;
  config.validate();
  check_feature_dims(corpus, config.model.feature_dim, "training config", opts.corpus);

  TrainerState state(init_params(config.model, config.init_seed));
  StagedOutputs staged(opts.out_dir);
  auto on_epoch = [&](const TrainerState& s, const EpochRecord& r) {
    if (!opts.quiet) {
      out << "epoch " << r.epoch << (r.phase == Phase::Pretrain ? " pretrain" : " joint") << "  lr " << r.lr
          << "  R_sub " << fixed(r.r_sub, 4) << "  R_sup " << fixed(r.r_sup, 4) << "  R_total "
          << fixed(r.r_total, 4) << std::endl;
    }
    if (opts.checkpoint_every > 0 && s.epoch % opts.checkpoint_every == 0) {
      char name[40];
      std::snprintf(name, sizeof(name), "checkpoints/epoch-%04zu.json", s.epoch);
      staged.write(name, checkpoint_to_json(s.params).dump() + "\n");
    }
  };
  const TrainLog log = train(state, corpus, config, on_epoch);

  staged.write("checkpoint.json", checkpoint_to_json(state.params).dump() + "\n");
  staged.write("train_log.csv", [&](std::ostream& s) { write_train_log_csv(s, log); });
  std::vector<double> xs, r_sub, r_sup, r_total;
  for (const EpochRecord& r : log.records) {
    xs.push_back(double(r.epoch));
    r_sub.push_back(r.r_sub);
    r_sup.push_back(r.r_sup);
    r_total.push_back(r.r_total);
  }
  staged.write("train_log.svg",
               svg_line_chart("Mean reward per epoch", "epoch", xs,
                              {{"R_sub", "#1f77b4", r_sub}, {"R_sup", "#d62728", r_sup}, {"R_total", "#2ca02c", r_total}}));
  json m = base_manifest("train", started);
  m["config"] = config;
  m["seeds"] = {{"training", config.seed}, {"init", config.init_seed}};
  m["inputs"]["corpus"] = input_record(opts.corpus);
  m["options"] = {{"checkpoint_every", opts.checkpoint_every}};
  staged.finish(m);
  out << "trained " << log.records.size() << " epoch(s) on " << corpus.size() << " episodes; wrote "
      << (staged.dir() / "checkpoint.json").string() << '\n';
  return kExitOk;
}

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream&) {
  const std::string started = utc_now();
  const PolicyParams params = read_checkpoint(opts.checkpoint);
  const Corpus corpus = read_corpus(opts.corpus);
  if (corpus.empty()) throw ParseError("corpus '" + opts.corpus.string() + "' contains no episodes");
  check_feature_dims(corpus, params.model.feature_dim, "checkpoint '" + opts.checkpoint.string() + "'",
                     opts.corpus);
  const Evaluation ev = evaluate_corpus(params, corpus);

  StagedOutputs staged(opts.out_dir);
  staged.write("report.json", evaluation_to_json(ev).dump(2) + "\n");
  staged.write("predictions.csv", [&](std::ostream& s) { write_prediction_dump(s, ev); });
  const EpisodePrediction& first = ev.predictions.front();
  std::vector<double> xs, truth, actions;
  for (std::size_t t = 0; t < first.frame_labels.size(); ++t) {
    xs.push_back(double(t));
    truth.push_back(double(first.frame_labels[t]));
    actions.push_back(double(first.trace.frame_actions[t]));
  }
  staged.write("timeline.svg", svg_line_chart("Frame scores for " + first.id, "frame", xs,
                                              {{"probability", "#1f77b4", first.trace.frame_probs},
                                               {"selected", "#ff7f0e", actions},
                                               {"label", "#aaaaaa", truth}}));
  json m = base_manifest("eval", started);
  m["config"] = params.model;
  m["seeds"] = json::object();
  m["inputs"]["checkpoint"] = input_record(opts.checkpoint);
  m["inputs"]["corpus"] = input_record(opts.corpus);
  m["options"] = json::object();
  staged.finish(m);

  for (const MetricsReport* r : {&ev.frame, &ev.video}) {
    const BinaryMetrics& x = r->metrics;
    out << level_name(r->level) << " (" << r->n_items << "): ACC " << fixed(100 * x.acc, 2) << "  SEN "
        << fixed(100 * x.sen, 2) << "  SPE " << fixed(100 * x.spe, 2) << "  PRE " << fixed(100 * x.pre, 2)
        << "  F1 " << fixed(100 * x.f1, 2) << "  AUC " << (r->auc ? fixed(100 * *r->auc, 2) : std::string("--"))
        << '\n';
  }
  out << "wrote " << (staged.dir() / "report.json").string() << '\n';
  return kExitOk;
}

int cmd_rerun(const RerunOptions& opts, std::ostream& out, std::ostream& err) {
  const json m = load_json(opts.manifest, "manifest");
  if (!m.is_object() || !m.contains("command") || !m.contains("config") || !m.contains("outputs")) {
    throw ConfigError("manifest '" + opts.manifest.string() + "' lacks command, config or outputs");
  }
  const std::string command = m["command"].get<std::string>();
  if (m.value("tool_version", "") != kToolVersion) {
    err << "warning: manifest was written by version " << m.value("tool_version", "?") << ", this is "
        << kToolVersion << '\n';
  }
  for (const auto& item : m["inputs"].items()) {
    const fs::path path = item.value().at("path").get<std::string>();
    const std::string recorded = item.value().at("sha256").get<std::string>();
    if (sha256_file(path) != recorded) {
      throw ParseError("input '" + item.key() + "' (" + path.string() + ") changed since the manifest was written");
    }
  }
  const fs::path out_dir = opts.out_dir ? *opts.out_dir : fs::path(m.at("output_dir").get<std::string>());
  const json& options = m.contains("options") ? m["options"] : json::object();

  int code = kExitOk;
  if (command == "simulate") {
    SimulateOptions o;
    o.config = m["config"].get<SimConfig>();
    o.n_train = options.at("n_train").get<std::size_t>();
    o.n_test = options.at("n_test").get<std::size_t>();
    o.out_dir = out_dir;
    code = cmd_simulate(o, out, err);
  } else if (command == "reward-profile") {
    RewardProfileOptions o;
    o.labels = parse_labels(options.at("labels").get<std::string>());
    o.source = options.value("source", "--labels");
    o.reward.d = m["config"].at("ramp_width").get<double>();
    o.reward.a_max = m["config"].at("amplitude").get<double>();
    o.out_dir = out_dir;
    code = cmd_reward_profile(o, out, err);
  } else if (command == "train") {
    TrainOptions o;
    o.corpus = m["inputs"]["corpus"]["path"].get<std::string>();
    o.config = m["config"].get<TrainConfig>();
    o.infer_feature_dim = false;
    o.checkpoint_every = options.value("checkpoint_every", std::size_t{0});
    o.quiet = true;
    o.out_dir = out_dir;
    code = cmd_train(o, out, err);
  } else if (command == "eval") {
    EvalOptions o;
    o.checkpoint = m["inputs"]["checkpoint"]["path"].get<std::string>();
    o.corpus = m["inputs"]["corpus"]["path"].get<std::string>();
    o.out_dir = out_dir;
    code = cmd_eval(o, out, err);
  } else {
    throw ConfigError("manifest names unknown command '" + command + "'");
  }
  if (code != kExitOk) return code;

  std::map<std::string, std::string> before;
  for (const json& o : m["outputs"]) before[o.at("path").get<std::string>()] = o.at("sha256").get<std::string>();
  const json fresh = load_json(out_dir / kManifestName, "manifest");
  std::size_t same = 0, compared = 0;
  bool ok = true;
  for (const json& o : fresh["outputs"]) {
    const std::string path = o.at("path").get<std::string>();
    if (path == kManifestName) continue;
    ++compared;
    const auto it = before.find(path);
    if (it == before.end()) {
      err << "new output not in the original run: " << path << '\n';
      ok = false;
    } else if (it->second != o.at("sha256").get<std::string>()) {
      err << "output differs: " << path << '\n';
      ok = false;
    } else {
      ++same;
    }
  }
  if (compared != before.size()) {
    err << "output count differs from the original run\n";
    ok = false;
  }
  out << "reran '" << command << "': " << same << " of " << compared << " output(s) byte-identical\n";
  return ok ? kExitOk : kExitRuntime;
}

namespace {

template <typename Cfg>
struct Overrides {
  std::vector<std::pair<CLI::Option*, std::function<void(Cfg&)>>> items;

  void apply(Cfg& target) const {
    for (const auto& [opt, assign] : items) {
      if (opt->count() > 0) assign(target);
    }
  }
};

// Register a flag bound to a field of `flags`; when given, it overrides the config file.
template <typename Cfg, typename Get>
void bind(CLI::App* app, Overrides<Cfg>& ov, Cfg& flags, const std::string& name, Get get, const std::string& help) {
  CLI::Option* opt = app->add_option(name, get(flags), help)->capture_default_str();
  ov.items.emplace_back(opt, [&flags, get](Cfg& target) { get(target) = get(flags); });
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-level (frame and video) quality assessment with cooperating policy-gradient agents", "hqa"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // simulate
  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic train/test corpus");
  SimulateOptions sim_opts;
  SimConfig sim_flags;
  Overrides<SimConfig> sim_ov;
  std::string sim_config;
  sim->add_option("--config", sim_config, "Simulation config JSON; explicit flags override it");
  sim->add_option("--out", sim_opts.out_dir, "Output directory")->required();
  sim->add_option("--n-train", sim_opts.n_train, "Training episodes")->capture_default_str();
  sim->add_option("--n-test", sim_opts.n_test, "Test episodes")->capture_default_str();
  bind(sim, sim_ov, sim_flags, "--n-frames", [](SimConfig& c) -> auto& { return c.n_frames; }, "Frames per episode");
  bind(sim, sim_ov, sim_flags, "--feature-dim", [](SimConfig& c) -> auto& { return c.feature_dim; },
       "Feature dimension");
  bind(sim, sim_ov, sim_flags, "--cluster-count-range", [](SimConfig& c) -> auto& { return c.cluster_count_range; },
       "Min and max clusters of qualified frames per episode");
  bind(sim, sim_ov, sim_flags, "--cluster-width-range", [](SimConfig& c) -> auto& { return c.cluster_width_range; },
       "Min and max cluster width in frames");
  bind(sim, sim_ov, sim_flags, "--overlap-probability", [](SimConfig& c) -> auto& { return c.overlap_probability; },
       "Chance that a cluster starts inside the previous one");
  bind(sim, sim_ov, sim_flags, "--signal-to-noise", [](SimConfig& c) -> auto& { return c.signal_to_noise; },
       "Class separation relative to noise");
  bind(sim, sim_ov, sim_flags, "--video-quality-threshold",
       [](SimConfig& c) -> auto& { return c.video_quality_threshold; },
       "Qualified-frame fraction at which a video counts as qualified");
  bind(sim, sim_ov, sim_flags, "--seed", [](SimConfig& c) -> auto& { return c.seed; }, "Simulation seed");

  // reward-profile
  CLI::App* rp = app.add_subcommand("reward-profile", "Render the shaped frame reward over a label track");
  RewardProfileOptions rp_opts;
  std::string rp_labels, rp_corpus, rp_episode;
  std::size_t rp_index = 0;
  CLI::Option* labels_opt = rp->add_option("--labels", rp_labels, "Binary labels, e.g. 0,1,1,0 or 0110");
  CLI::Option* corpus_opt = rp->add_option("--corpus", rp_corpus, "Corpus JSONL to take an episode's labels from");
  CLI::Option* episode_opt = rp->add_option("--episode", rp_episode, "Episode id within --corpus");
  CLI::Option* index_opt = rp->add_option("--index", rp_index, "Episode position within --corpus")->capture_default_str();
  labels_opt->excludes(corpus_opt);
  episode_opt->needs(corpus_opt);
  index_opt->needs(corpus_opt);
  episode_opt->excludes(index_opt);
  rp->add_option("--ramp-width", rp_opts.reward.d, "Ramp width d in frames")->capture_default_str();
  rp->add_option("--amplitude", rp_opts.reward.a_max, "Plateau amplitude a_max")->capture_default_str();
  rp->add_option("--out", rp_opts.out_dir, "Output directory")->required();

  // train
  CLI::App* tr = app.add_subcommand("train", "Pretrain the frame agent, then train both agents jointly");
  TrainOptions tr_opts;
  TrainConfig tr_flags;
  Overrides<TrainConfig> tr_ov;
  std::string tr_config;
  tr->add_option("--corpus", tr_opts.corpus, "Training corpus JSONL")->required();
  tr->add_option("--config", tr_config, "Training config JSON; explicit flags override it");
  tr->add_option("--out", tr_opts.out_dir, "Output directory")->required();
  tr->add_option("--checkpoint-every", tr_opts.checkpoint_every, "Also checkpoint every K epochs (0: final only)")
      ->capture_default_str();
  bind(tr, tr_ov, tr_flags, "--episodes-per-update", [](TrainConfig& c) -> auto& { return c.episodes_per_update; },
       "Sampled rollouts per update");
  bind(tr, tr_ov, tr_flags, "--learning-rate", [](TrainConfig& c) -> auto& { return c.learning_rate; },
       "Initial learning rate");
  bind(tr, tr_ov, tr_flags, "--momentum", [](TrainConfig& c) -> auto& { return c.momentum; }, "SGD momentum");
  bind(tr, tr_ov, tr_flags, "--lr-decay-factor", [](TrainConfig& c) -> auto& { return c.lr_decay_factor; },
       "Learning-rate decay factor");
  bind(tr, tr_ov, tr_flags, "--lr-decay-every", [](TrainConfig& c) -> auto& { return c.lr_decay_every; },
       "Epochs between learning-rate decays");
  bind(tr, tr_ov, tr_flags, "--beta", [](TrainConfig& c) -> auto& { return c.beta; }, "Weight of R_sup in R_total");
  bind(tr, tr_ov, tr_flags, "--pretrain-epochs", [](TrainConfig& c) -> auto& { return c.pretrain_epochs; },
       "Frame-agent warm-up epochs");
  bind(tr, tr_ov, tr_flags, "--joint-epochs", [](TrainConfig& c) -> auto& { return c.joint_epochs; },
       "Joint training epochs");
  bind(tr, tr_ov, tr_flags, "--baseline-momentum", [](TrainConfig& c) -> auto& { return c.baseline_momentum; },
       "Reward baseline EMA momentum");
  bind(tr, tr_ov, tr_flags, "--max-grad-norm", [](TrainConfig& c) -> auto& { return c.max_grad_norm; },
       "Clip update directions to this norm (0: off)");
  bind(tr, tr_ov, tr_flags, "--seed", [](TrainConfig& c) -> auto& { return c.seed; }, "Shuffle and rollout seed");
  bind(tr, tr_ov, tr_flags, "--init-seed", [](TrainConfig& c) -> auto& { return c.init_seed; },
       "Parameter initialisation seed");
  bind(tr, tr_ov, tr_flags, "--ramp-width", [](TrainConfig& c) -> auto& { return c.reward.d; },
       "Reward ramp width d in frames");
  bind(tr, tr_ov, tr_flags, "--amplitude", [](TrainConfig& c) -> auto& { return c.reward.a_max; },
       "Reward plateau amplitude");
  bind(tr, tr_ov, tr_flags, "--hidden", [](TrainConfig& c) -> auto& { return c.model.hidden; },
       "Encoder width and recurrent state size");
  bind(tr, tr_ov, tr_flags, "--conv-channels", [](TrainConfig& c) -> auto& { return c.model.conv_channels; },
       "Temporal convolution channels");
  bind(tr, tr_ov, tr_flags, "--conv-width", [](TrainConfig& c) -> auto& { return c.model.conv_width; },
       "Temporal convolution width in frames");
  CLI::Option* ablate_sup = tr->add_flag("--ablate-sup", "Drop R_sup from the objective (beta = 0)");
  CLI::Option* no_sub = tr->add_flag("--no-sub-features", "Video agent ignores the frame agent's features");
  CLI::Option* no_baseline = tr->add_flag("--no-baseline", "Do not subtract a reward baseline");
  CLI::Option* global_baseline = tr->add_flag("--global-baseline", "One baseline for all episodes");
  CLI::Option* no_pathwise = tr->add_flag("--no-pathwise-sup", "Score-function gradient only for R_sup");
  CLI::Option* supervised = tr->add_flag("--supervised-warmup", "Warm up on frame labels instead of R_sub");
  CLI::Option* wall_clock = tr->add_flag("--record-wall-clock", "Fill the seconds column (logs stop being reproducible)");
  tr->add_flag("--quiet", tr_opts.quiet, "No per-epoch progress");

  // eval
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint at frame and video level");
  EvalOptions ev_opts;
  ev->add_option("--checkpoint", ev_opts.checkpoint, "Checkpoint JSON")->required();
  ev->add_option("--corpus", ev_opts.corpus, "Corpus JSONL")->required();
  ev->add_option("--out", ev_opts.out_dir, "Output directory")->required();

  // rerun
  CLI::App* rr = app.add_subcommand("rerun", "Replay a command from its manifest and compare outputs");
  RerunOptions rr_opts;
  std::string rr_out;
  rr->add_option("--manifest", rr_opts.manifest, "manifest.json of an earlier run")->required();
  rr->add_option("--out", rr_out, "Output directory (default: the recorded one)");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  if (*sim) {
    return guarded(err, [&] {
      sim_opts.config = sim_config.empty() ? SimConfig{} : load_json(sim_config, "simulation config").get<SimConfig>();
      sim_ov.apply(sim_opts.config);
      return cmd_simulate(sim_opts, out, err);
    });
  }
  if (*rp) {
    return guarded(err, [&] {
      if (labels_opt->count() > 0) {
        rp_opts.labels = parse_labels(rp_labels);
      } else if (corpus_opt->count() > 0) {
        const Corpus corpus = read_corpus(fs::path(rp_corpus));
        const Episode* found = nullptr;
        if (episode_opt->count() > 0) {
          for (const Episode& e : corpus) {
            if (e.id == rp_episode) found = &e;
          }
          if (!found) throw ParseError("no episode '" + rp_episode + "' in '" + rp_corpus + "'");
        } else {
          if (rp_index >= corpus.size()) {
            throw ParseError("episode index " + std::to_string(rp_index) + " out of range for '" + rp_corpus +
                             "' (" + std::to_string(corpus.size()) + " episodes)");
          }
          found = &corpus[rp_index];
        }
        rp_opts.labels = found->frame_labels;
        rp_opts.source = absolute_string(rp_corpus) + "#" + found->id;
      } else {
        throw ConfigError("reward-profile needs --labels or --corpus");
      }
      return cmd_reward_profile(rp_opts, out, err);
    });
  }
  if (*tr) {
    return guarded(err, [&] {
      json file = json::object();
      if (!tr_config.empty()) file = load_json(tr_config, "training config");
      TrainConfig config = file.get<TrainConfig>();
      tr_ov.apply(config);
      if (ablate_sup->count() > 0) config.beta = 0.0;
      if (no_sub->count() > 0) config.model.use_sub_features = false;
      if (no_baseline->count() > 0) config.use_baseline = false;
      if (global_baseline->count() > 0) config.per_episode_baseline = false;
      if (no_pathwise->count() > 0) config.pathwise_sup = false;
      if (supervised->count() > 0) config.supervised_warmup = true;
      if (wall_clock->count() > 0) config.record_wall_clock = true;
      tr_opts.config = config;
      tr_opts.infer_feature_dim = !(file.contains("model") && file["model"].contains("feature_dim"));
      return cmd_train(tr_opts, out, err);
    });
  }
  if (*ev) return guarded(err, [&] { return cmd_eval(ev_opts, out, err); });
  if (*rr) {
    return guarded(err, [&] {
      if (!rr_out.empty()) rr_opts.out_dir = fs::path(rr_out);
      return cmd_rerun(rr_opts, out, err);
    });
  }
  return kExitUsage;
}

}  // namespace hqa::cli
