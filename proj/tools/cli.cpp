#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "ugcsim/config.hpp"
#include "ugcsim/digest.hpp"
#include "ugcsim/error.hpp"
#include "ugcsim/features.hpp"
#include "ugcsim/text.hpp"
#include "ugcsim/trace_io.hpp"

namespace ugcsim::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataIntegrityError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_all(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  if (!out) throw DataIntegrityError("cannot write " + p.string());
  out << content;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ConfigError("missing input " + p.string(), what);
}

std::string trace_file_name(std::size_t index, const std::string& post_id) {
  std::string safe;
  for (char c : post_id) {
    safe.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'
                       ? c
                       : '_');
  }
  return fmt::format("trace_{:04d}_{}.jsonl", index, safe);
}

ordered_json usage_to_json(const UsageReport& r) {
  auto site = [](const SiteUsage& s) {
    return ordered_json{{"calls", s.calls},
                        {"prompt_tokens", s.prompt_tokens},
                        {"completion_tokens", s.completion_tokens},
                        {"retries", s.retries},
                        {"wall_seconds", s.wall_seconds}};
  };
  ordered_json by = ordered_json::object();
  for (auto s : {CallSite::kDecision, CallSite::kSummary, CallSite::kPrediction, CallSite::kOther}) {
    by[std::string(to_string(s))] = site(r.site(s));
  }
  return {{"total", site(r.total)}, {"by_site", by}, {"network_calls", r.network_calls}};
}

// --- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string config, posts, out;
  std::size_t parallel = 1;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const SimConfig cfg = SimConfig::load(a.config);
  require_file(a.posts, "posts");
  const auto posts = read_posts(a.posts);
  if (posts.empty()) throw ConfigError("posts file has no posts", "posts");
  fs::create_directories(a.out);

  const RuntimeConfig base = cfg.runtime();
  const Population population = build_population(cfg.population(), cfg.pools());
  {
    std::ofstream agents(fs::path(a.out) / "population.jsonl");
    std::ofstream edges(fs::path(a.out) / "edges.txt");
    write_population(population, agents, edges);
  }
  auto backend = cfg.make_backend();

  std::vector<std::optional<PropagationTrace>> traces(posts.size());
  std::vector<std::string> failures(posts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < posts.size(); i = next++) {
      RuntimeConfig rc = base;
      rc.seed = cfg.seed + i;
      PropagationTrace meta;
      meta.post_id = posts[i].id;
      meta.n_agents = population.agents.size();
      meta.rounds = rc.rounds;
      meta.seed = rc.seed;
      meta.mode = rc.mode;
      meta.config_digest = rc.config_digest;
      TraceWriter writer(fs::path(a.out) / trace_file_name(i, posts[i].id), meta);
      auto trace = run_simulation(posts[i], population, rc, *backend,
                                  [&](const StepRecord& s) { writer.append(s); });
      writer.finish(trace);
      traces[i] = std::move(trace);
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(a.parallel, 1, posts.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const std::string digest = base.config_digest;
  ordered_json manifest = {{"schema", "ugcsim.manifest"},
                           {"version", 1},
                           {"config_digest", digest},
                           {"seed", cfg.seed},
                           {"mode", to_string(cfg.mode)},
                           {"n_posts", posts.size()},
                           {"config", cfg.canonical()}};
  ordered_json entries = ordered_json::array();
  bool all_complete = true;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const auto name = trace_file_name(i, posts[i].id);
    const auto& t = *traces[i];
    entries.push_back({{"post_id", posts[i].id},
                       {"file", name},
                       {"seed", t.seed},
                       {"complete", t.complete},
                       {"sha256", sha256_hex(read_all(fs::path(a.out) / name))}});
    for (const auto& s : t.steps) {
      for (const auto& w : s.warnings) err << "warning: post " << t.post_id << ": " << w << '\n';
    }
    if (!t.complete) {
      all_complete = false;
      err << "error: post " << t.post_id << ": " << t.error << " (partial trace kept)\n";
    }
  }
  manifest["traces"] = entries;
  write_all(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");

  ordered_json usage = {{"schema", "ugcsim.usage"},
                        {"version", 1},
                        {"config_digest", digest},
                        {"mode", to_string(cfg.mode)},
                        {"backend", cfg.backend},
                        {"usage", usage_to_json(backend->usage_report())}};
  write_all(fs::path(a.out) / "usage.json", usage.dump(2) + "\n");

  out << fmt::format("simulated {} post(s), mode={}, digest={}\n", posts.size(),
                     to_string(cfg.mode), digest.substr(0, 12));
  return all_complete ? 0 : static_cast<int>(ExitCode::kBackend);
}

// --- shared artifact loading -------------------------------------------------

struct RunArtifacts {
  std::string digest;
  std::map<std::string, PropagationTrace> traces;
};

RunArtifacts load_run(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  require_file(manifest_path, "traces");
  RunArtifacts run;
  try {
    const auto m = ordered_json::parse(read_all(manifest_path));
    if (m.value("schema", "") != "ugcsim.manifest") throw DataIntegrityError("not a run manifest");
    run.digest = m.at("config_digest").get<std::string>();
    for (const auto& e : m.at("traces")) {
      const auto file = dir / e.at("file").get<std::string>();
      const auto content = read_all(file);
      if (sha256_hex(content) != e.at("sha256").get<std::string>()) {
        throw DataIntegrityError("trace " + file.string() + " does not match its manifest digest");
      }
      std::istringstream in(content);
      auto t = parse_trace(in);
      if (t.config_digest != run.digest) {
        throw DataIntegrityError("trace " + file.string() + " comes from a different config");
      }
      run.traces.emplace(t.post_id, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError(std::string("malformed manifest: ") + e.what());
  }
  return run;
}

const PropagationTrace& trace_for(const RunArtifacts& run, const UgcPost& post) {
  const auto it = run.traces.find(post.id);
  if (it == run.traces.end()) throw ConfigError("no trace for post '" + post.id + "'", "traces");
  return it->second;
}

// --- predict -----------------------------------------------------------------

struct PredictArgs {
  std::string config, posts, traces, out;
  std::string source = "prompt";
  std::string train_posts, train_traces;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const SimConfig cfg = SimConfig::load(a.config);
  require_file(a.posts, "posts");
  const auto posts = read_posts(a.posts);
  const RunArtifacts run = load_run(a.traces);
  const auto source = parse_prediction_source(a.source);
  const FieldMap field_map = cfg.load_field_map();
  const LabelRange range = cfg.label_range();
  range.validate();

  std::vector<PropagationFeatures> feats;
  for (const auto& p : posts) feats.push_back(extract_features(trace_for(run, p)));

  std::vector<ordered_json> lines;
  std::size_t failures = 0;
  std::optional<UsageReport> usage;
  if (source == PredictionSource::kPromptModel) {
    auto backend = cfg.make_backend();
    const PromptTemplate prompt = cfg.prediction_prompt();
    for (std::size_t i = 0; i < posts.size(); ++i) {
      const auto enriched = aggregate_metadata(posts[i], &feats[i], field_map);
      for (const auto& w : enriched.warnings) err << "warning: post " << posts[i].id << ": " << w << '\n';
      ordered_json rec = {{"post_id", posts[i].id}, {"source", to_string(source)}};
      try {
        rec["predicted"] = predict_prompt(enriched, posts[i].image_ref, *backend, prompt, range);
      } catch (const PredictionError& e) {
        rec["predicted"] = nullptr;
        rec["error"] = e.what();
        ++failures;
      }
      rec["label"] = posts[i].label ? ordered_json(*posts[i].label) : ordered_json(nullptr);
      lines.push_back(std::move(rec));
    }
    usage = backend->usage_report();
  } else {
    if (a.train_posts.empty() || a.train_traces.empty()) {
      throw ConfigError("baseline predictions need --train-posts and --train-traces", "source");
    }
    require_file(a.train_posts, "train-posts");
    const auto train_posts = read_posts(a.train_posts);
    const RunArtifacts train_run = load_run(a.train_traces);
    if (train_run.digest != run.digest) {
      throw DataIntegrityError("training traces come from a different config");
    }
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (const auto& p : train_posts) {
      if (!p.label) continue;
      x.push_back(baseline_features(extract_features(trace_for(train_run, p)), p));
      y.push_back(*p.label);
    }
    if (x.size() < 2) throw ConfigError("need at least two labelled training posts", "train-posts");
    const RidgeModel model = fit_numeric_baseline(x, y, cfg.ridge_lambda);
    for (std::size_t i = 0; i < posts.size(); ++i) {
      const double pred = predict_numeric(model, baseline_features(feats[i], posts[i]));
      lines.push_back({{"post_id", posts[i].id},
                       {"source", to_string(source)},
                       {"predicted", pred},
                       {"label", posts[i].label ? ordered_json(*posts[i].label) : ordered_json(nullptr)}});
    }
  }

  ordered_json header = {{"schema", "ugcsim.predictions"},
                         {"version", 1},
                         {"config_digest", run.digest},
                         {"source", to_string(source)},
                         {"label_range", {range.lo, range.hi}},
                         {"field_map_version", field_map.version}};
  std::string content = header.dump() + "\n";
  for (const auto& l : lines) content += l.dump() + "\n";
  fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_all(out_path, content);
  out << fmt::format("wrote {} prediction(s), {} failed, source={}\n", lines.size(), failures,
                     to_string(source));
  if (usage) {
    out << fmt::format("prediction calls: {}, prompt tokens: {}\n", usage->total.calls,
                       usage->total.prompt_tokens);
  }
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> predictions;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
  std::optional<std::string> digest;
  std::optional<std::string> field_map_version;
  std::optional<LabelRange> range;
  std::vector<PredictionRecord> records;
  std::size_t skipped = 0;
  for (const auto& file : a.predictions) {
    require_file(file, "predictions");
    std::istringstream in(read_all(file));
    std::string line;
    if (!std::getline(in, line)) throw DataIntegrityError(file + " is empty");
    try {
      const auto h = ordered_json::parse(line);
      if (h.value("schema", "") != "ugcsim.predictions") {
        throw DataIntegrityError(file + " is not a predictions file");
      }
      const auto d = h.at("config_digest").get<std::string>();
      if (digest && *digest != d) {
        throw DataIntegrityError("prediction files come from different configs (" +
                                 digest->substr(0, 12) + " vs " + d.substr(0, 12) + ")");
      }
      digest = d;
      const LabelRange r{h.at("label_range").at(0).get<double>(), h.at("label_range").at(1).get<double>()};
      if (range && (range->lo != r.lo || range->hi != r.hi)) {
        throw DataIntegrityError("prediction files disagree on the label range");
      }
      range = r;
      field_map_version = h.value("field_map_version", "");
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = ordered_json::parse(line);
        if (j.contains("error") || j.at("predicted").is_null() || j.at("label").is_null()) {
          ++skipped;
          continue;
        }
        records.push_back({j.at("post_id").get<std::string>(), j.at("predicted").get<double>(),
                           j.at("label").get<double>(),
                           parse_prediction_source(j.at("source").get<std::string>())});
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataIntegrityError(file + ": malformed record: " + e.what());
    }
  }
  if (records.size() < 2) {
    throw DataIntegrityError("evaluation needs at least two labelled predictions");
  }
  const EvalReport report = evaluate(records);
  std::vector<double> p, y;
  for (const auto& r : records) {
    p.push_back(r.predicted);
    y.push_back(r.label);
  }
  const double ce = cross_entropy_loss(p, y, *range);
  ordered_json header = {{"schema", "ugcsim.eval"},
                         {"version", 1},
                         {"config_digest", *digest},
                         {"label_range", {range->lo, range->hi}},
                         {"field_map_version", *field_map_version}};
  ordered_json body = {{"kind", "report"},
                       {"n", report.n},
                       {"mae", report.mae},
                       {"mse", report.mse},
                       {"src", report.src},
                       {"cross_entropy", ce},
                       {"skipped", skipped}};
  fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_all(out_path, header.dump() + "\n" + body.dump() + "\n");
  out << fmt::format("n={} MAE={:.4f} MSE={:.4f} SRC={:.4f} CE={:.4f}\n", report.n, report.mae,
                     report.mse, report.src, ce);
  return 0;
}

// --- plotdata ------------------------------------------------------------------

struct PlotArgs {
  std::string trace, out;
  std::size_t bins = 10;
};

int cmd_plotdata(const PlotArgs& a, std::ostream& out, std::ostream&) {
  require_file(a.trace, "trace");
  if (a.bins < 1) throw ConfigError("must be >= 1", "bins");
  const PropagationTrace t = read_trace(a.trace);
  if (t.steps.empty()) throw DataIntegrityError("trace has no steps");
  fs::create_directories(a.out);
  const std::string banner = fmt::format("# ugcsim.plotdata v1 post_id={} config_digest={}{}\n",
                                         t.post_id, t.config_digest,
                                         t.complete ? "" : " incomplete");
  std::string mnum = banner + "step\tm_num\tshare_above_7_5\n";
  std::string hist = banner + "step";
  const double width = (kOpinionMax - kOpinionMin) / static_cast<double>(a.bins);
  for (std::size_t b = 0; b < a.bins; ++b) {
    hist += fmt::format("\t[{},{}{}", text::format_number(kOpinionMin + width * b, 3),
                        text::format_number(kOpinionMin + width * (b + 1), 3),
                        b + 1 == a.bins ? "]" : ")");
  }
  hist += "\n";
  for (const auto& s : t.steps) {
    const auto high = std::count_if(s.opinions.begin(), s.opinions.end(), [](double o) { return o > 7.5; });
    mnum += fmt::format("{}\t{}\t{}\n", s.step, s.m_num,
                        static_cast<double>(high) / static_cast<double>(s.opinions.size()));
    std::vector<std::size_t> counts(a.bins, 0);
    for (double o : s.opinions) {
      auto b = static_cast<std::size_t>(std::floor((o - kOpinionMin) / width));
      ++counts[std::min(b, a.bins - 1)];
    }
    hist += std::to_string(s.step);
    for (auto c : counts) hist += "\t" + std::to_string(c);
    hist += "\n";
  }
  write_all(fs::path(a.out) / "m_num.tsv", mnum);
  write_all(fs::path(a.out) / "opinion_hist.tsv", hist);
  out << fmt::format("wrote {} step row(s) to {}\n", t.steps.size(), a.out);
  return 0;
}

// --- report-usage --------------------------------------------------------------

struct UsageArgs {
  std::string run;
  std::string compare;
};

ordered_json load_usage(const fs::path& dir) {
  const auto p = dir / "usage.json";
  require_file(p, "run");
  try {
    auto j = ordered_json::parse(read_all(p));
    if (j.value("schema", "") != "ugcsim.usage") throw DataIntegrityError("not a usage file");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw DataIntegrityError(std::string("malformed usage file: ") + e.what());
  }
}

void print_usage(std::ostream& out, const std::string& label, const ordered_json& u) {
  out << fmt::format("{} (mode={}, backend={})\n", label, u.value("mode", "?"), u.value("backend", "?"));
  out << fmt::format("  {:<11} {:>8} {:>14} {:>14} {:>8} {:>10}\n", "site", "calls", "prompt_tok",
                     "completion_tok", "retries", "seconds");
  auto row = [&](const std::string& name, const ordered_json& s) {
    out << fmt::format("  {:<11} {:>8} {:>14} {:>14} {:>8} {:>10.3f}\n", name,
                       s.at("calls").get<std::size_t>(), s.at("prompt_tokens").get<std::size_t>(),
                       s.at("completion_tokens").get<std::size_t>(), s.at("retries").get<std::size_t>(),
                       s.at("wall_seconds").get<double>());
  };
  for (const auto& [site, s] : u.at("usage").at("by_site").items()) row(site, s);
  row("total", u.at("usage").at("total"));
}

int cmd_report_usage(const UsageArgs& a, std::ostream& out, std::ostream&) {
  const auto u = load_usage(a.run);
  print_usage(out, a.run, u);
  if (!a.compare.empty()) {
    const auto v = load_usage(a.compare);
    print_usage(out, a.compare, v);
    const double t1 = u.at("usage").at("total").at("prompt_tokens").get<double>();
    const double t2 = v.at("usage").at("total").at("prompt_tokens").get<double>();
    const double w1 = u.at("usage").at("total").at("wall_seconds").get<double>();
    const double w2 = v.at("usage").at("total").at("wall_seconds").get<double>();
    out << fmt::format("prompt-token ratio {} / {} = {:.4f}\n", a.run, a.compare,
                       t2 > 0 ? t1 / t2 : 0.0);
    if (w2 > 0) {
      out << fmt::format("wall-time reduction: {:.1f}%\n", 100.0 * (1.0 - w1 / w2));
    }
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Social-network sandbox for simulating post propagation and predicting popularity"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run the propagation simulation for every post");
  simulate->add_option("--config", sim.config, "Flat key = value config file")->required();
  simulate->add_option("--posts", sim.posts, "Line-delimited posts file")->required();
  simulate->add_option("--out", sim.out, "Output directory for traces and manifest")->required();
  simulate->add_option("--parallel", sim.parallel, "Posts simulated concurrently")->check(CLI::PositiveNumber);

  PredictArgs pred;
  auto* predict = app.add_subcommand("predict", "Predict popularity from simulation traces");
  predict->add_option("--config", pred.config)->required();
  predict->add_option("--posts", pred.posts)->required();
  predict->add_option("--traces", pred.traces, "Directory written by simulate")->required();
  predict->add_option("--out", pred.out, "Predictions file")->required();
  predict->add_option("--source", pred.source, "prompt | baseline");
  predict->add_option("--train-posts", pred.train_posts, "Labelled posts for the ridge baseline");
  predict->add_option("--train-traces", pred.train_traces, "Traces for the training posts");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score predictions with MAE, MSE, SRC and cross-entropy");
  eval->add_option("--predictions", ev.predictions, "One or more predictions files")->required();
  eval->add_option("--out", ev.out, "Report file")->required();

  PlotArgs plot;
  auto* plotdata = app.add_subcommand("plotdata", "Export per-step series as TSV");
  plotdata->add_option("--trace", plot.trace)->required();
  plotdata->add_option("--out", plot.out)->required();
  plotdata->add_option("--bins", plot.bins, "Opinion histogram bins");

  UsageArgs usage;
  auto* report_usage = app.add_subcommand("report-usage", "Print backend call and token totals");
  report_usage->add_option("--run", usage.run, "Directory written by simulate")->required();
  report_usage->add_option("--compare", usage.compare, "Second run to compare against");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*simulate) return cmd_simulate(sim, out, err);
    if (*predict) return cmd_predict(pred, out, err);
    if (*eval) return cmd_eval(ev, out, err);
    if (*plotdata) return cmd_plotdata(plot, out, err);
    if (*report_usage) return cmd_report_usage(usage, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kDataIntegrity);
  }
  return static_cast<int>(ExitCode::kUsage);
}

}  // namespace ugcsim::cli
