#include "ugcsim/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "ugcsim/text.hpp"

namespace ugcsim {

using nlohmann::ordered_json;

// --- Aggregation -------------------------------------------------------------

FieldMap FieldMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read field map " + path.string(), "field_map");
  FieldMap m;
  try {
    const auto j = ordered_json::parse(in);
    m.version = j.at("version").get<std::string>();
    std::set<std::string> seen;
    for (const auto& f : j.at("fields")) {
      FieldTemplate t{f.at("key").get<std::string>(),
                      PromptTemplate(f.at("sentence").get<std::string>())};
      t.sentence.require_subset_of({"value"});
      if (!seen.insert(t.key).second) {
        throw ConfigError("duplicate key '" + t.key + "'", "field_map");
      }
      m.fields.push_back(std::move(t));
    }
    m.fallback = PromptTemplate(j.at("fallback").get<std::string>());
    m.fallback.require_subset_of({"key", "value"});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed field map: ") + e.what(), "field_map");
  } catch (const ValidationError& e) {
    throw ConfigError(e.what(), "field_map");
  }
  return m;
}

FieldMap FieldMap::load_default() {
  return load(std::filesystem::path(UGCSIM_DATA_DIR) / "field_map.json");
}

std::string render_metadata_value(const MetadataValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return text::collapse_whitespace(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return text::format_number(v, 6);
        } else {
          return text::join(v, ", ");
        }
      },
      value);
}

std::string render_propagation(const PropagationFeatures& f) {
  std::vector<std::string> traj;
  for (double x : f.m_num_series) traj.push_back(text::format_number(x, 2));
  const double final_mean = f.m_num_series.empty() ? 0.0 : f.m_num_series.back();
  std::string out = fmt::format(
      "Simulated opinion trajectory: {}; final mean opinion {}; {}% of simulated users "
      "strongly engaged.",
      traj.empty() ? std::string("none") : text::join(traj, ", "),
      text::format_number(final_mean, 2), text::format_number(100.0 * f.share_above_7_5, 1));
  const auto& h = f.action_histogram;
  auto count = [&](ActionKind k) { return h[static_cast<std::size_t>(k)]; };
  out += fmt::format(
      " Simulated actions: {} posts, {} retweets, {} replies, {} likes, {} silent.",
      count(ActionKind::kPost), count(ActionKind::kRetweet), count(ActionKind::kReply),
      count(ActionKind::kLike), count(ActionKind::kDoNothing));
  if (!f.final_summary.empty()) out += " Final propagation state: " + f.final_summary;
  return out;
}

EnrichedText aggregate_metadata(const UgcPost& post, const PropagationFeatures* features,
                                const FieldMap& field_map) {
  EnrichedText out;
  std::vector<std::string> sentences;
  std::set<std::string> known;
  for (const auto& f : field_map.fields) {
    known.insert(f.key);
    if (const auto* v = post.find(f.key)) {
      sentences.push_back(f.sentence.render({{"value", render_metadata_value(*v)}}));
    }
  }
  for (const auto& [key, value] : post.metadata) {
    if (known.count(key)) continue;
    sentences.push_back(
        field_map.fallback.render({{"key", key}, {"value", render_metadata_value(value)}}));
    out.warnings.push_back("unknown metadata key '" + key + "' rendered with fallback");
  }
  if (!post.text.empty()) {
    sentences.push_back("The post text reads: \"" + text::collapse_whitespace(post.text) + "\"");
  }
  if (features) sentences.push_back(render_propagation(*features));
  out.text = text::join(sentences, " ");
  return out;
}

// --- Prediction ----------------------------------------------------------------

void LabelRange::validate() const {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
    throw ConfigError("label range needs label_min < label_max", "label_min");
  }
}

double LabelRange::normalize(double y) const { return (y - lo) / (hi - lo); }

std::optional<double> parse_score(std::string_view response) {
  static const std::regex kScore(R"(score\s*[:=]\s*\**\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?))",
                                 std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(response.begin(), response.end(), m, kScore)) return std::nullopt;
  const double v = std::stod(m[1].str());
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

PromptTemplate load_default_prediction_prompt() {
  return PromptTemplate::load(std::filesystem::path(UGCSIM_DATA_DIR) / "prompts" /
                              "predict.v1.txt");
}

double predict_prompt(const EnrichedText& enriched, const std::optional<std::string>& image_ref,
                      ChatBackend& backend, const PromptTemplate& prompt, LabelRange range) {
  range.validate();
  const std::string rendered = prompt.render(
      {{"enriched_text", enriched.text},
       {"image", image_ref && !image_ref->empty() ? text::collapse_whitespace(*image_ref)
                                                  : std::string("(no image)")},
       {"label_min", text::format_number(range.lo, 4)},
       {"label_max", text::format_number(range.hi, 4)}});
  auto resp = backend.complete(ChatRequest::user(rendered, CallSite::kPrediction));
  auto score = parse_score(resp.text);
  if (!score) {
    resp = backend.complete(
        ChatRequest::user(rendered + std::string(kScoreReminder), CallSite::kPrediction));
    score = parse_score(resp.text);
  }
  if (!score) throw PredictionError("no SCORE in prediction response after reprompt");
  return std::clamp(*score, range.lo, range.hi);
}

std::string_view to_string(PredictionSource s) {
  return s == PredictionSource::kPromptModel ? "prompt_model" : "numeric_baseline";
}

PredictionSource parse_prediction_source(std::string_view s) {
  if (s == "prompt_model" || s == "prompt") return PredictionSource::kPromptModel;
  if (s == "numeric_baseline" || s == "baseline") return PredictionSource::kNumericBaseline;
  throw ConfigError("expected prompt or baseline, got '" + std::string(s) + "'", "source");
}

// --- Numeric baseline --------------------------------------------------------

double series_slope(std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  const double xbar = static_cast<double>(n - 1) / 2.0;
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxy += dx * (y[i] - ybar);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<double> baseline_features(const PropagationFeatures& f, const UgcPost& post) {
  std::vector<double> x;
  x.push_back(f.m_num_series.empty() ? 0.0 : f.m_num_series.back());
  x.push_back(series_slope(f.m_num_series));
  x.push_back(f.share_above_7_5);
  for (auto c : f.action_histogram) x.push_back(static_cast<double>(c));
  x.push_back(static_cast<double>(post.text.size()));
  return x;
}

RidgeModel fit_numeric_baseline(const std::vector<std::vector<double>>& features,
                                std::span<const double> labels, double lambda) {
  if (features.size() < 2) throw ValidationError("ridge fit needs at least two rows");
  if (features.size() != labels.size()) {
    throw ValidationError("feature rows and labels differ in length");
  }
  if (!(lambda >= 0.0)) throw ConfigError("must be >= 0", "ridge_lambda");
  const std::size_t n = features.size();
  const std::size_t d = features.front().size();
  for (const auto& row : features) {
    if (row.size() != d) throw ValidationError("ragged feature matrix");
  }
  RidgeModel m;
  m.lambda = lambda;
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 0.0);
  m.weights.assign(d, 0.0);
  m.intercept = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(n);

  const bool constant_labels =
      std::all_of(labels.begin(), labels.end(), [&](double y) { return y == labels.front(); });
  if (constant_labels) {
    m.intercept = labels.front();
    return m;
  }

  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (const auto& row : features) s += row[k];
    m.mean[k] = s / static_cast<double>(n);
    double v = 0.0;
    for (const auto& row : features) v += (row[k] - m.mean[k]) * (row[k] - m.mean[k]);
    const double sd = std::sqrt(v / static_cast<double>(n));
    m.scale[k] = sd > 1e-12 * std::max(1.0, std::abs(m.mean[k])) ? sd : 0.0;
  }
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < d; ++k) {
    if (m.scale[k] > 0.0) active.push_back(k);
  }
  if (active.empty()) return m;

  Eigen::MatrixXd z(n, active.size());
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < active.size(); ++c) {
      const auto k = active[c];
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          (features[i][k] - m.mean[k]) / m.scale[k];
    }
    y(static_cast<Eigen::Index>(i)) = labels[i] - m.intercept;
  }
  const auto p = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd gram = z.transpose() * z;
  gram += lambda * Eigen::MatrixXd::Identity(p, p);
  const Eigen::VectorXd rhs = z.transpose() * y;
  // Minimum-norm solution when lambda = 0 leaves the system singular.
  const Eigen::VectorXd w = gram.completeOrthogonalDecomposition().solve(rhs);
  for (std::size_t c = 0; c < active.size(); ++c) {
    m.weights[active[c]] = w(static_cast<Eigen::Index>(c));
  }
  return m;
}

double predict_numeric(const RidgeModel& m, std::span<const double> x) {
  if (x.size() != m.mean.size()) throw ValidationError("feature vector has the wrong length");
  double y = m.intercept;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (m.scale[k] > 0.0) y += m.weights[k] * (x[k] - m.mean[k]) / m.scale[k];
  }
  return y;
}

// --- Loss and metrics ----------------------------------------------------------

double cross_entropy_loss(std::span<const double> preds, std::span<const double> labels,
                          LabelRange range) {
  if (preds.empty() || labels.empty()) throw ValidationError("cross-entropy of empty lists");
  if (preds.size() != labels.size()) throw ValidationError("preds and labels differ in length");
  range.validate();
  constexpr double kEps = 1e-7;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double y = std::clamp(range.normalize(labels[i]), 0.0, 1.0);
    const double p = std::clamp(range.normalize(preds[i]), kEps, 1.0 - kEps);
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(preds.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("pearson inputs differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw ValidationError("correlation needs at least two points");
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2) throw ValidationError("Spearman correlation needs n >= 2");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

EvalReport evaluate(std::span<const PredictionRecord> records) {
  if (records.size() < 2) throw ValidationError("evaluation needs at least two records");
  EvalReport r;
  r.n = records.size();
  std::vector<double> p, y;
  for (const auto& rec : records) {
    if (!std::isfinite(rec.predicted)) throw ValidationError("non-finite prediction");
    const double e = rec.predicted - rec.label;
    r.mae += std::abs(e);
    r.mse += e * e;
    p.push_back(rec.predicted);
    y.push_back(rec.label);
  }
  r.mae /= static_cast<double>(r.n);
  r.mse /= static_cast<double>(r.n);
  r.src = spearman(p, y);
  return r;
}

}  // namespace ugcsim
