#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ugcsim/error.hpp"
#include "ugcsim/llm_backend.hpp"
#include "ugcsim/post.hpp"
#include "ugcsim/prompt_template.hpp"
#include "ugcsim/runtime.hpp"

namespace ugcsim {

// --- Multi-source aggregation ------------------------------------------------

struct FieldTemplate {
  std::string key;
  /// Sentence with a `{value}` placeholder.
  PromptTemplate sentence;
};

/// Field-name expansion map; rendering follows `fields` order.
struct FieldMap {
  std::string version;
  std::vector<FieldTemplate> fields;
  /// Used for keys missing from `fields`; placeholders {key} and {value}.
  PromptTemplate fallback;

  static FieldMap load(const std::filesystem::path& path);
  static FieldMap load_default();
};

struct EnrichedText {
  std::string text;
  /// One entry per metadata key rendered through the fallback sentence.
  std::vector<std::string> warnings;
};

std::string render_metadata_value(const MetadataValue& value);

/// "Simulated opinion trajectory: ...; final mean opinion X; P% of simulated
/// users strongly engaged." followed by the action counts.
std::string render_propagation(const PropagationFeatures& features);

/// Metadata sentences in field-map order, unknown keys after them in post
/// order, then the post text, then the propagation sentence when given.
EnrichedText aggregate_metadata(const UgcPost& post, const PropagationFeatures* features,
                                const FieldMap& field_map);

// --- Prediction ----------------------------------------------------------------

struct LabelRange {
  double lo = 0.0;
  double hi = 16.0;

  void validate() const;
  double normalize(double y) const;
};

class PredictionError : public Error {
 public:
  using Error::Error;
};

/// First "SCORE: <number>" in a response.
std::optional<double> parse_score(std::string_view response);

inline constexpr std::string_view kScoreReminder =
    "\n\nYour previous answer could not be parsed. Answer with exactly one line: "
    "SCORE: <number>";

/// Prompt-model popularity score clamped to `range`. Throws PredictionError
/// when neither the first answer nor the reprompt carries a score.
double predict_prompt(const EnrichedText& enriched, const std::optional<std::string>& image_ref,
                      ChatBackend& backend, const PromptTemplate& prompt, LabelRange range);

PromptTemplate load_default_prediction_prompt();

enum class PredictionSource { kPromptModel, kNumericBaseline };

std::string_view to_string(PredictionSource s);
PredictionSource parse_prediction_source(std::string_view s);

struct PredictionRecord {
  std::string post_id;
  double predicted = 0.0;
  double label = 0.0;
  PredictionSource source = PredictionSource::kPromptModel;
};

// --- Numeric baseline --------------------------------------------------------

/// [final M_num, M_num slope, share_above_7_5, five action counts, text length].
std::vector<double> baseline_features(const PropagationFeatures& features, const UgcPost& post);

/// Least-squares slope of a series against its index.
double series_slope(std::span<const double> series);

/// Ridge regression on standardized features with an unpenalized intercept.
struct RidgeModel {
  std::vector<double> mean;
  /// Train standard deviation; zero marks a dropped constant feature.
  std::vector<double> scale;
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 1.0;
};

RidgeModel fit_numeric_baseline(const std::vector<std::vector<double>>& features,
                                std::span<const double> labels, double lambda = 1.0);
double predict_numeric(const RidgeModel& model, std::span<const double> features);

// --- Loss and metrics ----------------------------------------------------------

/// Binary cross-entropy after min-max normalizing both sides over `range`;
/// predictions are clamped to [1e-7, 1 - 1e-7].
double cross_entropy_loss(std::span<const double> preds, std::span<const double> labels,
                          LabelRange range);

struct EvalReport {
  double mae = 0.0;
  double mse = 0.0;
  double src = 0.0;
  std::size_t n = 0;
};

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> a, std::span<const double> b);

/// Spearman correlation: Pearson over average ranks. 0 when either side is
/// constant. Requires n >= 2.
double spearman(std::span<const double> a, std::span<const double> b);

EvalReport evaluate(std::span<const PredictionRecord> records);

}  // namespace ugcsim
