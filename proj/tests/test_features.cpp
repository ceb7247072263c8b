#include <doctest.h>

#include <cmath>
#include <random>

#include "metric_oracle.hpp"
#include "ugcsim/error.hpp"
#include "ugcsim/features.hpp"

using namespace ugcsim;

namespace {

std::vector<PredictionRecord> records(const std::vector<double>& p, const std::vector<double>& y) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < p.size(); ++i) out.push_back({"p" + std::to_string(i), p[i], y[i], {}});
  return out;
}

PropagationFeatures sample_features() {
  PropagationFeatures f;
  f.m_num_series = {1.0, 2.5, 8.1};
  f.final_summary = "Most users liked the post.";
  f.action_histogram = {1, 2, 3, 4, 5};
  f.share_above_7_5 = 0.25;
  return f;
}

}  // namespace

TEST_CASE("metadata sentences") {
  const auto map = FieldMap::load_default();
  UgcPost post{"p1", "A very fluffy cat", std::nullopt,
               {{"Category", std::string("Animal")}, {"Tags", std::vector<std::string>{"cat", "cute"}}},
               std::nullopt};
  const auto e = aggregate_metadata(post, nullptr, map);
  CHECK(e.text.find("category 'Animal'") != std::string::npos);
  CHECK(e.text.find("tagged with: cat, cute") != std::string::npos);
  CHECK(e.text.find("A very fluffy cat") != std::string::npos);
  CHECK(e.warnings.empty());
  CHECK(aggregate_metadata(post, nullptr, map).text == e.text);
}

TEST_CASE("metadata follows field-map order and flags unknown keys") {
  const auto map = FieldMap::load_default();
  UgcPost post{"p1", "text", std::nullopt,
               {{"Zodiac", std::string("Leo")}, {"Tags", std::vector<std::string>{"x"}},
                {"Category", std::string("Misc")}, {"Followers", 1520.0}},
               std::nullopt};
  const auto e = aggregate_metadata(post, nullptr, map);
  const auto cat = e.text.find("category 'Misc'");
  const auto tags = e.text.find("tagged with: x");
  const auto zod = e.text.find("'Zodiac' with value 'Leo'");
  REQUIRE(cat != std::string::npos);
  REQUIRE(tags != std::string::npos);
  REQUIRE(zod != std::string::npos);
  CHECK(cat < tags);
  CHECK(tags < zod);
  CHECK(e.text.find("1520") != std::string::npos);
  CHECK(e.text.find("1520.0") == std::string::npos);
  CHECK(e.warnings.size() == 1);
}

TEST_CASE("propagation sentence") {
  const auto f = sample_features();
  const auto s = render_propagation(f);
  CHECK(s.find("final mean opinion 8.1") != std::string::npos);
  CHECK(s.find("25%") != std::string::npos);
  CHECK(s.find("Most users liked the post.") != std::string::npos);
  const auto map = FieldMap::load_default();
  UgcPost post{"p", "t", std::nullopt, {}, std::nullopt};
  CHECK(aggregate_metadata(post, &f, map).text.find("final mean opinion 8.1") != std::string::npos);
}

TEST_CASE("score parsing and prompt prediction") {
  CHECK(parse_score("SCORE: 7.2") == 7.2);
  CHECK(parse_score("blah\nscore: -3") == -3.0);
  CHECK_FALSE(parse_score("seven").has_value());

  const auto prompt = load_default_prediction_prompt();
  EnrichedText e{"some post", {}};
  ScriptedBackend fixed([](const ChatRequest&) { return std::string("SCORE: 7.2"); });
  CHECK(predict_prompt(e, std::nullopt, fixed, prompt, {}) == 7.2);
  CHECK(fixed.usage_report().site(CallSite::kPrediction).calls == 1);

  ScriptedBackend big([](const ChatRequest&) { return std::string("SCORE: 99"); });
  CHECK(predict_prompt(e, std::nullopt, big, prompt, {0, 16}) == 16.0);

  int n = 0;
  ScriptedBackend mute([&](const ChatRequest&) {
    ++n;
    return std::string("no idea");
  });
  CHECK_THROWS_AS(predict_prompt(e, std::nullopt, mute, prompt, {}), PredictionError);
  CHECK(n == 2);
}

TEST_CASE("scripted scorer is deterministic") {
  const auto prompt = load_default_prediction_prompt();
  const auto map = FieldMap::load_default();
  auto run = [&] {
    ScriptedBackend b(make_rule_responder({}));
    std::vector<double> out;
    for (int i = 0; i < 10; ++i) {
      auto f = sample_features();
      f.m_num_series.back() = 0.5 * i;
      UgcPost post{"p" + std::to_string(i), "post " + std::to_string(i), std::nullopt, {}, std::nullopt};
      out.push_back(predict_prompt(aggregate_metadata(post, &f, map), std::nullopt, b, prompt, {}));
    }
    return out;
  };
  const auto a = run();
  CHECK(a == run());
  CHECK(a[4] == doctest::Approx(1.0 + 2.0));
}

TEST_CASE("label range") {
  CHECK_THROWS_AS((LabelRange{5, 5}.validate()), ConfigError);
  CHECK(LabelRange{0, 16}.normalize(4) == 0.25);
}

TEST_CASE("ridge baseline") {
  SUBCASE("constant labels") {
    std::vector<std::vector<double>> x{{1, 2}, {3, 1}, {0, 9}};
    std::vector<double> y{4, 4, 4};
    const auto m = fit_numeric_baseline(x, y, 1.0);
    for (const auto& row : x) CHECK(predict_numeric(m, row) == doctest::Approx(4.0));
    CHECK(predict_numeric(m, std::vector<double>{100, -3}) == doctest::Approx(4.0));
  }
  SUBCASE("huge lambda shrinks to the mean") {
    std::vector<std::vector<double>> x{{1}, {2}, {3}, {7}};
    std::vector<double> y{1, 5, 2, 8};
    const auto m = fit_numeric_baseline(x, y, 1e12);
    CHECK(predict_numeric(m, std::vector<double>{3}) == doctest::Approx(4.0).epsilon(1e-6));
  }
  SUBCASE("lambda zero interpolates a line") {
    // y = 2x + 1: slope and intercept from the 2x2 normal equations.
    std::vector<std::vector<double>> x{{0}, {1}, {2}};
    std::vector<double> y{1, 3, 5};
    const auto m = fit_numeric_baseline(x, y, 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(predict_numeric(m, x[i]) - y[i]) <= 1e-9);
    CHECK(std::fabs(predict_numeric(m, std::vector<double>{10}) - 21.0) <= 1e-9);
  }
  SUBCASE("shape errors") {
    std::vector<double> y{1, 2};
    CHECK_THROWS(fit_numeric_baseline({{1, 2}, {3}}, y, 1.0));
    CHECK_THROWS(fit_numeric_baseline({{1}, {2}}, y, -1.0));
  }
}

TEST_CASE("series slope and baseline features") {
  CHECK(series_slope(std::vector<double>{1, 3, 5, 7}) == doctest::Approx(2.0));
  CHECK(series_slope(std::vector<double>{4}) == 0.0);
  UgcPost post{"p", "abcd", std::nullopt, {}, std::nullopt};
  const auto v = baseline_features(sample_features(), post);
  REQUIRE(v.size() == 9);
  CHECK(v[0] == 8.1);
  CHECK(v[2] == 0.25);
  CHECK(v[3] == 1.0);
  CHECK(v[7] == 5.0);
  CHECK(v[8] == 4.0);
}

TEST_CASE("cross-entropy spot values") {
  const LabelRange unit{0, 1};
  CHECK(cross_entropy_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}, unit) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy_loss(std::vector<double>{1.0 - 1e-7}, std::vector<double>{1.0}, unit) ==
        doctest::Approx(1e-7).epsilon(1e-3));
  const double hand = -(0.8 * std::log(0.6) + 0.2 * std::log(0.4));
  CHECK(cross_entropy_loss(std::vector<double>{0.6}, std::vector<double>{0.8}, unit) ==
        doctest::Approx(hand).epsilon(1e-12));
  CHECK(hand == doctest::Approx(0.5920).epsilon(1e-4));
  // Scale invariance through the label range.
  CHECK(cross_entropy_loss(std::vector<double>{9.6}, std::vector<double>{12.8}, {0, 16}) ==
        doctest::Approx(hand).epsilon(1e-12));
  CHECK(std::isfinite(cross_entropy_loss(std::vector<double>{0.0}, std::vector<double>{1.0}, unit)));
}

TEST_CASE("metric spot values") {
  const auto perfect = evaluate(records({1, 2, 3, 4}, {1, 2, 3, 4}));
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.src == doctest::Approx(1.0));
  CHECK(evaluate(records({4, 3, 2, 1}, {1, 2, 3, 4})).src == doctest::Approx(-1.0));
  CHECK(evaluate(records({1, 2, 3}, {3, 5, 4})).src == doctest::Approx(0.5));
  CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
  CHECK(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}) == 0.0);
  CHECK_THROWS(spearman(std::vector<double>{1}, std::vector<double>{1}));
  CHECK_THROWS(evaluate(records({1}, {1})));
}

TEST_CASE("metrics agree with the counting oracle") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> small(0, 6);
  std::uniform_real_distribution<double> real(0, 16);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 30;
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = trial % 2 ? small(rng) : real(rng);  // odd trials are tie-heavy
      y[i] = real(rng);
    }
    const auto r = evaluate(records(p, y));
    CHECK(std::fabs(r.mae - oracle::mae(p, y)) <= 1e-9);
    CHECK(std::fabs(r.mse - oracle::mse(p, y)) <= 1e-9);
    CHECK(std::fabs(r.src - oracle::spearman(p, y)) <= 1e-9);
    CHECK(average_ranks(p) == oracle::ranks(p));
  }
}
