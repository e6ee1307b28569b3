#include <cmath>
#include <deque>

#include <gtest/gtest.h>

#include "fuess/random.hpp"
#include "fuess/synthetic.hpp"
#include "fuess/ufss.hpp"
#include "fuess/zavs.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fuess;

namespace {

// Student t 0.975 quantiles from printed tables.
constexpr double kT975_1 = 12.706204736;
constexpr double kT975_9 = 2.262157163;

TEST(ConfidenceInterval, TSpreadHandComputed) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto ci = confidence_interval(x);
  const double s = std::sqrt(110.0 / 12.0);  // sample sd of 1..10
  EXPECT_NEAR(ci.lo, 5.5 - kT975_9 * s / std::sqrt(10.0), 1e-8);
  EXPECT_NEAR(ci.hi, 5.5 + kT975_9 * s / std::sqrt(10.0), 1e-8);
  EXPECT_EQ(ci.method, CiMethod::TSpread);
  EXPECT_EQ(ci.level, 0.95);
}

TEST(ConfidenceInterval, TwoTrials) {
  const std::vector<double> x{0.0, 2.0};
  const auto ci = confidence_interval(x);
  EXPECT_NEAR(ci.hi - 1.0, kT975_1 * std::sqrt(2.0) / std::sqrt(2.0), 1e-7);
  const auto pi = confidence_interval(x, 0.95, CiMethod::TPrediction);
  EXPECT_NEAR(pi.hi - 1.0, kT975_1 * std::sqrt(2.0) * std::sqrt(1.5), 1e-7);
}

TEST(ConfidenceInterval, ConstantTrialsGiveZeroWidth) {
  const std::vector<double> c{3.25, 3.25, 3.25};
  const auto ci = confidence_interval(c);
  EXPECT_EQ(ci.lo, 3.25);
  EXPECT_EQ(ci.hi, 3.25);
}

TEST(ConfidenceInterval, OrderInvariant) {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(2 + rng.below(30));
    for (auto& v : x) v = rng.normal() * 1e3;
    const auto a = confidence_interval(x);
    std::reverse(x.begin(), x.end());
    EXPECT_EQ(confidence_interval(x), a);
    rng.shuffle(x);
    EXPECT_EQ(confidence_interval(x), a);
  }
}

TEST(ConfidenceInterval, WidthMonotoneInLevel) {
  Rng rng(7);
  std::vector<double> x(25);
  for (auto& v : x) v = rng.normal();
  for (auto method : {CiMethod::TSpread, CiMethod::TPrediction, CiMethod::Percentile}) {
    double prev = 0;
    for (double level : {0.5, 0.8, 0.9, 0.95, 0.99}) {
      const auto ci = confidence_interval(x, level, method);
      EXPECT_GE(ci.hi - ci.lo, prev) << to_string(method) << " " << level;
      prev = ci.hi - ci.lo;
    }
  }
}

TEST(ConfidenceInterval, PredictionIntervalContainsMeanInterval) {
  const std::vector<double> x{1.0, 1.5, 0.7, 2.2};
  const auto ci = confidence_interval(x, 0.9, CiMethod::TSpread);
  const auto pi = confidence_interval(x, 0.9, CiMethod::TPrediction);
  EXPECT_LT(pi.lo, ci.lo);
  EXPECT_GT(pi.hi, ci.hi);
}

TEST(ConfidenceInterval, PercentileQuantiles) {
  std::vector<double> x;
  for (int i = 0; i <= 20; ++i) x.push_back(i);
  const auto ci = confidence_interval(x, 0.9, CiMethod::Percentile);
  EXPECT_NEAR(ci.lo, 1.0, 1e-12);
  EXPECT_NEAR(ci.hi, 19.0, 1e-12);
}

TEST(ConfidenceInterval, MonteCarloCoverageOfTheMean) {
  Rng rng(99);
  int covered = 0;
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> x(10);
    for (auto& v : x) v = 5.0 + 2.0 * rng.normal();
    const auto ci = confidence_interval(x);
    if (ci.lo <= 5.0 && 5.0 <= ci.hi) ++covered;
  }
  EXPECT_NEAR(double(covered) / reps, 0.95, 0.015);
}

TEST(ConfidenceInterval, Errors) {
  const std::vector<double> one{1.0}, ten(10, 1.0);
  EXPECT_ERRC(confidence_interval(one), TooFewTrials);
  EXPECT_ERRC(confidence_interval(ten, 0.95, CiMethod::Percentile), TooFewTrials);
  EXPECT_ERRC(confidence_interval(ten, 1.0), InvalidArgument);
  EXPECT_ERRC(confidence_interval(ten, 0.0), InvalidArgument);
}

TEST(ModesAndMethods, ParseAndPrint) {
  for (auto m : {PredictionMode::Fsc, PredictionMode::Rac}) EXPECT_EQ(parse_prediction_mode(to_string(m)), m);
  for (auto m : {CiMethod::TSpread, CiMethod::TPrediction, CiMethod::Percentile})
    EXPECT_EQ(parse_ci_method(to_string(m)), m);
  EXPECT_ERRC(parse_prediction_mode("zero-shot"), InvalidArgument);
  EXPECT_ERRC(parse_ci_method("bootstrap"), InvalidArgument);
  UfssConfig c;
  EXPECT_EQ(c.effective_trials(), 10u);
  c.mode = PredictionMode::Rac;
  EXPECT_EQ(c.effective_trials(), 1u);
  c.trials = 4;
  EXPECT_EQ(c.effective_trials(), 4u);
}

struct World {
  Dataset data = generate(preset("poly-like", 240, 6));
  SelectionResult selection;
  std::vector<Sample> pool;
  World() {
    std::vector<ScoredVariable> s;
    for (const auto& n : data.variable_names()) s.push_back({n, 1.0});
    selection = aggregate_runs(data.variable_names(), {s}, {"all matter"}, 1.0);
    pool.assign(data.samples.begin(), data.samples.begin() + 200);
  }
  Sample test(std::size_t i) const { return data.samples.at(200 + i); }
};

TEST(PredictFsc, TemperatureZeroTrialsAgree) {
  World w;
  StubBackend stub;
  UfssConfig cfg;
  const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 20}};
  const auto rec = predict_fsc(w.data.task, w.data.catalog, ctx, w.test(0), w.selection, stub, cfg);
  ASSERT_EQ(rec.trials.size(), 10u);
  for (double t : rec.trials) EXPECT_EQ(t, rec.trials[0]);
  ASSERT_TRUE(rec.confidence_interval);
  EXPECT_EQ(rec.confidence_interval->lo, rec.point_estimate);
  EXPECT_EQ(rec.confidence_interval->hi, rec.point_estimate);
  EXPECT_EQ(rec.k_shots, 20u);
  EXPECT_EQ(rec.mode, PredictionMode::Fsc);
  EXPECT_TRUE(rec.confidence_score);
  EXPECT_FALSE(rec.explanation.empty());
  EXPECT_EQ(stub.calls(), 10u);
}

TEST(PredictFsc, NoisyTrialsIntervalContainsPointEstimate) {
  World w;
  StubBackend stub;
  UfssConfig cfg;
  cfg.generation.temperature = 0.3;
  cfg.generation.seed = 5;
  const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 20}};
  const auto a = predict_fsc(w.data.task, w.data.catalog, ctx, w.test(1), w.selection, stub, cfg);
  const auto b = predict_fsc(w.data.task, w.data.catalog, ctx, w.test(1), w.selection, stub, cfg);
  EXPECT_EQ(a, b);
  EXPECT_LT(a.confidence_interval->lo, a.point_estimate);
  EXPECT_GT(a.confidence_interval->hi, a.point_estimate);
  double mean = 0;
  for (double t : a.trials) mean += t / double(a.trials.size());
  EXPECT_NEAR(a.point_estimate, mean, 1e-12);
}

TEST(PredictFsc, RestrictsToSelectedVariables) {
  World w;
  const auto names = w.data.variable_names();
  std::vector<ScoredVariable> s;
  for (std::size_t i = 0; i < names.size(); ++i) s.push_back({names[i], i == 2 ? 1.0 : 0.1});
  const auto sel = aggregate_runs(names, {s}, {}, 0.25);
  StubBackend stub;
  UfssConfig cfg;
  cfg.trials = 1;
  const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 5}};
  const auto rec = predict_fsc(w.data.task, w.data.catalog, ctx, w.test(0), sel, stub, cfg);
  EXPECT_EQ(rec.test_sample.names(), sel.selected);
  EXPECT_FALSE(rec.confidence_interval);
}

TEST(PredictRac, OneShotIdentityReturnsStoredLabel) {
  World w;
  const auto ipdvs = build_ipdvs(w.pool, w.data.variable_names());
  StubBackend stub;
  UfssConfig cfg;
  cfg.mode = PredictionMode::Rac;
  cfg.k_shots = 1;
  for (std::size_t i : {0u, 57u, 199u}) {
    auto test = w.pool[i];
    const double label = *test.label;
    test.label.reset();
    const auto rec = predict_rac(w.data.task, w.data.catalog, ipdvs, test, w.selection, stub, cfg);
    EXPECT_NEAR(rec.point_estimate, label, 1e-9 * (1 + std::abs(label)));
    EXPECT_EQ(rec.trials.size(), 1u);
    EXPECT_EQ(rec.mode, PredictionMode::Rac);
  }
}

TEST(PredictRac, DemonstrationsNearestLastAndMatchOracle) {
  World w;
  const auto ipdvs = build_ipdvs(w.pool, w.data.variable_names());
  std::vector<std::vector<double>> vecs;
  for (const auto& it : ipdvs.items()) vecs.push_back(it.vector);
  const auto test = w.test(3);
  const auto ctx = retrieve_demonstrations(ipdvs, test, 10);
  const auto want = oracle::brute_force_top_k(vecs, encode_query(ipdvs, test), 10);
  ASSERT_EQ(ctx.demonstrations.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(ctx.demonstrations[9 - i], w.pool[want[i].index]);
}

TEST(PredictRac, MoreShotsChangeTheContext) {
  World w;
  const auto ipdvs = build_ipdvs(w.pool, w.data.variable_names());
  const auto k5 = retrieve_demonstrations(ipdvs, w.test(4), 5);
  const auto k10 = retrieve_demonstrations(ipdvs, w.test(4), 10);
  // The 5 nearest are the last 5 of the 10 nearest.
  EXPECT_TRUE(std::equal(k5.demonstrations.begin(), k5.demonstrations.end(), k10.demonstrations.begin() + 5));
}

TEST(PredictRac, MaskingWithTheMeanDoesNotMoveTheQuery) {
  World w;
  const auto names = w.data.variable_names();
  const auto ipdvs = build_ipdvs(w.pool, names);
  const auto& st = *ipdvs.encoder_stats();
  // A value equal to the pool mean encodes to 0, exactly like a missing value.
  Sample a = w.test(5), b = w.test(5);
  a.values[1].value = st.mean[1];
  b.values[1].value.reset();
  EXPECT_EQ(encode_query(ipdvs, a), encode_query(ipdvs, b));
  EXPECT_EQ(retrieve_demonstrations(ipdvs, a, 7).demonstrations, retrieve_demonstrations(ipdvs, b, 7).demonstrations);
}

TEST(PredictRac, Errors) {
  World w;
  StubBackend stub;
  UfssConfig cfg;
  cfg.mode = PredictionMode::Rac;
  const VectorStore ikvs(StoreKind::Ikvs, 4);
  EXPECT_ERRC(predict_rac(w.data.task, w.data.catalog, ikvs, w.test(0), w.selection, stub, cfg), InvalidArgument);
  const auto ipdvs = build_ipdvs(w.pool, w.data.variable_names());
  cfg.k_shots = 0;
  EXPECT_ERRC(predict_rac(w.data.task, w.data.catalog, ipdvs, w.test(0), w.selection, stub, cfg), InvalidArgument);
  cfg.k_shots = 3;
  cfg.trials = 0;
  EXPECT_ERRC(predict_rac(w.data.task, w.data.catalog, ipdvs, w.test(0), w.selection, stub, cfg), InvalidArgument);
  cfg.trials = 5;
  cfg.ci_method = CiMethod::Percentile;
  EXPECT_ERRC(predict_rac(w.data.task, w.data.catalog, ipdvs, w.test(0), w.selection, stub, cfg), TooFewTrials);
}

// Fails the listed call numbers (0-based) with a transport error.
class FlakyBackend final : public LlmBackend {
 public:
  FlakyBackend(std::vector<std::size_t> failing) : failing_(std::move(failing)) {}
  std::string complete(const ChatPrompt& p, const GenerationParams& params) override {
    const auto n = calls_++;
    if (std::find(failing_.begin(), failing_.end(), n) != failing_.end()) throw Error(Errc::Transport, "down");
    return stub_.complete(p, params);
  }
  std::string name() const override { return "flaky"; }

 private:
  std::vector<std::size_t> failing_;
  std::size_t calls_ = 0;
  StubBackend stub_;
};

TEST(Trials, PartialFailuresTolerated) {
  World w;
  FlakyBackend flaky({1, 4});
  UfssConfig cfg;
  cfg.trials = 5;
  const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 10}};
  const auto rec = predict_fsc(w.data.task, w.data.catalog, ctx, w.test(0), w.selection, flaky, cfg);
  EXPECT_EQ(rec.trials.size(), 3u);
  EXPECT_TRUE(rec.confidence_interval);
  EXPECT_EQ(std::count_if(rec.warnings.begin(), rec.warnings.end(),
                          [](const std::string& s) { return s.find("failed") != std::string::npos; }),
            2);
}

TEST(Trials, SingleSurvivorHasNoInterval) {
  World w;
  FlakyBackend flaky({0, 1});
  UfssConfig cfg;
  cfg.trials = 3;
  const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 10}};
  const auto rec = predict_fsc(w.data.task, w.data.catalog, ctx, w.test(0), w.selection, flaky, cfg);
  EXPECT_EQ(rec.trials.size(), 1u);
  EXPECT_FALSE(rec.confidence_interval);
}

TEST(Trials, AllFailuresNestTheCause) {
  World w;
  FlakyBackend flaky({0, 1, 2});
  UfssConfig cfg;
  cfg.trials = 3;
  const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 10}};
  try {
    predict_fsc(w.data.task, w.data.catalog, ctx, w.test(0), w.selection, flaky, cfg);
    ADD_FAILURE() << "no exception";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllTrialsFailed);
    EXPECT_THROW(std::rethrow_if_nested(e), Error);
  }
}

TEST(Trials, NoEcRecordsHaveNoConfidence) {
  World w;
  StubBackend stub;
  UfssConfig cfg;
  cfg.trials = 2;
  cfg.ablation = parse_ablation_flags("no-ec");
  const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 10}};
  const auto rec = predict_fsc(w.data.task, w.data.catalog, ctx, w.test(0), w.selection, stub, cfg);
  EXPECT_FALSE(rec.confidence_score);
  EXPECT_TRUE(rec.explanation.empty());
  EXPECT_TRUE(rec.ablation.no_ec);
}

TEST(Records, JsonlRoundTrip) {
  World w;
  StubBackend stub;
  UfssConfig cfg;
  cfg.generation.temperature = 0.2;
  std::vector<PredictionRecord> recs;
  for (std::size_t i = 0; i < 4; ++i) {
    cfg.ablation = i == 3 ? parse_ablation_flags("no-ec,no-cot") : AblationFlags{};
    const ContextSet ctx{{w.pool.begin(), w.pool.begin() + 8}};
    auto test = apply_missing_mask(w.test(i), 0.4, i);
    auto r = predict_fsc(w.data.task, w.data.catalog, ctx, test, w.selection, stub, cfg);
    r.id = i;
    recs.push_back(r);
  }
  testutil::TempDir dir;
  write_records_jsonl(recs, dir / "r.jsonl");
  EXPECT_EQ(read_records_jsonl(dir / "r.jsonl"), recs);
  dir.write("bad.jsonl", "{\"id\": 1}\n");
  EXPECT_ERRC(read_records_jsonl(dir / "bad.jsonl"), SchemaViolation);
  dir.write("worse.jsonl", "not json\n");
  EXPECT_ERRC(read_records_jsonl(dir / "worse.jsonl"), SchemaViolation);
  EXPECT_ERRC(read_records_jsonl(dir / "none.jsonl"), FileNotFound);
}

TEST(RestrictSample, OrderAndErrors) {
  const Sample s{{{"a", 1.0}, {"b", std::nullopt}, {"c", 3.0}}, 9.0};
  const std::vector<std::string> names{"c", "b"};
  const auto r = restrict_sample(s, names);
  EXPECT_EQ(r, (Sample{{{"c", 3.0}, {"b", std::nullopt}}, 9.0}));
  const std::vector<std::string> bad{"z"};
  EXPECT_ERRC(restrict_sample(s, bad), UnknownVariable);
}

}  // namespace
