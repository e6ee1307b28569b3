#include <gtest/gtest.h>

#include "fuess/experiment.hpp"
#include "fuess/synthetic.hpp"
#include "fuess/zavs.hpp"
#include "test_util.hpp"

using namespace fuess;

namespace {

nlohmann::json small_spec() {
  return {{"dataset", {{"preset", "poly-like"}, {"n_samples", 400}, {"seed", 3}}},
          {"methods", {"llm", "lr", "knn"}},
          {"shots", {5, 10}},
          {"missing_ratios", {0.0, 0.25}},
          {"trials", 2},
          {"seeds", {0, 1}},
          {"max_tests", 12}};
}

TEST(ExperimentSpec, JsonRoundTripAndDefaults) {
  const auto s = experiment_spec_from_json(small_spec());
  EXPECT_EQ(s.dataset.preset, "poly-like");
  EXPECT_EQ(s.methods.size(), 3u);
  EXPECT_EQ(s.mode, PredictionMode::Fsc);
  EXPECT_EQ(s.trials, 2u);
  EXPECT_EQ(s.split.pool_size, SplitParams{}.pool_size);
  const auto back = experiment_spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
}

TEST(ExperimentSpec, InvalidFieldsAreNamed) {
  const auto expect_field = [](nlohmann::json j, const std::string& field) {
    try {
      experiment_spec_from_json(j);
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidSpec) << e.what();
      EXPECT_NE(e.detail().find(field), std::string::npos) << e.what();
    }
  };
  auto j = small_spec();
  j["methods"] = {"llm", "svm"};
  expect_field(j, "methods");
  j = small_spec();
  j["shots"] = {0};
  expect_field(j, "shots");
  j = small_spec();
  j["shots"] = {50};
  expect_field(j, "shots");
  j = small_spec();
  j["missing_ratios"] = {1.5};
  expect_field(j, "missing_ratios");
  j = small_spec();
  j["seeds"] = nlohmann::json::array();
  expect_field(j, "seeds");
  j = small_spec();
  j["backend"] = "cloud";
  expect_field(j, "backend");
  j = small_spec();
  j["trials"] = "ten";
  expect_field(j, "trials");
  j = small_spec();
  j.erase("dataset");
  expect_field(j, "dataset");
  j = small_spec();
  j["dataset"] = {{"csv", "x.csv"}};
  expect_field(j, "dataset.primary");
  j = small_spec();
  j["mode"] = "zero";
  expect_field(j, "zero");
  EXPECT_ERRC(experiment_spec_from_json(nlohmann::json::array()), InvalidSpec);
}

TEST(ExperimentSpec, LoadFromFile) {
  testutil::TempDir dir;
  dir.write("s.json", small_spec().dump());
  EXPECT_EQ(to_json(load_experiment_spec(dir / "s.json")), to_json(experiment_spec_from_json(small_spec())));
  dir.write("bad.json", "{");
  EXPECT_ERRC(load_experiment_spec(dir / "bad.json"), InvalidSpec);
  EXPECT_ERRC(load_experiment_spec(dir / "none.json"), FileNotFound);
}

TEST(RunExperiment, EmptyMethodsIsEmptyReport) {
  auto j = small_spec();
  j["methods"] = nlohmann::json::array();
  const auto r = run_experiment(experiment_spec_from_json(j));
  EXPECT_TRUE(r.outcomes.empty());
  EXPECT_TRUE(r.cells.empty());
}

TEST(RunExperiment, GridShapeAndDeterminism) {
  const auto spec = experiment_spec_from_json(small_spec());
  const auto a = run_experiment(spec);
  // methods × shots × ratios × seeds × tests
  EXPECT_EQ(a.outcomes.size(), 3u * 2 * 2 * 2 * 12);
  EXPECT_EQ(a.cells.size(), 3u * 2 * 2);
  for (const auto& c : a.cells) {
    EXPECT_EQ(c.status, "ok") << c.cell.method;
    EXPECT_EQ(c.n, 24u);
    ASSERT_TRUE(c.metrics);
    EXPECT_EQ(c.mean_confidence.has_value(), c.cell.method == "llm");
  }
  const auto b = run_experiment(spec);
  ASSERT_EQ(a.outcomes.size(), b.outcomes.size());
  for (std::size_t i = 0; i < a.outcomes.size(); ++i) EXPECT_EQ(a.outcomes[i].y_pred, b.outcomes[i].y_pred);
  // Noiseless linear data: LR is exact once it has enough shots and no masking.
  for (const auto& c : a.cells) {
    if (c.cell.method == "lr" && c.cell.shots == 10 && c.cell.missing_ratio == 0.0) EXPECT_LT(c.metrics->mae, 1e-6);
  }
}

TEST(RunExperiment, RacSelectionAndReport) {
  auto j = small_spec();
  j["mode"] = "rac";
  j["methods"] = {"llm", "knn"};
  j["shots"] = {3};
  j["missing_ratios"] = {0.0};
  j["seeds"] = {4};
  j["selection"] = {{"runs", 3}, {"fraction", 0.5}};
  const auto r = run_experiment(experiment_spec_from_json(j));
  ASSERT_TRUE(r.selection);
  EXPECT_EQ(r.selection->selected.size(), 4u);
  ASSERT_TRUE(r.ascs);
  EXPECT_DOUBLE_EQ(*r.ascs, 1.0);
  for (const auto& o : r.outcomes) {
    if (o.record) EXPECT_EQ(o.record->test_sample.names(), r.selection->selected);
  }

  testutil::TempDir dir;
  write_report(r, dir.path());
  for (const char* f : {"metrics.csv", "nshot_curve.csv", "missing_ratio.csv", "confidence_error.csv", "ascs.csv",
                        "records.jsonl", "spec.json", "selection.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto metrics = testutil::slurp(dir / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "method,mode,shots,missing_ratio,n,mae,rmse,r2,smape,mape,status");
  EXPECT_NE(metrics.find("llm,rac,3,0,12,"), std::string::npos);
  EXPECT_EQ(testutil::slurp(dir / "ascs.csv"), "runs,m,ascs\n3,4,1\n");
  const auto records = testutil::slurp(dir / "records.jsonl");
  EXPECT_EQ(std::count(records.begin(), records.end(), '\n'), static_cast<long>(r.outcomes.size()));
}

TEST(RunExperiment, SelectionFromFile) {
  const auto sel = aggregate_runs({"Hydrogen Ratio", "Reactor Pressure"}, {{{"Reactor Pressure", 1.0}}}, {"x"}, 0.5);
  testutil::TempDir dir;
  dir.write("sel.json", to_json(sel).dump());
  auto j = small_spec();
  j["methods"] = {"lr"};
  j["selection"] = {{"file", (dir / "sel.json").string()}};
  const auto r = run_experiment(experiment_spec_from_json(j));
  ASSERT_TRUE(r.selection);
  EXPECT_EQ(r.selection->selected, (std::vector<std::string>{"Reactor Pressure"}));
  EXPECT_FALSE(r.ascs);
  j["selection"] = {{"file", (dir / "none.json").string()}};
  EXPECT_ERRC(run_experiment(experiment_spec_from_json(j)), FileNotFound);
}

// Fails every call.
class DeadBackend final : public LlmBackend {
 public:
  std::string complete(const ChatPrompt&, const GenerationParams&) override { throw Error(Errc::Transport, "down"); }
  std::string name() const override { return "dead"; }
};

TEST(RunExperiment, FailedCellsAreReportedNotThrown) {
  auto j = small_spec();
  j["methods"] = {"llm", "lr"};
  j["shots"] = {10};
  j["missing_ratios"] = {0.0};
  j["seeds"] = {0};
  DeadBackend dead;
  const auto r = run_experiment(experiment_spec_from_json(j), &dead);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.cells[0].status, "failed");
  EXPECT_EQ(r.cells[0].failures, 12u);
  EXPECT_FALSE(r.cells[0].metrics);
  EXPECT_EQ(r.cells[1].status, "ok");
  EXPECT_EQ(r.warnings.size(), 12u);
}

TEST(Summarize, StatusesAndMetrics) {
  const CellKey a{"llm", PredictionMode::Fsc, 1, 0.0}, b{"lr", PredictionMode::Fsc, 1, 0.0};
  std::vector<SampleOutcome> o;
  o.push_back({a, 0, 0, 0, 1.0, 1.5, 0.5, std::nullopt, ""});
  o.push_back({a, 0, 0, 1, 2.0, std::nullopt, std::nullopt, std::nullopt, "boom"});
  o.push_back({a, 0, 0, 2, 3.0, 2.5, 0.7, std::nullopt, ""});
  o.push_back({b, 0, 0, 0, 4.0, 1.0, std::nullopt, std::nullopt, ""});
  o.push_back({b, 0, 0, 1, 4.0, 2.0, std::nullopt, std::nullopt, ""});
  const auto cells = summarize(o);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].status, "partial");
  EXPECT_EQ(cells[0].n, 2u);
  EXPECT_EQ(cells[0].failures, 1u);
  EXPECT_DOUBLE_EQ(cells[0].metrics->mae, 0.5);
  EXPECT_DOUBLE_EQ(*cells[0].mean_confidence, 0.6);
  EXPECT_EQ(cells[1].status, "degenerate-r2");
  EXPECT_DOUBLE_EQ(cells[1].metrics->mae, 2.5);
}

}  // namespace
