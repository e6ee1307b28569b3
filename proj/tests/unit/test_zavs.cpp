#include <deque>

#include <gtest/gtest.h>

#include "fuess/random.hpp"
#include "fuess/synthetic.hpp"
#include "fuess/zavs.hpp"
#include "golden_fixture.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fuess;

namespace {

// Replays canned responses in order; an empty string throws a transport error.
class ScriptedBackend final : public LlmBackend {
 public:
  explicit ScriptedBackend(std::deque<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const ChatPrompt& prompt, const GenerationParams&) override {
    prompts.push_back(prompt.full_text());
    auto r = replies_.front();
    replies_.pop_front();
    if (r.empty()) throw Error(Errc::Transport, "scripted failure");
    return r;
  }
  std::string name() const override { return "scripted"; }
  std::vector<std::string> prompts;

 private:
  std::deque<std::string> replies_;
};

std::string global_reply(const std::string& ranking, const std::string& why = "why") {
  return serialize_answer(StructuredAnswer{ResponseKind::ZavsGlobal, ZavsGlobalAnswer{ranking, why}, {}, {}, {}});
}

TEST(SelectionSize, RoundHalfUp) {
  EXPECT_EQ(selection_size(0.5, 22), 11u);
  EXPECT_EQ(selection_size(0.5, 7), 4u);
  EXPECT_EQ(selection_size(0.5, 8), 4u);
  EXPECT_EQ(selection_size(0.25, 10), 3u);
  EXPECT_EQ(selection_size(1.0, 5), 5u);
  EXPECT_ERRC(selection_size(0.0, 5), InvalidArgument);
  EXPECT_ERRC(selection_size(1.5, 5), InvalidArgument);
}

TEST(Ascs, HandCases) {
  EXPECT_DOUBLE_EQ(ascs({{"a", "b"}, {"b", "c"}}, 2), 0.5);
  EXPECT_DOUBLE_EQ(ascs({{"a", "b"}, {"b", "a"}, {"a", "b"}}, 2), 1.0);
  EXPECT_DOUBLE_EQ(ascs({{"a"}, {"b"}, {"c"}}, 1), 0.0);
  EXPECT_DOUBLE_EQ(ascs_from_overlap_sum(82.5, 5, 11), 0.75);
  EXPECT_ERRC(ascs({{"a"}}, 1), TooFewSelections);
  EXPECT_ERRC(ascs({{"a", "b"}, {"a"}}, 2), SizeMismatch);
  EXPECT_ERRC(ascs({{"a", "a"}, {"a", "b"}}, 2), SizeMismatch);
}

std::vector<std::vector<std::string>> random_selections(Rng& rng, std::size_t n, std::size_t m, std::size_t pool) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < pool; ++i) names.push_back("v" + std::to_string(i));
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = names;
    rng.shuffle(p);
    p.resize(m);
    out.push_back(p);
  }
  return out;
}

TEST(Ascs, MatchesOracleAndIsBounded) {
  Rng rng(9);
  for (int t = 0; t < 500; ++t) {
    const std::size_t pool = 2 + rng.below(20);
    const std::size_t m = 1 + rng.below(pool);
    const std::size_t n = 2 + rng.below(8);
    const auto sets = random_selections(rng, n, m, pool);
    const double a = ascs(sets, m);
    EXPECT_NEAR(a, oracle::ascs(sets, m), 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    // Order of runs and of names inside a run does not matter.
    auto shuffled = sets;
    rng.shuffle(shuffled);
    for (auto& s : shuffled) rng.shuffle(s);
    EXPECT_NEAR(ascs(shuffled, m), a, 1e-12);
  }
}

TEST(Ascs, IdenticalRunsScoreOne) {
  Rng rng(1);
  const auto one = random_selections(rng, 1, 5, 12)[0];
  EXPECT_DOUBLE_EQ(ascs({one, one, one, one, one}, 5), 1.0);
}

const std::vector<std::string> kNames{"Alpha", "Beta", "Gamma", "Delta"};

TEST(ParseScoreRanking, FormatsAndNormalisation) {
  const auto s = parse_score_ranking("1. Beta: 0.9\n2) gamma = 0.5\n- Alpha (score 0.25)\nnoise line\n", kNames);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (ScoredVariable{"Beta", 0.9}));
  EXPECT_EQ(s[1], (ScoredVariable{"Gamma", 0.5}));
  EXPECT_EQ(s[2], (ScoredVariable{"Alpha", 0.25}));
  const auto big = parse_score_ranking("Alpha: 10\nBeta: 5\nGamma: -3", kNames);
  EXPECT_EQ(big[0].score, 1.0);
  EXPECT_EQ(big[1].score, 0.5);
  EXPECT_EQ(big[2].score, 0.0);
  EXPECT_EQ(parse_score_ranking("Beta: 0.2\nBeta: 0.9", kNames).size(), 1u);
  EXPECT_ERRC(parse_score_ranking("nothing useful", kNames), SchemaViolation);
}

TEST(ParseScoreRanking, LongestContainedNameWins) {
  const std::vector<std::string> names{"Hydrogen", "Hydrogen Flow"};
  const auto s = parse_score_ranking("3. The Hydrogen Flow variable: 0.7", names);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].name, "Hydrogen Flow");
}

TEST(ParseScoreRanking, ScaleInvariantRanking) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    std::string a, b;
    const double scale = 1.0 + rng.uniform() * 100;
    for (const auto& n : kNames) {
      const double v = rng.uniform();
      a += n + ": " + format_number(v) + "\n";
      b += n + ": " + format_number(v * scale) + "\n";
    }
    const auto ra = aggregate_runs(kNames, {parse_score_ranking(a, kNames)}, {}, 0.5);
    const auto rb = aggregate_runs(kNames, {parse_score_ranking(b, kNames)}, {}, 0.5);
    EXPECT_EQ(ra.ranking, rb.ranking) << a << "\n" << b;
  }
}

TEST(AggregateRuns, MeanScoresAndAlphabeticalTies) {
  const auto r = aggregate_runs(kNames,
                                {{{"Alpha", 1.0}, {"Beta", 0.5}}, {{"Alpha", 0.0}, {"Beta", 0.5}, {"Gamma", 0.5}}},
                                {"first", "last"}, 0.5);
  EXPECT_EQ(r.score_of("Alpha"), 0.5);
  EXPECT_EQ(r.score_of("Beta"), 0.5);
  EXPECT_EQ(r.score_of("Gamma"), 0.25);
  EXPECT_EQ(r.score_of("Delta"), 0.0);
  EXPECT_EQ(r.ranking, (std::vector<std::string>{"Alpha", "Beta", "Gamma", "Delta"}));
  EXPECT_EQ(r.selected, (std::vector<std::string>{"Alpha", "Beta"}));
  EXPECT_EQ(r.global_explanation, "last");
  ASSERT_EQ(r.run_selections.size(), 2u);
  EXPECT_EQ(r.run_selections[0], (std::vector<std::string>{"Alpha", "Beta"}));
  EXPECT_EQ(r.run_selections[1], (std::vector<std::string>{"Beta", "Gamma"}));
  EXPECT_EQ(r.runs, 2u);
  EXPECT_ERRC(aggregate_runs(kNames, {}, {}, 0.5), AllRunsFailed);
}

TEST(AggregateRuns, SelectionIsPrefixOfRankingForEveryFraction) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::vector<ScoredVariable>> runs(1 + rng.below(5));
    for (auto& run : runs)
      for (const auto& n : kNames) run.push_back({n, std::round(rng.uniform() * 4) / 4});
    std::vector<std::string> prev;
    for (double f : {0.25, 0.5, 0.75, 1.0}) {
      const auto r = aggregate_runs(kNames, runs, {}, f);
      EXPECT_TRUE(std::equal(r.selected.begin(), r.selected.end(), r.ranking.begin()));
      EXPECT_TRUE(std::equal(prev.begin(), prev.end(), r.selected.begin()));
      for (std::size_t i = 1; i < r.ranking.size(); ++i)
        EXPECT_GE(r.score_of(r.ranking[i - 1]), r.score_of(r.ranking[i]));
      prev = r.selected;
    }
  }
}

TEST(AggregateRuns, PermutationInvariantInCatalogOrder) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    std::vector<ScoredVariable> run;
    for (const auto& n : kNames) run.push_back({n, std::round(rng.uniform() * 3) / 3});
    auto catalog = kNames;
    rng.shuffle(catalog);
    EXPECT_EQ(aggregate_runs(kNames, {run}, {}, 0.5).ranking, aggregate_runs(catalog, {run}, {}, 0.5).ranking);
  }
}

TEST(SelectionJson, RoundTripAndValidation) {
  const auto r = golden::selection();
  EXPECT_EQ(selection_from_json(to_json(r)), r);
  auto j = to_json(r);
  j["selected"] = {"Reactor Pressure"};
  EXPECT_ERRC(selection_from_json(j), SchemaViolation);
  EXPECT_ERRC(selection_from_json(nlohmann::json::object()), SchemaViolation);
}

struct Fixture {
  Dataset data = generate(preset("poly-like", 300, 3));
  LocalHashEmbedder embedder{64};
  VectorStore ikvs = build_ikvs(chunk_documents(std::vector<Document>{{"k.md", "hydrogen ratio controls melt flow rate"}}, 1000, 200), embedder);
};

TEST(SelectVariables, StubWithDataPicksTopCorrelated) {
  Fixture f;
  StubConfig sc;
  sc.data_sidecar = f.data;
  StubBackend stub(sc);
  ZavsConfig cfg;
  cfg.n_runs = 3;
  const auto r = select_variables(f.data.task, f.data.catalog, f.ikvs, f.embedder, stub, cfg);
  EXPECT_EQ(stub.calls(), 3u);
  EXPECT_EQ(r.selected.size(), selection_size(0.5, f.data.catalog.size()));
  EXPECT_EQ(r.selected.front(), "Hydrogen Ratio");
  EXPECT_DOUBLE_EQ(ascs(r.run_selections, r.selected.size()), 1.0);
}

TEST(SelectVariables, FailedRunsSkippedUntilAllFail) {
  Fixture f;
  const auto names = f.data.variable_names();
  ScriptedBackend partial({"", global_reply("Hydrogen Flow: 1", "only"), "garbage"});
  ZavsConfig cfg;
  cfg.n_runs = 3;
  const auto r = select_variables(f.data.task, f.data.catalog, f.ikvs, f.embedder, partial, cfg);
  EXPECT_EQ(r.runs, 1u);
  EXPECT_EQ(r.selected.front(), "Hydrogen Flow");
  EXPECT_EQ(r.global_explanation, "only");
  EXPECT_EQ(partial.prompts.size(), 3u);
  EXPECT_EQ(partial.prompts[0], partial.prompts[2]);
  EXPECT_NE(partial.prompts[0].find("hydrogen ratio controls"), std::string::npos);

  ScriptedBackend none({"", "", ""});
  try {
    select_variables(f.data.task, f.data.catalog, f.ikvs, f.embedder, none, cfg);
    ADD_FAILURE() << "no exception";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllRunsFailed);
    try {
      std::rethrow_if_nested(e);
      ADD_FAILURE() << "cause not nested";
    } catch (const Error& cause) {
      EXPECT_EQ(cause.code(), Errc::Transport);
    }
  }
}

TEST(SelectVariables, ArgumentChecks) {
  Fixture f;
  StubBackend stub;
  ZavsConfig cfg;
  cfg.n_runs = 0;
  EXPECT_ERRC(select_variables(f.data.task, f.data.catalog, f.ikvs, f.embedder, stub, cfg), InvalidArgument);
  cfg.n_runs = 1;
  EXPECT_ERRC(select_variables(f.data.task, {}, f.ikvs, f.embedder, stub, cfg), InvalidArgument);
  const auto ipdvs = build_ipdvs(f.data.samples, f.data.variable_names());
  EXPECT_ERRC(select_variables(f.data.task, f.data.catalog, ipdvs, f.embedder, stub, cfg), InvalidArgument);
  EXPECT_EQ(stub.calls(), 0u);
}

TEST(SelectVariables, EmptyKnowledgeStoreStillWorks) {
  Fixture f;
  const VectorStore empty(StoreKind::Ikvs, 64);
  StubBackend stub;
  const auto r = select_variables(f.data.task, f.data.catalog, empty, f.embedder, stub, ZavsConfig{1});
  EXPECT_EQ(r.ranking.size(), f.data.catalog.size());
}

TEST(ExplainVariable, LocalQuery) {
  Fixture f;
  StubConfig sc;
  sc.data_sidecar = f.data;
  StubBackend stub(sc);
  const auto e = explain_variable(f.data.task, f.data.catalog, "Reactor Pressure", f.ikvs, f.embedder, stub);
  EXPECT_EQ(e.variable, "Reactor Pressure");
  EXPECT_NE(e.reasoning.find("Pearson"), std::string::npos);
  EXPECT_ERRC(explain_variable(f.data.task, f.data.catalog, "Nope", f.ikvs, f.embedder, stub), UnknownVariable);
}

}  // namespace
