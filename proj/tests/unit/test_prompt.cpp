#include <gtest/gtest.h>

#include "fuess/prompt.hpp"
#include "fuess/random.hpp"
#include "fuess/synthetic.hpp"
#include "fuess/zavs.hpp"
#include "golden_fixture.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fuess;

namespace {

bool is_subsequence(const std::string& small, const std::string& big) {
  std::size_t j = 0;
  for (char c : big) {
    if (j < small.size() && small[j] == c) ++j;
  }
  return j == small.size();
}

TEST(SampleText, PaperStyleMissingValue) {
  const Sample s{{{"Sugar feed rate", 8.0}, {"Dissolved oxygen concentration", std::nullopt}, {"pH", 5.05}},
                 std::nullopt};
  EXPECT_EQ(format_sample_text(s, false),
            "Sugar feed rate: 8, Dissolved oxygen concentration: N/A, pH: 5.05");
  Sample l = s;
  l.label = 1.25;
  EXPECT_EQ(format_sample_text(l, true, "Penicillin concentration"),
            "Sugar feed rate: 8, Dissolved oxygen concentration: N/A, pH: 5.05 -> Penicillin concentration: 1.25");
}

TEST(SampleText, EmptySample) {
  EXPECT_EQ(format_sample_text(Sample{}, false), "");
  EXPECT_TRUE(parse_sample_text("").values.empty());
}

TEST(SampleText, RoundTripProperty) {
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    Sample s;
    const auto n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<double> v;
      if (rng.below(4)) v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(12)) - 6);
      s.values.push_back({"Var " + std::to_string(i) + (i % 3 ? " (x)" : ""), v});
    }
    if (rng.below(2)) s.label = rng.normal() * 1e3;
    const auto text = format_sample_text(s, s.label.has_value(), "Target Y");
    EXPECT_EQ(parse_sample_text(text), s) << text;
  }
}

TEST(SampleText, Malformed) {
  EXPECT_ERRC(parse_sample_text("a: 1, b"), InvalidArgument);
  EXPECT_ERRC(parse_sample_text("a: one"), InvalidArgument);
  EXPECT_ERRC(parse_sample_text(": 1"), InvalidArgument);
}

TEST(Templates, AllNamedTemplatesAvailable) {
  const auto names = template_names();
  for (const char* n : {"role", "avs_data", "avs_context", "avs_context_empty", "avs_instruction_global",
                        "avs_instruction_local", "avs_main_global", "avs_main_local", "ss_data",
                        "ss_importance", "ss_explanation", "ss_instruction", "ss_context", "ss_main"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
    EXPECT_FALSE(template_text(n).empty()) << n;
  }
  EXPECT_ERRC(template_text("nope"), InvalidArgument);
}

TEST(Templates, RenderPlaceholdersAndSections) {
  const std::vector<std::pair<std::string, std::string>> v{{"Name", "X"}};
  EXPECT_EQ(render_template("a {Name} {Other} {\"json\": 1}", v), "a X {Other} {\"json\": 1}");
  EXPECT_EQ(render_template("a{#cot} b{/cot} c", v), "a b c");
  EXPECT_EQ(render_template("a{#cot} b{/cot} c", v, {"cot"}), "a c");
  EXPECT_ERRC(render_template("{#a}x", v), InvalidArgument);
  EXPECT_ERRC(render_template("{#a}{#b}{/b}{/a}", v), InvalidArgument);
  EXPECT_ERRC(render_template("{#a}x{/b}", v), InvalidArgument);
}

TEST(AblationFlags, Parse) {
  EXPECT_FALSE(parse_ablation_flags("").any());
  EXPECT_FALSE(parse_ablation_flags("full").any());
  EXPECT_EQ(to_string(AblationFlags{}), "full");
  const auto f = parse_ablation_flags("no-ec,no-role");
  EXPECT_TRUE(f.no_role);
  EXPECT_FALSE(f.no_cot);
  EXPECT_TRUE(f.no_ec);
  EXPECT_EQ(parse_ablation_flags(to_string(f)), f);
  EXPECT_ERRC(parse_ablation_flags("no-foo"), InvalidArgument);
}

std::vector<VariableSpec> catalog_of(std::size_t n) {
  std::vector<VariableSpec> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({"Variable " + std::to_string(i + 1), "desc " + std::to_string(i), "u"});
  return c;
}

TEST(AvsPrompt, GlobalListsEveryCandidateAndSchemaKey) {
  const auto catalog = catalog_of(22);
  const auto p = render_avs_pt(golden::task(), catalog, golden::knowledge(), QueryKind::Global);
  const auto text = p.chat().full_text();
  const auto listed = p.main_user_block + "\n";
  for (const auto& v : catalog) {
    EXPECT_EQ(oracle::count_substr(listed, "- " + v.name + "\n"), 1u) << v.name;
    EXPECT_EQ(oracle::count_substr(p.data_block, "- " + v.name + " ("), 1u) << v.name;
  }
  EXPECT_NE(text.find("\"score and ranking\""), std::string::npos);
  EXPECT_NE(text.find("22"), std::string::npos);
  EXPECT_EQ(p.query_kind, QueryKind::Global);
  EXPECT_FALSE(p.target_variable);
  EXPECT_FALSE(p.chat().system.empty());
}

TEST(AvsPrompt, LocalNamesTheTarget) {
  const auto p = render_avs_pt(golden::task(), golden::catalog(), golden::knowledge(), QueryKind::Local,
                               std::string("Reactor Pressure"));
  EXPECT_EQ(p.target_variable, "Reactor Pressure");
  EXPECT_NE(p.main_user_block.find("Reactor Pressure"), std::string::npos);
  EXPECT_EQ(p.chat().full_text().find("\"score and ranking\""), std::string::npos);
  EXPECT_ERRC(render_avs_pt(golden::task(), golden::catalog(), golden::knowledge(), QueryKind::Local),
              MissingTargetVariable);
  EXPECT_ERRC(render_avs_pt(golden::task(), golden::catalog(), golden::knowledge(), QueryKind::Local,
                            std::string()),
              MissingTargetVariable);
}

TEST(AvsPrompt, EmptyContextUsesFallbackText) {
  const auto p = render_avs_pt(golden::task(), golden::catalog(), RetrievedContext{}, QueryKind::Global);
  EXPECT_NE(p.context_block.find(std::string(template_text("avs_context_empty"))), std::string::npos);
}

TEST(AvsPrompt, KnowledgeChunksInRankingOrder) {
  const auto text = render_avs_pt(golden::task(), golden::catalog(), golden::knowledge(), QueryKind::Global)
                        .chat()
                        .full_text();
  const auto a = text.find("mfr_notes.md"), b = text.find("reactor.txt");
  ASSERT_NE(a, std::string::npos);
  ASSERT_NE(b, std::string::npos);
  EXPECT_LT(a, b);
}

SelectionResult select_all(const std::vector<std::string>& names) {
  std::vector<ScoredVariable> s;
  for (std::size_t i = 0; i < names.size(); ++i) s.push_back({names[i], 1.0 - 0.01 * double(i)});
  return aggregate_runs(names, {s}, {"because"}, 1.0);
}

TEST(SsPrompt, TwentyDemonstrationLines) {
  const auto data = generate(preset("pensim-like", 21, 3));
  const auto names = data.variable_names();
  ContextSet ctx;
  ctx.demonstrations.assign(data.samples.begin(), data.samples.begin() + 20);
  const auto p = render_ss_pt(data.task, data.catalog, select_all(names), ctx, data.samples[20]);
  EXPECT_EQ(oracle::count_substr(p.context_samples_block, " -> "), 20u);
  for (const auto& d : ctx.demonstrations) {
    EXPECT_NE(p.context_samples_block.find(format_sample_text(d, true, data.task.primary_variable_name)),
              std::string::npos);
  }
  // The test label never leaks into the prompt.
  EXPECT_EQ(oracle::count_substr(p.main_user_block, " -> "), 0u);
}

TEST(SsPrompt, Errors) {
  const auto sel = golden::selection();
  EXPECT_ERRC(render_ss_pt(golden::task(), golden::catalog(), sel, ContextSet{}, golden::test_sample()),
              EmptyContext);
  auto ctx = golden::context();
  ctx.demonstrations[1].label.reset();
  EXPECT_ERRC(render_ss_pt(golden::task(), golden::catalog(), sel, ctx, golden::test_sample()), MissingLabel);
  Sample extra = golden::test_sample();
  extra.values.push_back({"Unselected", 1.0});
  EXPECT_ERRC(render_ss_pt(golden::task(), golden::catalog(), sel, golden::context(), extra), UnknownVariable);
}

TEST(SsPrompt, ImportanceListsOnlySelectedInRankOrder) {
  const std::vector<std::string> names{"Hydrogen Ratio", "Reactor Pressure", "Hydrogen Flow", "Reactor Temperature"};
  const auto sel = aggregate_runs(names, {{{"Hydrogen Ratio", 0.2}, {"Reactor Pressure", 0.9}, {"Hydrogen Flow", 0.1},
                                           {"Reactor Temperature", 0.5}}},
                                  {"x"}, 0.5);
  const Sample test{{{"Reactor Pressure", 3.0}, {"Reactor Temperature", 70.0}}, std::nullopt};
  const ContextSet ctx{{Sample{{{"Reactor Pressure", 3.1}, {"Reactor Temperature", 69.0}}, 1.0}}};
  const auto p = render_ss_pt(golden::task(), golden::catalog(), sel, ctx, test);
  EXPECT_EQ(p.importance_block.find("Hydrogen"), std::string::npos);
  EXPECT_LT(p.importance_block.find("1. Reactor Pressure: 0.9"), p.importance_block.find("2. Reactor Temperature: 0.5"));
}

TEST(SsPrompt, AblationsArePureDeletions) {
  const auto full = render_ss_pt(golden::task(), golden::catalog(), golden::selection(), golden::context(),
                                 golden::test_sample())
                        .chat()
                        .full_text();
  for (const char* flags : {"no-role", "no-cot", "no-ec", "no-role,no-cot", "no-cot,no-ec", "no-role,no-cot,no-ec"}) {
    const auto p = render_ss_pt(golden::task(), golden::catalog(), golden::selection(), golden::context(),
                                golden::test_sample(), parse_ablation_flags(flags));
    const auto text = p.chat().full_text();
    EXPECT_LT(text.size(), full.size()) << flags;
    EXPECT_TRUE(is_subsequence(text, full)) << flags;
  }
  const auto no_role = render_ss_pt(golden::task(), golden::catalog(), golden::selection(), golden::context(),
                                    golden::test_sample(), parse_ablation_flags("no-role"));
  EXPECT_TRUE(no_role.role_block.empty());
  EXPECT_TRUE(no_role.chat().system.empty());
  const auto no_ec = render_ss_pt(golden::task(), golden::catalog(), golden::selection(), golden::context(),
                                  golden::test_sample(), parse_ablation_flags("no-ec"))
                         .chat()
                         .full_text();
  EXPECT_EQ(no_ec.find("Confidence Score"), std::string::npos);
  EXPECT_EQ(no_ec.find("Reasoning"), std::string::npos);
  EXPECT_NE(no_ec.find("Prediction Result"), std::string::npos);
  const auto no_cot = render_ss_pt(golden::task(), golden::catalog(), golden::selection(), golden::context(),
                                   golden::test_sample(), parse_ablation_flags("no-cot"))
                          .chat()
                          .full_text();
  EXPECT_EQ(no_cot.find("step by step"), std::string::npos);
}

TEST(SsPrompt, RenderingIsDeterministic) {
  const auto a = render_ss_pt(golden::task(), golden::catalog(), golden::selection(), golden::context(),
                              golden::test_sample());
  const auto b = render_ss_pt(golden::task(), golden::catalog(), golden::selection(), golden::context(),
                              golden::test_sample());
  EXPECT_EQ(a.chat().full_text(), b.chat().full_text());
}

TEST(ChatPrompt, FullTextJoin) {
  EXPECT_EQ((ChatPrompt{"sys", "user"}).full_text(), "sys\n\nuser");
  EXPECT_EQ((ChatPrompt{"", "user"}).full_text(), "user");
}

}  // namespace
