#include "mwm/builtins.hpp"
#include "mwm/report.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace {

using namespace mwm;

std::vector<SchemaIssue> issues_of(std::string_view text) {
  try {
    parse_scenario(text);
  } catch (const SchemaError& e) {
    return e.issues();
  }
  return {};
}

bool mentions(const std::vector<SchemaIssue>& issues, std::string_view needle, int line = -1) {
  for (const auto& i : issues)
    if (i.message.find(needle) != std::string::npos && (line < 0 || i.line == line)) return true;
  return false;
}

/// Minimal scenario: one person kind in a single quantum root. Line 11 holds
/// the first event.
std::string text(std::string_view events, std::string_view queries = "", std::string_view params = "") {
  return "scenario t\n" + std::string(params) + "\n[persons]\nperson\n\n[initial]\nquantum\npopulation person\n\n[events]\n" +
         std::string(events) + (queries.empty() ? "" : "[queries]\n" + std::string(queries));
}

TEST(Builtins, ExactlyTheTenNamedScenarios) {
  std::vector<std::string> names;
  for (const auto& b : builtin_scenarios()) names.emplace_back(b.name);
  EXPECT_EQ(names, (std::vector<std::string>{"quantum_gun", "many_planets", "bleeding_death", "spin_measurement",
                                             "anthropic", "population_qs", "immortality_test", "amoeba_decline",
                                             "qif_reductio", "evolved_vs_spontaneous"}));
  EXPECT_EQ(find_builtin("nope"), nullptr);
  EXPECT_THROW(builtin_scenario("nope"), Error);
}

TEST(Builtins, ParseValidateAndRoundTrip) {
  for (const auto& b : builtin_scenarios()) {
    SCOPED_TRACE(std::string(b.name));
    const Scenario s = parse_scenario(b.text);
    EXPECT_EQ(s.name, b.name);
    const Script script = instantiate(s, resolve_params(s));
    EXPECT_TRUE(validate(script.initial).empty());
    EXPECT_TRUE(validate(run_to_end(script)).empty());
    const std::string text = to_text(s);
    EXPECT_EQ(parse_scenario(text), s);
    EXPECT_EQ(to_text(parse_scenario(text)), text);
  }
}

TEST(Builtins, RunsAreDeterministic) {
  for (const auto& b : builtin_scenarios()) {
    SCOPED_TRACE(std::string(b.name));
    const Scenario s = parse_scenario(b.text);
    RunOptions o;
    o.trials = b.name == "population_qs" ? 2000 : 500;
    o.seed = 17;
    const auto first = run(s, o);
    o.threads = 3;
    EXPECT_EQ(run(s, o), first);
    EXPECT_FALSE(first.empty());
  }
}

TEST(Schema, FractionsMustSumToOne) {
  const auto issues = issues_of(text("split all heads=0.6 tails=0.6\n"));
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].line, 11);
  EXPECT_TRUE(mentions(issues, "split 'heads,tails' fractions sum to 1.2"));
}

TEST(Schema, UndeclaredKind) {
  const auto issues = issues_of(text("death all ghost\n"));
  EXPECT_TRUE(mentions(issues, "undeclared kind 'ghost'", 11));
}

TEST(Schema, UnknownKeysAndVerbs) {
  EXPECT_TRUE(mentions(issues_of(text("", "predicate x kind=person\nmeasure m pred=x colour=red\n")), "colour"));
  EXPECT_FALSE(issues_of(text("explode all\n")).empty());
  EXPECT_FALSE(issues_of("scenario t\n[nonsense]\n").empty());
}

TEST(Schema, CollectsEveryIssueWithItsLine) {
  const auto issues = issues_of(text("split all a=0.5 b=0.6\ndeath all ghost\n"));
  EXPECT_TRUE(mentions(issues, "fractions sum", 11));
  EXPECT_TRUE(mentions(issues, "ghost", 12));
}

TEST(Schema, UnknownParameterOverride) {
  const Scenario s = builtin_scenario("quantum_gun");
  EXPECT_THROW(resolve_params(s, {{"p_fyre", 0.1}}), SchemaError);
  EXPECT_EQ(resolve_params(s, {{"p_fire", 0.1}}).at("p_fire"), 0.1);
}

TEST(Expansion, RepeatAndWhen) {
  const Scenario s = parse_scenario(
      text("repeat $n\n  split all up=0.5 down=0.5\n  time 1\nend\nsplit all x=1 when=$on\n", "", "param n 3\nparam on 0\n"));
  const Script off = instantiate(s, resolve_params(s));
  EXPECT_EQ(off.events.size(), 6u);
  const Script on = instantiate(s, resolve_params(s, {{"n", 1}, {"on", 1}}));
  EXPECT_EQ(on.events.size(), 3u);
  EXPECT_EQ(run_to_end(off).branches.size(), 8u);
}

TEST(Expansion, ParameterDrivesFractions) {
  const Scenario s = builtin_scenario("quantum_gun");
  const auto rows = run(s, RunOptions{.params = {{"p_fire", 0.25}}});
  const auto it = std::find_if(rows.begin(), rows.end(), [](const ReportRow& r) { return r.query_id == "measure_after"; });
  ASSERT_NE(it, rows.end());
  EXPECT_EQ(*it->value, 0.75);
}

TEST(Report, QuantumGunRows) {
  const auto rows = run(builtin_scenario("quantum_gun"));
  std::map<std::string, double> v;
  for (const auto& r : rows) v[r.query_id + "/" + r.quantity] = *r.value;
  EXPECT_EQ(v.at("measure_before/measure"), 1.0);
  EXPECT_EQ(v.at("measure_after/measure"), 0.5);
  EXPECT_EQ(v.at("conditional_survival/effective_probability"), 1.0);
  EXPECT_EQ(v.at("caring/caring_utility[play]"), 0.5);
  EXPECT_EQ(v.at("caring/caring_utility[abstain]"), 1.0);
  EXPECT_EQ(v.at("causal/causal_expected_utility[play]"), 0.5);
}

TEST(Report, QifRowsAreMarked) {
  RunOptions o;
  o.semantics = SemanticsMode::qif_renormalize;
  const auto rows = run(builtin_scenario("quantum_gun"), o);
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows.front().query_id, "semantics");
  EXPECT_EQ(rows.front().quantity, "qif_fallacy_demonstration");
  bool saw = false;
  for (const auto& r : rows)
    if (r.query_id == "measure_after") {
      EXPECT_EQ(r.quantity, "measure@qif");
      EXPECT_EQ(*r.value, 1.0);
      saw = true;
    }
  EXPECT_TRUE(saw);
}

TEST(Report, CsvAndFormatting) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(1e-8), "1e-08");
  std::ostringstream os;
  write_csv(os, {ReportRow{"s", "q", "measure", 0.5, Provenance::analytic, {}, {}},
                 ReportRow{"s", "o", "frequency", 0.25, Provenance::monte_carlo, 100, 0.04}});
  EXPECT_EQ(os.str(), "scenario,query_id,quantity,value,provenance,trials,sigma\n"
                      "s,q,measure,0.5,analytic,,\n"
                      "s,o,frequency,0.25,monte-carlo,100,0.04\n");
}

TEST(Report, RuntimeFailureNamesQuery) {
  const Scenario s = parse_scenario(text("death all person\n", "predicate p kind=person\nprobability p_survive pred=p\n"));
  try {
    run(s);
    FAIL() << "expected QueryError";
  } catch (const QueryError& e) {
    EXPECT_EQ(e.query(), "p_survive");
  }
}

} // namespace
