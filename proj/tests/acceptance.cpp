// Acceptance run: one PASS/FAIL line per criterion with its wall time and the
// values it was judged on. Exit status is the number of failed criteria.

#include "generators.hpp"
#include "mwm/mwm.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace {

using namespace mwm;
using namespace mwm::testgen;

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double value(const std::vector<ReportRow>& rows, std::string_view query, std::string_view quantity) {
  for (const auto& r : rows)
    if (r.query_id == query && r.quantity == quantity && r.value) return *r.value;
  throw Error("no row " + std::string(query) + "/" + std::string(quantity));
}

const ReportRow& row(const std::vector<ReportRow>& rows, std::string_view query, std::string_view quantity) {
  for (const auto& r : rows)
    if (r.query_id == query && r.quantity == quantity) return r;
  throw Error("no row " + std::string(query) + "/" + std::string(quantity));
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// 1. Measure halves while conditional survival stays certain.
void qs_halving(Check& c) {
  const auto rows = run(builtin_scenario("quantum_gun"));
  const double before = value(rows, "measure_before", "measure"), after = value(rows, "measure_after", "measure");
  const double survival = value(rows, "conditional_survival", "effective_probability");
  c.detail << "after/before=" << after / before << " P(survive|experimenter)=" << survival;
  c.expect(near(after / before, 0.5, 1e-12), "measure ratio 0.5");
  c.expect(survival == 1.0, "conditional survival 1");
}

// 2. Ten rounds in a row.
void repeated_qs(Check& c) {
  const Scenario s = parse_scenario(R"(scenario repeated_quantum_gun
[persons]
experimenter
[initial]
quantum
population experimenter
[events]
repeat 10
  split alive:experimenter fire=0.5 click=0.5
  death last:fire experimenter
end
[queries]
predicate experimenter kind=experimenter
measure measure_end pred=experimenter
)");
  const double m = value(run(s), "measure_end", "measure");
  c.detail << "measure=" << format_number(m);
  c.expect(m == 9.765625e-4, "2^-10 exactly");
}

// 3. One survivor in a hundred million, and the desk-scale oracle.
void population_survivor(Check& c) {
  const Scenario s = builtin_scenario("population_qs");
  RunOptions full_scale;
  full_scale.params = {{"people", 1e10}};
  const double full = value(run(s, full_scale), "survivor_probability", "effective_probability");
  c.detail << "full=" << format_number(full);
  c.expect(near(full, 100.0 / (1e10 - 100.0), 1e-20), "100/(1e10-100)");
  c.expect(std::abs(full / 1e-8 - 1.0) <= 0.01, "within 1% of 1e-8");

  RunOptions o;
  o.trials = 100000;
  o.seed = 1;
  o.threads = 4;
  const auto rows = run(s, o);
  const double desk = value(rows, "survivor_probability", "effective_probability");
  const double z = value(rows, "survivor", "z_score");
  c.detail << " desk=" << format_number(desk) << " z=" << format_number(z);
  c.expect(near(desk, 100.0 / (1e6 - 100.0), 1e-15), "desk 100/(1e6-100)");
  c.expect(std::abs(z) <= 3.0, "oracle within 3 sigma");
}

// 4. Spin example posteriors and measure-weighted accuracy.
void theory_confirmation(Check& c) {
  const auto rows = run(builtin_scenario("spin_measurement"));
  for (const auto& r : rows)
    if (r.value) c.detail << r.query_id << "/" << r.quantity << "=" << format_number(*r.value) << " ";
  double a = 0.0, b = 0.0;
  for (const auto& r : rows)
    if (r.quantity == "posterior[A]" && r.query_id.find("up") != std::string::npos) a = *r.value;
    else if (r.quantity == "posterior[B]" && r.query_id.find("up") != std::string::npos) b = *r.value;
  c.expect(near(a, 0.9, 1e-15) && near(b, 0.1, 1e-15), "posterior {A:0.9, B:0.1}");
  int accuracies = 0;
  for (const auto& r : rows)
    if (r.quantity == "accuracy") {
      ++accuracies;
      c.expect(near(*r.value, 0.9, 1e-15), "accuracy 0.9 in " + r.query_id);
    }
  c.expect(accuracies == 2, "accuracy for both truths");
}

// 5. Single-world frequencies against effective probabilities.
void oracle_equivalence(Check& c) {
  for (const char* name : {"quantum_gun", "spin_measurement"})
    for (std::uint64_t seed : {11u, 22u, 33u}) {
      RunOptions o;
      o.trials = 100000;
      o.seed = seed;
      o.threads = 4;
      const auto rows = run(builtin_scenario(name), o);
      for (const auto& r : rows)
        if (r.quantity == "z_score") {
          c.detail << name << "/" << r.query_id << "@" << seed << " z=" << format_number(*r.value) << " ";
          c.expect(std::abs(*r.value) <= 3.0, std::string(name) + " " + r.query_id);
          c.expect(row(rows, r.query_id, "frequency").trials.value_or(0) > 0, "trial count reported");
        }
    }
}

// 6. Lifespan observation test.
void immortality(Check& c) {
  const auto rows = run(builtin_scenario("immortality_test"));
  const double inf = value(rows, "p_normal_infinite", "p_normal_lifespan");
  c.detail << "infinite=" << format_number(inf);
  c.expect(inf == 0.0, "infinite afterlife gives 0");
  const double expected[] = {1e-2, 1e-3, 1e-4};
  const char* horizons[] = {"p_normal_lifespan[10000]", "p_normal_lifespan[100000]", "p_normal_lifespan[1000000]"};
  for (int i = 0; i < 3; ++i) {
    const double v = value(rows, "p_normal_sweep", horizons[i]);
    c.detail << " " << horizons[i] << "=" << format_number(v);
    c.expect(near(v, expected[i], 1e-9), horizons[i]);
  }
  const double tail = value(rows, "p_normal_tail", "p_normal_lifespan");
  const double L = 100.0, h = 10.0;
  const double numeric = L / (L + simpson([&](double t) { return std::exp2(-(t - L) / h); }, L, L + 80.0 * h, 200000));
  c.detail << " tail=" << format_number(tail) << " numeric=" << format_number(numeric);
  c.expect(near(tail, numeric, 1e-6), "exponential tail matches quadrature");
}

// 7. Renormalised reading: splits inflate measure and old age dominates.
// The run with n splits is a prefix of the run with 20, so one run answers
// every n through horizons (n+1) x lifespan.
void qif_reductio(Check& c) {
  Scenario s = builtin_scenario("qif_reductio");
  std::string horizons;
  for (int n = 1; n <= 20; ++n) horizons += (n > 1 ? "," : "") + std::to_string(n + 1) + "*$lifespan";
  for (auto& q : s.queries)
    if (q.id == "p_normal")
      for (auto& [k, v] : q.args)
        if (k == "horizons") v = horizons;
  RunOptions o;
  o.semantics = SemanticsMode::qif_renormalize;
  const auto rows = run(s, o);
  const double m = value(rows, "measure_end", "measure@qif");
  double previous = 2.0;
  bool monotone = true;
  for (int n = 1; n <= 20; ++n) {
    const double p = value(rows, "p_normal", "p_within[" + std::to_string(n + 1) + "]@qif");
    monotone = monotone && p < previous;
    previous = p;
  }
  c.detail << "measure(20)=" << format_number(m) << " p_within(20)=" << format_number(previous);
  c.expect(m == 1048576.0, "2^20 exactly");
  c.expect(monotone, "p_within strictly decreasing in n");
  // Oracle: 1 / (1 + 2 + ... + 2^20).
  c.expect(near(previous, 1.0 / (std::ldexp(1.0, 21) - 1.0), 1e-18), "p_within(20) = 1/(2^21-1)");
}

// 8. Caring versus probability-weighted versus causal utility.
void utility_divergence(Check& c) {
  Gen g(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const DecisionProblem p = random_problem(g, UtilityMode::caring_coefficients);
    for (const auto& ch : p.choices) {
      const double total = run_to_end(ch.variant).total_measure();
      const double caring = caring_utility(p, ch.label), weighted = probability_weighted_utility(p, ch.label) * total;
      worst = std::max(worst, std::abs(caring - weighted) / std::max(std::abs(caring), 1e-300));
    }
  }
  const auto rows = run(builtin_scenario("quantum_gun"));
  const double play = value(rows, "caring", "caring_utility[play]"), abstain = value(rows, "caring", "caring_utility[abstain]");
  const double cplay = value(rows, "causal", "causal_expected_utility[play]");
  const double cabstain = value(rows, "causal", "causal_expected_utility[abstain]");
  c.detail << "worst_rel=" << worst << " caring=" << play << "/" << abstain << " causal=" << cplay << "/" << cabstain;
  c.expect(worst <= 1e-9, "caring = weighted x total");
  c.expect(play == 0.5 && abstain == 1.0, "caring 0.5 vs 1.0");
  // Classical roulette: survive with probability 0.5 (q=1), else 0.
  c.expect(near(cplay, 0.5, 1e-15) && near(cabstain, 1.0, 1e-15), "causal matches roulette");
}

// 9. Property suites.
void properties(Check& c) {
  Gen g(99);
  int locality_failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const WorldState before = g.state(g.integer(0, 6));
    const std::string target = g.pick_branch(before);
    const WorldState after = g.mutate(before, target);
    for (const auto& b : before.branches) {
      if (b.id() == target) continue;
      const double m0 = branch_measure(before, b.id()), m1 = branch_measure(after, b.id());
      locality_failures += std::memcmp(&m0, &m1, sizeof m0) != 0;
    }
  }
  double worst_partition = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const WorldState s = g.state(g.integer(1, 6));
    if (!(s.total_measure() > 0.0)) continue;
    std::set<std::string> labels;
    for (const auto& b : s.branches) labels.insert(b.outcome_label());
    double sum = 0.0;
    for (const auto& l : labels) sum += effective_probability(s, OutcomePredicate::with_last(l));
    worst_partition = std::max(worst_partition, std::abs(sum - 1.0));
  }
  int argmax_changes = 0, ties = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto mode = trial % 2 ? UtilityMode::causal_differentiation : UtilityMode::caring_coefficients;
    DecisionProblem p = random_problem(g, mode);
    if (mode == UtilityMode::causal_differentiation) prepend_hidden_split(p);
    const auto before = best_choices(utilities(p));
    const double a = std::exp(g.real(-3.0, 3.0)), b = g.real(-10.0, 10.0);
    for (auto& r : p.quality.rules) r.quality = a * r.quality + b;
    p.causal.dead_quality = a * p.causal.dead_quality + b;
    argmax_changes += best_choices(utilities(p)) != before;
    ties += before.size() > 1;
  }
  int correspondence_mismatches = 0;
  double two_way_gap = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = g.integer(1, 64), k = g.integer(0, n);
    const auto cr = correspondence(n, k, g.integer(1, 4));
    correspondence_mismatches += cr.planets != cr.quantum_n_way;
    two_way_gap = std::max(two_way_gap, std::abs(cr.planets - cr.quantum_two_way));
  }
  c.detail << "locality_failures=" << locality_failures << " worst_partition=" << worst_partition
           << " argmax_changes=" << argmax_changes << "/500 (ties " << ties << ")"
           << " correspondence_mismatches=" << correspondence_mismatches << "/300 two_way_gap=" << two_way_gap;
  c.expect(locality_failures == 0, "locality bit-identical");
  c.expect(worst_partition <= 1e-9, "partition additivity");
  c.expect(argmax_changes == 0, "argmax invariance");
  c.expect(correspondence_mismatches == 0, "exact planets/quantum correspondence");
  c.expect(two_way_gap <= 4 * std::numeric_limits<double>::epsilon(), "two-way split to rounding");
}

struct Criterion {
  int number;
  const char* name;
  double budget_seconds;
  void (*body)(Check&);
};

} // namespace

int main() {
  const Criterion criteria[] = {
      {1, "qs_measure_halving", 1.0, qs_halving},
      {2, "repeated_qs", 1.0, repeated_qs},
      {3, "population_survivor_probability", 30.0, population_survivor},
      {4, "theory_confirmation", 1.0, theory_confirmation},
      {5, "oracle_equivalence", 60.0, oracle_equivalence},
      {6, "immortality_test", 5.0, immortality},
      {7, "qif_reductio", 1.0, qif_reductio},
      {8, "utility_divergence", 10.0, utility_divergence},
      {9, "property_suites", 30.0, properties},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > cr.budget_seconds) {
      c.ok = false;
      c.detail << " [over time budget " << cr.budget_seconds << " s]";
    }
    failed += !c.ok;
    std::printf("%s %d %s (%.3f s) %s\n", c.ok ? "PASS" : "FAIL", cr.number, cr.name, secs, c.detail.str().c_str());
  }
  return failed;
}
