#pragma once

// Executes a scenario's queries and formats the results as report rows.

#include "mwm/oracle.hpp"
#include "mwm/scenario.hpp"

#include <cstdio>
#include <iomanip>

namespace mwm {

enum class Provenance { analytic, monte_carlo };

inline std::string_view to_string(Provenance p) { return p == Provenance::analytic ? "analytic" : "monte-carlo"; }

struct ReportRow {
  std::string scenario;
  std::string query_id;
  std::string quantity;
  std::optional<double> value;
  Provenance provenance = Provenance::analytic;
  std::optional<std::size_t> trials;
  std::optional<double> sigma;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

/// A query failed at run time; carries the query id.
class QueryError : public Error {
public:
  QueryError(std::string query, const std::string& what)
      : Error("query '" + query + "': " + what), query_(std::move(query)) {}
  const std::string& query() const { return query_; }

private:
  std::string query_;
};

struct RunOptions {
  std::size_t trials = 0; // 0 runs analytic queries only
  std::uint64_t seed = 0;
  std::optional<SemanticsMode> semantics; // overrides the scenario's own
  ParamMap params;                        // overrides parameter defaults
  std::size_t threads = 1;
};

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v); // no "-0"
  return buf;
}

namespace detail {

struct RunContext {
  const Scenario& scenario;
  const RunOptions& options;
  SemanticsMode mode;
  ParamMap params;
  Script script;
  Timeline timeline;
  std::optional<AdjustedTrajectory> adjusted;
  std::vector<ReportRow>& rows;

  bool qif() const { return mode == SemanticsMode::qif_renormalize; }

  void emit(const QueryDecl& q, std::string quantity, double value, Provenance prov = Provenance::analytic,
            std::optional<std::size_t> trials = std::nullopt, std::optional<double> sigma = std::nullopt) {
    rows.push_back({scenario.name, q.id, std::move(quantity), value, prov, trials, sigma});
  }

  std::string qty(std::string base) const { return qif() ? base + "@qif" : base; }

  double number(const std::string& text) const { return Number(text).eval(params); }

  Span span(const std::string& text) const { return text == "inf" ? Span::unbounded() : Span::finite(number(text)); }

  OutcomePredicate predicate(const QueryDecl& q, const char* key) const {
    return build_predicate(scenario, *q.arg(key), params);
  }

  /// State and renormalisation factors at a mark, or at the end.
  std::pair<const WorldState*, std::size_t> at(const QueryDecl& q) const {
    const auto name = q.arg("at");
    if (!name || *name == "end") return {&timeline.final_state, timeline.points.size() - 1};
    auto it = timeline.marks.find(*name);
    if (it == timeline.marks.end()) throw Error("mark '" + *name + "' was skipped in this run");
    return {&it->second.state, it->second.point};
  }

  double measure(const WorldState& s, std::size_t point, const OutcomePredicate& pred) const {
    if (!qif()) return measure_of(s, pred);
    return qif_measure_of(s, pred, adjusted->points[point].factor);
  }

  static std::optional<std::string> kind_of(const OutcomePredicate& pred) {
    if (pred.terms.empty()) return std::string();
    if (pred.terms.size() == 1 && pred.kind_level()) return pred.terms.front().value;
    return std::nullopt;
  }

  double integral(const OutcomePredicate& pred, double from, double to) const {
    if (!(from >= 0.0 && from <= to && to <= timeline.duration() + kFractionTolerance))
      throw Error("integration window lies outside the recorded timeline");
    const auto kind = kind_of(pred);
    if (qif()) return kind ? adjusted->integral(*kind, from, to) : qif_integral(pred, from, to);
    if (kind) return integral_of_kind(timeline.points, *kind, from, to);
    return integral_measure(timeline, pred, from, to);
  }

  /// Renormalised integral from step states; within a step the factors change
  /// only at expiry points.
  double qif_integral(const OutcomePredicate& pred, double from, double to) const {
    const auto& pts = adjusted->points;
    double total = 0.0;
    for (const auto& step : timeline.steps) {
      if (!step.state) throw Error("timeline was recorded without step states");
      const double end = step.start + step.duration;
      for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double a = std::max(pts[i].clock, step.start), b = std::min(pts[i + 1].clock, end);
        if (!(b > a)) continue;
        for (const auto& br : step.state->branches) {
          if (!(br.weight.value > 0.0)) continue;
          for (const auto& p : br.populations) {
            if (!p.living() || !pred.matches(br, p)) continue;
            const double active_end = p.status == Vitality::dying ? step.start + p.remaining : end;
            auto f = pts[i].factor.find(p.kind);
            total += br.root_weight * p.count * p.consciousness * (f == pts[i].factor.end() ? 1.0 : f->second) *
                     overlap(a, std::min(b, active_end), from, to);
          }
        }
      }
    }
    return total;
  }

  std::vector<Script> variants(const std::vector<VariantDecl>& decls) const {
    std::vector<Script> out;
    for (const auto& v : decls) out.push_back(instantiate(scenario, variant_params(scenario, v, params)));
    return out;
  }

  HypothesisSet hypotheses() const {
    HypothesisSet set;
    auto scripts = variants(scenario.hypotheses);
    for (std::size_t i = 0; i < scripts.size(); ++i)
      set.hypotheses.push_back(
          {scenario.hypotheses[i].label, scenario.hypotheses[i].prior->eval(params), std::move(scripts[i])});
    return set;
  }

  DecisionProblem decision(const QueryDecl& q, UtilityMode mode) const {
    DecisionProblem p;
    auto scripts = variants(scenario.choices);
    for (std::size_t i = 0; i < scripts.size(); ++i) p.choices.push_back({scenario.choices[i].label, std::move(scripts[i])});
    for (const auto& r : scenario.quality) p.quality.rules.push_back({r.outcome, r.kind, r.quality.eval(params)});
    const auto src = q.arg("source").value_or("table");
    p.source = src == "population" ? QualitySource::population : QualitySource::table;
    p.mode = mode;
    return p;
  }

  void run(const QueryDecl& q);
};

inline void RunContext::run(const QueryDecl& q) {
  const std::string& verb = q.verb;
  if (verb == "measure") {
    const auto [state, point] = at(q);
    emit(q, qty("measure"), measure(*state, point, predicate(q, "pred")));
  } else if (verb == "probability") {
    const auto [state, point] = at(q);
    const auto pred = predicate(q, "pred");
    const auto given = q.arg("given") ? predicate(q, "given") : OutcomePredicate::any();
    const double denom = measure(*state, point, given);
    if (!(denom > 0.0)) throw EmptyReferenceClass("conditioning class has zero measure");
    emit(q, qty("effective_probability"), measure(*state, point, pred && given) / denom);
  } else if (verb == "weight_fraction") {
    const auto [state, point] = at(q);
    const auto pred = predicate(q, "pred");
    double hit = 0.0, total = 0.0;
    for (const auto& b : state->branches) {
      total += b.weight.value;
      const bool any = std::any_of(b.populations.begin(), b.populations.end(), [&](const Population& p) {
        return p.density() > 0.0 && pred.matches(b, p);
      });
      if (any) hit += b.weight.value;
    }
    if (!(total > 0.0)) throw EmptyReferenceClass("state has no branch weight");
    emit(q, "weight_fraction", hit / total);
  } else if (verb == "integral") {
    emit(q, qty("integral_measure"), integral(predicate(q, "pred"), number(*q.arg("from")), number(*q.arg("to"))));
  } else if (verb == "moments") {
    const auto pred = predicate(q, "pred");
    const double within = number(*q.arg("within"));
    const double inside = integral(pred, 0.0, within);
    for (const auto& h : split_on(*q.arg("horizons"), ',')) {
      const double horizon = number(h);
      if (horizon < within) throw Error("horizon is shorter than the normal lifespan");
      const double all = integral(pred, 0.0, horizon);
      if (!(all > 0.0)) throw EmptyReferenceClass("no observer-moments up to the horizon");
      emit(q, qty("p_within[" + format_number(horizon) + "]"), inside / all);
    }
  } else if (verb == "trajectory") {
    const std::string kind = q.arg("kind").value_or("");
    for (std::size_t i = 0; i < timeline.points.size(); ++i) {
      const auto& pt = timeline.points[i];
      double v = 0.0;
      if (qif()) {
        const auto& ap = adjusted->points[i];
        v = kind.empty() ? ap.total() : ap.measure.at(kind);
      } else {
        v = kind.empty() ? pt.total() : pt.levels.at(kind).measure;
      }
      emit(q, qty("measure") + "[" + std::to_string(i) + "]@t=" + format_number(pt.clock), v);
    }
  } else if (verb == "reflection") {
    const auto [state, point] = at(q);
    for (const auto& [label, p] : reflection_distribution(*state, *q.arg("kind"))) emit(q, "credence[" + label + "]", p);
  } else if (verb == "bayes") {
    for (const auto& [label, p] : bayes_update(hypotheses(), predicate(q, "observe")))
      emit(q, "posterior[" + label + "]", p);
  } else if (verb == "accuracy") {
    const auto observer = q.arg("observer") ? predicate(q, "observer") : OutcomePredicate::any();
    emit(q, "accuracy", measure_weighted_accuracy(hypotheses(), *q.arg("truth"), nullptr, observer));
  } else if (verb == "caring") {
    const auto p = decision(q, UtilityMode::caring_coefficients);
    for (const auto& c : p.choices) emit(q, "caring_utility[" + c.label + "]", caring_utility(p, c.label));
  } else if (verb == "prob_utility") {
    const auto p = decision(q, UtilityMode::caring_coefficients);
    for (const auto& c : p.choices)
      emit(q, "probability_weighted_utility[" + c.label + "]", probability_weighted_utility(p, c.label));
  } else if (verb == "causal") {
    auto p = decision(q, UtilityMode::causal_differentiation);
    p.causal.decider = *q.arg("decider");
    p.causal.dead_quality = q.arg("dead_quality") ? number(*q.arg("dead_quality")) : 0.0;
    for (const auto& item : split_on(*q.arg("hidden"), ',')) {
      const std::size_t colon = item.find(':');
      p.causal.hidden.push_back({item.substr(0, colon), number(item.substr(colon + 1))});
    }
    for (const auto& c : p.choices) emit(q, "causal_expected_utility[" + c.label + "]", causal_expected_utility(p, c.label));
  } else if (verb == "lifespan") {
    SurvivalModel model;
    model.normal_lifespan = number(*q.arg("lifespan"));
    const std::string kind = *q.arg("afterlife");
    if (kind == "constant") model.afterlife = ConstantAfterlife{span(q.arg("duration").value_or("inf"))};
    else if (kind == "exponential") {
      if (!q.arg("half_life")) throw Error("exponential afterlife needs half_life=");
      model.afterlife = ExponentialTail{number(*q.arg("half_life"))};
    }
    if (auto hs = q.arg("horizons")) {
      for (const auto& h : split_on(*hs, ',')) {
        const Span horizon = span(h);
        const std::string name = horizon.infinite ? "inf" : format_number(horizon.value);
        emit(q, "p_normal_lifespan[" + name + "]", lifespan_observation_probability(model, horizon));
      }
    } else {
      emit(q, "p_normal_lifespan", lifespan_observation_probability(model, span(q.arg("horizon").value_or("inf"))));
    }
  } else if (verb == "oracle") {
    const auto pred = predicate(q, "pred");
    const std::optional<OutcomePredicate> given =
        q.arg("given") ? std::optional(predicate(q, "given")) : std::nullopt;
    const MeasureReport mwi =
        given ? conditional_report(timeline.final_state, pred, *given) : survival_report(timeline, pred);
    emit(q, "expected", mwi.effective_probability);
    if (options.trials == 0) return;
    const auto records = run_trials(script, options.trials, options.seed, options.threads);
    const FrequencyReport f = compare(mwi, records, pred, given);
    emit(q, "frequency", f.frequency, Provenance::monte_carlo, f.trials, f.standard_error);
    emit(q, "z_score", f.z_score, Provenance::monte_carlo, f.trials);
  } else {
    throw Error("unknown query verb '" + verb + "'");
  }
}

inline bool needs_step_states(const Scenario& s) {
  for (const auto& q : s.queries) {
    if (q.verb != "integral" && q.verb != "moments") continue;
    const auto* p = s.find_predicate(*q.arg("pred"));
    if (p && p->terms.size() > 1) return true;
    if (p && p->terms.size() == 1 && p->terms.front().rfind("kind=", 0) != 0) return true;
  }
  return false;
}

} // namespace detail

/// Runs every query in declaration order. Deterministic given the options.
inline std::vector<ReportRow> run(const Scenario& scenario, const RunOptions& options = {}) {
  std::vector<ReportRow> rows;
  const ParamMap params = resolve_params(scenario, options.params);
  Script script = instantiate(scenario, params);
  const SemanticsMode mode = options.semantics.value_or(scenario.semantics);
  Timeline timeline = record(script, {.keep_step_states = detail::needs_step_states(scenario)});
  detail::RunContext ctx{scenario, options, mode, params, std::move(script), std::move(timeline), std::nullopt, rows};
  if (ctx.qif()) rows.push_back({scenario.name, "semantics", "qif_fallacy_demonstration", 1.0, Provenance::analytic, {}, {}});
  for (const auto& q : scenario.queries) {
    try {
      if (ctx.qif() && !ctx.adjusted) ctx.adjusted = apply_semantics(ctx.timeline.points, mode);
      ctx.run(q);
    } catch (const QueryError&) {
      throw;
    } catch (const std::exception& e) {
      throw QueryError(q.id, e.what());
    }
  }
  return rows;
}

inline void write_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "scenario,query_id,quantity,value,provenance,trials,sigma\n";
  for (const auto& r : rows) {
    os << r.scenario << ',' << r.query_id << ',' << r.quantity << ',' << (r.value ? format_number(*r.value) : "")
       << ',' << to_string(r.provenance) << ',' << (r.trials ? std::to_string(*r.trials) : "") << ','
       << (r.sigma ? format_number(*r.sigma) : "") << '\n';
  }
}

inline void write_text(std::ostream& os, const std::vector<ReportRow>& rows) {
  const std::vector<std::string> header = {"scenario", "query_id", "quantity", "value", "provenance", "trials", "sigma"};
  std::vector<std::vector<std::string>> table = {header};
  for (const auto& r : rows)
    table.push_back({r.scenario, r.query_id, r.quantity, r.value ? format_number(*r.value) : "-",
                     std::string(to_string(r.provenance)), r.trials ? std::to_string(*r.trials) : "-",
                     r.sigma ? format_number(*r.sigma) : "-"});
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : table)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i + 1 < row.size()) os << std::left << std::setw(static_cast<int>(width[i])) << row[i] << "  ";
      else os << row[i];
    }
    os << '\n';
  }
}

} // namespace mwm
