#pragma once

// The four contexts in which effective probabilities act as probabilities
// (reflection, theory confirmation, causal differentiation, caring
// coefficients), the lifespan-observation test against immortality, and the
// measure-conserving renormalisation used to demonstrate where the
// quantum-immortality reading leads.

#include "mwm/measure.hpp"

#include <functional>
#include <numbers>

namespace mwm {

class StageError : public Error {
public:
  using Error::Error;
};

using Distribution = std::map<std::string, double>;

// ---------------------------------------------------------------------------
// Reflection

/// Credence over the most recent outcome labels, for an observer who has split
/// but not yet seen the result. Refuses states outside that window.
inline Distribution reflection_distribution(const WorldState& state, std::string_view kind) {
  if (state.stage != Stage::post_split_pre_reveal)
    throw StageError("reflection applies only after a split and before the outcome is revealed (stage is " +
                     std::string(to_string(state.stage)) + ")");
  if (state.find_kind(kind) == nullptr) throw Error("unknown person kind '" + std::string(kind) + "'");
  Distribution out;
  double total = 0.0;
  for (const auto& b : state.branches) {
    double m = 0.0;
    for (const auto& p : b.populations)
      if (p.kind == kind) m += b.weight.value * p.density();
    if (m > 0.0) out[b.outcome_label()] += m;
    total += m;
  }
  if (!(total > 0.0)) throw EmptyReferenceClass("no measure of '" + std::string(kind) + "' to reflect on");
  for (auto& [label, p] : out) p /= total;
  return out;
}

// ---------------------------------------------------------------------------
// Theory confirmation

struct Hypothesis {
  std::string label;
  double prior = 0.0;
  Script model;
};

struct HypothesisSet {
  std::vector<Hypothesis> hypotheses;

  void check() const {
    if (hypotheses.empty()) throw Error("hypothesis set is empty");
    double sum = 0.0;
    for (const auto& h : hypotheses) {
      if (!(h.prior >= 0.0)) throw Error("prior of '" + h.label + "' is negative");
      sum += h.prior;
    }
    if (std::abs(sum - 1.0) > kFractionTolerance) throw Error("priors do not sum to 1");
  }
};

/// posterior(h) proportional to prior(h) * likelihood(h).
inline Distribution bayes_update(const Distribution& priors, const Distribution& likelihoods) {
  Distribution post;
  double norm = 0.0;
  for (const auto& [label, prior] : priors) {
    auto it = likelihoods.find(label);
    if (it == likelihoods.end()) throw Error("no likelihood for hypothesis '" + label + "'");
    if (!(it->second >= 0.0)) throw Error("negative likelihood for hypothesis '" + label + "'");
    post[label] = prior * it->second;
    norm += post[label];
  }
  if (!(norm > 0.0)) throw Error("observation has zero likelihood under every hypothesis");
  for (auto& [label, p] : post) p /= norm;
  return post;
}

/// Likelihood of an observation under a model: its effective probability in
/// the model's final state.
inline double likelihood(const WorldState& final_state, const OutcomePredicate& observation) {
  return effective_probability(final_state, observation);
}

namespace detail {

struct EvaluatedHypotheses {
  Distribution priors;
  std::map<std::string, WorldState> finals;
};

inline EvaluatedHypotheses evaluate(const HypothesisSet& hyps) {
  hyps.check();
  EvaluatedHypotheses out;
  for (const auto& h : hyps.hypotheses) {
    out.priors[h.label] = h.prior;
    out.finals.emplace(h.label, run_to_end(h.model));
  }
  return out;
}

inline Distribution posterior(const EvaluatedHypotheses& ev, const OutcomePredicate& observation) {
  Distribution lik;
  for (const auto& [label, state] : ev.finals) lik[label] = likelihood(state, observation);
  return bayes_update(ev.priors, lik);
}

/// Largest posterior wins; ties go to the lexicographically smallest label.
inline std::string argmax(const Distribution& d) {
  std::string best;
  double best_p = -1.0;
  for (const auto& [label, p] : d) // map order is lexicographic
    if (p > best_p) {
      best = label;
      best_p = p;
    }
  return best;
}

} // namespace detail

inline Distribution bayes_update(const HypothesisSet& hyps, const OutcomePredicate& observation) {
  return detail::posterior(detail::evaluate(hyps), observation);
}

/// Maps an observed outcome label to a guessed hypothesis label.
using GuessRule = std::function<std::string(const std::string& observed_outcome)>;

/// Guesses the maximum-posterior hypothesis for each observed outcome.
inline GuessRule maximum_posterior_rule(const HypothesisSet& hyps, OutcomePredicate observer = {}) {
  auto ev = std::make_shared<detail::EvaluatedHypotheses>(detail::evaluate(hyps));
  return [ev, observer](const std::string& outcome) {
    return detail::argmax(detail::posterior(*ev, observer && OutcomePredicate::with_last(outcome)));
  };
}

/// Share of the true model's measure whose observation (the last outcome label
/// of its branch) leads the guess rule to the true hypothesis.
inline double measure_weighted_accuracy(const HypothesisSet& hyps, std::string_view truth,
                                        const GuessRule& rule = nullptr, const OutcomePredicate& observer = {}) {
  hyps.check();
  const auto it = std::find_if(hyps.hypotheses.begin(), hyps.hypotheses.end(),
                               [&](const Hypothesis& h) { return h.label == truth; });
  if (it == hyps.hypotheses.end()) throw Error("unknown hypothesis '" + std::string(truth) + "'");
  const GuessRule guess = rule ? rule : maximum_posterior_rule(hyps, observer);
  const WorldState final_state = run_to_end(it->model);
  std::map<std::string, double> by_outcome;
  for (const auto& b : final_state.branches)
    for (const auto& p : b.populations)
      if (p.living() && observer.matches(b, p)) by_outcome[b.outcome_label()] += b.weight.value * p.count * p.consciousness;
  double total = 0.0, right = 0.0;
  for (const auto& [outcome, m] : by_outcome) {
    total += m;
    if (m > 0.0 && guess(outcome) == truth) right += m;
  }
  if (!(total > 0.0)) throw EmptyReferenceClass("true model has no observer measure");
  return right / total;
}

// ---------------------------------------------------------------------------
// Decisions

struct QualityRule {
  std::string outcome = "*"; // last outcome label, or "*"
  std::string kind = "*";
  double quality = 0.0;
  friend bool operator==(const QualityRule&, const QualityRule&) = default;
};

/// q per (outcome, person kind). The most specific matching rule wins:
/// exact/exact, then exact outcome, then exact kind, then the wildcard.
struct QualityTable {
  std::vector<QualityRule> rules;

  std::optional<double> lookup(std::string_view outcome, std::string_view kind) const {
    int best_rank = -1;
    std::optional<double> q;
    for (const auto& r : rules) {
      const bool o = r.outcome == outcome, k = r.kind == kind;
      if ((!o && r.outcome != "*") || (!k && r.kind != "*")) continue;
      const int rank = (o ? 2 : 0) + (k ? 1 : 0);
      if (rank > best_rank) {
        best_rank = rank;
        q = r.quality;
      }
    }
    return q;
  }
};

enum class QualitySource { table, population };
enum class UtilityMode { caring_coefficients, causal_differentiation };

struct HiddenValue {
  std::string label; // outcome label the value corresponds to
  double probability = 0.0;
};

struct CausalSpec {
  std::string decider; // person kind whose own copy the choice affects
  std::vector<HiddenValue> hidden;
  double dead_quality = 0.0;
};

struct Choice {
  std::string label;
  Script variant;
};

struct DecisionProblem {
  std::vector<Choice> choices;
  QualityTable quality;
  QualitySource source = QualitySource::table;
  UtilityMode mode = UtilityMode::caring_coefficients;
  CausalSpec causal;

  const Choice& find(std::string_view label) const {
    for (const auto& c : choices)
      if (c.label == label) return c;
    throw Error("unknown choice '" + std::string(label) + "'");
  }
};

namespace detail {

inline double quality_of(const DecisionProblem& problem, const Branch& b, const Population& p) {
  if (problem.source == QualitySource::population) return p.quality;
  auto q = problem.quality.lookup(b.outcome_label(), p.kind);
  if (!q) throw Error("no quality for outcome '" + b.outcome_label() + "' and kind '" + p.kind + "'");
  return *q;
}

template <class F>
double sum_realized(const WorldState& s, F&& per_unit) {
  double u = 0.0;
  for (const auto& b : s.branches)
    for (const auto& p : b.populations) {
      const double m = b.weight.value * p.density();
      if (m > 0.0) u += per_unit(b, p, m);
    }
  return u;
}

} // namespace detail

/// U = sum_i sum_p m_ip q_ip for one choice. Scripts with time steps are
/// integrated over subjective time; otherwise the final state is used.
inline double caring_utility(const DecisionProblem& problem, std::string_view choice) {
  if (problem.mode != UtilityMode::caring_coefficients) throw Error("problem is not in caring-coefficients mode");
  const Choice& c = problem.find(choice);
  const Timeline tl = record(c.variant);
  if (tl.steps.empty())
    return detail::sum_realized(tl.final_state, [&](const Branch& b, const Population& p, double m) {
      return m * detail::quality_of(problem, b, p);
    });
  double u = 0.0;
  for (const auto& step : tl.steps)
    u += detail::sum_realized(*step.state, [&](const Branch& b, const Population& p, double m) {
      const double active = p.status == Vitality::dying ? std::min(step.duration, p.remaining) : step.duration;
      return m * active * detail::quality_of(problem, b, p);
    });
  return u;
}

/// Utility linear in effective probabilities: sum over outcomes of
/// (measure / surviving total) * q. Coincides with caring_utility divided by
/// total measure only while measure is conserved.
inline double probability_weighted_utility(const DecisionProblem& problem, std::string_view choice) {
  const WorldState s = run_to_end(problem.find(choice).variant);
  const double total = s.total_measure();
  if (!(total > 0.0)) throw EmptyReferenceClass("no surviving measure to normalise by");
  return detail::sum_realized(s, [&](const Branch& b, const Population& p, double m) {
    return (m / total) * detail::quality_of(problem, b, p);
  });
}

/// Classical expectation over the hidden variable of the utility realised by
/// the decider's own copy. A leaf is consistent with value v unless its path
/// carries the label of a different value.
inline double causal_expected_utility(const DecisionProblem& problem, std::string_view choice) {
  if (problem.mode != UtilityMode::causal_differentiation) throw Error("problem is not in causal-differentiation mode");
  const auto& spec = problem.causal;
  if (spec.hidden.empty()) throw Error("hidden-variable distribution is empty");
  double norm = 0.0;
  for (const auto& v : spec.hidden) {
    if (!(v.probability >= 0.0)) throw Error("negative hidden-variable probability");
    norm += v.probability;
  }
  if (std::abs(norm - 1.0) > kFractionTolerance) throw Error("hidden-variable distribution is not normalised");

  const WorldState s = run_to_end(problem.find(choice).variant);
  double eu = 0.0;
  for (const auto& v : spec.hidden) {
    double mass = 0.0, u = 0.0;
    for (const auto& b : s.branches) {
      const bool inconsistent = std::any_of(spec.hidden.begin(), spec.hidden.end(), [&](const HiddenValue& o) {
        return o.label != v.label && b.has_label(o.label);
      });
      if (inconsistent) continue;
      for (const auto& p : b.populations) {
        if (p.kind != spec.decider) continue;
        const double copies = b.weight.value * p.count;
        if (!(copies > 0.0)) continue;
        mass += copies;
        u += copies * (p.living() ? detail::quality_of(problem, b, p) : spec.dead_quality);
      }
    }
    if (!(mass > 0.0))
      throw Error("decider '" + spec.decider + "' has no copy consistent with hidden value '" + v.label + "'");
    eu += v.probability * (u / mass);
  }
  return eu;
}

// ---------------------------------------------------------------------------
// Lifespan observation test

/// A length of subjective time that may be infinite. Infinity is a flag, never
/// a floating-point value.
struct Span {
  double value = 0.0;
  bool infinite = false;

  static Span finite(double v) { return {v, false}; }
  static Span unbounded() { return {0.0, true}; }
};

struct NoAfterlife {};
struct ConstantAfterlife {
  Span duration;
};
struct ExponentialTail {
  double half_life = 1.0; // survival fraction 2^(-t/half_life) past the normal lifespan
};
using Afterlife = std::variant<NoAfterlife, ConstantAfterlife, ExponentialTail>;

struct SurvivalModel {
  double normal_lifespan = 1.0;
  Afterlife afterlife = NoAfterlife{};
};

/// Integral measure accumulated past the normal lifespan up to `horizon`,
/// or nullopt when it is infinite.
inline std::optional<double> afterlife_integral(const SurvivalModel& model, Span horizon) {
  const double L = model.normal_lifespan;
  if (std::holds_alternative<NoAfterlife>(model.afterlife)) return 0.0;
  if (const auto* c = std::get_if<ConstantAfterlife>(&model.afterlife)) {
    if (horizon.infinite && c->duration.infinite) return std::nullopt;
    if (horizon.infinite) return c->duration.value;
    if (c->duration.infinite) return horizon.value - L;
    return std::min(horizon.value - L, c->duration.value);
  }
  const double h = std::get<ExponentialTail>(model.afterlife).half_life;
  const double scale = h / std::numbers::ln2;
  if (horizon.infinite) return scale;
  return scale * -std::expm1(-(horizon.value - L) * std::numbers::ln2 / h);
}

/// Probability that a random observer-moment up to `horizon` lies within the
/// normal lifespan. Survival is 1 throughout the normal lifespan.
inline double lifespan_observation_probability(const SurvivalModel& model, Span horizon) {
  const double L = model.normal_lifespan;
  if (!(L > 0.0) || !std::isfinite(L)) throw Error("normal lifespan must be positive");
  if (const auto* c = std::get_if<ConstantAfterlife>(&model.afterlife))
    if (!c->duration.infinite && !(c->duration.value > 0.0)) throw Error("afterlife duration must be positive");
  if (const auto* e = std::get_if<ExponentialTail>(&model.afterlife))
    if (!(e->half_life > 0.0)) throw Error("half-life must be positive");
  if (!horizon.infinite && !(horizon.value >= L)) throw Error("horizon is shorter than the normal lifespan");
  const auto tail = afterlife_integral(model, horizon);
  if (!tail) return 0.0; // infinitely more observer-moments outside the normal lifespan
  return L / (L + *tail);
}

// ---------------------------------------------------------------------------
// Semantics

enum class SemanticsMode { standard, qif_renormalize };

inline std::string_view to_string(SemanticsMode m) {
  return m == SemanticsMode::standard ? "standard" : "qif";
}

struct AdjustedPoint {
  double clock = 0.0;
  Cause cause = Cause::initial;
  std::string event;
  std::map<std::string, double> measure; // per kind
  std::map<std::string, double> factor;  // renormalisation factor on lineage measure, qif only

  double total() const {
    double m = 0.0;
    for (const auto& [k, v] : measure) m += v;
    return m;
  }
};

struct AdjustedTrajectory {
  SemanticsMode mode = SemanticsMode::standard;
  bool fallacy_demonstration = false;
  std::vector<AdjustedPoint> points;

  double integral(std::string_view kind, double from, double to) const {
    return integrate_levels(
        points,
        [&](const AdjustedPoint& p) {
          if (kind.empty()) return p.total();
          auto it = p.measure.find(std::string(kind));
          return it == p.measure.end() ? 0.0 : it->second;
        },
        from, to);
  }
};

/// Standard mode passes measures through. qif_renormalize reads every split as
/// handing each child the parent's full measure, and after each death makes up
/// whatever lineage a world lost below its initial level by rescaling the
/// kind's surviving branches, so deaths never lower the kind's total. It exists
/// to show the consequences of that reading.
inline AdjustedTrajectory apply_semantics(const std::vector<TrajectoryPoint>& points, SemanticsMode mode) {
  AdjustedTrajectory out;
  out.mode = mode;
  out.fallacy_demonstration = mode == SemanticsMode::qif_renormalize;
  std::map<std::string, double> factor;
  const auto world_lineage = [](const KindLevel* l, int w) {
    if (l == nullptr) return 0.0;
    auto it = l->lineage_by_world.find(w);
    return it == l->lineage_by_world.end() ? 0.0 : it->second;
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    AdjustedPoint ap{pt.clock, pt.cause, pt.event, {}, {}};
    for (const auto& [kind, level] : pt.levels) {
      if (mode == SemanticsMode::standard) {
        ap.measure[kind] = level.measure;
        continue;
      }
      double& f = factor.try_emplace(kind, 1.0).first->second;
      double value = level.lineage * f;
      const bool deadly = pt.cause == Cause::death || pt.cause == Cause::expiry;
      if (deadly && i > 0) {
        const auto prev_it = points[i - 1].levels.find(kind);
        const auto orig_it = points.front().levels.find(kind);
        const KindLevel* prev = prev_it == points[i - 1].levels.end() ? nullptr : &prev_it->second;
        const KindLevel* orig = orig_it == points.front().levels.end() ? nullptr : &orig_it->second;
        const double before_raw = prev ? prev->lineage : 0.0;
        double deficit = 0.0;
        if (prev)
          for (const auto& [w, b] : prev->lineage_by_world)
            deficit += std::max(0.0, std::min(b, world_lineage(orig, w)) - world_lineage(&level, w));
        const double before = out.points.back().measure.count(kind) ? out.points.back().measure.at(kind) : 0.0;
        const double target = before - f * std::max(0.0, before_raw - level.lineage - deficit);
        if (target > value) {
          if (!(level.lineage > 0.0))
            throw Error("renormalisation undefined: '" + kind + "' has no measure left in any branch");
          f = target / level.lineage;
          value = target;
        }
      }
      ap.measure[kind] = value;
      ap.factor[kind] = f;
    }
    out.points.push_back(std::move(ap));
  }
  return out;
}

/// Branch-level measure under the renormalised reading, given the per-kind
/// factors in force (from an AdjustedPoint).
inline double qif_measure_of(const WorldState& state, const OutcomePredicate& pred,
                             const std::map<std::string, double>& factors) {
  double m = 0.0;
  for (const auto& b : state.branches) {
    if (!(b.weight.value > 0.0)) continue;
    for (const auto& p : b.populations) {
      if (!p.living() || !pred.matches(b, p)) continue;
      auto it = factors.find(p.kind);
      m += b.root_weight * p.count * p.consciousness * (it == factors.end() ? 1.0 : it->second);
    }
  }
  return m;
}

} // namespace mwm
