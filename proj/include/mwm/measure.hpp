#pragma once

// Measure of consciousness, effective probability and integral measure.
//
// measure    = sum over leaves and living cohorts of weight * count * degree
// effective  = measure(outcome) / measure(reference class)
// integral   = subjective-time integral of measure (observer-moments)

#include "mwm/core.hpp"

#include <set>

namespace mwm {

/// Raised when a probability is asked of a reference class with no measure,
/// e.g. conditioning on "alive" after everyone has died.
class EmptyReferenceClass : public Error {
public:
  using Error::Error;
};

struct PredicateTerm {
  enum class Field { kind, status, label, last, branch, worlds };
  Field field = Field::kind;
  std::string value;       // kind label, status name, outcome label or branch id
  int first = 1, last = 1; // worlds range
  bool negate = false;

  bool test(const Branch& b, const Population& p) const {
    bool r = false;
    switch (field) {
    case Field::kind: r = p.kind == value; break;
    case Field::status:
      if (value == "living") r = p.living();
      else r = to_string(p.status) == value;
      break;
    case Field::label: r = b.has_label(value); break;
    case Field::last: r = b.outcome_label() == value; break;
    case Field::branch: {
      const std::string id = b.id();
      r = id == value || (id.size() > value.size() && id.compare(0, value.size(), value) == 0 && id[value.size()] == '/');
      break;
    }
    case Field::worlds: r = b.world() >= first && b.world() <= last; break;
    }
    return r != negate;
  }
  friend bool operator==(const PredicateTerm&, const PredicateTerm&) = default;
};

/// Conjunction of terms over (outcome path, person kind, status). The empty
/// predicate selects every cohort.
struct OutcomePredicate {
  std::vector<PredicateTerm> terms;

  bool matches(const Branch& b, const Population& p) const {
    for (const auto& t : terms)
      if (!t.test(b, p)) return false;
    return true;
  }

  /// True when the predicate only restricts person kind, so kind-level
  /// trajectories are enough to evaluate it.
  bool kind_level() const {
    return std::all_of(terms.begin(), terms.end(),
                       [](const PredicateTerm& t) { return t.field == PredicateTerm::Field::kind && !t.negate; });
  }

  OutcomePredicate operator&&(const OutcomePredicate& other) const {
    OutcomePredicate out = *this;
    out.terms.insert(out.terms.end(), other.terms.begin(), other.terms.end());
    return out;
  }

  static OutcomePredicate any() { return {}; }
  static OutcomePredicate of_kind(std::string k) { return {{{PredicateTerm::Field::kind, std::move(k)}}}; }
  static OutcomePredicate with_status(std::string s) { return {{{PredicateTerm::Field::status, std::move(s)}}}; }
  static OutcomePredicate with_label(std::string l) { return {{{PredicateTerm::Field::label, std::move(l)}}}; }
  static OutcomePredicate with_last(std::string l) { return {{{PredicateTerm::Field::last, std::move(l)}}}; }
  static OutcomePredicate in_branch(std::string id) { return {{{PredicateTerm::Field::branch, std::move(id)}}}; }
  static OutcomePredicate in_worlds(int first, int last) {
    return {{{PredicateTerm::Field::worlds, {}, first, last}}};
  }

  friend bool operator==(const OutcomePredicate&, const OutcomePredicate&) = default;
};

inline double measure_of(const WorldState& state, const OutcomePredicate& pred) {
  double m = 0.0;
  for (const auto& b : state.branches)
    for (const auto& p : b.populations)
      if (p.living() && pred.matches(b, p)) m += b.weight.value * p.count * p.consciousness;
  return m;
}

struct MeasureReport {
  double measure = 0.0;
  double total = 0.0;
  double effective_probability = 0.0;
};

inline MeasureReport make_report(double measure, double total) {
  if (!(total > 0.0)) throw EmptyReferenceClass("reference class has zero measure");
  return {measure, total, measure / total};
}

/// measure(pred and condition) / measure(condition). Without a condition the
/// denominator is the total measure of the state.
inline double effective_probability(const WorldState& state, const OutcomePredicate& pred,
                                    const std::optional<OutcomePredicate>& conditional_on = std::nullopt) {
  const OutcomePredicate cond = conditional_on.value_or(OutcomePredicate::any());
  const double denom = measure_of(state, cond);
  if (!(denom > 0.0)) throw EmptyReferenceClass("conditioning class has zero measure");
  return measure_of(state, pred && cond) / denom;
}

// ---------------------------------------------------------------------------
// Recorded runs

enum class Cause { initial, split, death, decline, time, expiry, stage, mark };

inline std::string_view to_string(Cause c) {
  switch (c) {
  case Cause::initial: return "initial";
  case Cause::split: return "split";
  case Cause::death: return "death";
  case Cause::decline: return "decline";
  case Cause::time: return "time";
  case Cause::expiry: return "expiry";
  case Cause::stage: return "stage";
  case Cause::mark: return "mark";
  }
  return "?";
}

/// Per-kind totals. `lineage` ignores split fractions (root weight * count *
/// degree on branches of nonzero weight) and is what measure-conserving
/// renormalisation works from.
struct KindLevel {
  double measure = 0.0;
  double lineage = 0.0;
  std::map<int, double> lineage_by_world;
};

/// Levels hold from `clock` until the next point.
struct TrajectoryPoint {
  double clock = 0.0;
  Cause cause = Cause::initial;
  std::string event;
  std::map<std::string, KindLevel> levels;

  double total() const {
    double m = 0.0;
    for (const auto& [k, l] : levels) m += l.measure;
    return m;
  }
};

struct StepRecord {
  double start = 0.0;
  double duration = 0.0;
  std::optional<WorldState> state; // state at the start of the step
};

struct Checkpoint {
  double clock = 0.0;
  std::size_t point = 0;
  WorldState state;
};

struct Timeline {
  std::vector<TrajectoryPoint> points;
  std::vector<StepRecord> steps;
  std::map<std::string, Checkpoint> marks;
  WorldState final_state;
  double initial_total = 0.0;

  double duration() const { return final_state.clock; }
};

struct RecordOptions {
  bool keep_step_states = true;
};

namespace detail {

/// Levels per kind, leaving out dying cohorts that expire within `expired_by`.
inline std::map<std::string, KindLevel> levels_of(const WorldState& s, double expired_by = -1.0) {
  std::map<std::string, KindLevel> out;
  for (const auto& k : s.kinds) out[k.label];
  // Consecutive cohorts usually share kind and world; skip the map lookups then.
  const std::string* kind = nullptr;
  KindLevel* level = nullptr;
  int world = 0;
  double* by_world = nullptr;
  for (const auto& b : s.branches) {
    for (const auto& p : b.populations) {
      if (!p.living()) continue;
      if (p.status == Vitality::dying && p.remaining <= expired_by) continue;
      if (kind == nullptr || *kind != p.kind) {
        kind = &p.kind;
        level = &out[p.kind];
        by_world = nullptr;
      }
      level->measure += b.weight.value * p.count * p.consciousness;
      if (b.weight.value > 0.0) {
        const double lin = b.root_weight * p.count * p.consciousness;
        level->lineage += lin;
        if (by_world == nullptr || world != b.world()) {
          world = b.world();
          by_world = &level->lineage_by_world[world];
        }
        *by_world += lin;
      }
    }
  }
  return out;
}

inline Cause cause_of(const Event& e) {
  switch (e.index()) {
  case 0: return Cause::split;
  case 1: return Cause::death;
  case 2: return Cause::decline;
  case 3: return Cause::time;
  case 4: return Cause::stage;
  default: return Cause::mark;
  }
}

inline double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

} // namespace detail

/// Replays a script, sampling per-kind measure at every event boundary and at
/// every instant a dying cohort expires inside a time step.
inline Timeline record(const Script& script, RecordOptions options = {}) {
  Timeline tl;
  WorldState state = script.initial;
  tl.initial_total = state.total_measure();
  tl.points.push_back({state.clock, Cause::initial, "initial", detail::levels_of(state)});
  for (const auto& event : script.events) {
    if (const auto* step = std::get_if<TimeStep>(&event)) {
      if (!(step->dt > 0.0) || !std::isfinite(step->dt)) throw Error("time step must be positive");
      std::set<double> expiries;
      for (const auto& b : state.branches)
        for (const auto& p : b.populations)
          if (p.status == Vitality::dying && p.remaining < step->dt) expiries.insert(p.remaining);
      tl.steps.push_back({state.clock, step->dt,
                          options.keep_step_states ? std::optional<WorldState>(state) : std::nullopt});
      for (double r : expiries)
        tl.points.push_back({state.clock + r, Cause::expiry, "expiry", detail::levels_of(state, r)});
      const bool ends_with_expiry = std::any_of(state.branches.begin(), state.branches.end(), [&](const Branch& b) {
        return std::any_of(b.populations.begin(), b.populations.end(), [&](const Population& p) {
          return p.status == Vitality::dying && p.remaining <= step->dt && !expiries.count(p.remaining);
        });
      });
      state = apply(std::move(state), event);
      tl.points.push_back({state.clock, ends_with_expiry ? Cause::expiry : Cause::time, "time",
                           detail::levels_of(state)});
      continue;
    }
    state = apply(std::move(state), event);
    tl.points.push_back({state.clock, detail::cause_of(event), describe(event), detail::levels_of(state)});
    if (const auto* mark = std::get_if<MarkEvent>(&event))
      tl.marks[mark->name] = Checkpoint{state.clock, tl.points.size() - 1, state};
  }
  tl.final_state = std::move(state);
  return tl;
}

/// Per-kind total measure at every event boundary of a script.
inline std::vector<TrajectoryPoint> measure_trajectory(const Script& script) {
  return record(script, {.keep_step_states = false}).points;
}

/// Subjective-time integral of measure_of(pred) over [from, to], computed
/// exactly from the states recorded at the start of each time step.
inline double integral_measure(const Timeline& timeline, const OutcomePredicate& pred, double from, double to) {
  if (!(from >= 0.0 && from <= to && to <= timeline.duration() + kFractionTolerance))
    throw Error("integration window lies outside the recorded timeline");
  double total = 0.0;
  for (const auto& step : timeline.steps) {
    if (!step.state) throw Error("timeline was recorded without step states");
    for (const auto& b : step.state->branches) {
      for (const auto& p : b.populations) {
        if (!p.living() || !pred.matches(b, p)) continue;
        const double active = p.status == Vitality::dying ? std::min(step.duration, p.remaining) : step.duration;
        total += b.weight.value * p.count * p.consciousness * detail::overlap(step.start, step.start + active, from, to);
      }
    }
  }
  return total;
}

/// Integral of a piecewise-constant per-kind series over [from, to]; `value`
/// maps a point to the level holding until the next point.
template <class Points, class Value>
double integrate_levels(const Points& points, Value value, double from, double to) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double len = detail::overlap(points[i].clock, points[i + 1].clock, from, to);
    if (len > 0.0) total += value(points[i]) * len;
  }
  return total;
}

/// Kind-level integral measure straight from a trajectory (no step states
/// needed). An empty kind integrates everyone.
inline double integral_of_kind(const std::vector<TrajectoryPoint>& points, std::string_view kind, double from,
                               double to) {
  return integrate_levels(
      points,
      [&](const TrajectoryPoint& p) {
        if (kind.empty()) return p.total();
        auto it = p.levels.find(std::string(kind));
        return it == p.levels.end() ? 0.0 : it->second.measure;
      },
      from, to);
}

} // namespace mwm
