#pragma once

// Branch forest, observer populations and the event calculus that evolves them
// in subjective time.
//
// A WorldState is a value: every operation takes a state and returns a new one,
// so snapshots can be kept and shared freely. Branches are leaves of the world
// tree; interior nodes survive only as the shared outcome-label path each leaf
// points to.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace mwm {

/// Absolute tolerance on split-fraction sums and probability normalisation.
inline constexpr double kFractionTolerance = 1e-9;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Squared-amplitude share of a branch. Not range checked on construction so
/// that validate() can report hand-built bad states.
struct Weight {
  double value = 1.0;
  friend bool operator==(const Weight&, const Weight&) = default;
};

struct PersonKind {
  std::string label;
  double baseline_quality = 1.0;
  friend bool operator==(const PersonKind&, const PersonKind&) = default;
};

enum class Vitality { alive, dying, dead };

inline std::string_view to_string(Vitality v) {
  switch (v) {
  case Vitality::alive: return "alive";
  case Vitality::dying: return "dying";
  case Vitality::dead: return "dead";
  }
  return "?";
}

/// A cohort of identical observer copies inside one branch.
struct Population {
  std::string kind;
  double count = 1.0;
  Vitality status = Vitality::alive;
  double remaining = 0.0; // subjective time left, dying only
  double consciousness = 1.0;
  double quality = 1.0;
  // Consciousness degrees still to come from a decline schedule; the front
  // entry takes effect at the end of the next time step.
  std::vector<double> pending_degrees;

  bool living() const { return status != Vitality::dead; }
  /// Measure per unit branch weight.
  double density() const { return living() ? count * consciousness : 0.0; }

  friend bool operator==(const Population&, const Population&) = default;
};

/// The populations of one branch. Children of a split share their parent's
/// list until one of them is changed; every non-const access detaches first.
class Cohorts {
public:
  using value_type = Population;
  using iterator = std::vector<Population>::iterator;
  using const_iterator = std::vector<Population>::const_iterator;
  using size_type = std::size_t;

  Cohorts() = default;
  Cohorts(std::vector<Population> v)
      : data_(v.empty() ? nullptr : std::make_shared<std::vector<Population>>(std::move(v))) {}
  Cohorts(std::initializer_list<Population> l) : Cohorts(std::vector<Population>(l)) {}

  const_iterator begin() const { return view().begin(); }
  const_iterator end() const { return view().end(); }
  iterator begin() { return own().begin(); }
  iterator end() { return own().end(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return size() == 0; }
  const Population& operator[](std::size_t i) const { return view()[i]; }
  Population& operator[](std::size_t i) { return own()[i]; }
  const Population& back() const { return view().back(); }
  Population& back() { return own().back(); }
  void push_back(Population p) { own().push_back(std::move(p)); }
  const std::vector<Population>& view() const { return data_ ? *data_ : empty_list(); }

  friend bool operator==(const Cohorts& a, const Cohorts& b) { return a.view() == b.view(); }
  friend bool operator==(const Cohorts& a, const std::vector<Population>& b) { return a.view() == b; }

private:
  static const std::vector<Population>& empty_list() {
    static const std::vector<Population> none;
    return none;
  }

  std::vector<Population>& own() {
    if (!data_) data_ = std::make_shared<std::vector<Population>>();
    else if (data_.use_count() > 1) data_ = std::make_shared<std::vector<Population>>(*data_);
    else std::atomic_thread_fence(std::memory_order_acquire); // pairs with the release of other holders
    return *data_;
  }

  std::shared_ptr<std::vector<Population>> data_;
};

/// One node of a branch's outcome-label path. Children of a split share their
/// parent node, so paths cost one node per branch.
struct PathNode {
  std::shared_ptr<const PathNode> parent;
  std::string label;
  double fraction = 1.0;    // share taken at the split; for a root, its weight
  double split_total = 1.0; // sum of all fractions recorded at that split
  int world = 1;            // initial ensemble member the lineage descends from
};
using PathPtr = std::shared_ptr<const PathNode>;

inline PathPtr make_root(std::string label, double weight, int world) {
  return std::make_shared<const PathNode>(PathNode{nullptr, std::move(label), weight, 1.0, world});
}

struct Branch {
  PathPtr path;
  Weight weight;
  double root_weight = 1.0; // weight of the initial branch this one descends from
  Cohorts populations;

  const std::string& outcome_label() const { return path->label; }
  int world() const { return path->world; }
  bool is_root() const { return path->parent == nullptr; }

  /// Outcome labels from the root down to this branch (root id first).
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const PathNode* n = path.get(); n != nullptr; n = n->parent.get()) out.push_back(n->label);
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::string id() const {
    std::string out;
    for (const auto& l : labels()) {
      if (!out.empty()) out += '/';
      out += l;
    }
    return out;
  }

  std::optional<std::string> parent_id() const {
    if (is_root()) return std::nullopt;
    Branch p{path->parent, weight, root_weight, {}};
    return p.id();
  }

  bool has_label(std::string_view label) const {
    for (const PathNode* n = path.get(); n != nullptr; n = n->parent.get())
      if (n->label == label) return true;
    return false;
  }

  double measure() const {
    double m = 0.0;
    for (const auto& p : populations) m += weight.value * p.density();
    return m;
  }

  double alive_count(std::string_view kind) const {
    double c = 0.0;
    for (const auto& p : populations)
      if (p.kind == kind && p.status == Vitality::alive) c += p.count;
    return c;
  }
};

enum class Stage { pre_split, post_split_pre_reveal, post_reveal };

inline std::string_view to_string(Stage s) {
  switch (s) {
  case Stage::pre_split: return "pre_split";
  case Stage::post_split_pre_reveal: return "post_split_pre_reveal";
  case Stage::post_reveal: return "post_reveal";
  }
  return "?";
}

struct WorldState {
  std::vector<PersonKind> kinds;
  std::vector<Branch> branches; // leaves, in creation order
  double clock = 0.0;
  std::map<std::string, double> integral_measure; // per kind label
  Stage stage = Stage::pre_split;

  const PersonKind* find_kind(std::string_view label) const {
    for (const auto& k : kinds)
      if (k.label == label) return &k;
    return nullptr;
  }

  std::optional<std::size_t> find_branch(std::string_view id) const {
    for (std::size_t i = 0; i < branches.size(); ++i)
      if (branches[i].id() == id) return i;
    return std::nullopt;
  }

  /// Total measure of one kind, or of everyone when kind is empty.
  double total_measure(std::string_view kind = {}) const {
    double m = 0.0;
    for (const auto& b : branches)
      for (const auto& p : b.populations)
        if (kind.empty() || p.kind == kind) m += b.weight.value * p.density();
    return m;
  }
};

struct Outcome {
  std::string label;
  double fraction = 0.0;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct DeathMode {
  enum class Kind { instant, lingering };
  Kind kind = Kind::instant;
  double duration = 0.0;          // lingering only
  double quality_while_dying = 0.0;

  static DeathMode instant() { return {}; }
  static DeathMode lingering(double duration, double quality) { return {Kind::lingering, duration, quality}; }
  friend bool operator==(const DeathMode&, const DeathMode&) = default;
};

namespace detail {

inline std::size_t require_branch(const WorldState& s, std::string_view id) {
  auto i = s.find_branch(id);
  if (!i) throw Error("unknown branch '" + std::string(id) + "'");
  return *i;
}

inline void require_kind(const WorldState& s, std::string_view kind) {
  if (s.find_kind(kind) == nullptr) throw Error("unknown person kind '" + std::string(kind) + "'");
}

inline void check_outcomes(std::span<const Outcome> outcomes) {
  if (outcomes.empty()) throw Error("split needs at least one outcome");
  double sum = 0.0;
  for (const auto& o : outcomes) {
    if (!(o.fraction >= 0.0) || !std::isfinite(o.fraction))
      throw Error("split fraction for '" + o.label + "' is negative or not finite");
    sum += o.fraction;
  }
  if (std::abs(sum - 1.0) > kFractionTolerance)
    throw Error("split fractions sum to " + std::to_string(sum) + ", expected 1");
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    for (std::size_t j = i + 1; j < outcomes.size(); ++j)
      if (outcomes[i].label == outcomes[j].label)
        throw Error("duplicate outcome label '" + outcomes[i].label + "' in split");
}

inline double fraction_sum(std::span<const Outcome> outcomes) {
  double sum = 0.0;
  for (const auto& o : outcomes) sum += o.fraction;
  return sum;
}

/// Appends one child per outcome; the parent is consumed.
inline void split_into(std::vector<Branch>& out, Branch parent, std::span<const Outcome> outcomes, double total) {
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    Branch child;
    child.path = std::make_shared<const PathNode>(PathNode{parent.path, o.label, o.fraction, total, parent.world()});
    child.weight = Weight{parent.weight.value * o.fraction};
    child.root_weight = parent.root_weight;
    if (i + 1 == outcomes.size()) child.populations = std::move(parent.populations);
    else child.populations = parent.populations;
    out.push_back(std::move(child));
  }
}

inline void kill_in(Branch& b, std::string_view kind, double fraction, const DeathMode& mode) {
  const auto& view = std::as_const(b.populations);
  if (std::none_of(view.begin(), view.end(), [&](const Population& p) {
        return p.kind == kind && p.status == Vitality::alive && p.count > 0.0;
      }))
    return;
  std::vector<Population> added;
  for (auto& p : b.populations) {
    if (p.kind != kind || p.status != Vitality::alive || p.count <= 0.0) continue;
    const double killed = p.count * fraction;
    if (killed <= 0.0) continue;
    p.count = fraction >= 1.0 ? 0.0 : p.count - killed;
    Population moved = p;
    moved.count = killed;
    if (mode.kind == DeathMode::Kind::lingering) {
      moved.status = Vitality::dying;
      moved.remaining = mode.duration;
      moved.quality = mode.quality_while_dying;
    } else {
      moved.status = Vitality::dead;
      moved.remaining = 0.0;
      moved.pending_degrees.clear();
    }
    added.push_back(std::move(moved));
  }
  for (auto& a : added) {
    if (a.status == Vitality::dead) {
      auto it = std::find_if(b.populations.begin(), b.populations.end(),
                             [&](const Population& p) { return p.kind == a.kind && p.status == Vitality::dead; });
      if (it != b.populations.end()) {
        it->count += a.count;
        continue;
      }
    }
    b.populations.push_back(std::move(a));
  }
}

inline void check_death_args(double fraction, const DeathMode& mode) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("fraction killed must lie in [0,1]");
  if (mode.kind == DeathMode::Kind::lingering && !(mode.duration > 0.0))
    throw Error("lingering death needs a positive duration");
}

inline void check_schedule(std::span<const double> schedule) {
  if (schedule.empty()) throw Error("decline schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] >= 0.0 && schedule[i] <= 1.0)) throw Error("consciousness degree outside [0,1]");
    if (i > 0 && schedule[i] > schedule[i - 1]) throw Error("decline schedule must be non-increasing");
  }
}

inline void decline_in(Branch& b, std::string_view kind, std::span<const double> schedule) {
  for (auto& p : b.populations) {
    if (p.kind != kind || !p.living()) continue;
    if (schedule.front() > p.consciousness + kFractionTolerance)
      throw Error("decline would raise the consciousness degree of '" + p.kind + "'");
    p.consciousness = schedule.front();
    p.pending_degrees.assign(schedule.begin() + 1, schedule.end());
  }
}

inline void advance_in(WorldState& s, double dt) {
  const std::string* kind = nullptr;
  double* acc = nullptr;
  for (auto& b : s.branches) {
    bool changes = false;
    for (const auto& p : std::as_const(b.populations)) {
      if (!p.living()) continue;
      const double active = p.status == Vitality::dying ? std::min(dt, p.remaining) : dt;
      if (kind == nullptr || *kind != p.kind) {
        kind = &p.kind;
        acc = &s.integral_measure[p.kind];
      }
      *acc += b.weight.value * p.count * p.consciousness * active;
      changes = changes || p.status == Vitality::dying || !p.pending_degrees.empty();
    }
    if (!changes) continue;
    for (auto& p : b.populations) {
      if (!p.living()) continue;
      if (p.status == Vitality::dying) {
        p.remaining -= dt;
        if (p.remaining <= 0.0) {
          p.remaining = 0.0;
          p.status = Vitality::dead;
          p.pending_degrees.clear();
        }
      }
      if (!p.pending_degrees.empty()) {
        p.consciousness = p.pending_degrees.front();
        p.pending_degrees.erase(p.pending_degrees.begin());
      }
    }
  }
  s.clock += dt;
}

} // namespace detail

/// Replaces a leaf by one child per outcome. Child weight is the parent weight
/// times its fraction; populations are copied into every child.
inline WorldState split(const WorldState& state, std::string_view branch, std::span<const Outcome> outcomes) {
  const std::size_t idx = detail::require_branch(state, branch);
  detail::check_outcomes(outcomes);
  WorldState out;
  out.kinds = state.kinds;
  out.clock = state.clock;
  out.integral_measure = state.integral_measure;
  out.stage = Stage::post_split_pre_reveal;
  out.branches.reserve(state.branches.size() + outcomes.size() - 1);
  for (std::size_t i = 0; i < state.branches.size(); ++i) {
    if (i == idx) detail::split_into(out.branches, state.branches[i], outcomes, detail::fraction_sum(outcomes));
    else out.branches.push_back(state.branches[i]);
  }
  return out;
}

inline WorldState split(const WorldState& state, std::string_view branch, std::initializer_list<Outcome> outcomes) {
  return split(state, branch, std::span<const Outcome>(outcomes.begin(), outcomes.size()));
}

/// Kills fraction_killed of the alive copies of `kind` in one branch. Instant
/// deaths are recorded as a dead cohort; lingering ones become a dying cohort
/// that keeps its measure until the duration has elapsed.
inline WorldState apply_death(const WorldState& state, std::string_view branch, std::string_view kind,
                              double fraction_killed, const DeathMode& mode = DeathMode::instant()) {
  const std::size_t idx = detail::require_branch(state, branch);
  detail::require_kind(state, kind);
  detail::check_death_args(fraction_killed, mode);
  if (!(state.branches[idx].alive_count(kind) > 0.0))
    throw Error("no alive '" + std::string(kind) + "' in branch '" + std::string(branch) + "'");
  WorldState out = state;
  if (fraction_killed > 0.0) detail::kill_in(out.branches[idx], kind, fraction_killed, mode);
  return out;
}

/// Sets the consciousness degree of living `kind` copies to schedule[0]; each
/// later entry takes effect at the end of one further time step.
inline WorldState apply_decline(const WorldState& state, std::string_view branch, std::string_view kind,
                                std::span<const double> schedule) {
  const std::size_t idx = detail::require_branch(state, branch);
  detail::require_kind(state, kind);
  detail::check_schedule(schedule);
  WorldState out = state;
  detail::decline_in(out.branches[idx], kind, schedule);
  return out;
}

/// Accumulates integral measure over dt of subjective time and retires dying
/// cohorts whose remaining time has run out.
inline WorldState advance_time(const WorldState& state, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("time step must be positive");
  WorldState out = state;
  detail::advance_in(out, dt);
  return out;
}

inline std::vector<PersonKind> kinds_of(std::span<const Population> pops) {
  std::vector<PersonKind> kinds;
  for (const auto& p : pops)
    if (std::none_of(kinds.begin(), kinds.end(), [&](const PersonKind& k) { return k.label == p.kind; }))
      kinds.push_back({p.kind, 1.0});
  return kinds;
}

/// Single root branch "root" carrying the given populations.
inline WorldState quantum_state(std::vector<Population> populations, std::vector<PersonKind> kinds = {},
                                double weight = 1.0) {
  WorldState s;
  s.kinds = kinds.empty() ? kinds_of(populations) : std::move(kinds);
  s.branches.push_back(Branch{make_root("root", weight, 1), Weight{weight}, weight, std::move(populations)});
  return s;
}

/// n equally weighted worlds "world1".."worldN", each with a copy of the
/// template. Stands in for an infinite homogeneous universe via density ratios.
inline WorldState classical_ensemble(int n, std::span<const Population> templ, std::vector<PersonKind> kinds = {}) {
  if (n < 1) throw Error("ensemble needs at least one world");
  WorldState s;
  s.kinds = kinds.empty() ? kinds_of(templ) : std::move(kinds);
  const double w = 1.0 / n;
  s.branches.reserve(n);
  for (int i = 1; i <= n; ++i)
    s.branches.push_back(Branch{make_root("world" + std::to_string(i), w, i), Weight{w}, w,
                                std::vector<Population>(templ.begin(), templ.end())});
  return s;
}

struct Violation {
  std::string branch;
  std::string message;
  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Lists invariant violations; empty for a well-formed state.
inline std::vector<Violation> validate(const WorldState& state) {
  std::vector<Violation> out;
  for (const auto& b : state.branches) {
    const std::string id = b.path ? b.id() : std::string("<no path>");
    if (!b.path) {
      out.push_back({id, "branch has no outcome path"});
      continue;
    }
    if (!(b.weight.value >= 0.0)) out.push_back({id, "negative weight"});
    double product = 1.0;
    const PathNode* n = b.path.get();
    for (; n->parent != nullptr; n = n->parent.get()) {
      if (!(n->fraction >= 0.0 && n->fraction <= 1.0)) out.push_back({id, "split fraction outside [0,1] at '" + n->label + "'"});
      if (std::abs(n->split_total - 1.0) > kFractionTolerance)
        out.push_back({id, "split at '" + n->label + "' does not sum to 1"});
      product *= n->fraction;
    }
    if (std::abs(n->fraction - b.root_weight) > kFractionTolerance * std::max(1.0, std::abs(b.root_weight)))
      out.push_back({id, "root weight disagrees with recorded root"});
    const double expected = b.root_weight * product;
    if (std::abs(expected - b.weight.value) > kFractionTolerance * std::max(1.0, std::abs(expected)))
      out.push_back({id, "weight disagrees with recorded split fractions"});
    for (const auto& p : b.populations) {
      if (!(p.count >= 0.0)) out.push_back({id, "negative count for '" + p.kind + "'"});
      if (!(p.consciousness >= 0.0 && p.consciousness <= 1.0))
        out.push_back({id, "consciousness degree out of range for '" + p.kind + "'"});
      if (p.status == Vitality::dying && !(p.remaining > 0.0))
        out.push_back({id, "dying cohort of '" + p.kind + "' has no remaining time"});
      if (state.find_kind(p.kind) == nullptr) out.push_back({id, "undeclared person kind '" + p.kind + "'"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scripted events

struct BranchSelector {
  enum class Kind { all, id, last, has, alive, worlds };
  Kind kind = Kind::all;
  std::string label; // id, outcome label or person kind depending on kind
  int first = 1, last = 1;

  static BranchSelector everything() { return {}; }
  static BranchSelector by_id(std::string id) { return {Kind::id, std::move(id)}; }
  static BranchSelector by_last(std::string l) { return {Kind::last, std::move(l)}; }
  static BranchSelector by_label(std::string l) { return {Kind::has, std::move(l)}; }
  static BranchSelector alive_kind(std::string k) { return {Kind::alive, std::move(k)}; }
  static BranchSelector by_worlds(int first, int last) { return {Kind::worlds, {}, first, last}; }

  bool matches(const Branch& b) const {
    switch (kind) {
    case Kind::all: return true;
    case Kind::id: return b.id() == label;
    case Kind::last: return b.outcome_label() == label;
    case Kind::has: return b.has_label(label);
    case Kind::alive: return b.alive_count(label) > 0.0;
    case Kind::worlds: return b.world() >= first && b.world() <= last;
    }
    return false;
  }
  friend bool operator==(const BranchSelector&, const BranchSelector&) = default;
};

struct SplitEvent {
  BranchSelector where;
  std::vector<Outcome> outcomes;
};
struct DeathEvent {
  BranchSelector where;
  std::string kind;
  double fraction_killed = 1.0;
  DeathMode mode;
};
struct DeclineEvent {
  BranchSelector where;
  std::string kind;
  std::vector<double> schedule;
};
struct TimeStep {
  double dt = 1.0;
};
struct StageEvent {
  Stage stage = Stage::post_reveal;
};
struct MarkEvent {
  std::string name;
};

using Event = std::variant<SplitEvent, DeathEvent, DeclineEvent, TimeStep, StageEvent, MarkEvent>;

inline std::string describe(const Event& e) {
  struct V {
    std::string operator()(const SplitEvent& s) const {
      std::string out = "split";
      for (const auto& o : s.outcomes) out += " " + o.label;
      return out;
    }
    std::string operator()(const DeathEvent& d) const { return "death " + d.kind; }
    std::string operator()(const DeclineEvent& d) const { return "decline " + d.kind; }
    std::string operator()(const TimeStep&) const { return "time"; }
    std::string operator()(const StageEvent& s) const { return "stage " + std::string(to_string(s.stage)); }
    std::string operator()(const MarkEvent& m) const { return "mark " + m.name; }
  };
  return std::visit(V{}, e);
}

/// Applies one scripted event to every matching leaf. A selector that matches
/// no leaf, or a death that finds nobody alive to kill, leaves the state as is.
inline WorldState apply(WorldState state, const Event& event) {
  if (const auto* s = std::get_if<SplitEvent>(&event)) {
    detail::check_outcomes(s->outcomes);
    const double total = detail::fraction_sum(s->outcomes);
    std::vector<Branch> next;
    next.reserve(state.branches.size() * s->outcomes.size());
    bool any = false;
    for (auto& b : state.branches) {
      if (s->where.matches(b)) {
        any = true;
        detail::split_into(next, std::move(b), s->outcomes, total);
      } else {
        next.push_back(std::move(b));
      }
    }
    state.branches = std::move(next);
    if (any) state.stage = Stage::post_split_pre_reveal;
  } else if (const auto* d = std::get_if<DeathEvent>(&event)) {
    detail::require_kind(state, d->kind);
    detail::check_death_args(d->fraction_killed, d->mode);
    if (d->fraction_killed > 0.0)
      for (auto& b : state.branches)
        if (d->where.matches(b)) detail::kill_in(b, d->kind, d->fraction_killed, d->mode);
  } else if (const auto* dc = std::get_if<DeclineEvent>(&event)) {
    detail::require_kind(state, dc->kind);
    detail::check_schedule(dc->schedule);
    for (auto& b : state.branches)
      if (dc->where.matches(b)) detail::decline_in(b, dc->kind, dc->schedule);
  } else if (const auto* t = std::get_if<TimeStep>(&event)) {
    if (!(t->dt > 0.0) || !std::isfinite(t->dt)) throw Error("time step must be positive");
    detail::advance_in(state, t->dt);
  } else if (const auto* st = std::get_if<StageEvent>(&event)) {
    state.stage = st->stage;
  }
  return state;
}

/// Initial state plus an ordered event list: everything needed to replay one
/// experiment.
struct Script {
  WorldState initial;
  std::vector<Event> events;
};

inline WorldState run_to_end(const Script& script) {
  WorldState s = script.initial;
  for (const auto& e : script.events) s = apply(std::move(s), e);
  return s;
}

} // namespace mwm
