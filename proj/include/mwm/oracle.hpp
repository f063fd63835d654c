#pragma once

// Single-world Monte Carlo: every split picks one outcome at random, so the
// frequencies seen by surviving observers can be checked against the
// many-worlds effective probabilities.

#include "mwm/measure.hpp"

#include <cstdint>
#include <exception>
#include <limits>
#include <thread>

namespace mwm {

/// Counter-based generator: draw k of trial t under seed s is a pure function
/// of (s, t, k), so trials can run in any order or in parallel.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(mix(seed) ^ (stream * 0xD1B54A32D192ED03ull))) {}

  std::uint64_t next_u64() { return mix(key_ + (counter_++) * 0x9E3779B97F4A7C15ull); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t draws() const { return counter_; }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct TrialRecord {
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;
  std::vector<std::string> path;         // sampled outcome labels, root id first
  std::map<std::string, double> survivors; // living copies per kind at the end
  std::vector<std::string> observations; // outcome labels seen by survivors
  Branch world;                          // the single realised branch at the end
  Population observer;                   // the sampled observer's final cohort state
  bool observer_counted = false;         // observer is a conscious observer-moment at the end

  bool observes(const OutcomePredicate& pred) const { return observer_counted && pred.matches(world, observer); }
};

namespace detail {

inline TrialRecord run_trial(const Script& script, std::uint64_t seed, std::uint64_t trial) {
  CounterRng rng(seed, trial);
  const WorldState& init = script.initial;

  // Self-location: pick the observer by measure among all initial observers.
  double total = init.total_measure();
  if (!(total > 0.0)) throw Error("scenario has no initial observers to sample");
  double u = rng.uniform() * total;
  std::size_t bi = 0, pi = 0;
  bool picked = false;
  for (std::size_t i = 0; i < init.branches.size() && !picked; ++i)
    for (std::size_t j = 0; j < init.branches[i].populations.size(); ++j) {
      const double m = init.branches[i].weight.value * init.branches[i].populations[j].density();
      if (m <= 0.0) continue;
      bi = i;
      pi = j;
      if (u < m) {
        picked = true;
        break;
      }
      u -= m;
    }

  WorldState world;
  world.kinds = init.kinds;
  world.clock = init.clock;
  world.stage = init.stage;
  world.branches.push_back(init.branches[bi]);
  Population obs = init.branches[bi].populations[pi];
  obs.count = 1.0;
  const double degree_at_start = obs.consciousness;

  for (const auto& event : script.events) {
    Branch& leaf = world.branches.front();
    if (const auto* s = std::get_if<SplitEvent>(&event)) {
      check_outcomes(s->outcomes);
      if (!s->where.matches(leaf)) continue;
      // An identity split has nothing to sample and leaves the draw sequence alone.
      double r = s->outcomes.size() > 1 ? rng.uniform() * fraction_sum(s->outcomes) : 0.0;
      std::size_t pick = s->outcomes.size() - 1;
      for (std::size_t k = 0; k + 1 < s->outcomes.size(); ++k) {
        if (r < s->outcomes[k].fraction) {
          pick = k;
          break;
        }
        r -= s->outcomes[k].fraction;
      }
      while (!(s->outcomes[pick].fraction > 0.0)) --pick; // rounding at the top end
      world = apply(std::move(world), SplitEvent{BranchSelector::everything(), {{s->outcomes[pick].label, 1.0}}});
      continue;
    }
    if (const auto* d = std::get_if<DeathEvent>(&event)) {
      const double draw = rng.uniform();
      if (d->where.matches(leaf) && obs.kind == d->kind && obs.status == Vitality::alive && draw < d->fraction_killed) {
        if (d->mode.kind == DeathMode::Kind::lingering) {
          obs.status = Vitality::dying;
          obs.remaining = d->mode.duration;
          obs.quality = d->mode.quality_while_dying;
        } else {
          obs.status = Vitality::dead;
          obs.pending_degrees.clear();
        }
      }
    } else if (const auto* dc = std::get_if<DeclineEvent>(&event)) {
      if (dc->where.matches(leaf) && obs.kind == dc->kind && obs.living()) {
        obs.consciousness = dc->schedule.front();
        obs.pending_degrees.assign(dc->schedule.begin() + 1, dc->schedule.end());
      }
    } else if (const auto* t = std::get_if<TimeStep>(&event)) {
      if (obs.status == Vitality::dying) {
        obs.remaining -= t->dt;
        if (obs.remaining <= 0.0) {
          obs.remaining = 0.0;
          obs.status = Vitality::dead;
          obs.pending_degrees.clear();
        }
      }
      if (obs.living() && !obs.pending_degrees.empty()) {
        obs.consciousness = obs.pending_degrees.front();
        obs.pending_degrees.erase(obs.pending_degrees.begin());
      }
    }
    world = apply(std::move(world), event);
  }

  TrialRecord rec;
  rec.seed = seed;
  rec.trial = trial;
  rec.world = world.branches.front();
  rec.path = rec.world.labels();
  for (const auto& k : world.kinds) rec.survivors[k.label] = 0.0;
  for (const auto& p : rec.world.populations)
    if (p.living()) rec.survivors[p.kind] += p.count;
  bool any_survivor = false;
  for (const auto& [k, c] : rec.survivors) any_survivor = any_survivor || c > 0.0;
  if (any_survivor) rec.observations.assign(rec.path.begin() + 1, rec.path.end());
  // A declined observer counts with probability (current degree / degree at sampling).
  const double accept = rng.uniform();
  rec.observer_counted = obs.living() && degree_at_start > 0.0 && accept * degree_at_start < obs.consciousness;
  rec.observer = std::move(obs);
  return rec;
}

} // namespace detail

/// Replays the script n times in a single world. Trial t depends only on
/// (seed, t); results are stored in trial order whatever the thread count.
inline std::vector<TrialRecord> run_trials(const Script& script, std::size_t n, std::uint64_t seed,
                                           std::size_t threads = 1) {
  if (n == 0) throw Error("number of trials must be positive");
  std::vector<TrialRecord> out(n);
  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    for (std::size_t t = 0; t < n; ++t) out[t] = detail::run_trial(script, seed, t);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t t = w; t < n; t += threads) out[t] = detail::run_trial(script, seed, t);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct FrequencyReport {
  double frequency = 0.0;
  double standard_error = 0.0; // sqrt(p(1-p)/n) at the observed frequency
  double z_score = 0.0;        // against the many-worlds effective probability
  double expected = 0.0;
  std::size_t trials = 0;      // trials in the (conditioning) class
};

/// Frequency with which the sampled observer ends up satisfying `pred`,
/// optionally among trials whose observer satisfies `given`.
inline FrequencyReport compare(const MeasureReport& mwi, std::span<const TrialRecord> trials,
                               const OutcomePredicate& pred, const std::optional<OutcomePredicate>& given = std::nullopt) {
  if (trials.empty()) throw Error("no trials to compare");
  std::size_t n = 0, hits = 0;
  for (const auto& t : trials) {
    if (given && !t.observes(*given)) continue;
    ++n;
    if (t.observes(pred)) ++hits;
  }
  if (n == 0) throw EmptyReferenceClass("no trial observer falls in the conditioning class");
  FrequencyReport r;
  r.trials = n;
  r.expected = mwi.effective_probability;
  r.frequency = static_cast<double>(hits) / static_cast<double>(n);
  r.standard_error = std::sqrt(r.frequency * (1.0 - r.frequency) / static_cast<double>(n));
  const double diff = r.frequency - r.expected;
  double se = r.standard_error;
  // A degenerate sample (all or none) has zero spread; fall back to the
  // model's own binomial spread so the z-score stays meaningful.
  if (!(se > 0.0)) se = std::sqrt(r.expected * (1.0 - r.expected) / static_cast<double>(n));
  if (std::abs(diff) <= 1e-12) r.z_score = 0.0;
  else if (se > 0.0) r.z_score = diff / se;
  else r.z_score = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  return r;
}

/// Many-worlds counterpart of an unconditional oracle frequency: final measure
/// of `pred` over the initial total measure.
inline MeasureReport survival_report(const Timeline& tl, const OutcomePredicate& pred) {
  return make_report(measure_of(tl.final_state, pred), tl.initial_total);
}

/// Many-worlds counterpart of a conditional oracle frequency.
inline MeasureReport conditional_report(const WorldState& final_state, const OutcomePredicate& pred,
                                        const OutcomePredicate& given) {
  return make_report(measure_of(final_state, pred && given), measure_of(final_state, given));
}

} // namespace mwm
