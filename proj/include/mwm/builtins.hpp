#pragma once

// The built-in scenario library, kept as scenario-file text so that every
// built-in also exercises the parser.

#include "mwm/scenario.hpp"

namespace mwm {

struct BuiltinScenario {
  std::string_view name;
  std::string_view text;
};

namespace detail {

inline constexpr std::string_view kQuantumGun = R"(scenario quantum_gun
param p_fire 0.5
param play 1

[persons]
experimenter quality=1

[initial]
quantum
population experimenter

[events]
mark before
split alive:experimenter fire=$p_fire click=1-$p_fire when=$play
death last:fire experimenter when=$play
mark after

[queries]
predicate experimenter kind=experimenter
predicate survivor kind=experimenter status=alive
choice play play=1
choice abstain play=0
measure measure_before pred=experimenter at=before
measure measure_after pred=experimenter at=after
probability conditional_survival pred=survivor given=experimenter
caring caring source=population
prob_utility prob_utility source=population
causal causal decider=experimenter hidden=fire:$p_fire,click:1-$p_fire dead_quality=0 source=population
oracle survival pred=experimenter
oracle survival_given_alive pred=survivor given=experimenter
)";

inline constexpr std::string_view kManyPlanets = R"(scenario many_planets
param planets 10
param firing 5

[persons]
person

[initial]
ensemble n=$planets
population person

[events]
mark before
death worlds:1..$firing person
mark after

[queries]
predicate person kind=person
predicate survivor kind=person status=alive
predicate planet_one kind=person worlds=1..1
measure measure_before pred=person at=before
measure measure_after pred=person at=after
probability conditional_survival pred=survivor given=person
probability planet_one_before pred=planet_one at=before
oracle survival pred=person
)";

inline constexpr std::string_view kBleedingDeath = R"(scenario bleeding_death
param p_fire 0.5
param bleed 5

[persons]
person

[initial]
quantum
population person

[events]
split all fire=$p_fire click=1-$p_fire
death last:fire person lingering duration=$bleed quality=-1
mark shot
time $bleed/2
mark bleeding
time 2*$bleed
mark after

[queries]
predicate person kind=person
predicate dying kind=person status=dying
measure measure_shot pred=person at=shot
measure measure_bleeding pred=person at=bleeding
measure measure_after pred=person at=after
probability p_dying_while_bleeding pred=dying at=bleeding
integral integral_measure pred=person from=0 to=2.5*$bleed
integral integral_dying pred=dying from=0 to=2.5*$bleed
trajectory trajectory kind=person
oracle survival pred=person
)";

inline constexpr std::string_view kSpinMeasurement = R"(scenario spin_measurement
param up 0.9

[persons]
bob

[initial]
quantum
population bob

[events]
split all up=$up down=1-$up

[queries]
predicate bob kind=bob
predicate saw_up kind=bob last=up
predicate saw_down kind=bob last=down
hypothesis A prior=0.5 up=0.9
hypothesis B prior=0.5 up=0.1
reflection reflection kind=bob
bayes posterior_up observe=saw_up
bayes posterior_down observe=saw_down
accuracy accuracy_A truth=A observer=bob
accuracy accuracy_B truth=B observer=bob
oracle saw_up pred=saw_up
)";

inline constexpr std::string_view kAnthropic = R"(scenario anthropic
param universes 100
param life 1

[persons]
observer

[initial]
ensemble n=$universes
population observer worlds=1..$life

[queries]
predicate observer kind=observer
predicate in_life kind=observer worlds=1..$life
probability p_life_supporting pred=in_life given=observer
weight_fraction p_observers_single_universe pred=observer
)";

inline constexpr std::string_view kPopulationQs = R"(scenario population_qs
param people 1e6 # desk scale; full scale is 1e10
param triers 200 # full scale is 200
param p_fire 0.5

[persons]
bystander
trier

[initial]
quantum
population bystander count=$people-$triers
population trier count=$triers

[events]
split all fire=$p_fire click=1-$p_fire
death last:fire trier

[queries]
predicate living status=living
predicate survivor kind=trier status=alive
probability survivor_probability pred=survivor given=living
oracle survivor pred=survivor given=living
)";

inline constexpr std::string_view kImmortalityTest = R"(scenario immortality_test
param lifespan 100
param half_life 10

[persons]
person

[initial]
quantum
population person

[events]
time $lifespan
time 99*$lifespan

[queries]
predicate person kind=person
lifespan p_normal_infinite lifespan=$lifespan afterlife=constant duration=inf horizon=inf
lifespan p_normal_sweep lifespan=$lifespan afterlife=constant duration=inf horizons=100*$lifespan,1000*$lifespan,10000*$lifespan
lifespan p_normal_mortal lifespan=$lifespan afterlife=none horizon=inf
lifespan p_normal_tail lifespan=$lifespan afterlife=exponential half_life=$half_life horizon=inf
moments moments_check pred=person within=$lifespan horizons=100*$lifespan
)";

inline constexpr std::string_view kAmoebaDecline = R"(scenario amoeba_decline
param abrupt 0

[persons]
person

[initial]
quantum
population person

[events]
split all healthy=0.5 failing=0.5
decline last:failing person schedule=0.75,0.5,0.25,0 when=1-$abrupt
death last:failing person when=$abrupt
time 1
time 1
time 1
time 1

[queries]
predicate person kind=person
predicate failing kind=person last=failing
measure measure_end pred=person
integral integral_measure pred=person from=0 to=4
integral integral_failing pred=failing from=0 to=4
trajectory trajectory kind=person
)";

inline constexpr std::string_view kQifReductio = R"(scenario qif_reductio
param splits 20
param lifespan 1

[persons]
person

[initial]
quantum
population person

[events]
repeat $splits
  time $lifespan
  split all up=0.5 down=0.5
end
time $lifespan

[queries]
predicate person kind=person
measure measure_end pred=person
moments p_normal pred=person within=$lifespan horizons=($splits+1)*$lifespan
)";

inline constexpr std::string_view kEvolvedVsSpontaneous = R"(scenario evolved_vs_spontaneous
param planets 10
param varieties 100
param density_ratio 1e-3 # free parameter, no reference value

[persons]
evolved
spontaneous

[initial]
ensemble n=$planets
population evolved
population spontaneous count=$varieties*$density_ratio

[queries]
predicate observer status=living
predicate evolved kind=evolved
predicate spontaneous kind=spontaneous
probability p_evolved pred=evolved given=observer
probability p_spontaneous pred=spontaneous given=observer
)";

} // namespace detail

inline std::span<const BuiltinScenario> builtin_scenarios() {
  static constexpr BuiltinScenario all[] = {
      {"quantum_gun", detail::kQuantumGun},
      {"many_planets", detail::kManyPlanets},
      {"bleeding_death", detail::kBleedingDeath},
      {"spin_measurement", detail::kSpinMeasurement},
      {"anthropic", detail::kAnthropic},
      {"population_qs", detail::kPopulationQs},
      {"immortality_test", detail::kImmortalityTest},
      {"amoeba_decline", detail::kAmoebaDecline},
      {"qif_reductio", detail::kQifReductio},
      {"evolved_vs_spontaneous", detail::kEvolvedVsSpontaneous},
  };
  return all;
}

inline const BuiltinScenario* find_builtin(std::string_view name) {
  for (const auto& b : builtin_scenarios())
    if (b.name == name) return &b;
  return nullptr;
}

inline Scenario builtin_scenario(std::string_view name) {
  const BuiltinScenario* b = find_builtin(name);
  if (!b) throw Error("unknown built-in scenario '" + std::string(name) + "'");
  return parse_scenario(b->text);
}

} // namespace mwm
