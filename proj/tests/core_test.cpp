#include "mwm/core.hpp"

#include <gtest/gtest.h>

namespace {

using namespace mwm;

Population person(std::string kind = "person", double count = 1.0) {
  Population p;
  p.kind = std::move(kind);
  p.count = count;
  return p;
}

WorldState one_person(double weight = 1.0) { return quantum_state({person()}, {}, weight); }

TEST(Split, HalvesWeightBetweenTwoChildren) {
  const auto s = split(one_person(), "root", {{"fire", 0.5}, {"click", 0.5}});
  ASSERT_EQ(s.branches.size(), 2u);
  EXPECT_EQ(s.branches[0].id(), "root/fire");
  EXPECT_EQ(s.branches[1].id(), "root/click");
  EXPECT_DOUBLE_EQ(s.branches[0].weight.value, 0.5);
  EXPECT_DOUBLE_EQ(s.branches[1].weight.value, 0.5);
  EXPECT_DOUBLE_EQ(s.total_measure(), 1.0);
  EXPECT_EQ(s.stage, Stage::post_split_pre_reveal);
}

TEST(Split, IdentitySplitKeepsWeightAndMeasure) {
  const auto s = split(one_person(0.8), "root", {{"only", 1.0}});
  ASSERT_EQ(s.branches.size(), 1u);
  EXPECT_DOUBLE_EQ(s.branches[0].weight.value, 0.8);
  EXPECT_DOUBLE_EQ(s.total_measure(), 0.8);
}

TEST(Split, UnevenFractions) {
  const auto s = split(one_person(), "root", {{"up", 0.9}, {"down", 0.1}});
  EXPECT_DOUBLE_EQ(s.branches[0].weight.value, 0.9);
  EXPECT_DOUBLE_EQ(s.branches[1].weight.value, 0.1);
}

TEST(Split, ChildrenCopyParentPopulations) {
  auto s = one_person();
  s.branches[0].populations[0].quality = 3.0;
  s = split(s, "root", {{"a", 0.25}, {"b", 0.75}});
  for (const auto& b : s.branches) EXPECT_EQ(b.populations, std::vector<Population>({s.branches[0].populations[0]}));
  EXPECT_EQ(s.branches[1].parent_id(), "root");
}

TEST(Split, Errors) {
  const auto s = one_person();
  EXPECT_THROW(split(s, "nowhere", {{"a", 1.0}}), Error);
  EXPECT_THROW(split(s, "root", {{"a", 0.6}, {"b", 0.6}}), Error);
  EXPECT_THROW(split(s, "root", {{"a", -0.5}, {"b", 1.5}}), Error);
  EXPECT_THROW(split(s, "root", {{"a", 0.5}, {"a", 0.5}}), Error);
}

TEST(Split, ToleratesRoundingWithinTolerance) {
  EXPECT_NO_THROW(split(one_person(), "root", {{"a", 0.1}, {"b", 0.2}, {"c", 0.7 + 1e-12}}));
}

TEST(Death, InstantDeathZeroesBranchAndSparesSibling) {
  const auto s = split(one_person(), "root", {{"fire", 0.5}, {"click", 0.5}});
  const auto d = apply_death(s, "root/fire", "person", 1.0);
  EXPECT_EQ(d.branches[0].measure(), 0.0);
  EXPECT_EQ(d.branches[1].measure(), s.branches[1].measure());
  EXPECT_EQ(d.branches[1].populations, s.branches[1].populations);
  EXPECT_DOUBLE_EQ(d.total_measure(), 0.5);
}

TEST(Death, ZeroFractionIsNoOp) {
  const auto s = one_person();
  const auto d = apply_death(s, "root", "person", 0.0);
  EXPECT_EQ(d.branches[0].populations, s.branches[0].populations);
}

TEST(Death, PartialInstantDeathMovesCountToDeadCohort) {
  const auto s = quantum_state({person("person", 10.0)});
  const auto d = apply_death(s, "root", "person", 0.3);
  ASSERT_EQ(d.branches[0].populations.size(), 2u);
  EXPECT_DOUBLE_EQ(d.branches[0].populations[0].count, 7.0);
  EXPECT_EQ(d.branches[0].populations[1].status, Vitality::dead);
  EXPECT_DOUBLE_EQ(d.branches[0].populations[1].count, 3.0);
  EXPECT_DOUBLE_EQ(d.total_measure(), 7.0);
  // A second kill joins the same dead cohort.
  const auto d2 = apply_death(d, "root", "person", 0.5);
  ASSERT_EQ(d2.branches[0].populations.size(), 2u);
  EXPECT_DOUBLE_EQ(d2.branches[0].populations[1].count, 6.5);
}

TEST(Death, LingeringKeepsMeasureUntilExpiry) {
  const auto s = apply_death(one_person(), "root", "person", 1.0, DeathMode::lingering(3.0, -1.0));
  const auto& p = s.branches[0].populations.back();
  EXPECT_EQ(p.status, Vitality::dying);
  EXPECT_DOUBLE_EQ(p.remaining, 3.0);
  EXPECT_DOUBLE_EQ(p.quality, -1.0);
  EXPECT_DOUBLE_EQ(s.total_measure(), 1.0);
}

TEST(Death, TenPlanetsFiveFire) {
  auto s = classical_ensemble(10, std::vector<Population>{person()});
  for (int i = 1; i <= 5; ++i) s = apply_death(s, "world" + std::to_string(i), "person", 1.0);
  EXPECT_NEAR(s.total_measure(), 0.5, 1e-15);
}

TEST(Death, Errors) {
  const auto s = one_person();
  EXPECT_THROW(apply_death(s, "nowhere", "person", 1.0), Error);
  EXPECT_THROW(apply_death(s, "root", "ghost", 1.0), Error);
  EXPECT_THROW(apply_death(s, "root", "person", 1.5), Error);
  EXPECT_THROW(apply_death(s, "root", "person", -0.1), Error);
  EXPECT_THROW(apply_death(s, "root", "person", 1.0, DeathMode::lingering(0.0, 0.0)), Error);
  const auto dead = apply_death(s, "root", "person", 1.0);
  EXPECT_THROW(apply_death(dead, "root", "person", 1.0), Error);
}

TEST(AdvanceTime, UnitRate) {
  const auto s = advance_time(one_person(), 2.0);
  EXPECT_DOUBLE_EQ(s.integral_measure.at("person"), 2.0);
  EXPECT_DOUBLE_EQ(s.clock, 2.0);
}

TEST(AdvanceTime, DyingContributesOnlyRemainingTime) {
  auto s = apply_death(one_person(), "root", "person", 1.0, DeathMode::lingering(3.0, 0.0));
  s = advance_time(s, 5.0);
  EXPECT_DOUBLE_EQ(s.integral_measure.at("person"), 3.0);
  EXPECT_EQ(s.branches[0].populations.back().status, Vitality::dead);
  EXPECT_EQ(s.total_measure(), 0.0);
}

TEST(AdvanceTime, WeightsSumToOne) {
  const auto s = advance_time(split(one_person(), "root", {{"a", 0.5}, {"b", 0.5}}), 1.0);
  EXPECT_DOUBLE_EQ(s.integral_measure.at("person"), 1.0);
}

TEST(AdvanceTime, RejectsNonPositiveStep) {
  EXPECT_THROW(advance_time(one_person(), 0.0), Error);
  EXPECT_THROW(advance_time(one_person(), -1.0), Error);
}

TEST(Decline, ScheduleStepsAtEndOfEachTimeStep) {
  const std::vector<double> schedule = {0.75, 0.5, 0.25};
  auto s = apply_decline(one_person(), "root", "person", schedule);
  EXPECT_DOUBLE_EQ(s.total_measure(), 0.75);
  s = advance_time(s, 1.0);
  EXPECT_DOUBLE_EQ(s.total_measure(), 0.5);
  s = advance_time(s, 1.0);
  s = advance_time(s, 1.0);
  EXPECT_DOUBLE_EQ(s.total_measure(), 0.25);
  EXPECT_DOUBLE_EQ(s.integral_measure.at("person"), 0.75 + 0.5 + 0.25);
}

TEST(Decline, Errors) {
  const auto s = one_person();
  EXPECT_THROW(apply_decline(s, "root", "person", std::vector<double>{}), Error);
  EXPECT_THROW(apply_decline(s, "root", "person", std::vector<double>{1.2}), Error);
  EXPECT_THROW(apply_decline(s, "root", "person", std::vector<double>{0.2, 0.5}), Error);
  const auto half = apply_decline(s, "root", "person", std::vector<double>{0.5});
  EXPECT_THROW(apply_decline(half, "root", "person", std::vector<double>{0.8}), Error);
}

TEST(Ensemble, TwoWorldsMatchOneEvenSplit) {
  const auto e = classical_ensemble(2, std::vector<Population>{person()});
  const auto q = split(one_person(), "root", {{"a", 0.5}, {"b", 0.5}});
  ASSERT_EQ(e.branches.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(e.branches[i].weight, q.branches[i].weight);
    EXPECT_EQ(e.branches[i].measure(), q.branches[i].measure());
  }
  EXPECT_EQ(e.branches[1].id(), "world2");
  EXPECT_EQ(e.branches[1].world(), 2);
}

TEST(Ensemble, SingleWorld) {
  const auto e = classical_ensemble(1, std::vector<Population>{person()});
  ASSERT_EQ(e.branches.size(), 1u);
  EXPECT_EQ(e.branches[0].weight.value, 1.0);
}

TEST(Ensemble, FourWorldsTwoKilled) {
  auto e = classical_ensemble(4, std::vector<Population>{person()});
  e = apply_death(e, "world1", "person", 1.0);
  e = apply_death(e, "world3", "person", 1.0);
  EXPECT_DOUBLE_EQ(e.total_measure(), 0.5);
  EXPECT_THROW(classical_ensemble(0, std::vector<Population>{person()}), Error);
}

TEST(Validate, FreshStateIsClean) {
  EXPECT_TRUE(validate(one_person()).empty());
  EXPECT_TRUE(validate(split(one_person(), "root", {{"fire", 0.5}, {"click", 0.5}})).empty());
}

TEST(Validate, NegativeWeightIsOneViolation) {
  auto s = quantum_state({person()}, {}, -0.1);
  const auto v = validate(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].message, "negative weight");
}

TEST(Validate, ReportsInconsistentRecords) {
  auto s = split(one_person(), "root", {{"a", 0.5}, {"b", 0.5}});
  s.branches[0].weight.value = 0.4;
  s.branches[1].populations[0].count = -1.0;
  s.branches[1].populations[0].consciousness = 1.5;
  const auto v = validate(s);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].branch, "root/a");
  EXPECT_EQ(v[1].branch, "root/b");
}

TEST(Validate, UndeclaredKindAndStaleDyingCohort) {
  auto s = one_person();
  Population ghost = person("ghost");
  ghost.status = Vitality::dying;
  s.branches[0].populations.push_back(ghost);
  EXPECT_EQ(validate(s).size(), 2u);
}

TEST(Apply, SelectorsPickMatchingLeaves) {
  auto s = classical_ensemble(4, std::vector<Population>{person()});
  s = apply(s, SplitEvent{BranchSelector::by_worlds(2, 3), {{"x", 0.5}, {"y", 0.5}}});
  EXPECT_EQ(s.branches.size(), 6u);
  s = apply(s, DeathEvent{BranchSelector::by_last("x"), "person", 1.0, {}});
  EXPECT_DOUBLE_EQ(s.total_measure(), 0.75);
  s = apply(s, DeathEvent{BranchSelector::by_id("world1"), "person", 1.0, {}});
  EXPECT_DOUBLE_EQ(s.total_measure(), 0.5);
  EXPECT_EQ(std::count_if(s.branches.begin(), s.branches.end(),
                          [](const Branch& b) { return BranchSelector::alive_kind("person").matches(b); }),
            3);
  EXPECT_EQ(std::count_if(s.branches.begin(), s.branches.end(),
                          [](const Branch& b) { return BranchSelector::by_label("world2").matches(b); }),
            2);
}

TEST(Apply, LenientWhenNothingMatches) {
  const auto s = one_person();
  const auto t = apply(s, DeathEvent{BranchSelector::by_last("fire"), "person", 1.0, {}});
  EXPECT_EQ(t.branches[0].populations, s.branches[0].populations);
  EXPECT_THROW(apply(s, DeathEvent{BranchSelector::everything(), "ghost", 1.0, {}}), Error);
}

TEST(Apply, StageEventsAndMarks) {
  auto s = apply(one_person(), SplitEvent{{}, {{"a", 1.0}}});
  EXPECT_EQ(s.stage, Stage::post_split_pre_reveal);
  s = apply(s, StageEvent{Stage::post_reveal});
  EXPECT_EQ(s.stage, Stage::post_reveal);
  const auto before = s.total_measure();
  s = apply(s, MarkEvent{"m"});
  EXPECT_EQ(s.total_measure(), before);
}

TEST(RunToEnd, ReplaysScript) {
  Script script{one_person(),
                {SplitEvent{{}, {{"fire", 0.5}, {"click", 0.5}}}, DeathEvent{BranchSelector::by_last("fire"), "person", 1.0, {}},
                 TimeStep{1.0}}};
  const auto s = run_to_end(script);
  EXPECT_DOUBLE_EQ(s.total_measure(), 0.5);
  EXPECT_DOUBLE_EQ(s.integral_measure.at("person"), 0.5);
}

TEST(Describe, NamesEvents) {
  EXPECT_EQ(describe(SplitEvent{{}, {{"a", 0.5}, {"b", 0.5}}}), "split a b");
  EXPECT_EQ(describe(DeathEvent{{}, "p", 1.0, {}}), "death p");
  EXPECT_EQ(describe(StageEvent{Stage::post_reveal}), "stage post_reveal");
}

} // namespace
