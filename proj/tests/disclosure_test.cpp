#include <disclose/disclosure.hpp>

#include <gtest/gtest.h>

#include <cmath>

#include "markets.hpp"

namespace disclose {
namespace {

using testing::dryout_market;
using testing::single_cohort_market;
using testing::stored_release_market;
using testing::two_cohort_market;

constexpr Real kT1 = 0.11904811223453721;  // transparent phase-1 boundary
constexpr Real kT2 = 0.19996669025544989;  // transparent completion

TEST(Schedules, CapAtSemantics) {
    EXPECT_TRUE(std::isinf(cap_at(Transparent{}, 0.0)));
    EXPECT_DOUBLE_EQ(cap_at(Silent{}, 5.0), 0.0);

    Schedule d = DelayUntil{0.3};
    EXPECT_DOUBLE_EQ(cap_at(d, 0.29), 0.0);
    EXPECT_TRUE(std::isinf(cap_at(d, 0.3)));  // right-continuous

    StepCaps sc;
    sc.points = {{0.1, 0.5}, {0.4, 2.0}};
    Schedule s = sc;
    EXPECT_DOUBLE_EQ(cap_at(s, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(cap_at(s, 0.1), 0.5);
    EXPECT_DOUBLE_EQ(cap_at(s, 0.25), 0.5);
    EXPECT_DOUBLE_EQ(cap_at(s, 0.4), 2.0);
    EXPECT_DOUBLE_EQ(cap_at(s, 9.0), 2.0);
}

TEST(Schedules, ValidationRejectsMalformedCaps) {
    StepCaps sc;
    sc.points = {{0.2, 1.0}, {0.1, 2.0}};  // times out of order
    EXPECT_THROW(validate_policy({Transparent{}, sc}), SolveError);

    sc.points = {{0.1, 1.0}, {0.2, 0.5}};  // caps decrease
    EXPECT_THROW(validate_policy({Transparent{}, sc}), SolveError);

    EXPECT_THROW(validate_policy({DelayUntil{-1.0}, Transparent{}}), SolveError);
    EXPECT_NO_THROW(validate_policy({Silent{}, Transparent{}}));
}

TEST(Solver, RejectsUnsupportedInputs) {
    Market m = two_cohort_market();
    DisclosurePolicy tp{Transparent{}, Transparent{}};
    EXPECT_THROW(solve_equilibrium(m, {Transparent{}, Silent{}}, 1.0), SolveError);
    EXPECT_THROW(solve_equilibrium(m, tp, 0.0), std::invalid_argument);

    // Waiting for a release that lands beyond the horizon is unresolvable.
    Market s = stored_release_market();
    DisclosurePolicy late{DelayUntil{0.27386686134554311}, Transparent{}};
    EXPECT_THROW(solve_equilibrium(s, late, 0.26), SolveError);
    EXPECT_NO_THROW(solve_equilibrium(s, late, 0.30));
}

TEST(Solver, TransparentMatchesBenchmark) {
    Market m = two_cohort_market();
    DisclosurePolicy tp{Transparent{}, Transparent{}};
    EquilibriumPath p = solve_equilibrium(m, tp, 50.0);

    ASSERT_EQ(p.segments.size(), 2u);
    EXPECT_EQ(p.segments[0].kind, SegmentKind::TransparentFlow);
    EXPECT_EQ(p.segments[1].kind, SegmentKind::TransparentFlow);
    ASSERT_EQ(p.phase_times.size(), 3u);
    EXPECT_DOUBLE_EQ(p.phase_times[1], kT1);
    EXPECT_DOUBLE_EQ(p.phase_times[2], kT2);
    EXPECT_DOUBLE_EQ(p.end_time, kT2);
    EXPECT_DOUBLE_EQ(p.final_q, 2.0);
    EXPECT_EQ(p.hat_cohort, 2u);

    BenchmarkPath bench = solve_transparent(m);
    for (Real t : {0.02, 0.07, 0.13, 0.19})
        EXPECT_NEAR(p.q_at(t), bench.q_at(t), 1e-12);
    // evidence tracks the frontier on both channels
    auto st = p.state_at(0.13);
    EXPECT_DOUBLE_EQ(st.zg, st.q);
    EXPECT_DOUBLE_EQ(st.zb, st.q);
}

TEST(Welfare, TransparentFrozenValues) {
    Market m = two_cohort_market();
    EquilibriumPath p = solve_equilibrium(m, {Transparent{}, Transparent{}}, 50.0);
    WelfareReport w = welfare(m, p);

    EXPECT_NEAR(w.total, 10.410840572893328, 1e-12);
    ASSERT_EQ(w.per_cohort.size(), 2u);
    // Flow indifference makes cohort 1 worth exactly its invest-now value.
    EXPECT_NEAR(w.per_cohort[0], 5.0, 1e-12);
    EXPECT_NEAR(w.per_cohort[1], 5.4108405728933304, 1e-12);

    // Independent closed form for cohort 2: the phase-1 pickup integral
    // collapses to 30*T1, and the frozen tail telescopes.
    Real cohort2 = 30.0 * kT1 + std::exp(-kT1) * (6.0 * std::exp(-1.0) - std::exp(-2.0));
    EXPECT_NEAR(w.per_cohort[1], cohort2, 1e-10);

    EXPECT_NEAR(w.total, w.per_cohort[0] + w.per_cohort[1], 1e-12);
    EXPECT_NEAR(w.total, w.good_release_term + w.no_news_invest_term + w.atom_term, 1e-12);
    EXPECT_DOUBLE_EQ(w.atom_term, 0.0);
}

TEST(Solver, DelayedGoodNewsFreezesThenReleases) {
    Market m = two_cohort_market();
    const Real tbar = 0.07975370062249694;
    DisclosurePolicy pol{DelayUntil{tbar}, Transparent{}};
    EquilibriumPath p = solve_equilibrium(m, pol, 50.0);

    ASSERT_EQ(p.segments.size(), 2u);
    EXPECT_EQ(p.segments[0].kind, SegmentKind::FrozenGoodFlow);
    EXPECT_DOUBLE_EQ(p.segments[0].t_end, tbar);
    EXPECT_DOUBLE_EQ(p.segments[0].q_end, 1.0);
    EXPECT_EQ(p.segments[1].kind, SegmentKind::TransparentFlow);
    EXPECT_DOUBLE_EQ(p.end_time, 0.16067227864340961);
    // After the release the remaining stretch replays the transparent phase 2.
    EXPECT_NEAR(p.end_time, tbar + (kT2 - kT1), 1e-14);

    bool released = false;
    for (const auto& ev : p.events)
        if (ev.kind == EventKind::ReleaseAtom) {
            released = true;
            EXPECT_DOUBLE_EQ(ev.time, tbar);
            EXPECT_DOUBLE_EQ(ev.dz_good, 1.0);
            EXPECT_DOUBLE_EQ(ev.zg_before, 0.0);
            EXPECT_DOUBLE_EQ(ev.zg_after, 1.0);
            EXPECT_DOUBLE_EQ(ev.dz_bad, 0.0);
        }
    EXPECT_TRUE(released);

    // Beliefs jump down when the stored exposure comes out without news.
    EXPECT_NEAR(p.x_at(tbar, true), 0.95683546702000366, 1e-12);
    EXPECT_NEAR(p.x_at(tbar, false), 0.89076822742696415, 1e-12);

    WelfareReport w = welfare(m, p);
    EXPECT_NEAR(w.total, 10.415101437998825, 1e-12);
    EXPECT_NEAR(w.per_cohort[0], 5.0, 1e-12);
    EXPECT_NEAR(w.per_cohort[1], 5.4151014379988247, 1e-12);
}

TEST(Solver, FrozenFlowKeepsDiscountedValueConstant) {
    Market m = two_cohort_market();
    DisclosurePolicy pol{DelayUntil{0.07975370062249694}, Transparent{}};
    EquilibriumPath p = solve_equilibrium(m, pol, 50.0);
    const Segment& s = p.segments[0];
    ASSERT_EQ(s.kind, SegmentKind::FrozenGoodFlow);
    Real level0 = std::exp(-s.discount * s.t_start) *
                  frozen_value(m, s.good_factor, s.q_start);
    for (Real w : {0.2, 0.5, 0.8}) {
        Real t = s.t_start + w * (s.t_end - s.t_start);
        Real q = s.q_at(m, t);
        EXPECT_NEAR(std::exp(-s.discount * t) * frozen_value(m, s.good_factor, q),
                    level0, 1e-12);
    }
}

TEST(Solver, ReleaseTimingIsWelfareNeutral) {
    // Holding good news forever and releasing it when the last no-news
    // cohort finishes pay the same: a release is worth exactly the flow
    // value it displaces.
    Market m = two_cohort_market();
    WelfareReport silent =
        welfare(m, solve_equilibrium(m, {Silent{}, Transparent{}}, 50.0));
    WelfareReport delayed = welfare(
        m, solve_equilibrium(m, {DelayUntil{0.07975370062249694}, Transparent{}}, 50.0));
    EXPECT_NEAR(silent.total, delayed.total, 1e-12);
    EXPECT_NEAR(silent.per_cohort[1], delayed.per_cohort[1], 1e-12);
}

TEST(Solver, SingleCohortDelayCompletesBeforeRelease) {
    Market m = single_cohort_market();
    EquilibriumPath p = solve_equilibrium(m, {DelayUntil{10.0}, Transparent{}}, 50.0);
    ASSERT_EQ(p.segments.size(), 1u);
    EXPECT_EQ(p.segments[0].kind, SegmentKind::FrozenGoodFlow);
    EXPECT_DOUBLE_EQ(p.end_time, kT1);  // ln((6 - e^{-1})/5) again: same indifference
    EXPECT_DOUBLE_EQ(p.final_q, 1.0);
    EXPECT_DOUBLE_EQ(p.final_zg, 0.0);  // the release never happens

    // Closed form for the frozen flow: e^{-t}(6 - e^{-q}) = 5.
    for (Real t : {0.03, 0.06, 0.1})
        EXPECT_NEAR(p.q_at(t), -std::log(6.0 - 5.0 * std::exp(t)), 1e-12);

    WelfareReport w = welfare(m, p);
    EXPECT_NEAR(w.total, 5.0, 1e-12);  // everyone gets the ex-ante invest value
}

TEST(Solver, SteppedBadCapsProduceAtomsAndHolds) {
    Market m = two_cohort_market();
    StepCaps bad;
    bad.points = {{0.05, 0.3}, {0.12, 2.0}};
    DisclosurePolicy pol{Transparent{}, bad};
    EquilibriumPath p = solve_equilibrium(m, pol, 50.0);

    // Suppressed bad news at t=0 pulls an investment atom forward.
    ASSERT_FALSE(p.events.empty());
    const Event& atom = p.events.front();
    EXPECT_EQ(atom.kind, EventKind::InvestmentAtom);
    EXPECT_DOUBLE_EQ(atom.time, 0.0);
    EXPECT_NEAR(atom.dq, 0.24579278875573185, 1e-12);
    // good channel tracks the atom, bad channel stays shut
    EXPECT_NEAR(atom.zg_after, atom.q_after, 1e-12);
    EXPECT_DOUBLE_EQ(atom.zb_after, 0.0);

    int holds = 0, releases = 0, atoms = 0;
    for (const auto& ev : p.events) {
        atoms += ev.kind == EventKind::InvestmentAtom;
        releases += ev.kind == EventKind::ReleaseAtom;
    }
    for (const auto& s : p.segments) holds += s.kind == SegmentKind::Hold;
    EXPECT_EQ(atoms, 2);
    EXPECT_EQ(releases, 2);
    EXPECT_EQ(holds, 2);
    EXPECT_DOUBLE_EQ(p.end_time, 0.22205801633102773);

    WelfareReport w = welfare(m, p);
    EXPECT_NEAR(w.total, 10.406312864432849, 1e-12);
    EXPECT_GT(w.atom_term, 0.0);
    // Worse than both transparency and the delayed-release policy.
    EXPECT_LT(w.total, 10.410840572893328);

    auto ic = verify_ic(m, pol, p, make_deviation_grid(p), 1e-8);
    EXPECT_TRUE(ic.pass);
}

TEST(Solver, DryOutStallsAtInteriorLimit) {
    Market m = dryout_market();
    DisclosurePolicy tp{Transparent{}, Transparent{}};
    EquilibriumPath p = solve_equilibrium(m, tp, 40.0);
    EXPECT_DOUBLE_EQ(p.end_time, 40.0);
    EXPECT_NEAR(p.final_q, std::log(2.0), 1e-12);
    ASSERT_EQ(p.phase_times.size(), 1u);  // the cohort never completes

    bool stalled = false;
    for (const auto& ev : p.events) stalled |= ev.kind == EventKind::Stall;
    EXPECT_TRUE(stalled);

    // Indifference propagates the ex-ante value to every unit, invested or not.
    WelfareReport w = welfare(m, p);
    EXPECT_NEAR(w.total, m.total_mass() * expected_value(m, m.prior), 1e-9);
}

TEST(IncentiveChecks, EquilibriumPathsPass) {
    Market m = two_cohort_market();
    DisclosurePolicy tp{Transparent{}, Transparent{}};
    EquilibriumPath p1 = solve_equilibrium(m, tp, 50.0);
    auto ic1 = verify_ic(m, tp, p1, make_deviation_grid(p1), 1e-8);
    EXPECT_TRUE(ic1.pass);
    EXPECT_GT(ic1.min_slack, -1e-10);
    EXPECT_GE(ic1.samples.size(), 40u);

    DisclosurePolicy pol{DelayUntil{0.07975370062249694}, Transparent{}};
    EquilibriumPath p2 = solve_equilibrium(m, pol, 50.0);
    auto ic2 = verify_ic(m, pol, p2, make_deviation_grid(p2), 1e-8);
    EXPECT_TRUE(ic2.pass);
    EXPECT_GT(ic2.min_slack, -1e-10);

    // The long stalled tail is exactly where discounted bookkeeping is
    // numerically touchy; the checker must stay clean out to the horizon.
    Market d = dryout_market();
    EquilibriumPath p3 = solve_equilibrium(d, tp, 40.0);
    auto ic3 = verify_ic(d, tp, p3, make_deviation_grid(p3), 1e-8);
    EXPECT_TRUE(ic3.pass);
    EXPECT_GT(ic3.min_slack, -1e-10);
}

EquilibriumPath time_scaled(const EquilibriumPath& src, Real s) {
    EquilibriumPath p = src;  // same q profile on a clock stretched by s
    for (auto& seg : p.segments) {
        seg.t_start *= s;
        seg.t_end *= s;
        seg.phase.t_start *= s;
        seg.phase.discount /= s;
    }
    for (auto& ev : p.events) ev.time *= s;
    for (auto& t : p.phase_times) t *= s;
    p.end_time *= s;
    return p;
}

TEST(IncentiveChecks, DetectsMisTimedSchedules) {
    Market m = two_cohort_market();
    DisclosurePolicy tp{Transparent{}, Transparent{}};
    EquilibriumPath p = solve_equilibrium(m, tp, 50.0);

    // Twice as fast: investing units would rather wait out the cheap influx.
    EquilibriumPath fast = time_scaled(p, 0.5);
    auto ic_fast = verify_ic(m, tp, fast, make_deviation_grid(fast), 1e-8);
    EXPECT_FALSE(ic_fast.pass);
    EXPECT_LT(ic_fast.min_slack, -1e-3);
    bool invest_side = false;
    for (const auto& s : ic_fast.samples)
        invest_side |= s.investing && s.slack < -1e-8;
    EXPECT_TRUE(invest_side);

    // Twice as slow: waiting units would rather invest immediately.
    EquilibriumPath slow = time_scaled(p, 2.0);
    auto ic_slow = verify_ic(m, tp, slow, make_deviation_grid(slow), 1e-8);
    EXPECT_FALSE(ic_slow.pass);
    bool wait_side = false;
    for (const auto& s : ic_slow.samples)
        wait_side |= !s.investing && s.slack < -1e-8;
    EXPECT_TRUE(wait_side);
}

TEST(IncentiveChecks, StoppingValueMatchesInvestNow) {
    Market m = two_cohort_market();
    DisclosurePolicy tp{Transparent{}, Transparent{}};
    EquilibriumPath p = solve_equilibrium(m, tp, 50.0);
    Real t = 0.06;
    auto st = p.state_at(t);
    Real conditional = detail::invest_value(m, st.zg, st.zb) /
                       (m.prior * std::exp(-m.rate_good * st.zg) +
                        (1.0 - m.prior) * std::exp(-m.rate_bad * st.zb));
    EXPECT_NEAR(stopping_value(m, p, 1, t, t), conditional, 1e-12);
    EXPECT_NEAR(conditional, expected_value(m, p.x_at(t)), 1e-12);
}

}  // namespace
}  // namespace disclose
