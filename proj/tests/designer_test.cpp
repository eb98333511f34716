#include <gtest/gtest.h>

#include <cmath>
#include <disclose/benchmark.hpp>
#include <disclose/designer.hpp>
#include <disclose/disclosure.hpp>
#include <disclose/model.hpp>

#include "markets.hpp"

using namespace disclose;
using namespace disclose::testing;

namespace {

constexpr Real kD1 = 0.07975370062249694;
constexpr Real kD2 = 0.019756880360769419;
constexpr Real kPlanWelfare = 10.415101437998825;
constexpr Real kRelease4 = 0.27386686134554311;
constexpr Real kL4Welfare = 4.6300794159315988;

}  // namespace

TEST(DesignerPlan, PhaseDurationsFrozen) {
    Market m = two_cohort_market();
    Real d1 = designer_phase_duration(m, 1, m.prior);
    EXPECT_DOUBLE_EQ(d1, kD1);
    // cohort 1 stays willing while bad news about its own mass may surface
    EXPECT_DOUBLE_EQ(d1, std::log((6.0 - std::exp(-2.0)) / 5.0) / 2.0);

    Real x1 = posterior_no_news(m, 0.0, 1.0);
    EXPECT_DOUBLE_EQ(designer_phase_duration(m, 2, x1), kD2);

    Market sour = two_cohort_market();
    sour.prior = 0.2;
    EXPECT_THROW(designer_phase_duration(sour, 1, sour.prior), std::invalid_argument);
}

TEST(DesignerPlan, TwoCohortPlanServesEveryoneDirectly) {
    Market m = two_cohort_market();
    OptimalPlan plan = optimal_policy(m);

    EXPECT_EQ(plan.hat_i, 2u);
    ASSERT_EQ(plan.phase_times.size(), 2u);
    EXPECT_DOUBLE_EQ(plan.phase_times[0], 0.0);
    EXPECT_DOUBLE_EQ(plan.phase_times[1], kD1);
    EXPECT_FALSE(plan.release_time.has_value());
    EXPECT_DOUBLE_EQ(plan.welfare, kPlanWelfare);
    ASSERT_EQ(plan.per_cohort.size(), 2u);
    EXPECT_DOUBLE_EQ(plan.per_cohort[0], 5.0);
    EXPECT_DOUBLE_EQ(plan.per_cohort[1], 5.4151014379988247);

    const auto* delay = std::get_if<DelayUntil>(&plan.policy.good);
    ASSERT_NE(delay, nullptr);
    EXPECT_DOUBLE_EQ(delay->time, kD1);
    EXPECT_TRUE(std::holds_alternative<Transparent>(plan.policy.bad));

    // value of the plan in closed form: cohort 1 stops at the prior, cohort 2
    // at the phase boundary with phase 1's bad-news exposure resolved
    EXPECT_NEAR(plan.welfare, 5.0 + std::exp(-kD1) * (6.0 - std::exp(-2.0)), 1e-12);
}

TEST(DesignerPlan, StoredReleasePlanHoldsBackGoodNews) {
    Market m = stored_release_market();
    OptimalPlan plan = optimal_policy(m);

    EXPECT_EQ(plan.hat_i, 1u);
    ASSERT_EQ(plan.phase_times.size(), 1u);
    EXPECT_DOUBLE_EQ(plan.phase_times[0], 0.0);
    ASSERT_TRUE(plan.release_time.has_value());
    EXPECT_DOUBLE_EQ(*plan.release_time, kRelease4);
    EXPECT_DOUBLE_EQ(plan.welfare, kL4Welfare);
    ASSERT_EQ(plan.per_cohort.size(), 2u);
    EXPECT_DOUBLE_EQ(plan.per_cohort[0], 2.0);
    EXPECT_DOUBLE_EQ(plan.per_cohort[1], 2.6300794159315983);

    // serving both cohorts directly is admissible here but strictly worse
    Real t1 = designer_phase_duration(m, 1, m.prior);
    EXPECT_DOUBLE_EQ(t1, 0.24494006282237499);
    Real both = relaxed_objective(m, 2, {0.0, 0.0}, {t1, t1 + 1.0});
    EXPECT_DOUBLE_EQ(both, 4.5550894769683179);
    EXPECT_LT(both, plan.welfare);
}

TEST(DesignerPlan, RelaxedTermsFrozen) {
    Market m = two_cohort_market();
    std::vector<Real> z = {0.0, 2.0};
    std::vector<Real> T = {kD1, kD1 + 1.0};
    RelaxedTerms rt = relaxed_terms(m, 2, z, T);

    ASSERT_EQ(rt.v_tilde.size(), 2u);
    EXPECT_DOUBLE_EQ(rt.v_tilde[0], 5.0);
    EXPECT_DOUBLE_EQ(rt.v_tilde[1], 5.8646647167633876);
    EXPECT_DOUBLE_EQ(rt.v_hat[0], 5.8646647167633876);
    EXPECT_DOUBLE_EQ(rt.v_hat[1], 5.9816843611112658);
    EXPECT_DOUBLE_EQ(rt.v_tilde[1], 6.0 - std::exp(-2.0));
    EXPECT_DOUBLE_EQ(rt.v_hat[1], 6.0 - std::exp(-4.0));

    // nothing is stored, so nothing is released to later cohorts
    EXPECT_DOUBLE_EQ(rt.release_terms[0], 0.0);
    EXPECT_DOUBLE_EQ(rt.release_terms[1], 0.0);
    EXPECT_DOUBLE_EQ(rt.invest_terms[0], 5.0);
    EXPECT_DOUBLE_EQ(rt.invest_terms[1], 5.4151014379988247);
    EXPECT_DOUBLE_EQ(rt.total, kPlanWelfare);
    EXPECT_DOUBLE_EQ(relaxed_objective(m, 2, z, T), kPlanWelfare);
}

TEST(DesignerPlan, ErrorTaxonomy) {
    Market m = two_cohort_market();

    Market thin = two_cohort_market();
    thin.rate_good = 1e-9;  // stored good news too small to reward waiting
    try {
        final_release_time(thin, 1, 0.0, thin.prior);
        FAIL() << "expected DesignError";
    } catch (const DesignError& e) {
        EXPECT_EQ(e.kind, DesignErrorKind::InfeasibleRelease);
    }

    try {
        relaxed_terms(m, 2, {1.0, 0.5}, {0.1, 0.2});
        FAIL() << "expected DesignError";
    } catch (const DesignError& e) {
        EXPECT_EQ(e.kind, DesignErrorKind::ConstraintViolation);
    }
    try {
        relaxed_terms(m, 2, {0.0, 1.0}, {0.2, 0.1});
        FAIL() << "expected DesignError";
    } catch (const DesignError& e) {
        EXPECT_EQ(e.kind, DesignErrorKind::ConstraintViolation);
    }

    EXPECT_THROW(relaxed_terms(m, 3, {0.0, 0.0, 0.0}, {0.1, 0.2, 0.3}),
                 std::invalid_argument);
    EXPECT_THROW(relaxed_terms(m, 2, {0.0}, {0.1, 0.2}), std::invalid_argument);

    Market sour = two_cohort_market();
    sour.prior = 0.2;
    EXPECT_THROW(optimal_policy(sour), std::invalid_argument);
}

TEST(DesignerPlan, HomogeneousLowerBound) {
    Market m = single_cohort_market();
    Real bound = homogeneous_lower_bound(m);
    EXPECT_DOUBLE_EQ(bound, 0.11904811223453721);
    EXPECT_DOUBLE_EQ(bound, std::log((6.0 - std::exp(-1.0)) / 5.0));

    // transparency completes at 0.2; withholding good news beats that floor
    BenchmarkPath bp = solve_transparent(m);
    EXPECT_LT(bound, bp.terminal_time);

    EXPECT_THROW(homogeneous_lower_bound(two_cohort_market()), std::invalid_argument);
    Market uneven = single_cohort_market();
    uneven.rate_bad = 2.0;
    EXPECT_THROW(homogeneous_lower_bound(uneven), std::invalid_argument);
}

TEST(DesignerInvariants, PlanAcceleratesInvestment) {
    Market m = two_cohort_market();
    OptimalPlan plan = optimal_policy(m);
    BenchmarkPath bench = solve_transparent(m);

    // cohort 2 starts; and the market completes, earlier than under transparency
    EXPECT_LT(plan.phase_times[1], bench.phases[0].t_end);
    EquilibriumPath path = solve_equilibrium(m, plan.policy, 50.0);
    EXPECT_LT(path.end_time, bench.terminal_time);
}

TEST(DesignerInvariants, PerCohortDominanceOverTransparency) {
    for (const Market& m : {two_cohort_market(), stored_release_market()}) {
        OptimalPlan plan = optimal_policy(m);
        EquilibriumPath tp = solve_equilibrium(m, {Transparent{}, Transparent{}}, 50.0);
        WelfareReport wt = welfare(m, tp);

        Real prev_gain = -kInf;
        for (Index j = 0; j < m.n_cohorts(); ++j) {
            EXPECT_GE(plan.per_cohort[j], wt.per_cohort[j] - 1e-7);
            Real gain = plan.per_cohort[j] - wt.per_cohort[j];
            EXPECT_GE(gain, prev_gain - 1e-12);  // later cohorts gain more
            prev_gain = gain;
        }
        EXPECT_GT(plan.per_cohort.back(), wt.per_cohort.back() + 1e-3);
        EXPECT_GT(plan.welfare, wt.total);
    }
}

TEST(DesignerInvariants, TransparentWelfareFrozenForStoredRelease) {
    Market m = stored_release_market();
    EquilibriumPath tp = solve_equilibrium(m, {Transparent{}, Transparent{}}, 50.0);
    WelfareReport wt = welfare(m, tp);
    EXPECT_NEAR(wt.total, 4.3767747604577449, 1e-12);
    EXPECT_NEAR(wt.per_cohort[0], 2.0, 1e-12);  // flow from the prior onward
    EXPECT_NEAR(wt.per_cohort[1], 2.3767747604577454, 1e-12);
}

TEST(DesignerInvariants, SolverReproducesPlan) {
    Market m = two_cohort_market();
    OptimalPlan plan = optimal_policy(m);
    EquilibriumPath path = solve_equilibrium(m, plan.policy, 50.0);
    WelfareReport w = welfare(m, path);

    ASSERT_GE(path.phase_times.size(), 2u);
    EXPECT_DOUBLE_EQ(path.phase_times[0], plan.phase_times[0]);
    EXPECT_DOUBLE_EQ(path.phase_times[1], plan.phase_times[1]);
    EXPECT_DOUBLE_EQ(w.total, plan.welfare);
    EXPECT_DOUBLE_EQ(w.per_cohort[0], plan.per_cohort[0]);
    EXPECT_DOUBLE_EQ(w.per_cohort[1], plan.per_cohort[1]);

    Market l4 = stored_release_market();
    OptimalPlan plan4 = optimal_policy(l4);
    EquilibriumPath path4 = solve_equilibrium(l4, plan4.policy, 50.0);
    WelfareReport w4 = welfare(l4, path4);
    EXPECT_DOUBLE_EQ(w4.total, plan4.welfare);
    EXPECT_DOUBLE_EQ(w4.per_cohort[0], plan4.per_cohort[0]);
    EXPECT_DOUBLE_EQ(w4.per_cohort[1], plan4.per_cohort[1]);

    bool saw_release = false;
    for (const Event& ev : path4.events)
        if (ev.kind == EventKind::ReleaseAtom) {
            EXPECT_DOUBLE_EQ(ev.time, *plan4.release_time);
            saw_release = true;
        }
    EXPECT_TRUE(saw_release);
}

TEST(DesignerInvariants, LastCohortNeedsAReleaseWhenBeliefsSag) {
    // if the no-news belief after everyone else invests is below the myopic
    // threshold, the last cohort only moves on stored good news
    Market l4 = stored_release_market();
    EXPECT_LT(transparency_belief(l4, 1.0), myopic_threshold(l4));
    EXPECT_LT(optimal_policy(l4).hat_i, l4.n_cohorts());

    Market f1 = two_cohort_market();
    EXPECT_GT(transparency_belief(f1, 1.0), myopic_threshold(f1));
    EXPECT_EQ(optimal_policy(f1).hat_i, f1.n_cohorts());
}

TEST(FirstOrder, TwoCohortPlanIsStationary) {
    Market m = two_cohort_market();
    OptimalPlan plan = optimal_policy(m);
    FirstOrderReport rep = first_order_check(m, plan, 1e-4);

    EXPECT_TRUE(rep.pass);
    EXPECT_DOUBLE_EQ(rep.base_value, plan.welfare);
    ASSERT_EQ(rep.probes.size(), 6u);

    auto find = [&](const std::string& label) -> const FirstOrderProbe& {
        for (const auto& p : rep.probes)
            if (p.label == label) return p;
        ADD_FAILURE() << "missing probe " << label;
        return rep.probes.front();
    };

    // storing a sliver of good news leaves the objective flat here: with both
    // cohorts served directly, release levels do not enter the value
    EXPECT_TRUE(find("raise level from phase 1").feasible);
    EXPECT_DOUBLE_EQ(find("raise level from phase 1").delta, 0.0);
    EXPECT_TRUE(find("raise level from phase 2").feasible);

    // the phase boundary is pinned by cohort 2's indifference from both sides
    const FirstOrderProbe& delay = find("delay time 1");
    EXPECT_FALSE(delay.feasible);
    EXPECT_NEAR(delay.delta, -0.00054148306919543643, 1e-12);
    const FirstOrderProbe& advance = find("advance time 1");
    EXPECT_FALSE(advance.feasible);
    EXPECT_NEAR(advance.delta, 0.00054153722020799933, 1e-12);
}

TEST(FirstOrder, StoredReleasePlanIsStationary) {
    Market m = stored_release_market();
    OptimalPlan plan = optimal_policy(m);
    FirstOrderReport rep = first_order_check(m, plan, 1e-4);

    EXPECT_TRUE(rep.pass);
    EXPECT_DOUBLE_EQ(rep.base_value, plan.welfare);
    ASSERT_EQ(rep.probes.size(), 4u);

    auto find = [&](const std::string& label) -> const FirstOrderProbe& {
        for (const auto& p : rep.probes)
            if (p.label == label) return p;
        ADD_FAILURE() << "missing probe " << label;
        return rep.probes.front();
    };

    // the release is at its cap, so only shrinking is admissible, and it hurts
    const FirstOrderProbe& shrink = find("shrink final release");
    EXPECT_TRUE(shrink.feasible);
    EXPECT_NEAR(shrink.delta, -4.11698220803558e-05, 1e-12);
    const FirstOrderProbe& grow = find("grow final release");
    EXPECT_FALSE(grow.feasible);
    EXPECT_TRUE(std::isnan(grow.delta));

    // delaying the release is admissible but costly; advancing it would help
    // and is exactly what the waiting constraint rules out
    const FirstOrderProbe& delay = find("delay time 1");
    EXPECT_TRUE(delay.feasible);
    EXPECT_NEAR(delay.delta, -0.00026299479163505168, 1e-12);
    const FirstOrderProbe& advance = find("advance time 1");
    EXPECT_FALSE(advance.feasible);
    EXPECT_NEAR(advance.delta, 0.00026302109242859473, 1e-12);
}
