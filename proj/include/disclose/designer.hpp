#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <disclose/disclosure.hpp>

// Welfare-optimal disclosure. The optimal policy passes bad news through
// unfiltered and withholds good news until a single release time: impatient
// cohorts invest first, each phase timed so that the cohort entering it is
// just willing to stop instead of waiting out its own bad-news exposure.
// The plan either carries every cohort to investment this way (hat_i = n) or
// stops after cohort hat_i and releases the stored good news, after which
// only a positive finding brings the remaining cohorts in.

namespace disclose {

enum class DesignErrorKind {
    InfeasibleRelease,    // stored good news too thin to reward waiting
    ConstraintViolation,  // release levels or times out of order
};

struct DesignError : std::runtime_error {
    DesignErrorKind kind;
    DesignError(DesignErrorKind k, const std::string& what)
        : std::runtime_error(what), kind(k) {}
};

struct OptimalPlan {
    Index hat_i = 0;                  // last cohort that invests without a release
    std::vector<Real> phase_times;    // phase entry times, first entry 0
    std::optional<Real> release_time; // stored-good-news release; absent when hat_i = n
    DisclosurePolicy policy;          // bad transparent, good delayed until t_bar
    Real welfare = 0.0;
    std::vector<Real> per_cohort;
};

// Length of the phase in which cohort `cohort_index` invests, entered with
// no-news belief x_start. The phase ends when the cohort is indifferent
// between investing now and holding through its own mass of bad-news
// exposure to invest at the phase's end.
inline Real designer_phase_duration(const Market& m, Index cohort_index, Real x_start) {
    Real v = expected_value(m, x_start);
    if (!(v > 0.0))
        throw std::invalid_argument("designer_phase_duration: expected value must be positive");
    Real f = m.mass_of(cohort_index);
    Real top = x_start * m.v_good +
               (1.0 - x_start) * m.v_bad * std::exp(-m.rate_bad * f);
    return std::log(top / v) / m.discount_of(cohort_index);
}

// Time of the final release when cohort hat_i is the last to invest unaided.
// Chosen so that cohort hat_i, entering its phase at T_prev with belief
// x_prev, is indifferent between investing immediately and waiting for the
// release of the first F_{hat_i} units' worth of stored good news.
inline Real final_release_time(const Market& m, Index hat_i, Real T_prev, Real x_prev) {
    Real v = expected_value(m, x_prev);
    if (!(v > 0.0))
        throw std::invalid_argument("final_release_time: expected value must be positive");
    Real gain = x_prev * (1.0 - std::exp(-m.rate_good * m.cum_mass(hat_i))) * m.v_good;
    if (gain < v)
        throw DesignError(DesignErrorKind::InfeasibleRelease,
                          "final_release_time: release payoff below the immediate value");
    return T_prev + std::log(gain / v) / m.discount_of(hat_i);
}

struct RelaxedTerms {
    std::vector<Real> v_tilde;       // unconditional stop value entering phase i
    std::vector<Real> v_hat;         // same after phase i's bad-news exposure
    std::vector<Real> release_terms; // tranche i of stored good news, paid to j > i
    std::vector<Real> invest_terms;  // cohort i's own investment payoff
    Real total = 0.0;
};

// Planner objective over release levels z_1..z_hat (cumulative good news
// disclosed by the end of each phase) and phase end times T_1..T_hat, with
// z_0 = T_0 = 0. Cohort i invests at T_{i-1} on the strength of what is
// still hidden; each newly released tranche pays v_good to everyone not yet
// invested.
inline RelaxedTerms relaxed_terms(const Market& m, Index hat_i,
                                  const std::vector<Real>& z_levels,
                                  const std::vector<Real>& T_levels) {
    Index n = m.n_cohorts();
    if (hat_i < 1 || hat_i > n)
        throw std::invalid_argument("relaxed_terms: hat_i out of range");
    if (z_levels.size() != hat_i || T_levels.size() != hat_i)
        throw std::invalid_argument("relaxed_terms: need one level per phase");

    Real z_prev = 0.0;
    Real t_prev = 0.0;
    for (Index i = 1; i <= hat_i; ++i) {
        Real z = z_levels[i - 1];
        if (z < z_prev - 1e-12 || z > m.cum_mass(i) + 1e-12)
            throw DesignError(DesignErrorKind::ConstraintViolation,
                              "relaxed_terms: release levels must grow and stay within "
                              "the invested mass");
        if (T_levels[i - 1] < t_prev - 1e-12)
            throw DesignError(DesignErrorKind::ConstraintViolation,
                              "relaxed_terms: times must not decrease");
        z_prev = z;
        t_prev = T_levels[i - 1];
    }

    RelaxedTerms out;
    out.v_tilde.resize(hat_i);
    out.v_hat.resize(hat_i);
    out.release_terms.resize(hat_i);
    out.invest_terms.resize(hat_i);
    Real x0 = m.prior;
    z_prev = 0.0;
    t_prev = 0.0;
    for (Index i = 1; i <= hat_i; ++i) {
        Real g_prev = std::exp(-m.rate_good * z_prev);
        Real g_i = std::exp(-m.rate_good * z_levels[i - 1]);
        out.v_tilde[i - 1] = x0 * m.v_good * g_prev +
                             (1.0 - x0) * m.v_bad * std::exp(-m.rate_bad * m.cum_mass(i - 1));
        out.v_hat[i - 1] = x0 * m.v_good * g_prev +
                           (1.0 - x0) * m.v_bad * std::exp(-m.rate_bad * m.cum_mass(i));
        Real waiters = 0.0;
        for (Index j = i + 1; j <= n; ++j)
            waiters += m.mass_of(j) * std::exp(-m.discount_of(j) * T_levels[i - 1]);
        out.release_terms[i - 1] = x0 * m.v_good * (g_prev - g_i) * waiters;
        out.invest_terms[i - 1] =
            m.mass_of(i) * std::exp(-m.discount_of(i) * t_prev) * out.v_tilde[i - 1];
        out.total += out.release_terms[i - 1] + out.invest_terms[i - 1];
        z_prev = z_levels[i - 1];
        t_prev = T_levels[i - 1];
    }
    return out;
}

inline Real relaxed_objective(const Market& m, Index hat_i,
                              const std::vector<Real>& z_levels,
                              const std::vector<Real>& T_levels) {
    return relaxed_terms(m, hat_i, z_levels, T_levels).total;
}

namespace detail {

// Phase end times that keep every cohort i <= hat_i exactly indifferent
// between investing on schedule and holding to T_i, given the release levels.
// Generalizes designer_phase_duration (z identically zero) and
// final_release_time (z_hat = F_hat with the continuation value clamped at
// zero) in one recursion.
inline std::vector<Real> chain_times(const Market& m, Index hat_i,
                                     const std::vector<Real>& z_levels) {
    std::vector<Real> times(hat_i);
    Real x0 = m.prior;
    Real z_prev = 0.0;
    Real t_prev = 0.0;
    for (Index i = 1; i <= hat_i; ++i) {
        Real g_prev = std::exp(-m.rate_good * z_prev);
        Real g_i = std::exp(-m.rate_good * z_levels[i - 1]);
        Real tilde = x0 * m.v_good * g_prev +
                     (1.0 - x0) * m.v_bad * std::exp(-m.rate_bad * m.cum_mass(i - 1));
        Real cont = x0 * m.v_good * g_i +
                    (1.0 - x0) * m.v_bad * std::exp(-m.rate_bad * m.cum_mass(i));
        Real bracket = x0 * m.v_good * (g_prev - g_i) + std::max(cont, 0.0);
        if (!(tilde > 0.0) || bracket < tilde)
            throw DesignError(DesignErrorKind::InfeasibleRelease,
                              "chain_times: no indifference time for cohort " +
                                  std::to_string(i));
        times[i - 1] = t_prev + std::log(bracket / tilde) / m.discount_of(i);
        z_prev = z_levels[i - 1];
        t_prev = times[i - 1];
    }
    return times;
}

}  // namespace detail

// Enumerates how many cohorts invest without a release and keeps the best
// plan; equal objectives resolve toward serving more cohorts directly.
inline OptimalPlan optimal_policy(const Market& m) {
    validate(m);
    if (!(expected_value(m, m.prior) > 0.0))
        throw std::invalid_argument("optimal_policy: expected value at the prior "
                                    "must be positive");
    Index n = m.n_cohorts();

    // Entry times and no-news beliefs under transparent bad news with good
    // news withheld, extended while the entering cohort still invests.
    std::vector<Real> entry_time(n, 0.0);
    std::vector<Real> entry_belief(n, m.prior);
    Index usable = 0;
    for (Index i = 1; i <= n; ++i) {
        if (!(expected_value(m, entry_belief[i - 1]) > 0.0)) break;
        usable = i;
        if (i < n) {
            entry_time[i] =
                entry_time[i - 1] + designer_phase_duration(m, i, entry_belief[i - 1]);
            entry_belief[i] = posterior_no_news(m, 0.0, m.cum_mass(i));
        }
    }

    Index best_k = 0;
    Real best_value = -std::numeric_limits<Real>::infinity();
    Real best_release = 0.0;
    for (Index k = 1; k <= usable; ++k) {
        std::vector<Real> z(k, 0.0);
        std::vector<Real> T(entry_time.begin() + 1, entry_time.begin() + k);
        Real release = 0.0;
        if (k < n) {
            try {
                release = final_release_time(m, k, entry_time[k - 1], entry_belief[k - 1]);
            } catch (const DesignError&) {
                continue;
            }
            z[k - 1] = m.cum_mass(k);
            T.push_back(release);
        } else {
            T.push_back(entry_time[n - 1]);  // phase n's end never matters
        }
        Real value = relaxed_objective(m, k, z, T);
        if (value >= best_value) {
            best_value = value;
            best_k = k;
            best_release = release;
        }
    }
    if (best_k == 0)
        throw DesignError(DesignErrorKind::InfeasibleRelease,
                          "optimal_policy: no admissible plan");

    OptimalPlan plan;
    plan.hat_i = best_k;
    plan.phase_times.assign(entry_time.begin(), entry_time.begin() + best_k);
    if (best_k < n) plan.release_time = best_release;
    Real t_bar = best_k < n ? best_release : entry_time[n - 1];
    plan.policy = DisclosurePolicy{DelayUntil{t_bar}, Transparent{}};
    plan.welfare = best_value;

    plan.per_cohort.resize(n);
    Real x0 = m.prior;
    for (Index j = 1; j <= best_k; ++j) {
        Real stop = x0 * m.v_good +
                    (1.0 - x0) * m.v_bad * std::exp(-m.rate_bad * m.cum_mass(j - 1));
        plan.per_cohort[j - 1] =
            m.mass_of(j) * std::exp(-m.discount_of(j) * entry_time[j - 1]) * stop;
    }
    for (Index j = best_k + 1; j <= n; ++j) {
        Real pickup = x0 * m.v_good * (1.0 - std::exp(-m.rate_good * m.cum_mass(best_k)));
        plan.per_cohort[j - 1] =
            m.mass_of(j) * std::exp(-m.discount_of(j) * best_release) * pickup;
    }
    return plan;
}

// With one cohort and symmetric arrival rates, any policy other than full
// transparency only redistributes the same surplus; the transparent path's
// completion time is the floor on how fast the market can clear.
inline Real homogeneous_lower_bound(const Market& m) {
    if (m.n_cohorts() != 1)
        throw std::invalid_argument("homogeneous_lower_bound: needs a single cohort");
    if (m.rate_good != m.rate_bad)
        throw std::invalid_argument("homogeneous_lower_bound: needs equal arrival rates");
    Real v = expected_value(m, m.prior);
    if (!(v > 0.0))
        throw std::invalid_argument("homogeneous_lower_bound: expected value must be positive");
    Real num = m.prior * m.v_good +
               std::exp(-m.rate_bad * m.total_mass()) * (1.0 - m.prior) * m.v_bad;
    return std::log(num / v) / m.discount_of(1);
}

struct FirstOrderProbe {
    std::string label;
    bool feasible = false;  // respects ordering, caps, and every cohort's indifference
    Real delta = 0.0;       // objective change; meaningful only when evaluable
    bool ok = true;         // feasible probes must not improve the objective
};

struct FirstOrderReport {
    bool pass = true;
    Real base_value = 0.0;
    std::vector<FirstOrderProbe> probes;
};

// Numeric stationarity check for a plan: nudge the release levels and phase
// times by epsilon and confirm no admissible nudge improves the objective.
// Raising a level is paired with re-solving the indifference times (the
// analogue of trading release size against release timing at the margin);
// time-only nudges are admissible only if every cohort still weakly prefers
// its schedule, which pins most of them as infeasible.
inline FirstOrderReport first_order_check(const Market& m, const OptimalPlan& plan,
                                          Real epsilon) {
    Index n = m.n_cohorts();
    Index hat = plan.hat_i;
    std::vector<Real> z0(hat, 0.0);
    if (hat < n) z0[hat - 1] = m.cum_mass(hat);
    std::vector<Real> T0 = detail::chain_times(m, hat, z0);

    FirstOrderReport rep;
    rep.base_value = relaxed_objective(m, hat, z0, T0);

    Real x0 = m.prior;
    auto ic_slack = [&](const std::vector<Real>& z, const std::vector<Real>& T) {
        Real worst = std::numeric_limits<Real>::infinity();
        Real z_prev = 0.0, t_prev = 0.0;
        for (Index i = 1; i <= hat; ++i) {
            Real g_prev = std::exp(-m.rate_good * z_prev);
            Real g_i = std::exp(-m.rate_good * z[i - 1]);
            Real tilde = x0 * m.v_good * g_prev +
                         (1.0 - x0) * m.v_bad * std::exp(-m.rate_bad * m.cum_mass(i - 1));
            Real cont = x0 * m.v_good * g_i +
                        (1.0 - x0) * m.v_bad * std::exp(-m.rate_bad * m.cum_mass(i));
            Real bracket = x0 * m.v_good * (g_prev - g_i) + std::max(cont, 0.0);
            Real r = m.discount_of(i);
            worst = std::min(worst, std::exp(-r * t_prev) * tilde -
                                        std::exp(-r * T[i - 1]) * bracket);
            z_prev = z[i - 1];
            t_prev = T[i - 1];
        }
        return worst;
    };

    auto probe = [&](const std::string& label, const std::vector<Real>& z,
                     const std::vector<Real>& T, bool box_ok) {
        FirstOrderProbe p;
        p.label = label;
        p.feasible = box_ok && ic_slack(z, T) >= -1e-10;
        if (box_ok) {
            try {
                p.delta = relaxed_objective(m, hat, z, T) - rep.base_value;
            } catch (const DesignError&) {
                p.feasible = false;
                p.delta = std::numeric_limits<Real>::quiet_NaN();
            }
        } else {
            p.delta = std::numeric_limits<Real>::quiet_NaN();
        }
        p.ok = !p.feasible || p.delta <= 1e-10;
        rep.pass = rep.pass && p.ok;
        rep.probes.push_back(p);
    };

    // Raise the level from phase i onward, re-solving the indifference times.
    Index last_up = hat < n ? hat - 1 : hat;
    for (Index i = 1; i <= last_up; ++i) {
        std::vector<Real> z = z0;
        for (Index j = i; j <= last_up; ++j) z[j - 1] = epsilon;
        probe("raise level from phase " + std::to_string(i), z,
              detail::chain_times(m, hat, z), true);
    }
    if (hat < n) {
        // Shrinking the release trades tranche size against an earlier time
        // along cohort hat's indifference curve; both move together here.
        std::vector<Real> z = z0;
        z[hat - 1] -= epsilon;
        probe("shrink final release", z, detail::chain_times(m, hat, z), true);
        std::vector<Real> z_up = z0;
        z_up[hat - 1] += epsilon;
        probe("grow final release", z_up, T0, false);  // level already at its cap
    }

    for (Index i = 1; i <= hat; ++i) {
        for (Real sign : {+1.0, -1.0}) {
            std::vector<Real> T = T0;
            T[i - 1] += sign * epsilon;
            bool box_ok = (i == 1 || T[i - 1] >= T[i - 2]) &&
                          (i == hat || T[i - 1] <= T[i]);
            probe((sign > 0 ? "delay time " : "advance time ") + std::to_string(i),
                  z0, T, box_ok);
        }
    }
    return rep;
}

}  // namespace disclose
