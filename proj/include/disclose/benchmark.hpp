#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "disclose/model.hpp"

namespace disclose {

inline constexpr Real kInf = std::numeric_limits<Real>::infinity();

// No-news investment flow that keeps the marginal cohort indifferent when both
// news channels track the investment frontier. Requires conclusive bad news.
inline Real flow_rate(const Market& m, Index cohort_index, Real x) {
    if (!(m.rate_bad > 0.0))
        throw ValidationError(ValidationErrorKind::NegativeRate,
                              "flow requires a positive bad-news intensity");
    Real r = m.discount_of(cohort_index);
    return r * expected_value(m, x) / (m.rate_bad * (1.0 - x) * (-m.v_bad));
}

// One cohort's stretch of the transparent no-news path, with enough
// coefficients to evaluate q(t) without the enclosing path.
struct TransparentPhase {
    Index cohort = 0;
    Real t_start = 0.0;
    Real t_end = 0.0;
    Real q_start = 0.0;
    Real q_end = 0.0;
    Real x_start = 0.0;
    Real discount = 0.0;
    Real rate_good = 0.0;
    Real rate_bad = 0.0;
    Real a = 0.0;   // (1 - x_start) * (-v_bad)
    Real b = 0.0;   // x_start * v_good
    Real v0 = 0.0;  // b - a
};

inline TransparentPhase make_phase(const Market& m, Index cohort, Real t_start,
                                   Real q_start, Real x_start) {
    TransparentPhase p;
    p.cohort = cohort;
    p.t_start = p.t_end = t_start;
    p.q_start = p.q_end = q_start;
    p.x_start = x_start;
    p.discount = m.discount_of(cohort);
    p.rate_good = m.rate_good;
    p.rate_bad = m.rate_bad;
    p.a = (1.0 - x_start) * (-m.v_bad);
    p.b = x_start * m.v_good;
    p.v0 = p.b - p.a;
    return p;
}

// q(t) inside a transparent phase.
inline Real phase_closed_form(const TransparentPhase& p, Real t) {
    Real tau = t - p.t_start;
    Real lg = p.rate_good, lb = p.rate_bad;
    if (lg == lb)
        return p.q_start + p.discount * p.v0 / (lb * p.a) * tau;
    Real rho = p.discount * lg / lb;
    Real denom = p.b * std::exp(rho * tau) - p.v0 * std::exp(p.discount * tau);
    return p.q_start +
           std::log(p.a * std::exp(rho * tau) / denom) / (lb - lg);
}

// Time at which the phase reaches q_target; +inf past the dry-out asymptote.
inline Real phase_time_to(const TransparentPhase& p, Real q_target) {
    Real dq = q_target - p.q_start;
    if (dq <= 0.0) return p.t_start;
    Real lg = p.rate_good, lb = p.rate_bad;
    if (lg == lb) return p.t_start + dq * lb * p.a / (p.discount * p.v0);
    Real arg = p.b - p.a * std::exp(-(lb - lg) * dq);
    if (arg <= 0.0) return kInf;
    Real rho_p = p.discount * (1.0 - lg / lb);
    return p.t_start + std::log(arg / p.v0) / rho_p;
}

// Revealed-evidence level beyond which the transparent no-news belief would
// cross the myopic threshold; finite only when good news outpaces bad news.
inline std::optional<Real> dryout_level(const Market& m) {
    if (!(m.rate_good > m.rate_bad)) return std::nullopt;
    Real num = m.prior * m.v_good;
    Real den = (1.0 - m.prior) * (-m.v_bad);
    return std::log(num / den) / (m.rate_good - m.rate_bad);
}

struct BenchmarkPath {
    Market market;
    std::vector<TransparentPhase> phases;
    std::optional<Real> dryout;  // asymptotic cap on invested mass, if any
    Real terminal_time = 0.0;    // +inf when the path dries out
    Real final_mass = 0.0;
    std::vector<std::pair<Real, Real>> samples;  // (t, q) when integrated

    Real q_at(Real t) const {
        if (!samples.empty()) {
            if (t <= samples.front().first) return samples.front().second;
            if (t >= samples.back().first) return samples.back().second;
            auto it = std::lower_bound(
                samples.begin(), samples.end(), t,
                [](const std::pair<Real, Real>& s, Real v) { return s.first < v; });
            auto lo = *(it - 1), hi = *it;
            Real w = (t - lo.first) / (hi.first - lo.first);
            return lo.second + w * (hi.second - lo.second);
        }
        for (const auto& p : phases)
            if (t <= p.t_end) return t <= p.t_start ? p.q_start : phase_closed_form(p, t);
        return final_mass;
    }

    Real x_at(Real t) const { return transparency_belief(market, q_at(t)); }
};

// Closed-form transparent benchmark: cohorts invest in order of impatience,
// each phase pinned down by the marginal cohort's indifference.
inline BenchmarkPath solve_transparent(const Market& m) {
    validate(m);
    if (!(m.rate_bad > 0.0))
        throw ValidationError(ValidationErrorKind::NegativeRate,
                              "transparent benchmark requires a positive bad-news intensity");
    BenchmarkPath path;
    path.market = m;
    Real t = 0.0, q = 0.0;
    Real cap = dryout_level(m).value_or(kInf);
    if (expected_value(m, m.prior) <= 0.0) return path;
    for (Index i = 1; i <= m.n_cohorts(); ++i) {
        TransparentPhase p = make_phase(m, i, t, q, transparency_belief(m, q));
        Real target = m.cum_mass(i);
        if (target >= cap) {
            p.t_end = kInf;
            p.q_end = cap;
            path.phases.push_back(p);
            path.dryout = cap;
            path.terminal_time = kInf;
            path.final_mass = cap;
            return path;
        }
        p.t_end = phase_time_to(p, target);
        p.q_end = target;
        path.phases.push_back(p);
        t = p.t_end;
        q = target;
    }
    path.terminal_time = t;
    path.final_mass = q;
    return path;
}

// Runge-Kutta integration of the flow ODE; independent of the closed form.
inline BenchmarkPath integrate_transparent(const Market& m, Real step) {
    validate(m);
    if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
    if (!(m.rate_bad > 0.0))
        throw ValidationError(ValidationErrorKind::NegativeRate,
                              "transparent benchmark requires a positive bad-news intensity");
    BenchmarkPath path;
    path.market = m;
    Real t = 0.0, q = 0.0;
    path.samples.emplace_back(t, q);
    if (expected_value(m, m.prior) <= 0.0) return path;

    Index cohort = 1;
    auto deriv = [&](Real qq) {
        return flow_rate(m, cohort, transparency_belief(m, qq));
    };
    auto rk4 = [&](Real qq, Real h) {
        Real k1 = deriv(qq);
        Real k2 = deriv(qq + 0.5 * h * k1);
        Real k3 = deriv(qq + 0.5 * h * k2);
        Real k4 = deriv(qq + h * k3);
        return qq + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };

    TransparentPhase p = make_phase(m, cohort, t, q, m.prior);
    const std::size_t max_steps = 50'000'000;
    for (std::size_t steps = 0; steps < max_steps; ++steps) {
        Real target = m.cum_mass(cohort);
        if (deriv(q) < 1e-12) {  // dried out: belief pinned at the threshold
            p.t_end = kInf;
            p.q_end = q;
            path.phases.push_back(p);
            path.dryout = q;
            path.terminal_time = kInf;
            path.final_mass = q;
            return path;
        }
        Real q_next = rk4(q, step);
        if (q_next >= target) {  // bisect the step to land on the boundary
            Real lo = 0.0, hi = step;
            for (int it = 0; it < 80; ++it) {
                Real mid = 0.5 * (lo + hi);
                (rk4(q, mid) >= target ? hi : lo) = mid;
            }
            t += hi;
            q = target;
            path.samples.emplace_back(t, q);
            p.t_end = t;
            p.q_end = q;
            path.phases.push_back(p);
            if (cohort == m.n_cohorts()) {
                path.terminal_time = t;
                path.final_mass = q;
                return path;
            }
            ++cohort;
            p = make_phase(m, cohort, t, q, transparency_belief(m, q));
        } else {
            t += step;
            q = q_next;
            path.samples.emplace_back(t, q);
        }
    }
    throw std::runtime_error("transparent integration did not terminate");
}

}  // namespace disclose
