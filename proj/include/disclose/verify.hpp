#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "disclose/designer.hpp"
#include "disclose/disclosure.hpp"

// Independent checks on the solver outputs: Monte Carlo replay of the
// evidence process, a brute-force step-path oracle with discrete incentive
// constraints, and property suites for the bound and contraction arguments.

namespace disclose {

namespace detail {

// Counter-based splitmix64: draw i of replication k is a pure function of
// (seed, k, i), so replications can run in any order and reruns are
// bit-identical.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct CounterStream {
    std::uint64_t base;
    std::uint64_t i = 0;
    CounterStream(std::uint64_t seed, std::uint64_t rep)
        : base(mix64(seed ^ 0x9E3779B97F4A7C15ull) +
               rep * 0x9E3779B97F4A7C15ull) {}
    Real uniform() {  // in [0, 1)
        return Real(mix64(base + ++i) >> 11) * 0x1.0p-53;
    }
    Real exponential(Real rate) {  // +inf when the rate is zero
        if (!(rate > 0.0)) return kInf;
        return -std::log1p(-uniform()) / rate;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Monte Carlo replay

struct SimConfig {
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    Real time_step = 1e-3;  // resolution of the precomputed schedule
};

struct SimEstimate {
    Real mean_total = 0.0;
    Real std_error = 0.0;
    std::vector<Real> per_cohort_mean;
};

namespace detail {

// The path flattened into time-ordered cells. Flow cells carry a q and z
// range; atom cells are zero-width jumps grouped by the event they came
// from. Disclosure times are found by inverting the z coordinate, payoffs by
// prefix sums of the invest weights.
struct SimCell {
    Real t_a = 0.0, t_b = 0.0;
    Real q_a = 0.0, q_b = 0.0;
    Real zg_a = 0.0, zg_b = 0.0;
    Real zb_a = 0.0, zb_b = 0.0;
    Index cohort = 1;     // cohort of the investing mass, if any
    Real invest_w = 0.0;  // e^{-r_c t}·(x v_G + (1-x) v_B)·dq over the cell
    int group = -1;       // event index for atom cells, -1 for flow
};

inline Real cell_invest_weight(const Market& m, Index cohort, Real t, Real zg,
                               Real zb, Real dq) {
    Real x = posterior_no_news(m, zg, zb);
    return std::exp(-m.discount_of(cohort) * t) *
           (x * m.v_good + (1.0 - x) * m.v_bad) * dq;
}

inline std::vector<SimCell> flatten_path(const Market& m,
                                         const EquilibriumPath& path,
                                         Real time_step) {
    std::vector<SimCell> cells;

    // atom events become zero-width cells; same-time releases come first
    std::size_t next_event = 0;
    auto flush_events_at = [&](Real t) {
        while (next_event < path.events.size() &&
               path.events[next_event].time <= t + 1e-15) {
            const Event& ev = path.events[next_event];
            int group = int(next_event);
            ++next_event;
            if (ev.kind == EventKind::ReleaseAtom) {
                SimCell c;
                c.t_a = c.t_b = ev.time;
                c.q_a = c.q_b = ev.q_after;
                c.zg_a = ev.zg_before;
                c.zg_b = ev.zg_after;
                c.zb_a = ev.zb_before;
                c.zb_b = ev.zb_after;
                c.group = group;
                cells.push_back(c);
            } else if (ev.kind == EventKind::InvestmentAtom) {
                // the atom moves at the pre-atom belief; news the atom itself
                // generates goes public only once the whole event is done
                Real lo = ev.q_before;
                Real hi = ev.q_after;
                Real frac_zg = ev.zg_after - ev.zg_before;
                Real frac_zb = ev.zb_after - ev.zb_before;
                Real done = 0.0;
                while (lo < hi - 1e-15) {
                    Index c_idx = m.cohort_at(
                        std::min(lo + 1e-15, m.total_mass() * (1.0 - 1e-15)));
                    Real cut = std::min(hi, m.cum_mass(c_idx));
                    SimCell c;
                    c.t_a = c.t_b = ev.time;
                    c.q_a = lo;
                    c.q_b = cut;
                    Real share = (cut - lo) / (hi - ev.q_before);
                    c.zg_a = ev.zg_before + frac_zg * done;
                    c.zg_b = ev.zg_before + frac_zg * (done + share);
                    c.zb_a = ev.zb_before + frac_zb * done;
                    c.zb_b = ev.zb_before + frac_zb * (done + share);
                    c.cohort = c_idx;
                    c.invest_w = cell_invest_weight(m, c_idx, ev.time,
                                                    ev.zg_before, ev.zb_before,
                                                    cut - lo);
                    c.group = group;
                    cells.push_back(c);
                    done += share;
                    lo = cut;
                }
            }
        }
    };

    for (const Segment& s : path.segments) {
        flush_events_at(s.t_start);
        Real span = s.t_end - s.t_start;
        if (s.kind == SegmentKind::Hold || span <= 0.0) {
            SimCell c;
            c.t_a = s.t_start;
            c.t_b = s.t_end;
            c.q_a = c.q_b = s.q_start;
            c.zg_a = c.zg_b = s.zg_start;
            c.zb_a = c.zb_b = s.zb_start;
            cells.push_back(c);
            continue;
        }
        int n_sub = std::max(1, int(std::ceil(span / time_step)));
        Real prev_t = s.t_start;
        Real prev_q = s.q_start;
        for (int i = 1; i <= n_sub; ++i) {
            Real t = i == n_sub ? s.t_end
                                : s.t_start + span * Real(i) / Real(n_sub);
            Real q = s.q_at(m, t);
            SimCell c;
            c.t_a = prev_t;
            c.t_b = t;
            c.q_a = prev_q;
            c.q_b = q;
            Real dqa = prev_q - s.q_start;
            Real dqb = q - s.q_start;
            bool good_tracks = s.kind == SegmentKind::TransparentFlow;
            c.zg_a = s.zg_start + (good_tracks ? dqa : 0.0);
            c.zg_b = s.zg_start + (good_tracks ? dqb : 0.0);
            c.zb_a = s.zb_start + dqa;
            c.zb_b = s.zb_start + dqb;
            c.cohort = s.cohort;
            c.invest_w = cell_invest_weight(
                m, s.cohort, 0.5 * (prev_t + t), 0.5 * (c.zg_a + c.zg_b),
                0.5 * (c.zb_a + c.zb_b), q - prev_q);
            cells.push_back(c);
            prev_t = t;
            prev_q = q;
        }
    }
    flush_events_at(path.end_time + 1.0);
    return cells;
}

}  // namespace detail

// Replays the evidence process against the path's schedule: draw the state,
// draw the first evidence arrival on the investment clock, map it to a
// disclosure time through the path's release schedule, then account payoffs
// at the public no-news belief (units moving on a good-news release are worth
// v_good outright). Conditioning on the public filtration keeps the estimate
// unbiased for the analytic welfare while removing the payoff noise of the
// hidden state — a market without evidence simulates with zero variance.
inline SimEstimate simulate(const Market& m, const DisclosurePolicy&,
                            const EquilibriumPath& path, const SimConfig& cfg) {
    if (cfg.n_paths < 1) throw std::invalid_argument("simulate: n_paths >= 1");
    if (!(cfg.time_step > 0.0))
        throw std::invalid_argument("simulate: time_step > 0");

    std::vector<detail::SimCell> cells =
        detail::flatten_path(m, path, cfg.time_step);
    Index n = m.n_cohorts();
    std::size_t nc = cells.size();

    // prefix[c][j]: invest weight of cohort c accumulated strictly before cell j
    std::vector<std::vector<Real>> prefix(n, std::vector<Real>(nc + 1, 0.0));
    for (std::size_t j = 0; j < nc; ++j)
        for (Index c = 0; c < n; ++c)
            prefix[c][j + 1] =
                prefix[c][j] +
                (cells[j].cohort == c + 1 ? cells[j].invest_w : 0.0);

    std::vector<Real> zg_end(nc), zb_end(nc);
    for (std::size_t j = 0; j < nc; ++j) {
        zg_end[j] = cells[j].zg_b;
        zb_end[j] = cells[j].zb_b;
    }

    // disclosure of the first piece at evidence depth u: the first cell whose
    // z coordinate reaches u; flow cells are inverted linearly
    auto locate = [&](const std::vector<Real>& z_end, Real u, Real& tau,
                      Real& q_tau, std::size_t& cell) -> bool {
        auto it = std::lower_bound(z_end.begin(), z_end.end(), u);
        if (it == z_end.end()) return false;
        cell = std::size_t(it - z_end.begin());
        const detail::SimCell& c = cells[cell];
        Real z_a = &z_end == &zg_end ? c.zg_a : c.zb_a;
        Real z_b = z_end[cell];
        if (z_b - z_a > 1e-15 && c.t_b > c.t_a) {
            Real f = (u - z_a) / (z_b - z_a);
            tau = c.t_a + f * (c.t_b - c.t_a);
            q_tau = c.q_a + f * (c.q_b - c.q_a);
        } else {
            tau = c.t_a;
            q_tau = c.q_b;
        }
        return true;
    };

    std::vector<Real> sum_c(n, 0.0);
    Real sum = 0.0, sum_sq = 0.0;
    std::vector<Real> w_c(n);

    for (std::size_t rep = 0; rep < cfg.n_paths; ++rep) {
        detail::CounterStream rng(cfg.seed, rep);
        bool good = rng.uniform() < m.prior;
        Real u = rng.exponential(good ? m.rate_good : m.rate_bad);

        Real tau, q_tau;
        std::size_t cell;
        bool disclosed = locate(good ? zg_end : zb_end, u, tau, q_tau, cell);

        for (Index c = 0; c < n; ++c) w_c[c] = 0.0;
        if (!disclosed) {
            for (Index c = 0; c < n; ++c) w_c[c] = prefix[c][nc];
        } else {
            const detail::SimCell& hit = cells[cell];
            for (Index c = 0; c < n; ++c) w_c[c] = prefix[c][cell];
            if (hit.group < 0 && hit.t_b > hit.t_a) {
                // partial flow cell: the schedule runs until the disclosure
                Real dq = q_tau - hit.q_a;
                w_c[hit.cohort - 1] += detail::cell_invest_weight(
                    m, hit.cohort, 0.5 * (hit.t_a + tau), hit.zg_a, hit.zb_a,
                    dq);
            } else if (hit.group >= 0) {
                // news surfacing inside an atom goes public after the whole
                // event: every remaining slice still moves at no-news terms
                for (std::size_t j = cell;
                     j < nc && cells[j].group == hit.group; ++j) {
                    w_c[cells[j].cohort - 1] += cells[j].invest_w;
                    q_tau = cells[j].q_b;
                }
            }
            if (good) {
                for (Index c = 0; c < n; ++c) {
                    Real done = std::min(std::max(q_tau - m.cum_mass(c), 0.0),
                                         m.mass_of(c + 1));
                    Real rem = m.mass_of(c + 1) - done;
                    w_c[c] +=
                        rem * std::exp(-m.discount_of(c + 1) * tau) * m.v_good;
                }
            }
        }

        Real w = 0.0;
        for (Index c = 0; c < n; ++c) {
            w += w_c[c];
            sum_c[c] += w_c[c];
        }
        sum += w;
        sum_sq += w * w;
    }

    SimEstimate est;
    Real nn = Real(cfg.n_paths);
    est.mean_total = sum / nn;
    Real var = cfg.n_paths > 1
                   ? std::max(0.0, (sum_sq - sum * sum / nn) / (nn - 1.0))
                   : 0.0;
    est.std_error = std::sqrt(var / nn);
    est.per_cohort_mean.resize(n);
    for (Index c = 0; c < n; ++c) est.per_cohort_mean[c] = sum_c[c] / nn;
    return est;
}

// ---------------------------------------------------------------------------
// Step-path oracle

namespace detail {

// A path on a fixed time grid: cumulative investment and releases after each
// step, with releases preceding same-step investment (so z_k ≤ q_{k-1}).
// Welfare and the discrete incentive constraints are evaluated directly from
// the unconditional accounting: a unit scheduled at step k earns the good
// payoff either on a pickup of an earlier tranche or by surviving to k, and
// the bad payoff only by surviving to k. Units never scheduled still collect
// their pickups.
struct StepPath {
    const Market* m = nullptr;
    std::vector<Real> times, q, zg, zb;

    Index steps() const { return times.size(); }

    Real welfare() const {
        const Market& mk = *m;
        Index n = mk.n_cohorts();
        Real x0 = mk.prior;
        Real total = 0.0;
        for (Index c = 1; c <= n; ++c) {
            Real r = mk.discount_of(c);
            Real pick = 0.0;
            Real zg_prev = 0.0;
            Real q_prev = 0.0;
            Real invested = 0.0;
            for (Index k = 0; k < steps(); ++k) {
                pick += (std::exp(-mk.rate_good * zg_prev) -
                         std::exp(-mk.rate_good * zg[k])) *
                        std::exp(-r * times[k]);
                zg_prev = zg[k];
                Real dq = overlap(q_prev, q[k], c);
                q_prev = q[k];
                if (dq <= 0.0) continue;
                invested += dq;
                Real good = x0 * mk.v_good *
                            (pick + std::exp(-mk.rate_good * zg[k]) *
                                        std::exp(-r * times[k]));
                Real bad = (1.0 - x0) * mk.v_bad *
                           std::exp(-mk.rate_bad * zb[k]) *
                           std::exp(-r * times[k]);
                total += dq * (good + bad);
            }
            Real rem = mk.mass_of(c) - invested;
            if (rem > 0.0) total += rem * x0 * mk.v_good * pick;
        }
        return total;
    }

    // mass of (q_lo, q_hi) inside cohort c
    Real overlap(Real q_lo, Real q_hi, Index c) const {
        Real lo = std::max(q_lo, m->cum_mass(c - 1));
        Real hi = std::min(q_hi, m->cum_mass(c));
        return std::max(0.0, hi - lo);
    }

    Real invest_now(Index c, Index k) const {
        const Market& mk = *m;
        Real d = std::exp(-mk.discount_of(c) * times[k]);
        return mk.prior * mk.v_good * std::exp(-mk.rate_good * zg[k]) * d +
               (1.0 - mk.prior) * mk.v_bad * std::exp(-mk.rate_bad * zb[k]) * d;
    }

    // value of deviating from step k to stop at step l (or never, l = steps())
    Real deviation(Index c, Index k, Index l) const {
        const Market& mk = *m;
        Real r = mk.discount_of(c);
        Real x0 = mk.prior;
        Real pick = 0.0;
        for (Index j = k + 1; j < std::min(l + 1, steps()); ++j)
            pick += (std::exp(-mk.rate_good * zg[j - 1]) -
                     std::exp(-mk.rate_good * zg[j])) *
                    std::exp(-r * times[j]);
        Real v = x0 * mk.v_good * pick;
        if (l < steps())
            v += x0 * mk.v_good * std::exp(-mk.rate_good * zg[l]) *
                     std::exp(-r * times[l]) +
                 (1.0 - x0) * mk.v_bad * std::exp(-mk.rate_bad * zb[l]) *
                     std::exp(-r * times[l]);
        return v;
    }

    // worst slack over both constraint families; investors must not gain by
    // stopping later, waiters must not gain by stopping now
    Real ic_min_slack() const {
        const Market& mk = *m;
        Index n = mk.n_cohorts();
        Index K = steps();
        Real worst = kInf;
        // pick[c][k]: discounted tranche pickups through step k, so any
        // deviation value is two lookups instead of a rescan
        std::vector<std::vector<Real>> pick(n, std::vector<Real>(K));
        std::vector<std::vector<Real>> stop(n, std::vector<Real>(K));
        for (Index c = 1; c <= n; ++c) {
            Real r = mk.discount_of(c);
            Real acc = 0.0;
            Real zg_prev = 0.0;
            for (Index k = 0; k < K; ++k) {
                acc += (std::exp(-mk.rate_good * zg_prev) -
                        std::exp(-mk.rate_good * zg[k])) *
                       std::exp(-r * times[k]);
                zg_prev = zg[k];
                pick[c - 1][k] = acc;
                stop[c - 1][k] = invest_now(c, k);
            }
        }
        Real x0 = mk.prior;
        Real q_prev = 0.0;
        for (Index k = 0; k < K; ++k) {
            for (Index c = 1; c <= n; ++c) {
                bool invests = overlap(q_prev, q[k], c) > 1e-12;
                bool waits =
                    mk.cum_mass(c) - std::max(q[k], mk.cum_mass(c - 1)) > 1e-12;
                if (!invests && !waits) continue;
                Real now = stop[c - 1][k];
                Real base = pick[c - 1][k];
                Real best = x0 * mk.v_good * (pick[c - 1][K - 1] - base);
                for (Index l = k + 1; l < K; ++l)
                    best = std::max(best, x0 * mk.v_good *
                                              (pick[c - 1][l] - base) +
                                              stop[c - 1][l]);
                if (invests) worst = std::min(worst, now - best);
                if (waits) worst = std::min(worst, best - now);
            }
            q_prev = q[k];
        }
        return worst;
    }

    bool feasible(Real total_cap) const {
        Real q_prev = 0.0;
        for (Index k = 0; k < steps(); ++k) {
            if (q[k] < q_prev - 1e-12 || q[k] > total_cap + 1e-12) return false;
            if (zg[k] > q_prev + 1e-12 || zb[k] > q_prev + 1e-12) return false;
            if (k > 0 && (zg[k] < zg[k - 1] - 1e-12 || zb[k] < zb[k - 1] - 1e-12))
                return false;
            q_prev = q[k];
        }
        return true;
    }
};

}  // namespace detail

struct GridSpec {
    Real dt = 0.01;
    Real horizon = 0.15;
    Real mass_step = 0.25;
    std::size_t node_budget = 20000000;
    Real ic_tol = 1e-9;
};

struct GridProblem {
    Real dt = 0.0;
    Real horizon = 0.0;
    std::vector<Real> times, q, z_good, z_bad;  // cumulative after each step
};

struct GridSolution {
    GridProblem problem;
    Real welfare = -kInf;
    bool ic_ok = false;
    bool bad_released_at_boundaries = false;  // z^B covers earlier cohorts at
                                              // each phase boundary
    bool good_withheld_before_last_phase = false;
    bool exhaustive = true;
    std::size_t nodes = 0;
};

namespace detail {

// Structured warm starts: everyone at once, and for each release step s the
// atom-shaped plans — earlier cohorts in one tranche at t = 0, the stored
// good news out at s with the last cohort either moving right behind it or
// staying out entirely. Bad news stays quiet before s: on a coarse grid any
// faster release makes the first tranche regret moving at zero.
inline void structured_candidates(const Market& m,
                                  const std::vector<Real>& times,
                                  std::vector<StepPath>& out) {
    Index K = times.size();
    Real total = m.total_mass();
    Real first = m.cum_mass(m.n_cohorts() - 1);
    auto blank = [&] {
        StepPath p;
        p.m = &m;
        p.times = times;
        p.q.assign(K, 0.0);
        p.zg.assign(K, 0.0);
        p.zb.assign(K, 0.0);
        return p;
    };

    StepPath all = blank();
    for (Index k = 0; k < K; ++k) all.q[k] = total;
    out.push_back(std::move(all));

    if (first <= 0.0) return;
    for (Index s = 1; s < K; ++s) {
        StepPath join = blank(), stay = blank();
        for (Index k = 0; k < K; ++k) {
            join.q[k] = k < s ? first : total;
            join.zg[k] = k < s ? 0.0 : first;
            join.zb[k] = k < s ? 0.0 : first;
            stay.q[k] = first;
            stay.zg[k] = k < s ? 0.0 : first;
        }
        out.push_back(std::move(join));
        out.push_back(std::move(stay));
    }
}

}  // namespace detail

// Brute-force search over monotone step paths (q, z^G, z^B) on the grid with
// releases capped by prior investment and the discrete incentive constraints
// enforced at grid stop times. Depth-first with an optimistic completion
// bound and incremental pruning on the stopping constraints of units already
// scheduled; exceeding the node budget returns the best path found so far
// marked non-exhaustive.
inline GridSolution grid_search(const Market& m, const GridSpec& spec) {
    validate(m);
    if (!(spec.dt > 0.0) || !(spec.horizon > 0.0) || !(spec.mass_step > 0.0))
        throw std::invalid_argument("grid_search: dt, horizon, mass_step > 0");

    Index K = Index(std::llround(spec.horizon / spec.dt)) + 1;
    std::vector<Real> times(K);
    for (Index k = 0; k < K; ++k) times[k] = spec.dt * Real(k);

    Real total = m.total_mass();
    int units_total = int(std::llround(total / spec.mass_step));
    if (std::abs(units_total * spec.mass_step - total) > 1e-9)
        throw std::invalid_argument(
            "grid_search: total mass must be a multiple of mass_step");

    Index n = m.n_cohorts();
    Real x0 = m.prior;

    GridSolution best;  // welfare stays -inf until a path passes every check

    auto consider = [&](const detail::StepPath& p) {
        if (!p.feasible(total)) return;
        Real w = p.welfare();
        if (w <= best.welfare) return;
        if (p.ic_min_slack() < -spec.ic_tol) return;
        best.welfare = w;
        best.problem.q = p.q;
        best.problem.z_good = p.zg;
        best.problem.z_bad = p.zb;
    };

    std::vector<detail::StepPath> warm;
    detail::structured_candidates(m, times, warm);
    for (const auto& p : warm) consider(p);

    // warm-start from a doubled grid: its winner embeds here as the step
    // path holding each coarse value until the next coarse action time, and
    // is re-checked against this grid's (stricter) constraint set
    if (K >= 12 && spec.node_budget >= 2) {
        GridSpec coarse = spec;
        coarse.dt = spec.dt * 2.0;
        coarse.node_budget = spec.node_budget / 2;
        GridSolution cs = grid_search(m, coarse);
        if (cs.welfare > -kInf) {
            detail::StepPath p;
            p.m = &m;
            p.times = times;
            p.q.assign(K, 0.0);
            p.zg.assign(K, 0.0);
            p.zb.assign(K, 0.0);
            std::size_t j = 0;
            for (Index k = 0; k < K; ++k) {
                while (j + 1 < cs.problem.times.size() &&
                       cs.problem.times[j + 1] <= times[k] + 1e-12)
                    ++j;
                if (cs.problem.times[j] <= times[k] + 1e-12) {
                    p.q[k] = cs.problem.q[j];
                    p.zg[k] = cs.problem.z_good[j];
                    p.zb[k] = cs.problem.z_bad[j];
                }
            }
            consider(p);
        }
    }

    detail::StepPath cur;
    cur.m = &m;
    cur.times = times;
    cur.q.assign(K, 0.0);
    cur.zg.assign(K, 0.0);
    cur.zb.assign(K, 0.0);

    // ta[k][c]: discounted weight of the good-news tranches released before
    // step k, Σ_{j<k} (e^{-λ_G z_{j-1}} - e^{-λ_G z_j})·e^{-r_c t_j}
    std::vector<std::vector<Real>> ta(K + 1, std::vector<Real>(n, 0.0));
    std::vector<Real> prefix_w(K + 1, 0.0);

    // stopping constraints of units already scheduled, re-checked as each new
    // step is assigned; once a later stop beats the recorded invest value the
    // whole subtree is infeasible no matter what comes after
    struct Record {
        Index c;
        Real now, ta_at;
    };
    std::vector<Record> records;

    std::size_t nodes = 0;
    bool out_of_budget = false;

    // optimistic completion: scheduled units are settled in prefix_w; every
    // unit still out collects the tranches already released plus the full
    // good payoff surviving to the current time
    auto upper_bound = [&](Index k, Real q_prev, Real zg_prev) {
        Real b = prefix_w[k];
        Real g = std::exp(-m.rate_good * zg_prev);
        for (Index c = 1; c <= n; ++c) {
            Real rem = m.cum_mass(c) - std::min(std::max(q_prev, m.cum_mass(c - 1)),
                                                m.cum_mass(c));
            if (rem > 0.0)
                b += rem * x0 * m.v_good *
                     (ta[k][c - 1] + g * std::exp(-m.discount_of(c) * times[k]));
        }
        return b;
    };

    std::function<void(Index, Real, Real, Real)> dfs = [&](Index k, Real q_prev,
                                                           Real zg_prev,
                                                           Real zb_prev) {
        if (out_of_budget) return;
        if (++nodes > spec.node_budget) {
            out_of_budget = true;
            return;
        }
        if (k == K) {
            consider(cur);
            return;
        }
        if (upper_bound(k, q_prev, zg_prev) <= best.welfare + 1e-12) return;

        int qu = int(std::llround(q_prev / spec.mass_step));
        int gu = int(std::llround(zg_prev / spec.mass_step));
        int bu = int(std::llround(zb_prev / spec.mass_step));
        Real t_k = times[k];

        for (int dq = units_total - qu; dq >= 0 && !out_of_budget; --dq)
            for (int nzb = qu; nzb >= bu && !out_of_budget; --nzb)
                for (int nzg = gu; nzg <= qu && !out_of_budget; ++nzg) {
                    Real q_k = (qu + dq) * spec.mass_step;
                    Real zg_k = Real(nzg) * spec.mass_step;
                    Real zb_k = Real(nzb) * spec.mass_step;

                    // releases precede investment: the tranche lands at k
                    Real dgf = std::exp(-m.rate_good * zg_prev) -
                               std::exp(-m.rate_good * zg_k);
                    for (Index c = 0; c < n; ++c)
                        ta[k + 1][c] =
                            ta[k][c] + dgf * std::exp(-m.discount_of(c + 1) * t_k);

                    bool broken = false;
                    Real g_k = std::exp(-m.rate_good * zg_k);
                    Real b_k = std::exp(-m.rate_bad * zb_k);
                    for (const Record& rec : records) {
                        Real dev =
                            x0 * m.v_good * (ta[k + 1][rec.c - 1] - rec.ta_at) +
                            (x0 * m.v_good * g_k + (1.0 - x0) * m.v_bad * b_k) *
                                std::exp(-m.discount_of(rec.c) * t_k);
                        if (dev > rec.now + spec.ic_tol) {
                            broken = true;
                            break;
                        }
                    }
                    if (broken) continue;

                    cur.q[k] = q_k;
                    cur.zg[k] = zg_k;
                    cur.zb[k] = zb_k;

                    Real add = 0.0;
                    std::size_t mark = records.size();
                    for (Index c = 1; c <= n; ++c) {
                        Real dqc = std::max(
                            0.0, std::min(q_k, m.cum_mass(c)) -
                                     std::max(q_prev, m.cum_mass(c - 1)));
                        if (dqc <= 0.0) continue;
                        Real d = std::exp(-m.discount_of(c) * t_k);
                        Real now = x0 * m.v_good * g_k * d +
                                   (1.0 - x0) * m.v_bad * b_k * d;
                        add += dqc * (now + x0 * m.v_good * ta[k + 1][c - 1]);
                        records.push_back({c, now, ta[k + 1][c - 1]});
                    }
                    prefix_w[k + 1] = prefix_w[k] + add;
                    dfs(k + 1, q_k, zg_k, zb_k);
                    records.resize(mark);
                }
    };
    dfs(0, 0.0, 0.0, 0.0);

    best.nodes = nodes;
    best.exhaustive = !out_of_budget;
    best.problem.dt = spec.dt;
    best.problem.horizon = spec.horizon;
    best.problem.times = times;
    if (best.problem.q.empty()) {
        best.problem.q.assign(K, 0.0);
        best.problem.z_good.assign(K, 0.0);
        best.problem.z_bad.assign(K, 0.0);
    }

    detail::StepPath win;
    win.m = &m;
    win.times = times;
    win.q = best.problem.q;
    win.zg = best.problem.z_good;
    win.zb = best.problem.z_bad;
    best.ic_ok = best.welfare > -kInf && win.ic_min_slack() >= -spec.ic_tol;

    // shape of the winner: no good news before the last investing cohort's
    // phase, and at each phase boundary (the step a later cohort first moves)
    // the bad news out so far covers the earlier cohorts within one cell
    Real q_final = win.q.empty() ? 0.0 : win.q.back();
    Index hat = 1;
    for (Index c = 1; c <= n; ++c)
        if (win.overlap(0.0, q_final, c) > 1e-12) hat = c;
    Index last_phase = K;
    for (Index k = 0; k < K; ++k)
        if (win.q[k] > m.cum_mass(hat - 1) + 1e-12) {
            last_phase = k;
            break;
        }
    best.good_withheld_before_last_phase = true;
    for (Index k = 0; k < last_phase; ++k)
        if (win.zg[k] > 1e-12) {
            best.good_withheld_before_last_phase = false;
            break;
        }

    best.bad_released_at_boundaries = true;
    for (Index c = 1; c < n; ++c) {
        Real boundary = m.cum_mass(c);
        Index crossed = K;
        for (Index k = 0; k < K; ++k)
            if (win.q[k] > boundary + 1e-12) {
                crossed = k;
                break;
            }
        if (crossed == K) continue;  // never crossed; nothing to cover
        if (win.zb[crossed] < boundary - spec.mass_step - 1e-9)
            best.bad_released_at_boundaries = false;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Breakdown bound

struct BreakdownReport {
    std::size_t samples = 0;
    std::size_t ic_passed = 0;
    std::size_t violations = 0;
    Real min_gap = kInf;  // min over checked times of q^TP - z^B
    bool pass = false;
};

// Bound check: under any incentive-compatible release schedule, cumulative
// disclosed bad news never overtakes the investment level of the
// transparent-breakdowns path with the same good-news process. Bad-news step
// schedules are sampled with Dirichlet(1,..,1) tranche weights at sorted
// uniform release times; samples whose induced path fails the incentive
// check are excluded (and counted) rather than treated as violations.
inline BreakdownReport check_breakdown_bound(const Market& m,
                                             const Schedule& exogenous_good,
                                             std::size_t samples,
                                             std::uint64_t seed,
                                             Real tol = 1e-6) {
    validate(m);
    DisclosurePolicy transparent_bad{exogenous_good, Transparent{}};
    Real horizon = 80.0;
    EquilibriumPath ref = solve_equilibrium(m, transparent_bad, horizon);

    BreakdownReport rep;
    rep.samples = samples;

    Real span = std::max(ref.end_time * 1.25, 0.5);
    for (std::size_t s = 0; s < samples; ++s) {
        detail::CounterStream rng(seed, s);
        int n_steps = 1 + int(rng.uniform() * 4.0);  // 1..4 release times

        std::vector<Real> when(n_steps);
        for (Real& t : when) t = rng.uniform() * span;
        std::sort(when.begin(), when.end());

        // Dirichlet(1,...,1) over n_steps+1 tranches; the last one is never
        // released, so caps end strictly below the total mass
        std::vector<Real> gaps(n_steps + 1);
        Real gsum = 0.0;
        for (Real& g : gaps) {
            g = rng.exponential(1.0);
            gsum += g;
        }
        StepCaps caps;
        Real acc = 0.0;
        for (int i = 0; i < n_steps; ++i) {
            acc += m.total_mass() * gaps[i] / gsum;
            caps.points.push_back({when[i], acc});
        }

        EquilibriumPath path;
        try {
            path = solve_equilibrium(m, {exogenous_good, caps}, horizon);
        } catch (const SolveError&) {
            continue;  // e.g. a hold outlasting the horizon; not a sample
        }
        ICReport ic = verify_ic(m, {exogenous_good, caps}, path,
                                make_deviation_grid(path, 48), 1e-8);
        if (!ic.pass) continue;
        ++rep.ic_passed;

        // compare the sampled path's disclosed bad news with the reference
        // investment level on a common grid plus the release instants
        std::vector<Real> checks;
        for (int i = 0; i <= 40; ++i)
            checks.push_back(path.end_time * Real(i) / 40.0);
        for (const Event& ev : path.events)
            if (ev.zb_after > ev.zb_before) checks.push_back(ev.time);

        bool violated = false;
        for (Real t : checks) {
            Real zb = path.z_bad_at(t);
            Real q_ref =
                t >= ref.end_time ? ref.q_at(ref.end_time) : ref.q_at(t);
            Real gap = q_ref - zb;
            rep.min_gap = std::min(rep.min_gap, gap);
            if (gap < -tol) violated = true;
        }
        if (violated) ++rep.violations;
    }
    rep.pass = rep.violations == 0 && rep.ic_passed > 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Contraction property

struct JensenReport {
    std::size_t instances = 0;
    std::size_t failures = 0;
    Real min_margin = kInf;
    bool pass = false;
};

// Replacing a two-point release-time lottery with the deterministic time that
// preserves one cohort's discounted value strictly helps every more patient
// cohort and strictly hurts every less patient one.
inline JensenReport jensen_contraction_check(const Market& m,
                                             std::size_t instances,
                                             std::uint64_t seed,
                                             Real tol = 1e-12) {
    if (!(m.rate_good > 0.0))
        throw std::invalid_argument("jensen_contraction_check: rate_good > 0");
    JensenReport rep;
    rep.instances = instances;
    for (std::size_t i = 0; i < instances; ++i) {
        detail::CounterStream rng(seed, i);
        Real t1 = rng.uniform() * 2.0;
        Real t2 = t1 + 0.05 + rng.uniform() * 2.0;
        Real p = 0.05 + 0.9 * rng.uniform();
        Real r_i = 0.2 + rng.uniform() * 3.0;
        Real r_lo = r_i - 0.1 - rng.uniform() * (r_i - 0.15);  // patient
        Real r_hi = r_i + 0.1 + rng.uniform() * 3.0;           // impatient

        Real mean_i = p * std::exp(-r_i * t1) + (1.0 - p) * std::exp(-r_i * t2);
        Real t_hat = -std::log(mean_i) / r_i;

        Real lo_lottery =
            p * std::exp(-r_lo * t1) + (1.0 - p) * std::exp(-r_lo * t2);
        Real hi_lottery =
            p * std::exp(-r_hi * t1) + (1.0 - p) * std::exp(-r_hi * t2);
        Real margin_lo = std::exp(-r_lo * t_hat) - lo_lottery;  // > 0
        Real margin_hi = hi_lottery - std::exp(-r_hi * t_hat);  // > 0

        Real margin = std::min(margin_lo, margin_hi);
        rep.min_margin = std::min(rep.min_margin, margin);
        if (!(margin > tol)) ++rep.failures;
    }
    rep.pass = rep.failures == 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Homogeneous-market observations

struct ObservationReport {
    std::size_t lattice_paths = 0;           // release schedules enumerated
    std::size_t early_release_feasible = 0;  // of those, early ones within caps
    std::size_t early_release_failures = 0;  // early ones breaking a constraint
    bool pure_delay_passes = false;
    Real max_zb_gap = -kInf;  // max over steps of feasible z^B minus the cap
    std::size_t feasible_full = 0;
    std::size_t feasible_below_threshold = 0;
    bool pass = false;
};

// Exhaustive grid checks in the one-cohort symmetric-rate setting:
// (a) along the fastest no-good-news schedule, every release plan that puts
//     good news out before the terminal date breaks a stopping constraint,
//     and the pure delay passes exactly;
// (b) across all full-revelation (q, z^B) step paths with the terminal good
//     release, disclosed bad news never exceeds the fastest schedule's level;
// (c) compressing the deadline below the terminal date kills feasibility.
inline ObservationReport observation_checks(const Market& m) {
    if (m.n_cohorts() != 1 || m.rate_good != m.rate_bad)
        throw std::invalid_argument(
            "observation_checks: one cohort with equal arrival rates");
    Real t_star = homogeneous_lower_bound(m);
    Real total = m.total_mass();
    Real x0 = m.prior;
    Real r1 = m.discount_of(1);

    ObservationReport rep;
    constexpr Index kSteps = 20;  // grid points 0..kSteps
    constexpr int kUnits = 4;
    Real cell = total / kUnits;

    std::vector<Real> times(kSteps + 1);
    for (Index k = 0; k <= kSteps; ++k)
        times[k] = t_star * Real(k) / Real(kSteps);

    // fastest incentive-compatible level with the good news stored: the mass
    // whose own bad news keeps a stop at time t exactly as good as moving at
    // zero did
    Real v0 = x0 * m.v_good + (1.0 - x0) * m.v_bad;
    auto q_tb = [&](Real t) {
        Real e = (v0 * std::exp(r1 * t) - x0 * m.v_good) /
                 ((1.0 - x0) * m.v_bad);
        return std::min(total, -std::log(e) / m.rate_bad);
    };

    // the schedule leads the disclosed level by one step, so with releases
    // preceding investment every stop along it is exactly indifferent and the
    // discrete constraints hold with zero slack instead of a sampling lag
    std::vector<Real> q_lead(kSteps + 1);
    for (Index k = 0; k + 1 <= kSteps; ++k) q_lead[k] = q_tb(times[k + 1]);
    q_lead[kSteps] = total;

    // (a): enumerate all quarter-mass nondecreasing z^G schedules ending full
    detail::StepPath p;
    p.m = &m;
    p.times = times;
    p.q = q_lead;
    p.zb.assign(kSteps + 1, 0.0);
    for (Index k = 1; k <= kSteps; ++k) p.zb[k] = q_lead[k - 1];
    p.zg.assign(kSteps + 1, 0.0);

    std::vector<int> incr(kSteps + 1, 0);
    std::function<void(Index, int)> enumerate = [&](Index pos, int left) {
        if (pos == kSteps + 1) {
            if (left != 0) return;
            ++rep.lattice_paths;
            Real acc = 0.0;
            bool early = false;
            for (Index k = 0; k <= kSteps; ++k) {
                acc += incr[k] * cell;
                p.zg[k] = acc;
                if (k < kSteps && p.zg[k] > 1e-12) early = true;
            }
            if (!p.feasible(total)) return;  // release ahead of investment
            bool ok = p.ic_min_slack() >= -1e-9;
            if (early) {
                ++rep.early_release_feasible;
                if (!ok) ++rep.early_release_failures;
            } else {
                rep.pure_delay_passes = ok;
            }
            return;
        }
        for (int u = 0; u <= left; ++u) {
            incr[pos] = u;
            enumerate(pos + 1, left - u);
        }
        incr[pos] = 0;
    };
    enumerate(0, kUnits);

    // (b)/(c): joint DFS over (q, z^B) quarter-mass paths with the terminal
    // release only; a stop must never beat the value some scheduled unit
    // locked in, which prunes fast-release subtrees as they are built
    detail::StepPath jp;
    jp.m = &m;
    jp.q.assign(kSteps + 1, 0.0);
    jp.zb.assign(kSteps + 1, 0.0);
    jp.zg.assign(kSteps + 1, 0.0);
    jp.zg[kSteps] = total;

    std::vector<Real> zb_max(kSteps + 1, -kInf);

    auto walk_paths = [&](const std::vector<Real>& tms, bool record_levels,
                          std::size_t& feasible_count) {
        jp.times = tms;
        Real min_now = kInf;
        std::function<void(Index, int, int)> walk = [&](Index k, int qu,
                                                        int zbu) {
            if (k == kSteps + 1) {
                if (qu != kUnits || zbu != kUnits) return;
                if (jp.feasible(total) && jp.ic_min_slack() >= -1e-9) {
                    ++feasible_count;
                    if (record_levels)
                        for (Index j = 0; j <= kSteps; ++j)
                            zb_max[j] = std::max(zb_max[j], jp.zb[j]);
                }
                return;
            }
            for (int nq = qu; nq <= kUnits; ++nq)
                for (int nzb = zbu; nzb <= qu; ++nzb) {
                    Real stop_here =
                        (x0 * m.v_good +
                         (1.0 - x0) * m.v_bad *
                             std::exp(-m.rate_bad * Real(nzb) * cell)) *
                        std::exp(-r1 * tms[k]);
                    if (stop_here > min_now + 1e-9) continue;
                    Real saved = min_now;
                    if (nq > qu) min_now = std::min(min_now, stop_here);
                    jp.q[k] = Real(nq) * cell;
                    jp.zb[k] = Real(nzb) * cell;
                    walk(k + 1, nq, nzb);
                    min_now = saved;
                }
        };
        walk(0, 0, 0);
    };

    walk_paths(times, true, rep.feasible_full);

    for (Index k = 0; k <= kSteps; ++k)
        if (zb_max[k] > -kInf)
            rep.max_zb_gap =
                std::max(rep.max_zb_gap, zb_max[k] - q_tb(times[k]));

    std::vector<Real> short_times(kSteps + 1);
    for (Index k = 0; k <= kSteps; ++k) short_times[k] = 0.8 * times[k];
    walk_paths(short_times, false, rep.feasible_below_threshold);

    rep.pass = rep.pure_delay_passes && rep.early_release_feasible > 0 &&
               rep.early_release_failures == rep.early_release_feasible &&
               rep.feasible_full > 0 && rep.max_zb_gap <= cell + 1e-9 &&
               rep.feasible_below_threshold == 0;
    return rep;
}

}  // namespace disclose
