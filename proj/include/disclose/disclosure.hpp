#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "disclose/benchmark.hpp"
#include "disclose/model.hpp"

namespace disclose {

// ---------------------------------------------------------------------------
// Disclosure schedules
// ---------------------------------------------------------------------------

struct Transparent {};
struct Silent {};
struct DelayUntil {
    Real time = 0.0;
};
struct StepCaps {
    struct Point {
        Real time = 0.0;
        Real cap = 0.0;
    };
    std::vector<Point> points;
};
using Schedule = std::variant<Transparent, Silent, DelayUntil, StepCaps>;

struct DisclosurePolicy {
    Schedule good;
    Schedule bad;
};

enum class SolveErrorKind { InvalidPolicy, UnsupportedPolicy, HorizonTooShort };

class SolveError : public std::runtime_error {
public:
    SolveError(SolveErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    SolveErrorKind kind() const { return kind_; }

private:
    SolveErrorKind kind_;
};

inline void validate_schedule(const Schedule& s) {
    if (const auto* sc = std::get_if<StepCaps>(&s)) {
        Real prev_t = -kInf, prev_cap = 0.0;
        for (const auto& p : sc->points) {
            if (!(p.time >= 0.0) || !(p.time > prev_t))
                throw SolveError(SolveErrorKind::InvalidPolicy,
                                 "step-cap times must be nonnegative and strictly increasing");
            if (!(p.cap >= prev_cap))
                throw SolveError(SolveErrorKind::InvalidPolicy,
                                 "step caps must be nonnegative and nondecreasing");
            prev_t = p.time;
            prev_cap = p.cap;
        }
    } else if (const auto* d = std::get_if<DelayUntil>(&s)) {
        if (!(d->time >= 0.0))
            throw SolveError(SolveErrorKind::InvalidPolicy, "delay time must be nonnegative");
    }
}

inline void validate_policy(const DisclosurePolicy& p) {
    validate_schedule(p.good);
    validate_schedule(p.bad);
}

// Cumulative disclosure cap z̄ at time t (right-continuous step function).
inline Real cap_at(const Schedule& s, Real t) {
    if (std::holds_alternative<Transparent>(s)) return kInf;
    if (std::holds_alternative<Silent>(s)) return 0.0;
    if (const auto* d = std::get_if<DelayUntil>(&s)) return t >= d->time ? kInf : 0.0;
    const auto& pts = std::get<StepCaps>(s).points;
    Real cap = 0.0;
    for (const auto& p : pts) {
        if (p.time > t) break;
        cap = p.cap;
    }
    return cap;
}

inline void append_cap_times(const Schedule& s, std::vector<Real>& out) {
    if (const auto* d = std::get_if<DelayUntil>(&s)) out.push_back(d->time);
    if (const auto* sc = std::get_if<StepCaps>(&s))
        for (const auto& p : sc->points) out.push_back(p.time);
}

// ---------------------------------------------------------------------------
// Equilibrium path representation
// ---------------------------------------------------------------------------

enum class SegmentKind { TransparentFlow, FrozenGoodFlow, Hold };

// Unconditional invest-now payoff when the good channel is frozen with factor
// g = e^{-λ_G z_G} and the bad channel has revealed q.
inline Real frozen_value(const Market& m, Real good_factor, Real q) {
    return m.prior * good_factor * m.v_good +
           (1.0 - m.prior) * std::exp(-m.rate_bad * q) * m.v_bad;
}

inline Real frozen_level_inverse(const Market& m, Real good_factor, Real value) {
    Real num = value - m.prior * good_factor * m.v_good;
    return -std::log(num / ((1.0 - m.prior) * m.v_bad)) / m.rate_bad;
}

struct Segment {
    SegmentKind kind = SegmentKind::Hold;
    Index cohort = 0;  // marginal cohort during flow; next waiting cohort on holds
    Real t_start = 0.0, t_end = 0.0;
    Real q_start = 0.0, q_end = 0.0;
    Real zg_start = 0.0, zb_start = 0.0;
    TransparentPhase phase;   // TransparentFlow coefficients
    Real good_factor = 1.0;   // FrozenGoodFlow: e^{-λ_G z_G}
    Real level = 0.0;         // FrozenGoodFlow: e^{-r_i t}·(invest-now value), constant
    Real discount = 0.0;      // r of the marginal cohort

    Real q_at(const Market& m, Real t) const {
        switch (kind) {
            case SegmentKind::TransparentFlow:
                return phase_closed_form(phase, t);
            case SegmentKind::FrozenGoodFlow:
                return frozen_level_inverse(m, good_factor, level * std::exp(discount * t));
            case SegmentKind::Hold:
                return q_start;
        }
        return q_start;
    }

    // Time at which the segment's flow reaches mass level q (inverse of q_at).
    Real time_at(const Market& m, Real q) const {
        switch (kind) {
            case SegmentKind::TransparentFlow:
                return phase_time_to(phase, q);
            case SegmentKind::FrozenGoodFlow:
                return std::log(frozen_value(m, good_factor, q) / (level)) / discount;
            case SegmentKind::Hold:
                return t_start;
        }
        return t_start;
    }
};

enum class EventKind { PhaseChange, ReleaseAtom, InvestmentAtom, Stall, Termination };

struct Event {
    EventKind kind = EventKind::PhaseChange;
    Real time = 0.0;
    Index cohort = 0;       // completed cohort (phase change) or first investing cohort (atom)
    Real dz_good = 0.0, dz_bad = 0.0;
    Real dq = 0.0;
    Real q_before = 0.0, zg_before = 0.0, zb_before = 0.0;
    Real q_after = 0.0, zg_after = 0.0, zb_after = 0.0;
};

struct EquilibriumPath {
    Market market;
    DisclosurePolicy policy;
    std::vector<Segment> segments;
    std::vector<Event> events;  // time-ordered; releases precede same-time investment
    Real end_time = 0.0;
    Real final_q = 0.0, final_zg = 0.0, final_zb = 0.0;
    Index hat_cohort = 0;           // last cohort investing absent news
    std::vector<Real> phase_times;  // [i] = first time q reaches F_i; [0] = 0

    struct State {
        Real q = 0.0, zg = 0.0, zb = 0.0;
    };

    State state_at(Real t, bool left = false) const {
        if (segments.empty()) {
            if (t <= 0.0 && left) return {0.0, 0.0, 0.0};
            return {final_q, final_zg, final_zb};
        }
        if (t < segments.front().t_start || (left && t <= segments.front().t_start))
            return {0.0, 0.0, 0.0};
        if (t > end_time || (!left && t >= end_time)) return {final_q, final_zg, final_zb};
        for (const auto& s : segments) {
            bool inside = left ? (t <= s.t_end) : (t < s.t_end);
            if (t >= s.t_start && inside) {
                if (left && t == s.t_start) break;  // boundary: previous segment's end
                Real q = s.q_at(market, t);
                switch (s.kind) {
                    case SegmentKind::TransparentFlow:
                        return {q, q, q};
                    case SegmentKind::FrozenGoodFlow:
                        return {q, s.zg_start, q};
                    case SegmentKind::Hold:
                        return {s.q_start, s.zg_start, s.zb_start};
                }
            }
        }
        // left limit at a segment boundary: end state of the segment ending at t
        for (const auto& s : segments)
            if (s.t_end == t) {
                switch (s.kind) {
                    case SegmentKind::TransparentFlow:
                        return {s.q_end, s.q_end, s.q_end};
                    case SegmentKind::FrozenGoodFlow:
                        return {s.q_end, s.zg_start, s.q_end};
                    case SegmentKind::Hold:
                        return {s.q_start, s.zg_start, s.zb_start};
                }
            }
        return {final_q, final_zg, final_zb};
    }

    Real q_at(Real t, bool left = false) const { return state_at(t, left).q; }
    Real z_good_at(Real t, bool left = false) const { return state_at(t, left).zg; }
    Real z_bad_at(Real t, bool left = false) const { return state_at(t, left).zb; }
    Real x_at(Real t, bool left = false) const {
        State s = state_at(t, left);
        return posterior_no_news(market, s.zg, s.zb);
    }
};

// ---------------------------------------------------------------------------
// Equilibrium construction
// ---------------------------------------------------------------------------

namespace detail {

inline Real invest_value(const Market& m, Real zg, Real zb) {
    return m.prior * std::exp(-m.rate_good * zg) * m.v_good +
           (1.0 - m.prior) * std::exp(-m.rate_bad * zb) * m.v_bad;
}

struct CapState {
    const DisclosurePolicy* policy;
    std::vector<Real> ticks;  // merged strict cap-increase times, sorted

    explicit CapState(const DisclosurePolicy& p) : policy(&p) {
        std::vector<Real> raw;
        append_cap_times(p.good, raw);
        append_cap_times(p.bad, raw);
        std::sort(raw.begin(), raw.end());
        Real cg = cap_at(p.good, 0.0), cb = cap_at(p.bad, 0.0);
        for (Real t : raw) {
            if (t <= 0.0) continue;
            Real ng = cap_at(p.good, t), nb = cap_at(p.bad, t);
            if (ng > cg || nb > cb) {
                if (ticks.empty() || ticks.back() < t) ticks.push_back(t);
                cg = ng;
                cb = nb;
            }
        }
    }

    Real good(Real t) const { return cap_at(policy->good, t); }
    Real bad(Real t) const { return cap_at(policy->bad, t); }

    std::optional<Real> next_tick(Real t) const {
        auto it = std::upper_bound(ticks.begin(), ticks.end(), t);
        if (it == ticks.end()) return std::nullopt;
        return *it;
    }
};

// Best wait-and-see value for a unit of discount r at time t whose queue
// position q stays fixed while future cap ticks release stored evidence: at
// each tick the unit either invests at the disclosed level or keeps waiting,
// collecting good-news pickups along the way (never investing floors at 0).
// Exact for candidate continuations because the frontier holds between ticks
// and a unit at the front of a resumed flow or atom is indifferent there.
inline Real wait_best(const Market& m, const CapState& caps, Real r, Real t, Real q,
                      Real zg, Real zb) {
    struct Level {
        Real time, zg, zb;
    };
    std::vector<Level> levels;
    Real cg = zg, cb = zb;
    for (Real te : caps.ticks) {
        if (te <= t) continue;
        Real ng = std::max(cg, std::min(caps.good(te), q));
        Real nb = std::max(cb, std::min(caps.bad(te), q));
        if (ng > cg || nb > cb) {
            levels.push_back({te, ng, nb});
            cg = ng;
            cb = nb;
        }
    }
    if (levels.empty()) return 0.0;
    Real cont = 0.0;
    for (std::size_t k = levels.size(); k-- > 0;) {
        Real here = invest_value(m, levels[k].zg, levels[k].zb);
        Real next = 0.0;
        if (k + 1 < levels.size()) {
            Real pick = m.prior * m.v_good *
                        (std::exp(-m.rate_good * levels[k].zg) -
                         std::exp(-m.rate_good * levels[k + 1].zg));
            next = std::exp(-r * (levels[k + 1].time - levels[k].time)) * (pick + cont);
        }
        cont = std::max(here, next);
    }
    Real pick0 =
        m.prior * m.v_good *
        (std::exp(-m.rate_good * zg) - std::exp(-m.rate_good * levels.front().zg));
    return std::exp(-r * (levels.front().time - t)) * (pick0 + cont);
}

// Largest atom such that the marginal unit still weakly prefers joining it.
// Atom units commit on pre-atom information, so the wait side collects the
// atom's own release immediately and the tick releases afterwards.
inline Real atom_size(const Market& m, const CapState& caps, Real t, Real q, Real zg,
                      Real zb) {
    Real invest_now = invest_value(m, zg, zb);
    Real cg_now = caps.good(t), cb_now = caps.bad(t);
    Real max_a = m.total_mass() - q;
    auto wait_gain = [&](Real a) {
        Real qf = q + a;
        Index j = m.cohort_at(std::min(qf, m.total_mass() * (1.0 - 1e-15)));
        Real zg0 = std::max(zg, std::min(cg_now, qf));
        Real zb0 = std::max(zb, std::min(cb_now, qf));
        Real pickup =
            m.prior * (std::exp(-m.rate_good * zg) - std::exp(-m.rate_good * zg0)) *
            m.v_good;
        Real best = std::max(invest_value(m, zg0, zb0),
                             wait_best(m, caps, m.discount_of(j), t, qf, zg0, zb0));
        return pickup + best - invest_now;
    };
    if (wait_gain(0.0) > 1e-14) return 0.0;
    if (wait_gain(max_a) <= 1e-14) return max_a;
    Real lo = 0.0, hi = max_a;
    for (int it = 0; it < 200; ++it) {
        Real mid = 0.5 * (lo + hi);
        (wait_gain(mid) <= 1e-14 ? lo : hi) = mid;
    }
    return lo;
}

}  // namespace detail

inline EquilibriumPath solve_equilibrium(const Market& m, const DisclosurePolicy& policy,
                                         Real horizon) {
    validate(m);
    validate_policy(policy);
    if (std::holds_alternative<Silent>(policy.bad))
        throw SolveError(SolveErrorKind::UnsupportedPolicy,
                         "silent bad news is outside the supported class");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");

    detail::CapState caps(policy);
    EquilibriumPath path;
    path.market = m;
    path.policy = policy;
    path.phase_times = {0.0};

    const Real f_total = m.total_mass();
    const Real mass_eps = 1e-12 * std::max(1.0, f_total);
    Real t = 0.0, q = 0.0;
    Real zg = std::min(caps.good(0.0), q), zb = std::min(caps.bad(0.0), q);

    auto record_phase_crossings = [&](Real at) {
        while (path.phase_times.size() <= m.n_cohorts() &&
               q >= m.cum_mass(path.phase_times.size()) - mass_eps) {
            Index done = path.phase_times.size();
            path.phase_times.push_back(at);
            Event pc;
            pc.kind = EventKind::PhaseChange;
            pc.time = at;
            pc.cohort = done;
            pc.q_before = pc.q_after = q;
            pc.zg_before = pc.zg_after = zg;
            pc.zb_before = pc.zb_after = zb;
            path.events.push_back(pc);
        }
    };

    auto finish = [&](std::optional<EventKind> kind) {
        if (kind) {
            Event ev;
            ev.kind = *kind;
            ev.time = t;
            ev.q_before = ev.q_after = q;
            ev.zg_before = ev.zg_after = zg;
            ev.zb_before = ev.zb_after = zb;
            path.events.push_back(ev);
        }
        path.end_time = t;
        path.final_q = q;
        path.final_zg = zg;
        path.final_zb = zb;
        path.hat_cohort = 0;
        for (Index j = 1; j <= m.n_cohorts(); ++j)
            if (q > m.cum_mass(j - 1) + mass_eps) path.hat_cohort = j;
    };

    auto process_release = [&](Real at) {
        Real ng = std::min(caps.good(at), q);
        Real nb = std::min(caps.bad(at), q);
        if (ng > zg + 1e-15 || nb > zb + 1e-15) {
            Event ev;
            ev.kind = EventKind::ReleaseAtom;
            ev.time = at;
            ev.q_before = ev.q_after = q;
            ev.zg_before = zg;
            ev.zb_before = zb;
            ev.dz_good = std::max(ng - zg, 0.0);
            ev.dz_bad = std::max(nb - zb, 0.0);
            zg = std::max(ng, zg);
            zb = std::max(nb, zb);
            ev.zg_after = zg;
            ev.zb_after = zb;
            path.events.push_back(ev);
        }
    };

    auto emit_atom = [&](Real amount) {
        Event ev;
        ev.kind = EventKind::InvestmentAtom;
        ev.time = t;
        ev.cohort = m.cohort_at(q);
        ev.dq = amount;
        ev.q_before = q;
        ev.zg_before = zg;
        ev.zb_before = zb;
        q += amount;
        zg = std::max(zg, std::min(caps.good(t), q));
        zb = std::max(zb, std::min(caps.bad(t), q));
        ev.q_after = q;
        ev.zg_after = zg;
        ev.zb_after = zb;
        path.events.push_back(ev);
        record_phase_crossings(t);
    };

    auto emit_hold = [&](Real until) {
        Segment s;
        s.kind = SegmentKind::Hold;
        s.cohort = m.cohort_at(q);
        s.t_start = t;
        s.t_end = until;
        s.q_start = s.q_end = q;
        s.zg_start = zg;
        s.zb_start = zb;
        s.discount = m.discount_of(s.cohort);
        path.segments.push_back(s);
        t = until;
    };

    const int max_iter = 100000;
    for (int iter = 0; iter < max_iter; ++iter) {
        if (q >= f_total - mass_eps) {
            finish(std::nullopt);
            return path;
        }
        Real x = posterior_no_news(m, zg, zb);
        Real value_now = expected_value(m, x);
        auto tick = caps.next_tick(t);

        if (value_now <= 0.0) {
            if (tick) {
                if (*tick > horizon)
                    throw SolveError(SolveErrorKind::HorizonTooShort,
                                     "pending release beyond the horizon");
                emit_hold(*tick);
                process_release(t);
                continue;
            }
            finish(value_now < -1e-12 ? EventKind::Termination : EventKind::Stall);
            return path;
        }

        bool bad_frozen = !(m.rate_bad > 0.0) || caps.bad(t) <= q + 1e-12 ||
                          x >= 1.0 - 1e-15;
        if (bad_frozen) {
            if (!tick) {
                emit_atom(f_total - q);
                continue;
            }
            Real a = detail::atom_size(m, caps, t, q, zg, zb);
            if (a > 1e-14) emit_atom(a);
            if (q >= f_total - mass_eps) continue;
            if (*tick > horizon)
                throw SolveError(SolveErrorKind::HorizonTooShort,
                                 "pending release beyond the horizon");
            emit_hold(*tick);
            process_release(t);
            continue;
        }

        // Bad news tracks the frontier: flow, unless pending releases make
        // waiting strictly dominant for the marginal cohort.
        Index i = m.cohort_at(q);
        Real r_i = m.discount_of(i);
        auto wait_dominates = [&](Real at, Real q_s, Real zg_s) {
            return detail::wait_best(m, caps, r_i, at, q_s, zg_s, q_s) >
                   detail::invest_value(m, zg_s, q_s) + 1e-12;
        };
        if (tick && wait_dominates(t, q, zg)) {
            if (*tick > horizon)
                throw SolveError(SolveErrorKind::HorizonTooShort,
                                 "pending release beyond the horizon");
            emit_hold(*tick);
            process_release(t);
            continue;
        }

        Segment s;
        s.cohort = i;
        s.discount = r_i;
        s.t_start = t;
        s.q_start = q;
        s.zg_start = zg;
        s.zb_start = zb;
        Real q_target = std::min(m.cum_mass(i), caps.bad(t));
        bool good_tracks = caps.good(t) > q + 1e-12;
        Real t_target;
        if (good_tracks) {
            s.kind = SegmentKind::TransparentFlow;
            s.phase = make_phase(m, i, t, q, posterior_no_news(m, zg, zb));
            q_target = std::min(q_target, caps.good(t));
            t_target = phase_time_to(s.phase, q_target);
        } else {
            s.kind = SegmentKind::FrozenGoodFlow;
            s.good_factor = std::exp(-m.rate_good * zg);
            s.level = std::exp(-r_i * t) * frozen_value(m, s.good_factor, q);
            t_target = t + std::log(frozen_value(m, s.good_factor, q_target) /
                                    frozen_value(m, s.good_factor, q)) /
                               r_i;
        }
        Real t_end = std::min(t_target, horizon);
        if (tick) t_end = std::min(t_end, *tick);

        // A pending release can overtake the flow indifference mid-segment.
        if (tick) {
            auto flips = [&](Real at) {
                Real q_s = s.q_at(m, at);
                Real zg_s = good_tracks ? q_s : zg;
                return wait_dominates(at, q_s, zg_s);
            };
            if (flips(t_end)) {
                Real lo = t, hi = t_end;
                for (int b = 0; b < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++b) {
                    Real mid = 0.5 * (lo + hi);
                    (flips(mid) ? hi : lo) = mid;
                }
                t_end = hi;
            } else {
                const int scan = 16;
                for (int k = 1; k < scan; ++k) {
                    Real at = t + (t_end - t) * k / scan;
                    if (flips(at)) {
                        Real lo = t, hi = at;
                        for (int b = 0; b < 200 && hi - lo > 1e-15 * std::max(1.0, hi);
                             ++b) {
                            Real mid = 0.5 * (lo + hi);
                            (flips(mid) ? hi : lo) = mid;
                        }
                        t_end = hi;
                        break;
                    }
                }
            }
            if (t_end <= t + 1e-18 && t_end < t_target) {
                // wait flipped immediately: hold to the next release
                if (*tick > horizon)
                    throw SolveError(SolveErrorKind::HorizonTooShort,
                                     "pending release beyond the horizon");
                emit_hold(*tick);
                process_release(t);
                continue;
            }
        }

        Real q_end = t_end >= t_target ? q_target : s.q_at(m, t_end);
        s.t_end = t_end;
        s.q_end = q_end;
        path.segments.push_back(s);
        t = t_end;
        q = q_end;
        // Only the segment's own dynamics move the evidence state here; a cap
        // jumping at t_end is a release and must be booked as one below.
        zb = std::max(zb, q);
        if (good_tracks) zg = std::max(zg, q);
        record_phase_crossings(t);

        if (t >= horizon && q < f_total - mass_eps && t_target > horizon) {
            if (t_target == kInf) {
                finish(EventKind::Stall);  // dried out against the asymptote
                return path;
            }
            throw SolveError(SolveErrorKind::HorizonTooShort,
                             "flow incomplete at the horizon");
        }
        if (tick && t == *tick) process_release(t);
    }
    throw std::runtime_error("equilibrium construction did not terminate");
}

// ---------------------------------------------------------------------------
// Welfare
// ---------------------------------------------------------------------------

struct WelfareReport {
    Real total = 0.0;
    Real good_release_term = 0.0;
    Real no_news_invest_term = 0.0;
    Real atom_term = 0.0;
    std::vector<Real> per_cohort;
};

namespace detail {

inline Real remaining_mass(const Market& m, Index j, Real q) {
    Real lo = m.cum_mass(j - 1), hi = m.cum_mass(j);
    return std::max(0.0, hi - std::max(q, lo));
}

template <typename F>
Real integrate(F&& f, Real a, Real b) {
    if (!(b > a)) return 0.0;
    return boost::math::quadrature::gauss_kronrod<Real, 31>::integrate(f, a, b, 8, 1e-13);
}

}  // namespace detail

inline WelfareReport welfare(const Market& m, const EquilibriumPath& path) {
    WelfareReport rep;
    rep.per_cohort.assign(m.n_cohorts(), 0.0);
    const Real x0 = m.prior;

    for (const auto& ev : path.events) {
        if (ev.kind == EventKind::ReleaseAtom && ev.dz_good > 0.0) {
            Real dg = std::exp(-m.rate_good * ev.zg_before) -
                      std::exp(-m.rate_good * ev.zg_after);
            for (Index j = 1; j <= m.n_cohorts(); ++j) {
                Real piece = x0 * m.v_good * dg * detail::remaining_mass(m, j, ev.q_before) *
                             std::exp(-m.discount_of(j) * ev.time);
                rep.good_release_term += piece;
                rep.per_cohort[j - 1] += piece;
            }
        } else if (ev.kind == EventKind::InvestmentAtom && ev.dq > 0.0) {
            Real unit = detail::invest_value(m, ev.zg_before, ev.zb_before);
            for (Index j = 1; j <= m.n_cohorts(); ++j) {
                Real lo = std::max(ev.q_before, m.cum_mass(j - 1));
                Real hi = std::min(ev.q_after, m.cum_mass(j));
                if (hi <= lo) continue;
                Real piece = (hi - lo) * std::exp(-m.discount_of(j) * ev.time) * unit;
                rep.atom_term += piece;
                rep.per_cohort[j - 1] += piece;
            }
            // evidence disclosed by the atom itself, picked up by the rest
            if (ev.zg_after > ev.zg_before) {
                Real dg = std::exp(-m.rate_good * ev.zg_before) -
                          std::exp(-m.rate_good * ev.zg_after);
                for (Index j = 1; j <= m.n_cohorts(); ++j) {
                    Real piece = x0 * m.v_good * dg *
                                 detail::remaining_mass(m, j, ev.q_after) *
                                 std::exp(-m.discount_of(j) * ev.time);
                    rep.good_release_term += piece;
                    rep.per_cohort[j - 1] += piece;
                }
            }
        }
    }

    for (const auto& s : path.segments) {
        if (s.kind == SegmentKind::Hold || s.q_end <= s.q_start) continue;
        Index i = s.cohort;
        if (s.kind == SegmentKind::FrozenGoodFlow) {
            // e^{-r_i t}·(invest value) is constant along the segment
            Real piece = s.level * (s.q_end - s.q_start);
            rep.no_news_invest_term += piece;
            rep.per_cohort[i - 1] += piece;
        } else {
            Real piece = detail::integrate(
                [&](Real u) {
                    Real tt = phase_time_to(s.phase, u);
                    return std::exp(-s.discount * tt) * detail::invest_value(m, u, u);
                },
                s.q_start, s.q_end);
            rep.no_news_invest_term += piece;
            rep.per_cohort[i - 1] += piece;
            // continuous good-news pickups while the frontier is transparent
            for (Index j = i; j <= m.n_cohorts(); ++j) {
                Real rj = m.discount_of(j);
                Real pick = detail::integrate(
                    [&](Real u) {
                        Real tt = phase_time_to(s.phase, u);
                        return detail::remaining_mass(m, j, u) * std::exp(-rj * tt) * x0 *
                               m.v_good * m.rate_good * std::exp(-m.rate_good * u);
                    },
                    s.q_start, s.q_end);
                rep.good_release_term += pick;
                rep.per_cohort[j - 1] += pick;
            }
        }
    }

    rep.total = rep.good_release_term + rep.no_news_invest_term + rep.atom_term;
    return rep;
}

// ---------------------------------------------------------------------------
// Stopping values and incentive compatibility
// ---------------------------------------------------------------------------

// Precomputed tables for evaluating deviation payoffs along a path: cumulative
// discounted good-news pickups per cohort, survival probabilities, and
// unconditional invest values at arbitrary (time, side) points.
// Deviation-payoff pieces along a fixed path. All pickup windows are valued
// at a caller-supplied reference time at or before the window so every
// discount factor stays at most one; rescaling a time-zero cumulative by
// e^{r t} would amplify quadrature error without bound on long horizons.
class PathValuation {
public:
    explicit PathValuation(const EquilibriumPath& path) : path_(&path), m_(&path.market) {}

    Real survival(Real t, bool post) const {
        auto st = path_->state_at(t, !post);
        return m_->prior * std::exp(-m_->rate_good * st.zg) +
               (1.0 - m_->prior) * std::exp(-m_->rate_bad * st.zb);
    }

    Real invest_unconditional(Real t, bool post) const {
        auto st = path_->state_at(t, !post);
        return detail::invest_value(*m_, st.zg, st.zb);
    }

    // Unconditional discounted value of the good news a waiting unit of
    // `cohort` picks up from flow disclosure over (a, b), valued at ref <= a.
    Real flow_pickup_between(Index cohort, Real a, Real b, Real ref) const {
        if (!(b > a)) return 0.0;
        Real r = m_->discount_of(cohort);
        Real out = 0.0;
        for (const Segment& s : path_->segments) {
            if (s.kind != SegmentKind::TransparentFlow) continue;
            Real lo = std::max(a, s.t_start), hi = std::min(b, s.t_end);
            if (!(hi > lo)) continue;
            Real q_lo = lo <= s.t_start ? s.q_start : s.q_at(*m_, lo);
            Real q_hi = hi >= s.t_end ? s.q_end : s.q_at(*m_, hi);
            if (!(q_hi > q_lo)) continue;
            out += detail::integrate(
                [&](Real u) {
                    Real tt = phase_time_to(s.phase, u);
                    return std::exp(-r * (tt - ref)) * m_->prior * m_->v_good *
                           m_->rate_good * std::exp(-m_->rate_good * u);
                },
                q_lo, q_hi);
        }
        return out;
    }

    // Release atoms landing in (a, b], valued at ref; `include_b` keeps or
    // drops atoms exactly at b. Atoms at a belong to the a-instant info set.
    Real release_pickup_between(Index cohort, Real a, Real b, Real ref,
                                bool include_b) const {
        Real r = m_->discount_of(cohort);
        Real out = 0.0;
        for (const Event& ev : path_->events) {
            if (!(ev.time > a) || ev.time > b || (!include_b && ev.time == b)) continue;
            if (ev.zg_after <= ev.zg_before) continue;
            out += m_->prior * m_->v_good * std::exp(-r * (ev.time - ref)) *
                   (std::exp(-m_->rate_good * ev.zg_before) -
                    std::exp(-m_->rate_good * ev.zg_after));
        }
        return out;
    }

    // Release atoms landing exactly at t, valued at ref <= t.
    Real release_pickup_at(Index cohort, Real t, Real ref) const {
        Real r = m_->discount_of(cohort);
        Real out = 0.0;
        for (const Event& ev : path_->events) {
            if (ev.time != t || ev.zg_after <= ev.zg_before) continue;
            out += m_->prior * m_->v_good * std::exp(-r * (t - ref)) *
                   (std::exp(-m_->rate_good * ev.zg_before) -
                    std::exp(-m_->rate_good * ev.zg_after));
        }
        return out;
    }

    // Value, conditional on the (t=from, post-events) information set, of the
    // strategy "invest at stop absent news, invest immediately on good news".
    Real stopping_value(Index cohort, Real from, Real stop, bool stop_post = false) const {
        if (stop <= from) {
            Real p = survival(from, true);
            return invest_unconditional(from, true) / p;
        }
        Real r = m_->discount_of(cohort);
        Real pick = flow_pickup_between(cohort, from, stop, from) +
                    release_pickup_between(cohort, from, stop, from, stop_post);
        Real tail = std::exp(-r * (stop - from)) * invest_unconditional(stop, stop_post);
        return (pick + tail) / survival(from, true);
    }

    Real never_value(Index cohort, Real from) const {
        Real pick = flow_pickup_between(cohort, from, path_->end_time, from) +
                    release_pickup_between(cohort, from, path_->end_time, from, true);
        return pick / survival(from, true);
    }

private:
    const EquilibriumPath* path_;
    const Market* m_;
};

inline Real stopping_value(const Market& m, const EquilibriumPath& path, Index cohort,
                           Real from, Real stop) {
    (void)m;
    return PathValuation(path).stopping_value(cohort, from, stop);
}

struct ICSample {
    Index cohort = 0;
    Real decision_time = 0.0;
    Real deviation_stop_time = 0.0;
    Real slack = 0.0;
    bool investing = false;  // true: invest-now check (i); false: waiting check (ii)
};

struct ICReport {
    std::vector<ICSample> samples;
    Real min_slack = 0.0;
    bool pass = true;
};

inline std::vector<Real> make_deviation_grid(const EquilibriumPath& path, int points = 160) {
    std::vector<Real> grid;
    for (int k = 0; k <= points; ++k)
        grid.push_back(path.end_time * k / static_cast<Real>(points));
    for (const auto& s : path.segments) {
        grid.push_back(s.t_start);
        grid.push_back(s.t_end);
    }
    for (const auto& e : path.events) grid.push_back(e.time);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

inline ICReport verify_ic(const Market& m, const DisclosurePolicy& policy,
                          const EquilibriumPath& path, const std::vector<Real>& deviation_grid,
                          Real tolerance) {
    (void)policy;
    if (deviation_grid.empty()) throw std::invalid_argument("deviation grid is empty");
    PathValuation val(path);
    Index n = m.n_cohorts();

    std::vector<Real> taus;
    for (Real t : deviation_grid)
        if (t >= 0.0 && t <= path.end_time) taus.push_back(t);
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

    // invest values at every deviation point plus flow pickups per grid cell,
    // the latter in cell-local discounting so chaining never amplifies error
    struct TauCell {
        Real un_pre, un_post;
    };
    std::vector<std::vector<TauCell>> table(n, std::vector<TauCell>(taus.size()));
    std::vector<std::vector<Real>> cell_pick(
        n, std::vector<Real>(taus.empty() ? 0 : taus.size() - 1, 0.0));
    std::vector<Real> tail_pick(n, 0.0);
    for (Index c = 1; c <= n; ++c) {
        for (std::size_t k = 0; k < taus.size(); ++k) {
            table[c - 1][k].un_pre = val.invest_unconditional(taus[k], false);
            table[c - 1][k].un_post = val.invest_unconditional(taus[k], true);
            if (k + 1 < taus.size())
                cell_pick[c - 1][k] =
                    val.flow_pickup_between(c, taus[k], taus[k + 1], taus[k]);
        }
        if (!taus.empty())
            tail_pick[c - 1] =
                val.flow_pickup_between(c, taus.back(), path.end_time, taus.back());
    }

    ICReport rep;
    rep.min_slack = kInf;

    // A unit deciding at `from` acts on the information in (zg_base, zb_base):
    // the left limit for waiters, the pre-atom state for atom investors.
    // Anything released at `from` past the base reaches a waiting unit as an
    // immediate pickup (`bonus`). Returns the best stop value conditional on
    // that information set, the stop time, and the set's probability.
    // `include_now` admits stopping immediately; waiting checks exclude it so
    // the comparison against investing now has teeth.
    struct Best {
        Real value, tau, p0;
    };
    auto best_deviation = [&](Index cohort, Real from, Real zg_base, Real zb_base,
                              bool include_now) -> Best {
        Index c = cohort - 1;
        Real r = m.discount_of(cohort);
        Real p0 = m.prior * std::exp(-m.rate_good * zg_base) +
                  (1.0 - m.prior) * std::exp(-m.rate_bad * zb_base);
        Real g_post = std::exp(-m.rate_good * path.z_good_at(from, false));
        Real bonus =
            m.prior * m.v_good * (std::exp(-m.rate_good * zg_base) - g_post);
        Real best = include_now ? bonus + val.invest_unconditional(from, true) : -kInf;
        Real best_tau = from;
        auto consider = [&](Real tau, Real pick, Real un) {
            Real v = bonus + pick + std::exp(-r * (tau - from)) * un;
            if (v > best) {
                best = v;
                best_tau = tau;
            }
        };
        Real acc = 0.0;  // from-valued pickups accumulated over (from, prev]
        Real prev = from;
        bool partial = true;  // first stretch may start inside a grid cell
        for (std::size_t k = 0; k < taus.size(); ++k) {
            if (taus[k] <= from) continue;
            acc += partial ? val.flow_pickup_between(cohort, prev, taus[k], from)
                           : std::exp(-r * (prev - from)) * cell_pick[c][k - 1];
            partial = false;
            acc += val.release_pickup_between(cohort, prev, taus[k], from, false);
            consider(taus[k], acc, table[c][k].un_pre);
            acc += val.release_pickup_at(cohort, taus[k], from);
            consider(taus[k], acc, table[c][k].un_post);
            prev = taus[k];
        }
        if (prev < path.end_time) {
            acc += partial ? val.flow_pickup_between(cohort, prev, path.end_time, from)
                           : std::exp(-r * (prev - from)) * tail_pick[c];
            acc += val.release_pickup_between(cohort, prev, path.end_time, from, true);
        }
        Real never = bonus + acc;
        if (never > best) {
            best = never;
            best_tau = kInf;
        }
        return {best / p0, best_tau, p0};
    };

    auto push = [&](Index cohort, Real t, Real tau, Real slack, bool investing) {
        rep.samples.push_back({cohort, t, tau, slack, investing});
        rep.min_slack = std::min(rep.min_slack, slack);
    };

    // (i): a unit scheduled to invest at t weakly prefers doing so
    auto check_invest = [&](Index cohort, Real t, Real zg_base, Real zb_base) {
        Best b = best_deviation(cohort, t, zg_base, zb_base, true);
        Real v = detail::invest_value(m, zg_base, zb_base) / b.p0;
        push(cohort, t, b.tau, v - b.value, true);
    };
    // (ii): every cohort with mass left can wait: some strictly later stop
    // weakly beats investing at the pre-event belief
    auto check_wait = [&](Real t, Real q_now) {
        auto st = path.state_at(t, true);
        for (Index j = 1; j <= n; ++j) {
            if (detail::remaining_mass(m, j, q_now) <= 1e-12) continue;
            Best b = best_deviation(j, t, st.zg, st.zb, false);
            Real v_now = detail::invest_value(m, st.zg, st.zb) / b.p0;
            push(j, t, b.tau, b.value - v_now, false);
        }
    };

    for (const auto& s : path.segments) {
        bool flowing = s.kind != SegmentKind::Hold && s.q_end > s.q_start;
        int samples = flowing ? 8 : 3;
        for (int k = 1; k <= samples; ++k) {
            Real t = s.t_start + (s.t_end - s.t_start) * k / (samples + 1.0);
            Real q_now = s.q_at(m, t);
            if (flowing) {
                auto st = path.state_at(t, true);
                check_invest(s.cohort, t, st.zg, st.zb);
            }
            check_wait(t, q_now);
        }
    }
    for (const auto& ev : path.events) {
        if (ev.kind == EventKind::InvestmentAtom && ev.dq > 0.0) {
            Index j_last = m.cohort_at(std::min(ev.q_after, m.total_mass() * (1 - 1e-15)));
            for (Index j = m.cohort_at(ev.q_before); j <= j_last; ++j)
                check_invest(j, ev.time, ev.zg_before, ev.zb_before);
        }
        if (ev.kind == EventKind::InvestmentAtom || ev.kind == EventKind::ReleaseAtom)
            check_wait(ev.time, ev.q_after);
    }
    check_wait(0.0, path.q_at(0.0));

    rep.pass = rep.min_slack >= -tolerance;
    return rep;
}

}  // namespace disclose
