#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace disclose {

using Real = double;
using Index = std::size_t;

// Investor cohort: discount rate and mass. Cohorts are ordered from most to
// least impatient; cumulative masses define the investment-order boundaries.
struct Cohort {
    Real discount = 0.0;
    Real mass = 0.0;
};

enum class ValidationErrorKind {
    PayoffSigns,
    PriorRange,
    CohortOrder,
    NegativeRate,
};

class ValidationError : public std::runtime_error {
public:
    ValidationError(ValidationErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ValidationErrorKind kind() const { return kind_; }

private:
    ValidationErrorKind kind_;
};

// Two-state investment market with conclusive Poisson news on both channels.
struct Market {
    Real v_good = 0.0;   // payoff in the good state, > 0
    Real v_bad = 0.0;    // payoff in the bad state, < 0
    Real prior = 0.0;    // P(good) at time 0
    Real rate_good = 0.0;  // breakthrough intensity per unit of revealed evidence
    Real rate_bad = 0.0;   // breakdown intensity per unit of revealed evidence
    std::vector<Cohort> cohorts;

    Index n_cohorts() const { return cohorts.size(); }

    // Cumulative mass F_i of the i most impatient cohorts; F_0 = 0.
    Real cum_mass(Index i) const {
        Real f = 0.0;
        for (Index j = 0; j < i; ++j) f += cohorts[j].mass;
        return f;
    }

    Real total_mass() const { return cum_mass(n_cohorts()); }

    // 1-based index of the cohort investing at aggregate level q, i.e. the
    // smallest i with q < F_i. q at or beyond total mass maps to the last one.
    Index cohort_at(Real q) const {
        Real f = 0.0;
        for (Index j = 0; j < cohorts.size(); ++j) {
            f += cohorts[j].mass;
            if (q < f) return j + 1;
        }
        return cohorts.size();
    }

    Real discount_of(Index i) const { return cohorts[i - 1].discount; }
    Real mass_of(Index i) const { return cohorts[i - 1].mass; }
};

inline void validate(const Market& m) {
    if (!(m.v_good > 0.0) || !(m.v_bad < 0.0))
        throw ValidationError(ValidationErrorKind::PayoffSigns,
                              "payoffs must satisfy v_good > 0 > v_bad");
    if (!(m.prior > 0.0) || !(m.prior < 1.0))
        throw ValidationError(ValidationErrorKind::PriorRange,
                              "prior must lie strictly inside (0, 1)");
    if (!(m.rate_good >= 0.0) || !(m.rate_bad >= 0.0) ||
        !std::isfinite(m.rate_good) || !std::isfinite(m.rate_bad))
        throw ValidationError(ValidationErrorKind::NegativeRate,
                              "news intensities must be finite and nonnegative");
    if (m.cohorts.empty())
        throw ValidationError(ValidationErrorKind::CohortOrder,
                              "at least one cohort is required");
    for (Index j = 0; j < m.cohorts.size(); ++j) {
        if (!(m.cohorts[j].mass > 0.0))
            throw ValidationError(ValidationErrorKind::CohortOrder,
                                  "cohort masses must be positive");
        if (!(m.cohorts[j].discount > 0.0))
            throw ValidationError(ValidationErrorKind::NegativeRate,
                                  "cohort discount rates must be positive");
        if (j > 0 && !(m.cohorts[j].discount < m.cohorts[j - 1].discount))
            throw ValidationError(ValidationErrorKind::CohortOrder,
                                  "cohort discount rates must be strictly decreasing");
    }
}

// Expected flow payoff of investing at belief x.
inline Real expected_value(const Market& m, Real x) {
    return x * m.v_good + (1.0 - x) * m.v_bad;
}

// Belief at which investing breaks even.
inline Real myopic_threshold(const Market& m) {
    return -m.v_bad / (m.v_good - m.v_bad);
}

// No-news posterior after z_good revealed good-channel evidence and z_bad
// revealed bad-channel evidence. Computed in log-odds for stability at
// extreme exposure levels.
inline Real posterior_no_news(const Market& m, Real z_good, Real z_bad) {
    Real logit = std::log(m.prior / (1.0 - m.prior)) - m.rate_good * z_good +
                 m.rate_bad * z_bad;
    if (logit > 0.0) return 1.0 / (1.0 + std::exp(-logit));
    Real e = std::exp(logit);
    return e / (1.0 + e);
}

// Posterior under full transparency, where both channels have revealed q.
inline Real transparency_belief(const Market& m, Real q) {
    return posterior_no_news(m, q, q);
}

}  // namespace disclose
