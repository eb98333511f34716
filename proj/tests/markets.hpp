// Shared market fixtures. Frozen expectations across the suite refer to these
// four instances; change them and every pinned constant goes stale.
#pragma once

#include <disclose/model.hpp>

namespace disclose::testing {

// Two cohorts, good news slower than bad news. The workhorse example:
// transparency stops short of full investment only in patience, never mass,
// and the optimal plan keeps both cohorts without any stored release.
inline Market two_cohort_market() {
    Market m;
    m.v_good = 8.0;
    m.v_bad = -4.0;
    m.prior = 0.75;
    m.rate_good = 1.0;
    m.rate_bad = 2.0;
    m.cohorts = {{2.0, 1.0}, {1.0, 1.0}};
    return m;
}

// One cohort, equal news rates: the transparent path has a linear q(t) and
// the optimal plan collapses to a single delay.
inline Market single_cohort_market() {
    Market m;
    m.v_good = 8.0;
    m.v_bad = -4.0;
    m.prior = 0.75;
    m.rate_good = 1.0;
    m.rate_bad = 1.0;
    m.cohorts = {{1.0, 1.0}};
    return m;
}

// Good news faster than bad news and a pessimistic tail cohort: the planner
// drops the last cohort and releases the stored good news as one atom.
inline Market stored_release_market() {
    Market m;
    m.v_good = 8.0;
    m.v_bad = -4.0;
    m.prior = 0.5;
    m.rate_good = 2.0;
    m.rate_bad = 1.0;
    m.cohorts = {{2.0, 1.0}, {1.0, 1.0}};
    return m;
}

// Single fat cohort that the transparent path can never finish: investment
// decelerates toward a strict interior limit.
inline Market dryout_market() {
    Market m;
    m.v_good = 8.0;
    m.v_bad = -4.0;
    m.prior = 0.5;
    m.rate_good = 2.0;
    m.rate_bad = 1.0;
    m.cohorts = {{1.0, 3.0}};
    return m;
}

}  // namespace disclose::testing
