#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "disclose/benchmark.hpp"
#include "disclose/disclosure.hpp"
#include "disclose/model.hpp"

// File formats: markets and policies as JSON, paths as CSV with a schema
// shared by every command (t,q,z_good,z_bad,x,phase_index). All numeric
// output is printed with 12 significant digits.

namespace disclose {

struct IOError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string format_real(Real v) {
    if (v == 0.0) v = 0.0;  // drop the sign of negative zero
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Market files
// ---------------------------------------------------------------------------
//
// {
//   "v_good": 8.0, "v_bad": -4.0, "prior": 0.75,
//   "rate_good": 1.0, "rate_bad": 2.0,
//   "cohorts": [{"discount": 2.0, "mass": 1.0}, ...]   // impatient first
// }

namespace detail {

inline Real require_number(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key)) throw IOError("missing field: " + key);
    if (!j.at(key).is_number()) throw IOError("field must be a number: " + key);
    return j.at(key).get<Real>();
}

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<const char*> known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw IOError("unknown field: " + it.key());
    }
}

}  // namespace detail

inline Market market_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw IOError("market file must hold a JSON object");
    detail::reject_unknown(
        j, {"v_good", "v_bad", "prior", "rate_good", "rate_bad", "cohorts"});
    Market m;
    m.v_good = detail::require_number(j, "v_good");
    m.v_bad = detail::require_number(j, "v_bad");
    m.prior = detail::require_number(j, "prior");
    m.rate_good = detail::require_number(j, "rate_good");
    m.rate_bad = detail::require_number(j, "rate_bad");
    if (!j.contains("cohorts") || !j.at("cohorts").is_array())
        throw IOError("cohorts must be an array of {discount, mass}");
    for (const auto& c : j.at("cohorts")) {
        if (!c.is_object()) throw IOError("cohorts must be an array of {discount, mass}");
        detail::reject_unknown(c, {"discount", "mass"});
        m.cohorts.push_back(
            {detail::require_number(c, "discount"), detail::require_number(c, "mass")});
    }
    validate(m);
    return m;
}

inline nlohmann::json market_to_json(const Market& m) {
    nlohmann::json j;
    j["v_good"] = m.v_good;
    j["v_bad"] = m.v_bad;
    j["prior"] = m.prior;
    j["rate_good"] = m.rate_good;
    j["rate_bad"] = m.rate_bad;
    j["cohorts"] = nlohmann::json::array();
    for (const auto& c : m.cohorts)
        j["cohorts"].push_back({{"discount", c.discount}, {"mass", c.mass}});
    return j;
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------
//
// One block per channel:
//
//   {"good": {"delay_until": 0.0797537}, "bad": "transparent"}
//   {"good": {"step_caps": [{"time": 0.0, "cap": 0.5}, ...]}, "bad": "silent"}

inline Schedule schedule_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "transparent") return Transparent{};
        if (s == "silent") return Silent{};
        throw IOError("unknown schedule: " + s);
    }
    if (j.is_object() && j.contains("delay_until")) {
        detail::reject_unknown(j, {"delay_until"});
        return DelayUntil{detail::require_number(j, "delay_until")};
    }
    if (j.is_object() && j.contains("step_caps")) {
        detail::reject_unknown(j, {"step_caps"});
        if (!j.at("step_caps").is_array())
            throw IOError("step_caps must be an array of {time, cap}");
        StepCaps sc;
        for (const auto& p : j.at("step_caps")) {
            if (!p.is_object()) throw IOError("step_caps must be an array of {time, cap}");
            detail::reject_unknown(p, {"time", "cap"});
            sc.points.push_back(
                {detail::require_number(p, "time"), detail::require_number(p, "cap")});
        }
        return sc;
    }
    throw IOError(
        "schedule must be \"transparent\", \"silent\", {delay_until}, or {step_caps}");
}

inline nlohmann::json schedule_to_json(const Schedule& s) {
    if (std::holds_alternative<Transparent>(s)) return "transparent";
    if (std::holds_alternative<Silent>(s)) return "silent";
    if (const auto* d = std::get_if<DelayUntil>(&s))
        return nlohmann::json{{"delay_until", d->time}};
    nlohmann::json caps = nlohmann::json::array();
    for (const auto& p : std::get<StepCaps>(s).points)
        caps.push_back({{"time", p.time}, {"cap", p.cap}});
    return nlohmann::json{{"step_caps", caps}};
}

inline DisclosurePolicy policy_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw IOError("policy file must hold a JSON object");
    detail::reject_unknown(j, {"good", "bad"});
    if (!j.contains("good") || !j.contains("bad"))
        throw IOError("policy needs a good and a bad channel block");
    DisclosurePolicy p{schedule_from_json(j.at("good")), schedule_from_json(j.at("bad"))};
    validate_policy(p);
    return p;
}

inline nlohmann::json policy_to_json(const DisclosurePolicy& p) {
    return nlohmann::json{{"good", schedule_to_json(p.good)},
                          {"bad", schedule_to_json(p.bad)}};
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IOError(path + ": " + e.what());
    }
    return j;
}

}  // namespace detail

inline Market load_market_file(const std::string& path) {
    return market_from_json(detail::parse_file(path));
}

inline DisclosurePolicy load_policy_file(const std::string& path) {
    return policy_from_json(detail::parse_file(path));
}

inline void save_policy_file(const std::string& path, const DisclosurePolicy& p) {
    std::ofstream out(path);
    if (!out) throw IOError("cannot write " + path);
    out << policy_to_json(p).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Path CSVs
// ---------------------------------------------------------------------------

namespace detail {

inline void csv_row(std::ostream& os, Real t, Real q, Real zg, Real zb, Real x,
                    Index phase) {
    os << format_real(t) << ',' << format_real(q) << ',' << format_real(zg) << ','
       << format_real(zb) << ',' << format_real(x) << ',' << phase << '\n';
}

// uniform grid joined with the path's own breakpoints
inline std::vector<Real> sample_times(Real end, Real step, std::vector<Real> extra) {
    std::vector<Real> ts;
    long n = std::lround(std::ceil(end / step - 1e-9));
    for (long k = 0; k <= n; ++k) ts.push_back(std::min(step * Real(k), end));
    ts.insert(ts.end(), extra.begin(), extra.end());
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    while (!ts.empty() && ts.back() > end) ts.pop_back();
    return ts;
}

}  // namespace detail

inline constexpr const char* kPathCsvHeader = "t,q,z_good,z_bad,x,phase_index\n";

// phase_index is the 1-based index of the cohort whose phase the time falls
// in: the number of phase entry times at or before t.
inline void write_path_csv(std::ostream& os, const Market& m,
                           const EquilibriumPath& path, Real step) {
    os << kPathCsvHeader;
    std::vector<Real> extra;
    for (const auto& s : path.segments) {
        extra.push_back(s.t_start);
        extra.push_back(s.t_end);
    }
    for (const auto& e : path.events) extra.push_back(e.time);
    for (Real t : detail::sample_times(path.end_time, step, std::move(extra))) {
        auto st = path.state_at(t);
        Index phase = 0;
        for (Real pt : path.phase_times)
            if (pt <= t) ++phase;
        phase = std::min(phase, m.n_cohorts());
        detail::csv_row(os, t, st.q, st.zg, st.zb, posterior_no_news(m, st.zg, st.zb),
                        phase);
    }
}

inline void write_path_csv(std::ostream& os, const Market& m, const BenchmarkPath& bp,
                           Real step, Real horizon) {
    os << kPathCsvHeader;
    Real end = std::min(bp.terminal_time, horizon);
    std::vector<Real> extra;
    for (const auto& p : bp.phases) {
        extra.push_back(p.t_start);
        extra.push_back(p.t_end);
    }
    for (Real t : detail::sample_times(end, step, std::move(extra))) {
        Real q = bp.q_at(t);
        detail::csv_row(os, t, q, q, q, bp.x_at(t), m.cohort_at(q));
    }
}

// Step paths (grid-search winners): one row per grid time, states after the
// step's releases and investment.
inline void write_step_csv(std::ostream& os, const Market& m,
                           const std::vector<Real>& times, const std::vector<Real>& q,
                           const std::vector<Real>& z_good,
                           const std::vector<Real>& z_bad) {
    os << kPathCsvHeader;
    for (std::size_t k = 0; k < times.size(); ++k)
        detail::csv_row(os, times[k], q[k], z_good[k], z_bad[k],
                        posterior_no_news(m, z_good[k], z_bad[k]), m.cohort_at(q[k]));
}

inline void write_welfare_csv(std::ostream& os, const Market& m,
                              const WelfareReport& rep) {
    os << "cohort,discount,mass,value\n";
    for (Index i = 1; i <= m.n_cohorts(); ++i)
        os << i << ',' << format_real(m.discount_of(i)) << ','
           << format_real(m.mass_of(i)) << ',' << format_real(rep.per_cohort[i - 1])
           << '\n';
    os << "total,,," << format_real(rep.total) << '\n';
}

}  // namespace disclose
