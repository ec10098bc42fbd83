// survival_curves.hpp
//
// Kaplan-Meier product-limit curves, two-group log-rank test, and export
// of curves as CSV and SVG.
#pragma once

#include <phenoatlas/common.hpp>
#include <phenoatlas/cohort_io.hpp>
#include <phenoatlas/stats.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace phenoatlas::survival {

/// Product-limit estimate. The first point is (0, 1, n); subsequent points
/// are the distinct event times in ascending order.
struct KMCurve {
    std::vector<double> times;
    std::vector<double> survival;
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;
    double follow_up = 0.0;  // largest observed time, event or censored

    /// S(t) as a right-continuous step function.
    double at(double t) const {
        double s = 1.0;
        for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) s = survival[i];
        return s;
    }
};

inline KMCurve kaplan_meier(std::span<const double> time, std::span<const int> event) {
    if (time.empty()) throw ValidationError("Kaplan-Meier of an empty group");
    if (time.size() != event.size()) throw ValidationError("time/event length mismatch");
    std::map<double, std::pair<std::size_t, std::size_t>> by_time;  // time -> (events, leaving)
    for (std::size_t i = 0; i < time.size(); ++i) {
        auto& cell = by_time[time[i]];
        cell.first += event[i] ? 1 : 0;
        ++cell.second;
    }
    KMCurve km;
    km.follow_up = by_time.rbegin()->first;
    km.times.push_back(0.0);
    km.survival.push_back(1.0);
    km.at_risk.push_back(time.size());
    km.events.push_back(0);
    std::size_t n = time.size();
    double s = 1.0;
    for (const auto& [t, cell] : by_time) {
        const auto [d, leaving] = cell;
        if (d > 0) {
            s *= 1.0 - static_cast<double>(d) / static_cast<double>(n);
            km.times.push_back(t);
            km.survival.push_back(s);
            km.at_risk.push_back(n);
            km.events.push_back(d);
        }
        n -= leaving;
    }
    return km;
}

struct LogRankResult {
    double chi2 = 0.0;
    double p = 1.0;
    double observed_a = 0.0;
    double expected_a = 0.0;
    double variance = 0.0;
};

/// Two-group log-rank test (one degree of freedom).
inline LogRankResult logrank_test(std::span<const double> time_a, std::span<const int> event_a,
                                  std::span<const double> time_b, std::span<const int> event_b) {
    if (time_a.empty() || time_b.empty()) throw ValidationError("log-rank test needs two non-empty groups");
    // time -> (deaths A, leaving A, deaths B, leaving B)
    std::map<double, std::array<std::size_t, 4>> table;
    for (std::size_t i = 0; i < time_a.size(); ++i) {
        auto& c = table[time_a[i]];
        c[0] += event_a[i] ? 1 : 0;
        ++c[1];
    }
    for (std::size_t i = 0; i < time_b.size(); ++i) {
        auto& c = table[time_b[i]];
        c[2] += event_b[i] ? 1 : 0;
        ++c[3];
    }
    double na = static_cast<double>(time_a.size()), nb = static_cast<double>(time_b.size());
    LogRankResult r;
    for (const auto& [t, c] : table) {
        const double d = static_cast<double>(c[0] + c[2]);
        const double n = na + nb;
        if (d > 0) {
            r.observed_a += static_cast<double>(c[0]);
            r.expected_a += d * na / n;
            if (n > 1) r.variance += d * (na / n) * (nb / n) * (n - d) / (n - 1);
        }
        na -= static_cast<double>(c[1]);
        nb -= static_cast<double>(c[3]);
    }
    if (r.variance > 0.0) {
        const double diff = r.observed_a - r.expected_a;
        r.chi2 = diff * diff / r.variance;
        r.p = stats::chi2_sf_1df(r.chi2);
    }
    return r;
}

inline void write_km_csv(std::ostream& os, const KMCurve& km) {
    os << "time,survival,at_risk\n";
    for (std::size_t i = 0; i < km.times.size(); ++i)
        os << phenoatlas::detail::number_repr(km.times[i]) << ','
           << phenoatlas::detail::number_repr(km.survival[i]) << ',' << km.at_risk[i] << '\n';
}

struct NamedCurve {
    std::string label;
    KMCurve curve;
};

inline std::string format_fixed(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

/// Step-plot of one or more curves with an annotation line (e.g. the log-rank p).
inline std::string km_svg(std::span<const NamedCurve> curves, const std::string& annotation) {
    const double width = 640, height = 420, left = 60, right = 20, top = 30, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;
    double tmax = 0.0;
    for (const auto& c : curves) tmax = std::max(tmax, c.curve.follow_up);
    if (tmax <= 0.0) tmax = 1.0;
    auto sx = [&](double t) { return left + pw * t / tmax; };
    auto sy = [&](double s) { return top + ph * (1.0 - s); };
    static const char* colors[] = {"#c0392b", "#2471a3", "#229954", "#7d3c98"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double s = k / 4.0;
        os << "<text x=\"" << left - 8 << "\" y=\"" << sy(s) + 4 << "\" text-anchor=\"end\">"
           << format_fixed("%.2f", s) << "</text>\n";
        const double t = tmax * k / 4.0;
        os << "<text x=\"" << sx(t) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
           << format_fixed("%.1f", t) << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">Time (months)</text>\n";
    os << "<text x=\"15\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 15 " << top + ph / 2
       << ")\" text-anchor=\"middle\">Survival probability</text>\n";

    for (std::size_t c = 0; c < curves.size(); ++c) {
        const auto& km = curves[c].curve;
        std::ostringstream path;
        path << "M" << sx(0) << "," << sy(1.0);
        for (std::size_t i = 1; i < km.times.size(); ++i) {
            path << " H" << sx(km.times[i]);
            path << " V" << sy(km.survival[i]);
        }
        path << " H" << sx(tmax);
        const char* col = colors[c % 4];
        os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << left + pw - 120 << "\" y=\"" << top + 16 + 16 * static_cast<double>(c) << "\" fill=\"" << col
           << "\">" << curves[c].label << " (n=" << km.at_risk.front() << ")</text>\n";
    }
    os << "<text x=\"" << left + 10 << "\" y=\"" << top + ph - 10 << "\">" << annotation << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

inline std::string format_p(double p) {
    char buf[64];
    if (p < 1e-3)
        std::snprintf(buf, sizeof buf, "%.2e", p);
    else
        std::snprintf(buf, sizeof buf, "%.4f", p);
    return buf;
}

}  // namespace phenoatlas::survival
