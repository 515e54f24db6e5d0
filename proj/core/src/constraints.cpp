#include "ivsurf/constraints.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ivsurf/black_scholes.hpp"
#include "ivsurf/rng.hpp"

namespace ivsurf::constraints {

namespace {

void require_in_domain(Domain domain, const GridPoint& pt) {
    if (!std::isfinite(pt.m) || !std::isfinite(pt.tau)) {
        throw std::domain_error("grid point with non-finite coordinates");
    }
    if (pt.tau < kTauMin || pt.tau > kTauMax) {
        throw std::domain_error("grid tau " + std::to_string(pt.tau) + " outside [" +
                                std::to_string(kTauMin) + ", " + std::to_string(kTauMax) + "]");
    }
    const double am = std::abs(pt.m);
    if (domain == Domain::core) {
        if (am > kCoreMoneynessMax) {
            throw std::domain_error("core grid point with |m| > 3");
        }
    } else {
        if (am < kWingsMoneynessMin || am > kWingsMoneynessMax) {
            throw std::domain_error("wings grid point with |m| outside [3, 6]");
        }
    }
}

} // namespace

ConditionGrid::ConditionGrid(Domain domain, std::vector<GridPoint> points)
    : domain_(domain), points_(std::move(points)) {
    for (const GridPoint& pt : points_) {
        require_in_domain(domain_, pt);
    }
}

ConditionGrid uniform_grid(Domain domain, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<GridPoint> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        GridPoint pt;
        if (domain == Domain::core) {
            pt.m = rng.uniform(-kCoreMoneynessMax, kCoreMoneynessMax);
        } else {
            pt.m = rng.uniform(kWingsMoneynessMin, kWingsMoneynessMax);
            if (rng.uniform01() < 0.5) {
                pt.m = -pt.m;
            }
        }
        pt.tau = rng.uniform(kTauMin, kTauMax);
        pts.push_back(pt);
    }
    return ConditionGrid(domain, std::move(pts));
}

double monotonicity_a(const Surface& surface, double m, double tau) {
    const SurfaceJet jet = surface.jet(m, tau);
    return jet.v + 2.0 * tau * jet.dtau;
}

double butterfly_b(const Surface& surface, double m, double tau) {
    const SurfaceJet jet = surface.jet(m, tau);
    const double skew_term = 1.0 - m * jet.dm / jet.v;
    const double vega_term = 0.5 * tau * jet.v * jet.dm;
    return skew_term * skew_term - vega_term * vega_term + tau * jet.v * jet.dmm;
}

BoundaryValue boundaries_c(const Surface& surface, double m, double tau) {
    const SurfaceJet jet = surface.jet(m, tau);
    const auto [d_plus, d_minus] = bs::d_pair(m, tau, jet.v);
    (void)d_plus;
    const auto [pdf, cdf] = bs::std_normal(d_minus);
    const double slope = std::sqrt(tau) * jet.dm * pdf;
    BoundaryValue out;
    if (m >= 0.0) {
        out.right = cdf - slope;
    } else {
        out.left = (1.0 - cdf) + slope;
    }
    return out;
}

double asymptotic_g(const Surface& surface, double m, double tau) {
    const double v = surface.value(m, tau);
    return 2.0 * std::abs(m) - v * v * tau;
}

DPlusScan limit_dplus(const Surface& surface, double tau, double m_max, int n_points) {
    if (!(m_max > 0.0) || n_points < 8) {
        throw std::domain_error("limit_dplus: need m_max > 0 and at least 8 scan points");
    }
    DPlusScan scan;
    scan.graph.reserve(n_points);
    for (int i = 0; i < n_points; ++i) {
        const double m = m_max * static_cast<double>(i) / (n_points - 1);
        const double v = surface.value(m, tau);
        scan.graph.push_back({m, bs::d_pair(m, tau, v).d_plus});
    }
    scan.end_value = scan.graph.back().d_plus;

    // Strict decrease over the last quarter of the scan.
    scan.decreasing_tail = true;
    for (std::size_t i = scan.graph.size() - scan.graph.size() / 4; i < scan.graph.size(); ++i) {
        if (!(scan.graph[i].d_plus < scan.graph[i - 1].d_plus)) {
            scan.decreasing_tail = false;
            break;
        }
    }
    scan.pass = scan.decreasing_tail && scan.end_value < -1.0;
    return scan;
}

const ConditionStats& ViolationReport::by_name(std::string_view name) const {
    for (const ConditionStats& c : conditions) {
        if (c.name == name) {
            return c;
        }
    }
    throw std::out_of_range("no condition named '" + std::string(name) + "' in report");
}

double ViolationReport::max_rate() const {
    double rate = 0.0;
    for (const ConditionStats& c : conditions) {
        rate = std::max(rate, c.rate);
    }
    return rate;
}

std::size_t ViolationReport::total_violations() const {
    std::size_t n = 0;
    for (const ConditionStats& c : conditions) {
        n += c.n_violated;
    }
    return n;
}

ViolationReport audit(const Surface& surface, std::span<const ConditionGrid> grids) {
    if (grids.empty()) {
        throw std::domain_error("audit: empty grid set");
    }
    ConditionStats calendar{"calendar", 0, 0, 0.0, 0.0};
    ConditionStats butterfly{"butterfly", 0, 0, 0.0, 0.0};
    ConditionStats right{"right_boundary", 0, 0, 0.0, 0.0};
    ConditionStats left{"left_boundary", 0, 0, 0.0, 0.0};
    ConditionStats slope{"asymptotic_slope", 0, 0, 0.0, 0.0};

    auto record = [](ConditionStats& stats, double value, bool strict) {
        ++stats.n_checked;
        // The boundary conditions cancel to ~0 in the deep wings (both terms
        // underflow), so a sign test alone would flag pure roundoff as
        // arbitrage; kAuditRoundoff absorbs it.  The slope condition is a
        // strict inequality between O(1) quantities and needs no allowance.
        const bool bad = strict ? !(value > 0.0) : value < -kAuditRoundoff;
        if (bad) {
            ++stats.n_violated;
            stats.worst_margin = std::min(stats.worst_margin, value);
        }
    };

    for (const ConditionGrid& grid : grids) {
        for (const GridPoint& pt : grid.points()) {
            if (grid.domain() == Domain::core) {
                record(calendar, monotonicity_a(surface, pt.m, pt.tau), false);
                record(butterfly, butterfly_b(surface, pt.m, pt.tau), false);
                const BoundaryValue c = boundaries_c(surface, pt.m, pt.tau);
                if (c.right) {
                    record(right, *c.right, false);
                } else {
                    record(left, *c.left, false);
                }
            } else {
                record(slope, asymptotic_g(surface, pt.m, pt.tau), true);
            }
        }
    }

    ViolationReport report;
    report.conditions = {calendar, butterfly, right, left, slope};
    for (ConditionStats& c : report.conditions) {
        c.rate = c.n_checked == 0 ? 0.0
                                  : static_cast<double>(c.n_violated) /
                                        static_cast<double>(c.n_checked);
    }
    return report;
}

std::string to_json(const ViolationReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "{\n";
    for (std::size_t i = 0; i < report.conditions.size(); ++i) {
        const ConditionStats& c = report.conditions[i];
        os << "  \"" << c.name << "\": {\"checked\": " << c.n_checked
           << ", \"violated\": " << c.n_violated << ", \"rate\": " << c.rate
           << ", \"worst_margin\": " << c.worst_margin << "}";
        os << (i + 1 < report.conditions.size() ? ",\n" : "\n");
    }
    os << "}\n";
    return os.str();
}

} // namespace ivsurf::constraints
