#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ivsurf/surface.hpp"

// Static no-arbitrage conditions on an implied-volatility surface, evaluated
// pointwise from the surface's analytic jet, plus a sampling-based audit.
//
// A surface is free of static arbitrage when, everywhere on its domain:
//   - calendar:  a(m, tau) = v + 2 tau dv/dtau >= 0
//   - butterfly: b(m, tau) = (1 - m dv/dm / v)^2
//                            - (tau v dv/dm)^2 / 4 + tau v d2v/dm2 >= 0
//   - right wing (m >= 0):  c1 = N(d-) - sqrt(tau) dv/dm n(d-) >= 0
//   - left wing  (m < 0):   c2 = N(-d-) + sqrt(tau) dv/dm n(d-) >= 0
//   - far wings: g(m, tau) = 2|m| - v^2 tau > 0, so that total variance grows
//     slower than 2|m| and the price limit behaves
// together with d+(m, tau) -> -inf as m -> +inf at fixed tau.

namespace ivsurf::constraints {

// Sampling domains used for both training penalties and audits.
inline constexpr double kCoreMoneynessMax = 3.0;  // core: |m| <= 3
inline constexpr double kWingsMoneynessMin = 3.0; // wings: 3 <= |m| <= 6
inline constexpr double kWingsMoneynessMax = 6.0;
inline constexpr double kTauMin = 0.002;
inline constexpr double kTauMax = 3.0;

enum class Domain { core, wings };

struct GridPoint {
    double m;
    double tau;
};

// A bag of evaluation points tagged with the domain they were drawn from.
// Construction validates containment, so downstream code can rely on wings
// points having |m| >= 3 and every tau lying in [kTauMin, kTauMax].
class ConditionGrid {
public:
    ConditionGrid(Domain domain, std::vector<GridPoint> points);

    Domain domain() const { return domain_; }
    std::span<const GridPoint> points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }

private:
    Domain domain_;
    std::vector<GridPoint> points_;
};

// Draws n points uniformly over the requested domain (wings points get a
// random sign on m).  Same (domain, n, seed) always yields the same grid.
ConditionGrid uniform_grid(Domain domain, std::size_t n, std::uint64_t seed);

// Calendar condition a = v + 2 tau dv/dtau; nonnegative iff total variance
// v^2 tau is nondecreasing in tau.
double monotonicity_a(const Surface& surface, double m, double tau);

// Butterfly condition b; nonnegative iff the call price is locally convex in
// strike at this point.  For a constant surface b == 1.
double butterfly_b(const Surface& surface, double m, double tau);

// Wing boundary conditions.  Only the side matching the sign of m applies:
// `right` is set for m >= 0, `left` for m < 0.
struct BoundaryValue {
    std::optional<double> right; // c1, call price nonincreasing toward high strikes
    std::optional<double> left;  // c2, the mirrored condition below the forward
};
BoundaryValue boundaries_c(const Surface& surface, double m, double tau);

// Far-wing slope condition g = 2|m| - v^2 tau (strict inequality required).
double asymptotic_g(const Surface& surface, double m, double tau);

// Scans d+(m, tau) on [0, m_max] to check that it diverges to -inf: the scan
// passes when d+ is strictly decreasing over the last quarter of the range
// and ends below -1.
struct DPlusScan {
    struct Sample {
        double m;
        double d_plus;
    };
    std::vector<Sample> graph; // m ascending
    bool decreasing_tail = false;
    double end_value = 0.0;
    bool pass = false;
};
DPlusScan limit_dplus(const Surface& surface, double tau, double m_max, int n_points = 121);

// Numerical tolerance of the audit: a sign-based condition only counts as
// violated below -kAuditRoundoff.  In the deep wings the boundary conditions
// compute as a difference of two underflowing terms, and values within
// roundoff of zero are indistinguishable from a clean surface.
inline constexpr double kAuditRoundoff = 1e-12;

// Violation counts for one condition over an audit run.
struct ConditionStats {
    std::string name;
    std::size_t n_checked = 0;
    std::size_t n_violated = 0;
    double rate = 0.0;         // n_violated / n_checked, 0 when nothing checked
    double worst_margin = 0.0; // most negative condition value seen (0 if none)
};

struct ViolationReport {
    std::vector<ConditionStats> conditions;

    const ConditionStats& by_name(std::string_view name) const;
    double max_rate() const;
    std::size_t total_violations() const;
};

// Evaluates the pointwise conditions over the given grids: on core grids the
// calendar, butterfly and boundary conditions; on wings grids the asymptotic
// slope.  Boundary checks are split by the sign of m.  The report always
// carries all five condition rows, with n_checked = 0 for domains that
// received no points.  Throws std::domain_error on an empty grid set.
ViolationReport audit(const Surface& surface, std::span<const ConditionGrid> grids);

// JSON rendering of a report (object keyed by condition name).
std::string to_json(const ViolationReport& report);

} // namespace ivsurf::constraints
