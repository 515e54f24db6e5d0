#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ivsurf/constraints.hpp"
#include "ivsurf/models.hpp"

// Six-term training objective:
//
//   total = data + gamma * calendar + delta * butterfly + eta * boundary
//                + rho * slope + omega * ridge
//
// where `data` blends mean squared log error and mean squared percentage
// error over observed vols, the four shape penalties are hinge sums of the
// no-arbitrage condition values over sampled grids, and `ridge` is half the
// squared weight norm.  Hinges are linear with subgradient zero at the kink,
// so a surface that satisfies the conditions feels no penalty force.

namespace ivsurf::losses {

struct HyperParams {
    // Data-loss blend.
    double msle_weight = 1.0; // alpha, squared-log-error term
    double mspe_weight = 1.0; // beta, squared-percentage-error term

    // Shape-penalty weights.
    double calendar_weight = 10.0; // gamma
    double butterfly_weight = 1.0; // delta
    double boundary_weight = 10.0; // eta
    double slope_weight = 1.0;     // rho

    // Ridge weight.
    double ridge_weight = 5e-5; // omega

    // Margin of the far-wing slope hinge: penalize g < slope_margin rather
    // than g < 0, keeping the strict inequality strictly satisfied.
    double slope_margin = 1e-5;

    // Optimizer schedule (full-batch Adam with inverse-time decay).
    double learning_rate = 0.1;
    int iterations = 20000;

    // Synthetic grid points drawn per observed data point.
    double synth_ratio = 6.0;

    // Drops every shape penalty; the data and ridge terms remain.  Training
    // in this mode never evaluates penalty grids.
    void drop_shape_penalties() {
        calendar_weight = butterfly_weight = boundary_weight = slope_weight = 0.0;
    }

    bool any_shape_penalty() const {
        return calendar_weight > 0.0 || butterfly_weight > 0.0 || boundary_weight > 0.0 ||
               slope_weight > 0.0;
    }
};

struct DataPoint {
    double m;
    double tau;
    double v; // observed implied volatility, > 0
};

struct DataBatch {
    std::vector<DataPoint> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// One sampled grid per shape penalty.  The first three live on the core
// domain, the slope grid on the wings; construction re-checks the domains.
struct PenaltyGrids {
    constraints::ConditionGrid calendar;
    constraints::ConditionGrid butterfly;
    constraints::ConditionGrid boundary;
    constraints::ConditionGrid slope;

    PenaltyGrids(constraints::ConditionGrid calendar_grid, constraints::ConditionGrid butterfly_grid,
                 constraints::ConditionGrid boundary_grid, constraints::ConditionGrid slope_grid);

    std::size_t total_points() const {
        return calendar.size() + butterfly.size() + boundary.size() + slope.size();
    }
};

// Index of each term inside LossBreakdown::components.
enum LossTerm : std::size_t {
    kData = 0,
    kCalendar = 1,
    kButterfly = 2,
    kBoundary = 3,
    kSlope = 4,
    kRidge = 5,
};

inline constexpr std::array<const char*, 6> kLossTermNames = {
    "data", "calendar", "butterfly", "boundary", "slope", "ridge"};

struct LossBreakdown {
    double total = 0.0;
    // Weighted contributions (coefficient already applied); they sum to
    // `total` up to rounding.
    std::array<double, 6> components{};
};

// Data term: msle_weight * mean((log v - log v_hat)^2)
//          + mspe_weight * mean(((v - v_hat) / v)^2).
// Throws std::domain_error on an empty batch or nonpositive observations.
double data_loss(const Surface& surface, const DataBatch& batch, const HyperParams& hp);

// Unweighted hinge sums over their grids (not averaged).
double calendar_penalty(const Surface& surface, const constraints::ConditionGrid& grid);
double butterfly_penalty(const Surface& surface, const constraints::ConditionGrid& grid);
double boundary_penalty(const Surface& surface, const constraints::ConditionGrid& grid);
double slope_penalty(const Surface& surface, const constraints::ConditionGrid& grid,
                     double slope_margin);

// Half the squared weight norm (biases excluded), unweighted.
double ridge(const Model& model);

// Full objective.  `grids` may be null only when every shape-penalty weight
// is zero; otherwise std::domain_error.
LossBreakdown total_loss(const Model& model, const DataBatch& batch, const PenaltyGrids* grids,
                         const HyperParams& hp);

// Objective and its gradient with respect to the flat parameter vector.
// `grad` must have length model.param_count(); it is overwritten.
LossBreakdown loss_and_gradient(const Model& model, const DataBatch& batch,
                                const PenaltyGrids* grids, const HyperParams& hp,
                                std::span<double> grad);

} // namespace ivsurf::losses
