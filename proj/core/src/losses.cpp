#include "ivsurf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ivsurf/black_scholes.hpp"

namespace ivsurf::losses {

namespace {

void require_batch(const DataBatch& batch) {
    if (batch.empty()) {
        throw std::domain_error("data loss over an empty batch");
    }
    for (const DataPoint& pt : batch.points) {
        if (!(pt.v > 0.0) || !(pt.tau > 0.0) || !std::isfinite(pt.m)) {
            throw std::domain_error("data point with nonpositive vol/tau or non-finite m");
        }
    }
}

double hinge(double value) { return value < 0.0 ? -value : 0.0; }

// Pointwise pieces of the condition values, written against a jet so the
// loss and its gradient share one code path.

double calendar_value(double tau, const SurfaceJet& jet) { return jet.v + 2.0 * tau * jet.dtau; }

double butterfly_value(double m, double tau, const SurfaceJet& jet) {
    const double skew_term = 1.0 - m * jet.dm / jet.v;
    const double vega_term = 0.5 * tau * jet.v * jet.dm;
    return skew_term * skew_term - vega_term * vega_term + tau * jet.v * jet.dmm;
}

double boundary_value(double m, double tau, const SurfaceJet& jet) {
    const double d_minus = bs::d_pair(m, tau, jet.v).d_minus;
    const auto [pdf, cdf] = bs::std_normal(d_minus);
    const double slope = std::sqrt(tau) * jet.dm * pdf;
    return m >= 0.0 ? cdf - slope : (1.0 - cdf) + slope;
}

double slope_value(double m, double tau, const SurfaceJet& jet) {
    return 2.0 * std::abs(m) - jet.v * jet.v * tau;
}

} // namespace

PenaltyGrids::PenaltyGrids(constraints::ConditionGrid calendar_grid,
                           constraints::ConditionGrid butterfly_grid,
                           constraints::ConditionGrid boundary_grid,
                           constraints::ConditionGrid slope_grid)
    : calendar(std::move(calendar_grid)), butterfly(std::move(butterfly_grid)),
      boundary(std::move(boundary_grid)), slope(std::move(slope_grid)) {
    using constraints::Domain;
    if (calendar.domain() != Domain::core || butterfly.domain() != Domain::core ||
        boundary.domain() != Domain::core) {
        throw std::domain_error("calendar/butterfly/boundary penalty grids must be core grids");
    }
    if (slope.domain() != Domain::wings) {
        throw std::domain_error("slope penalty grid must be a wings grid");
    }
}

double data_loss(const Surface& surface, const DataBatch& batch, const HyperParams& hp) {
    require_batch(batch);
    double msle = 0.0;
    double mspe = 0.0;
    for (const DataPoint& pt : batch.points) {
        const double v_hat = surface.value(pt.m, pt.tau);
        const double log_err = std::log(pt.v) - std::log(v_hat);
        const double pct_err = (pt.v - v_hat) / pt.v;
        msle += log_err * log_err;
        mspe += pct_err * pct_err;
    }
    const double n = static_cast<double>(batch.size());
    return hp.msle_weight * msle / n + hp.mspe_weight * mspe / n;
}

double calendar_penalty(const Surface& surface, const constraints::ConditionGrid& grid) {
    if (grid.empty()) {
        throw std::domain_error("calendar penalty over an empty grid");
    }
    double sum = 0.0;
    for (const auto& pt : grid.points()) {
        sum += hinge(calendar_value(pt.tau, surface.jet(pt.m, pt.tau)));
    }
    return sum;
}

double butterfly_penalty(const Surface& surface, const constraints::ConditionGrid& grid) {
    if (grid.empty()) {
        throw std::domain_error("butterfly penalty over an empty grid");
    }
    double sum = 0.0;
    for (const auto& pt : grid.points()) {
        sum += hinge(butterfly_value(pt.m, pt.tau, surface.jet(pt.m, pt.tau)));
    }
    return sum;
}

double boundary_penalty(const Surface& surface, const constraints::ConditionGrid& grid) {
    if (grid.empty()) {
        throw std::domain_error("boundary penalty over an empty grid");
    }
    double sum = 0.0;
    for (const auto& pt : grid.points()) {
        sum += hinge(boundary_value(pt.m, pt.tau, surface.jet(pt.m, pt.tau)));
    }
    return sum;
}

double slope_penalty(const Surface& surface, const constraints::ConditionGrid& grid,
                     double slope_margin) {
    if (grid.empty()) {
        throw std::domain_error("slope penalty over an empty grid");
    }
    double sum = 0.0;
    for (const auto& pt : grid.points()) {
        sum += std::max(0.0, slope_margin - slope_value(pt.m, pt.tau, surface.jet(pt.m, pt.tau)));
    }
    return sum;
}

double ridge(const Model& model) { return model.weight_half_sq(); }

namespace {

// Shared implementation of total_loss / loss_and_gradient.  When `grad` is
// nonempty the weighted gradient of every active term is accumulated into it
// through Model::backward.
LossBreakdown loss_impl(const Model& model, const DataBatch& batch, const PenaltyGrids* grids,
                        const HyperParams& hp, std::span<double> grad) {
    require_batch(batch);
    if (grids == nullptr && hp.any_shape_penalty()) {
        throw std::domain_error("shape-penalty weights are nonzero but no penalty grids given");
    }
    const bool want_grad = !grad.empty();
    if (want_grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
    }

    Model::Scratch scratch;
    LossBreakdown out;

    // Data term.
    {
        const double n = static_cast<double>(batch.size());
        double msle = 0.0;
        double mspe = 0.0;
        for (const DataPoint& pt : batch.points) {
            const SurfaceJet jet = model.forward(pt.m, pt.tau, scratch);
            const double log_err = std::log(pt.v) - std::log(jet.v);
            const double pct_err = (pt.v - jet.v) / pt.v;
            msle += log_err * log_err;
            mspe += pct_err * pct_err;
            if (want_grad) {
                SurfaceJet seed;
                seed.v = (-2.0 * hp.msle_weight * log_err / jet.v -
                          2.0 * hp.mspe_weight * pct_err / pt.v) /
                         n;
                model.backward(scratch, seed, grad);
            }
        }
        out.components[kData] = (hp.msle_weight * msle + hp.mspe_weight * mspe) / n;
    }

    // Shape penalties.  Each active hinge contributes its condition
    // derivative (chain rule through the jet) with the term's weight.
    if (grids != nullptr) {
        if (hp.calendar_weight > 0.0) {
            double sum = 0.0;
            for (const auto& pt : grids->calendar.points()) {
                const SurfaceJet jet = model.forward(pt.m, pt.tau, scratch);
                const double a = calendar_value(pt.tau, jet);
                if (a < 0.0) {
                    sum -= a;
                    if (want_grad) {
                        SurfaceJet seed;
                        seed.v = -hp.calendar_weight;
                        seed.dtau = -hp.calendar_weight * 2.0 * pt.tau;
                        model.backward(scratch, seed, grad);
                    }
                }
            }
            out.components[kCalendar] = hp.calendar_weight * sum;
        }
        if (hp.butterfly_weight > 0.0) {
            double sum = 0.0;
            for (const auto& pt : grids->butterfly.points()) {
                const SurfaceJet jet = model.forward(pt.m, pt.tau, scratch);
                const double b = butterfly_value(pt.m, pt.tau, jet);
                if (b < 0.0) {
                    sum -= b;
                    if (want_grad) {
                        const double skew_term = 1.0 - pt.m * jet.dm / jet.v;
                        SurfaceJet seed;
                        seed.v = -hp.butterfly_weight *
                                 (2.0 * skew_term * (pt.m * jet.dm / (jet.v * jet.v)) -
                                  0.5 * pt.tau * pt.tau * jet.v * jet.dm * jet.dm +
                                  pt.tau * jet.dmm);
                        seed.dm = -hp.butterfly_weight *
                                  (-2.0 * skew_term * pt.m / jet.v -
                                   0.5 * pt.tau * pt.tau * jet.v * jet.v * jet.dm);
                        seed.dmm = -hp.butterfly_weight * pt.tau * jet.v;
                        model.backward(scratch, seed, grad);
                    }
                }
            }
            out.components[kButterfly] = hp.butterfly_weight * sum;
        }
        if (hp.boundary_weight > 0.0) {
            double sum = 0.0;
            for (const auto& pt : grids->boundary.points()) {
                const SurfaceJet jet = model.forward(pt.m, pt.tau, scratch);
                const double c = boundary_value(pt.m, pt.tau, jet);
                if (c < 0.0) {
                    sum -= c;
                    if (want_grad) {
                        const double sqrt_tau = std::sqrt(pt.tau);
                        const double d_minus = bs::d_pair(pt.m, pt.tau, jet.v).d_minus;
                        const double pdf = bs::norm_pdf(d_minus);
                        const double dd_dv = pt.m / (sqrt_tau * jet.v * jet.v) - 0.5 * sqrt_tau;
                        // dc/dv = +-n(d-) (1 + sqrt(tau) v_m d-) dd-/dv,
                        // dc/dv_m = -+sqrt(tau) n(d-); sign flips with the side.
                        const double side = pt.m >= 0.0 ? 1.0 : -1.0;
                        SurfaceJet seed;
                        seed.v = -hp.boundary_weight * side * pdf *
                                 (1.0 + sqrt_tau * jet.dm * d_minus) * dd_dv;
                        seed.dm = -hp.boundary_weight * (-side) * sqrt_tau * pdf;
                        model.backward(scratch, seed, grad);
                    }
                }
            }
            out.components[kBoundary] = hp.boundary_weight * sum;
        }
        if (hp.slope_weight > 0.0) {
            double sum = 0.0;
            for (const auto& pt : grids->slope.points()) {
                const SurfaceJet jet = model.forward(pt.m, pt.tau, scratch);
                const double g = slope_value(pt.m, pt.tau, jet);
                if (g < hp.slope_margin) {
                    sum += hp.slope_margin - g;
                    if (want_grad) {
                        SurfaceJet seed;
                        seed.v = hp.slope_weight * 2.0 * jet.v * pt.tau;
                        model.backward(scratch, seed, grad);
                    }
                }
            }
            out.components[kSlope] = hp.slope_weight * sum;
        }
    }

    // Ridge.
    if (hp.ridge_weight > 0.0) {
        out.components[kRidge] = hp.ridge_weight * model.weight_half_sq();
        if (want_grad) {
            model.add_weight_grad(hp.ridge_weight, grad);
        }
    }

    out.total = 0.0;
    for (const double c : out.components) {
        out.total += c;
    }
    return out;
}

} // namespace

LossBreakdown total_loss(const Model& model, const DataBatch& batch, const PenaltyGrids* grids,
                         const HyperParams& hp) {
    return loss_impl(model, batch, grids, hp, {});
}

LossBreakdown loss_and_gradient(const Model& model, const DataBatch& batch,
                                const PenaltyGrids* grids, const HyperParams& hp,
                                std::span<double> grad) {
    if (grad.size() != model.param_count()) {
        throw std::invalid_argument("gradient span size does not match parameter count");
    }
    return loss_impl(model, batch, grids, hp, grad);
}

} // namespace ivsurf::losses
