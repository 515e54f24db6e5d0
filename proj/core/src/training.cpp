#include "ivsurf/training.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "ivsurf/errors.hpp"
#include "ivsurf/rng.hpp"

namespace ivsurf::train {

namespace {

using constraints::ConditionGrid;
using constraints::Domain;
using constraints::GridPoint;

// Seed offset separating the grid stream from the init stream, so that model
// initialization and grid sampling stay independent draws of the same seed.
constexpr std::uint64_t kGridStreamSalt = 0x9e3779b97f4a7c15ULL;

std::vector<GridPoint> draw_points(Rng& rng, Domain domain, std::size_t n) {
    std::vector<GridPoint> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        GridPoint pt;
        if (domain == Domain::core) {
            pt.m = rng.uniform(-constraints::kCoreMoneynessMax, constraints::kCoreMoneynessMax);
        } else {
            pt.m = rng.uniform(constraints::kWingsMoneynessMin, constraints::kWingsMoneynessMax);
            if (rng.uniform01() < 0.5) {
                pt.m = -pt.m;
            }
        }
        pt.tau = rng.uniform(constraints::kTauMin, constraints::kTauMax);
        pts.push_back(pt);
    }
    return pts;
}

losses::PenaltyGrids sample_grids_from(Rng& rng, std::size_t n_real, double ratio) {
    if (n_real == 0 || !(ratio > 0.0)) {
        throw std::domain_error("sample_grids: need n_real > 0 and ratio > 0");
    }
    const auto n_synth =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_real)));
    if (n_synth < 4) {
        throw std::domain_error("sample_grids: fewer than one point per penalty grid");
    }
    // Split as evenly as possible; the first grids absorb the remainder.
    std::array<std::size_t, 4> counts{};
    for (std::size_t g = 0; g < 4; ++g) {
        counts[g] = n_synth / 4 + (g < n_synth % 4 ? 1 : 0);
    }
    auto calendar = draw_points(rng, Domain::core, counts[0]);
    auto butterfly = draw_points(rng, Domain::core, counts[1]);
    auto boundary = draw_points(rng, Domain::core, counts[2]);
    auto slope = draw_points(rng, Domain::wings, counts[3]);
    return losses::PenaltyGrids(ConditionGrid(Domain::core, std::move(calendar)),
                                ConditionGrid(Domain::core, std::move(butterfly)),
                                ConditionGrid(Domain::core, std::move(boundary)),
                                ConditionGrid(Domain::wings, std::move(slope)));
}

} // namespace

losses::PenaltyGrids sample_grids(std::size_t n_real, double ratio, std::uint64_t seed) {
    Rng rng(seed);
    return sample_grids_from(rng, n_real, ratio);
}

std::string TrainTrace::header() {
    std::string h = "iteration\ttotal";
    for (const char* name : losses::kLossTermNames) {
        h += '\t';
        h += name;
    }
    h += "\tlearning_rate\telapsed_ms";
    return h;
}

std::string TrainTrace::to_tsv() const {
    std::ostringstream os;
    os << header() << '\n';
    char buf[32];
    const auto put = [&](double x) {
        std::snprintf(buf, sizeof(buf), "%.12g", x);
        os << '\t' << buf;
    };
    for (const TraceRow& row : rows) {
        os << row.iteration;
        put(row.total);
        for (const double c : row.components) {
            put(c);
        }
        put(row.learning_rate);
        put(row.elapsed_ms);
        os << '\n';
    }
    return os.str();
}

FitResult adam_fit(const losses::DataBatch& batch, const TrainConfig& config) {
    if (batch.empty()) {
        throw std::domain_error("adam_fit: empty data batch");
    }
    if (config.hp.iterations < 1 || config.log_every < 1) {
        throw std::domain_error("adam_fit: iterations and log_every must be positive");
    }

    const losses::HyperParams& hp = config.hp;
    std::unique_ptr<Model> model = init_model(config.arch, config.dims, config.seed);

    const bool use_grids = hp.any_shape_penalty();
    Rng grid_rng(config.seed ^ kGridStreamSalt);
    std::optional<losses::PenaltyGrids> grids;
    if (use_grids) {
        grids.emplace(sample_grids_from(grid_rng, batch.size(), hp.synth_ratio));
    }

    const std::size_t n_params = model->param_count();
    std::vector<double> grad(n_params);
    std::vector<double> m1(n_params, 0.0); // first-moment estimate
    std::vector<double> m2(n_params, 0.0); // second-moment estimate
    std::vector<double> params = model->flat_params();
    std::vector<double> best_params = params;

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kAdamEps = 1e-8;
    constexpr double kDecayHorizon = 5000.0;

    FitResult out;
    out.best_loss = std::numeric_limits<double>::infinity();

    const auto started = std::chrono::steady_clock::now();
    const auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         started)
            .count();
    };

    const auto diverged = [](const losses::LossBreakdown& b, int step) {
        std::string msg = "training diverged at step " + std::to_string(step) + " (";
        for (std::size_t i = 0; i < b.components.size(); ++i) {
            msg += std::string(losses::kLossTermNames[i]) + "=" + std::to_string(b.components[i]);
            msg += i + 1 < b.components.size() ? ", " : ")";
        }
        return DivergenceError(msg, step);
    };

    // An exploded parameter vector can push the surface outside the numeric
    // domain of the loss (v overflowing to inf trips the pricing-layer domain
    // checks) before the loss itself turns non-finite.  Past step 0 the batch
    // and grids are already validated, so a domain error can only mean the
    // optimizer left the feasible region.
    const auto guard_domain = [](int step, const std::domain_error& ex) -> DivergenceError {
        return DivergenceError(
            "training diverged at step " + std::to_string(step) + " (" + ex.what() + ")", step);
    };

    double beta1_pow = 1.0;
    double beta2_pow = 1.0;
    for (int t = 0; t < hp.iterations; ++t) {
        losses::LossBreakdown bd;
        try {
            bd = losses::loss_and_gradient(*model, batch, grids ? &*grids : nullptr, hp, grad);
        } catch (const std::domain_error& ex) {
            if (t == 0) throw; // precondition failure, not divergence
            throw guard_domain(t, ex);
        }
        if (!std::isfinite(bd.total)) {
            throw diverged(bd, t);
        }
        if (bd.total < out.best_loss) {
            out.best_loss = bd.total;
            out.best_iteration = t;
            out.best_breakdown = bd;
            best_params = params;
        }
        const double lr = hp.learning_rate / (1.0 + static_cast<double>(t) / kDecayHorizon);
        if (t % config.log_every == 0) {
            out.trace.rows.push_back({t, bd.total, bd.components, lr, elapsed_ms()});
        }

        beta1_pow *= kBeta1;
        beta2_pow *= kBeta2;
        for (std::size_t i = 0; i < n_params; ++i) {
            m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * grad[i];
            m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            const double m1_hat = m1[i] / (1.0 - beta1_pow);
            const double m2_hat = m2[i] / (1.0 - beta2_pow);
            params[i] -= lr * m1_hat / (std::sqrt(m2_hat) + kAdamEps);
        }
        model->set_flat_params(params);

        if (use_grids && config.grid_refresh == GridRefresh::per_iteration) {
            grids.emplace(sample_grids_from(grid_rng, batch.size(), hp.synth_ratio));
        }
    }

    // Score the final parameters too, so "best" covers every visited state.
    {
        losses::LossBreakdown bd;
        try {
            bd = losses::total_loss(*model, batch, grids ? &*grids : nullptr, hp);
        } catch (const std::domain_error& ex) {
            throw guard_domain(hp.iterations, ex);
        }
        if (!std::isfinite(bd.total)) {
            throw diverged(bd, hp.iterations);
        }
        if (bd.total < out.best_loss) {
            out.best_loss = bd.total;
            out.best_iteration = hp.iterations;
            out.best_breakdown = bd;
            best_params = params;
        }
        const double lr =
            hp.learning_rate / (1.0 + static_cast<double>(hp.iterations) / kDecayHorizon);
        out.trace.rows.push_back({hp.iterations, bd.total, bd.components, lr, elapsed_ms()});
    }

    model->set_flat_params(best_params);
    out.model = std::move(model);
    return out;
}

DayFitResult fit_day(std::span<const data::Quote> quotes, const TrainConfig& config) {
    DayFitResult out;
    out.filter = data::filter_quotes(quotes);
    out.prepared = data::prepare_points(out.filter.kept);
    if (out.prepared.points.size() < config.min_quotes) {
        throw InsufficientData("fit_day: only " + std::to_string(out.prepared.points.size()) +
                               " usable quotes after filtering, need " +
                               std::to_string(config.min_quotes));
    }
    out.split = data::split_day(out.prepared.points, config.split_fraction, config.seed);
    out.fit = adam_fit(out.split.train, config);
    return out;
}

} // namespace ivsurf::train
