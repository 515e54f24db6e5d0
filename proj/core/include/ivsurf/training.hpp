#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ivsurf/data.hpp"
#include "ivsurf/losses.hpp"
#include "ivsurf/models.hpp"

// Full-batch Adam training of a surface model against one day of implied-vol
// observations plus sampled shape-penalty grids.

namespace ivsurf::train {

enum class GridRefresh {
    once,          // sample the penalty grids up front and keep them
    per_iteration, // resample every step (slower, stochastic penalty)
};

struct TrainConfig {
    Arch arch = Arch::multi;
    ModelDims dims{4, 8, 5};
    losses::HyperParams hp{};
    std::uint64_t seed = 0;
    GridRefresh grid_refresh = GridRefresh::once;
    int log_every = 100;

    // fit_day only:
    double split_fraction = 0.8;
    std::size_t min_quotes = 50; // refuse days with fewer usable quotes
};

// One logged optimizer state.  `total`/`components` are measured at the
// parameters *before* the update of `iteration` (the final row, at
// iteration == hp.iterations, is measured after the last update).
struct TraceRow {
    int iteration = 0;
    double total = 0.0;
    std::array<double, 6> components{}; // weighted, see losses::kLossTermNames
    double learning_rate = 0.0;
    double elapsed_ms = 0.0;
};

struct TrainTrace {
    std::vector<TraceRow> rows;

    // Tab-separated rendering at 12 significant digits; elapsed_ms is the
    // only run-dependent column.
    static std::string header();
    std::string to_tsv() const;
};

// Draws round(ratio * n_real) synthetic grid points, split as evenly as
// possible across the four shape penalties (calendar, butterfly and boundary
// grids on the core domain, slope on the wings).  Deterministic in
// (n_real, ratio, seed).
losses::PenaltyGrids sample_grids(std::size_t n_real, double ratio, std::uint64_t seed);

struct FitResult {
    std::unique_ptr<Model> model; // parameters with the lowest recorded loss
    TrainTrace trace;
    double best_loss = 0.0;
    int best_iteration = 0;
    losses::LossBreakdown best_breakdown{};
};

// Initializes a fresh model from (arch, dims, seed) and runs
// hp.iterations full-batch Adam steps with inverse-time learning-rate decay
// lr_t = lr0 / (1 + t / 5000).  The loss is recorded at every step and the
// best parameter vector is returned, so a late plateau or wobble cannot
// worsen the result.  When every shape-penalty weight is zero the penalty
// grids are never sampled or evaluated.  Throws DivergenceError if the loss
// leaves the finite range.
FitResult adam_fit(const losses::DataBatch& batch, const TrainConfig& config);

struct DayFitResult {
    FitResult fit;
    data::FilterResult filter;
    data::PreparedQuotes prepared;
    data::SplitResult split;
};

// Quote-level convenience wrapper: filter -> prepare -> split -> adam_fit on
// the train side.  Throws InsufficientData when fewer than config.min_quotes
// usable points survive preparation.
DayFitResult fit_day(std::span<const data::Quote> quotes, const TrainConfig& config);

} // namespace ivsurf::train
