#include "ivsurf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

#include "ivsurf/black_scholes.hpp"
#include "ivsurf/errors.hpp"

namespace ivsurf::eval {

namespace {

void append_g12(std::string& out, double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    out += buf;
}

nlohmann::json to_json(const SplitMetrics& m) {
    return {
        {"iv_mape_train", m.iv_mape_train},     {"iv_mape_test", m.iv_mape_test},
        {"price_mape_train", m.price_mape_train}, {"price_mape_test", m.price_mape_test},
        {"n_train", m.n_train},                 {"n_test", m.n_test},
    };
}

nlohmann::json to_json(std::span<const QuarterMean> series) {
    nlohmann::json arr = nlohmann::json::array();
    for (const QuarterMean& q : series) {
        arr.push_back({{"quarter", q.quarter}, {"mean", q.mean}, {"n", q.n}});
    }
    return arr;
}

} // namespace

double mape(std::span<const double> truth, std::span<const double> predicted) {
    if (truth.empty() || truth.size() != predicted.size()) {
        throw std::domain_error("mape: need equal, nonzero lengths");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!(truth[i] > 0.0)) {
            throw std::domain_error("mape: truth values must be strictly positive");
        }
        sum += std::abs(truth[i] - predicted[i]) / truth[i];
    }
    return 100.0 * sum / static_cast<double>(truth.size());
}

double price_mape(const Surface& surface, std::span<const data::PreparedPoint> points,
                  std::span<const data::PriceContext> contexts) {
    if (points.empty() || points.size() != contexts.size()) {
        throw std::domain_error("price_mape: need parallel, nonempty points and contexts");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const data::PreparedPoint& pt = points[i];
        if (!(pt.mid > 0.0)) {
            throw std::domain_error("price_mape: quoted mids must be strictly positive");
        }
        const double vol = surface.value(pt.m, pt.tau);
        const double call_norm = bs::call_forward(pt.m, pt.tau, vol);
        const double scale = contexts[i].discount * pt.forward;
        const double predicted =
            contexts[i].is_call ? scale * call_norm : scale * (call_norm - 1.0 + std::exp(pt.m));
        sum += std::abs(pt.mid - predicted) / pt.mid;
    }
    return 100.0 * sum / static_cast<double>(points.size());
}

std::vector<QuarterMean> quarterly(std::span<const DatedValue> series) {
    if (series.empty()) {
        throw std::domain_error("quarterly: empty series");
    }
    // Quarter keys ("2019Q3") sort chronologically, so a map does the
    // grouping and the ordering in one pass.
    std::map<std::string, std::pair<double, std::size_t>> groups;
    for (const DatedValue& dv : series) {
        auto& [sum, n] = groups[quarter_key(dv.date)];
        sum += dv.value;
        ++n;
    }
    std::vector<QuarterMean> out;
    out.reserve(groups.size());
    for (const auto& [quarter, acc] : groups) {
        out.push_back({quarter, acc.first / static_cast<double>(acc.second), acc.second});
    }
    return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n < 2 || !(lo < hi)) {
        throw std::domain_error("linspace: need n >= 2 and lo < hi");
    }
    std::vector<double> out(n);
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = lo + static_cast<double>(i) * step;
    }
    out.back() = hi;
    return out;
}

std::vector<GridRow> surface_grid(const Surface& surface, double m_lo, double m_hi, double tau_lo,
                                  double tau_hi, std::size_t n_m, std::size_t n_tau) {
    if (n_m < 2 || n_tau < 2) {
        throw std::domain_error("surface_grid: need at least 2 points per axis");
    }
    const std::vector<double> ms = linspace(m_lo, m_hi, n_m);
    const std::vector<double> taus = linspace(tau_lo, tau_hi, n_tau);
    std::vector<GridRow> rows;
    rows.reserve(n_m * n_tau);
    for (const double m : ms) {
        for (const double tau : taus) {
            rows.push_back({m, tau, surface.value(m, tau)});
        }
    }
    return rows;
}

std::string grid_to_tsv(std::span<const GridRow> rows) {
    std::string out = "m\ttau\tv\n";
    for (const GridRow& row : rows) {
        append_g12(out, row.m);
        out += '\t';
        append_g12(out, row.tau);
        out += '\t';
        append_g12(out, row.v);
        out += '\n';
    }
    return out;
}

std::string DensityResult::to_tsv() const {
    std::string out = "x\tdensity\n";
    for (const DensitySample& s : samples) {
        append_g12(out, s.x);
        out += '\t';
        append_g12(out, s.density);
        out += '\n';
    }
    return out;
}

DensityResult rn_density(const Surface& surface, double tau, std::span<const double> m_grid) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw std::domain_error("rn_density: tau must be positive and finite");
    }
    if (m_grid.size() < kDensityMinPoints) {
        throw std::domain_error("rn_density: grid too coarse, need at least " +
                                std::to_string(kDensityMinPoints) + " points");
    }
    const double h = m_grid[1] - m_grid[0];
    if (!(h > 0.0)) {
        throw std::domain_error("rn_density: grid must be strictly increasing");
    }
    for (std::size_t i = 1; i + 1 < m_grid.size(); ++i) {
        if (std::abs((m_grid[i + 1] - m_grid[i]) - h) > 1e-9 * std::max(1.0, std::abs(h))) {
            throw std::domain_error("rn_density: grid must be uniformly spaced");
        }
    }
    if (m_grid.front() > -1.5 + 1e-12 || m_grid.back() < 1.0 - 1e-12) {
        throw std::domain_error("rn_density: grid must span at least [-1.5, 1]");
    }

    std::vector<double> call(m_grid.size());
    for (std::size_t i = 0; i < m_grid.size(); ++i) {
        call[i] = bs::call_forward(m_grid[i], tau, surface.value(m_grid[i], tau));
    }

    DensityResult out;
    out.samples.reserve(m_grid.size() - 2);
    out.min_density = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < m_grid.size(); ++i) {
        const double d1 = (call[i + 1] - call[i - 1]) / (2.0 * h);
        const double d2 = (call[i + 1] - 2.0 * call[i] + call[i - 1]) / (h * h);
        const double q = std::exp(-m_grid[i]) * (d2 - d1);
        out.samples.push_back({m_grid[i], q});
        out.min_density = std::min(out.min_density, q);
    }
    for (std::size_t i = 0; i + 1 < out.samples.size(); ++i) {
        out.integral += 0.5 * (out.samples[i].density + out.samples[i + 1].density) * h;
    }
    return out;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["overall"] = eval::to_json(overall);
    nlohmann::json day_arr = nlohmann::json::array();
    for (const DayMetrics& d : days) {
        nlohmann::json row = eval::to_json(d.metrics);
        row["trade_date"] = format_date(d.trade_date);
        day_arr.push_back(std::move(row));
    }
    j["days"] = std::move(day_arr);
    j["quarterly"] = {
        {"iv_mape_train", eval::to_json(iv_train_quarters)},
        {"iv_mape_test", eval::to_json(iv_test_quarters)},
        {"price_mape_train", eval::to_json(price_train_quarters)},
        {"price_mape_test", eval::to_json(price_test_quarters)},
    };
    j["violation"] = nlohmann::json::parse(constraints::to_json(violation));
    return j.dump(2) + "\n";
}

EvalReport evaluate(const Surface& surface, std::span<const data::Quote> quotes,
                    double split_fraction, std::uint64_t seed, std::size_t audit_points) {
    if (audit_points == 0) {
        throw std::domain_error("evaluate: audit_points must be positive");
    }

    std::map<Date, std::vector<data::Quote>> by_day;
    for (const data::Quote& q : quotes) {
        by_day[q.trade_date].push_back(q);
    }

    EvalReport report;
    for (const auto& [day, day_quotes] : by_day) {
        const data::FilterResult filtered = data::filter_quotes(day_quotes);
        const data::PreparedQuotes prepared = data::prepare_points(filtered.kept);
        if (prepared.points.size() < 2) {
            continue; // not enough material for a split
        }
        const data::SplitResult split =
            data::split_day(prepared.points, split_fraction, seed);

        const auto side_metrics = [&](const losses::DataBatch& batch,
                                      std::span<const std::size_t> indices, double& iv_out,
                                      double& price_out) {
            std::vector<double> truth;
            std::vector<double> pred;
            std::vector<data::PreparedPoint> pts;
            std::vector<data::PriceContext> ctxs;
            truth.reserve(batch.size());
            pred.reserve(batch.size());
            pts.reserve(indices.size());
            ctxs.reserve(indices.size());
            for (const losses::DataPoint& p : batch.points) {
                truth.push_back(p.v);
                pred.push_back(surface.value(p.m, p.tau));
            }
            for (const std::size_t idx : indices) {
                pts.push_back(prepared.points[idx]);
                ctxs.push_back(prepared.contexts[idx]);
            }
            iv_out = mape(truth, pred);
            price_out = price_mape(surface, pts, ctxs);
        };

        DayMetrics dm;
        dm.trade_date = day;
        side_metrics(split.train, split.train_indices, dm.metrics.iv_mape_train,
                     dm.metrics.price_mape_train);
        side_metrics(split.test, split.test_indices, dm.metrics.iv_mape_test,
                     dm.metrics.price_mape_test);
        dm.metrics.n_train = split.train.size();
        dm.metrics.n_test = split.test.size();
        report.days.push_back(std::move(dm));
    }

    if (report.days.empty()) {
        throw InsufficientData("evaluate: no trading day with at least 2 usable points");
    }

    const double n_days = static_cast<double>(report.days.size());
    std::vector<DatedValue> iv_train, iv_test, price_train, price_test;
    for (const DayMetrics& d : report.days) {
        report.overall.iv_mape_train += d.metrics.iv_mape_train / n_days;
        report.overall.iv_mape_test += d.metrics.iv_mape_test / n_days;
        report.overall.price_mape_train += d.metrics.price_mape_train / n_days;
        report.overall.price_mape_test += d.metrics.price_mape_test / n_days;
        report.overall.n_train += d.metrics.n_train;
        report.overall.n_test += d.metrics.n_test;
        iv_train.push_back({d.trade_date, d.metrics.iv_mape_train});
        iv_test.push_back({d.trade_date, d.metrics.iv_mape_test});
        price_train.push_back({d.trade_date, d.metrics.price_mape_train});
        price_test.push_back({d.trade_date, d.metrics.price_mape_test});
    }
    report.iv_train_quarters = quarterly(iv_train);
    report.iv_test_quarters = quarterly(iv_test);
    report.price_train_quarters = quarterly(price_train);
    report.price_test_quarters = quarterly(price_test);

    // Fresh audit grids, decoupled from the training stream.
    std::vector<constraints::ConditionGrid> grids;
    grids.push_back(constraints::uniform_grid(constraints::Domain::core, audit_points,
                                              seed ^ 0xA5A5A5A5A5A5A5A5ULL));
    grids.push_back(constraints::uniform_grid(constraints::Domain::wings, audit_points,
                                              seed ^ 0x5A5A5A5A5A5A5A5AULL));
    report.violation = constraints::audit(surface, grids);
    return report;
}

} // namespace ivsurf::eval
