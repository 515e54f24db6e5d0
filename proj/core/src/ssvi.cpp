#include "ivsurf/ssvi.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "ivsurf/black_scholes.hpp"
#include "ivsurf/errors.hpp"
#include "ivsurf/rng.hpp"

namespace ivsurf::ssvi {

void Params::validate() const {
    if (knot_tau.empty() || knot_tau.size() != knot_theta.size()) {
        throw std::domain_error("ssvi: need matching, nonempty knot_tau/knot_theta");
    }
    for (std::size_t i = 0; i < knot_tau.size(); ++i) {
        if (!(knot_tau[i] > 0.0) || !(knot_theta[i] > 0.0)) {
            throw std::domain_error("ssvi: knots must be positive");
        }
        if (i > 0 && (!(knot_tau[i] > knot_tau[i - 1]) || !(knot_theta[i] > knot_theta[i - 1]))) {
            throw std::domain_error("ssvi: knot_tau and knot_theta must be strictly increasing");
        }
    }
    if (!(std::abs(rho) < 1.0)) {
        throw std::domain_error("ssvi: need |rho| < 1");
    }
    if (!(eta > 0.0)) {
        throw std::domain_error("ssvi: need eta > 0");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::domain_error("ssvi: need lambda in [0, 1]");
    }
    if (eta * (1.0 + std::abs(rho)) > 2.0) {
        throw std::domain_error("ssvi: eta (1 + |rho|) <= 2 violated (butterfly-safe region)");
    }
}

namespace {

void require_tau(double tau) {
    if (!std::isfinite(tau) || !(tau > 0.0)) {
        throw std::domain_error("tau must be positive and finite");
    }
}

// Slope of the knot interpolation at tau (zero outside the knot range; at a
// knot the right-hand segment applies).
double theta_slope(const Params& p, double tau) {
    const auto& t = p.knot_tau;
    if (tau < t.front() || tau >= t.back()) {
        return 0.0;
    }
    const auto it = std::upper_bound(t.begin(), t.end(), tau);
    const std::size_t hi = static_cast<std::size_t>(it - t.begin());
    return (p.knot_theta[hi] - p.knot_theta[hi - 1]) / (t[hi] - t[hi - 1]);
}

// Total variance and its (m, theta) partials at fixed smile parameters.
struct SliceEval {
    double w;
    double w_m;
    double w_mm;
    double w_theta;
};

SliceEval slice_eval(double theta, double rho, double eta, double lambda, double m) {
    const double f = eta * std::pow(theta, -lambda);
    const double u = f * m + rho;
    const double r = std::sqrt(u * u + 1.0 - rho * rho);
    const double w = 0.5 * theta * (1.0 + rho * f * m + r);
    const double shape = rho + u / r;
    SliceEval out;
    out.w = w;
    out.w_m = 0.5 * theta * f * shape;
    out.w_mm = 0.5 * theta * f * f * (1.0 - rho * rho) / (r * r * r);
    // d f / d theta = -lambda f / theta, so the product rule gives:
    out.w_theta = w / theta - 0.5 * lambda * f * m * shape;
    return out;
}

} // namespace

double theta_at(const Params& p, double tau) {
    require_tau(tau);
    const auto& t = p.knot_tau;
    if (tau <= t.front()) {
        return p.knot_theta.front();
    }
    if (tau >= t.back()) {
        return p.knot_theta.back();
    }
    const auto it = std::upper_bound(t.begin(), t.end(), tau);
    const std::size_t hi = static_cast<std::size_t>(it - t.begin());
    const double lam = (tau - t[hi - 1]) / (t[hi] - t[hi - 1]);
    return p.knot_theta[hi - 1] + lam * (p.knot_theta[hi] - p.knot_theta[hi - 1]);
}

double total_variance(const Params& p, double m, double tau) {
    if (!std::isfinite(m)) {
        throw std::domain_error("non-finite moneyness");
    }
    const double theta = theta_at(p, tau);
    return slice_eval(theta, p.rho, p.eta, p.lambda, m).w;
}

double iv(const Params& p, double m, double tau) {
    return std::sqrt(total_variance(p, m, tau) / tau);
}

SsviSurface::SsviSurface(Params p) : params_(std::move(p)) { params_.validate(); }

double SsviSurface::value(double m, double tau) const { return iv(params_, m, tau); }

SurfaceJet SsviSurface::jet(double m, double tau) const {
    if (!std::isfinite(m)) {
        throw std::domain_error("non-finite moneyness");
    }
    require_tau(tau);
    const double theta = theta_at(params_, tau);
    const SliceEval s = slice_eval(theta, params_.rho, params_.eta, params_.lambda, m);
    const double w_tau = theta_slope(params_, tau) * s.w_theta;

    SurfaceJet jet;
    jet.v = std::sqrt(s.w / tau);
    const double inv = 1.0 / (2.0 * tau * jet.v);
    jet.dm = s.w_m * inv;
    jet.dmm = s.w_mm * inv - s.w_m * s.w_m / (4.0 * tau * tau * jet.v * jet.v * jet.v);
    jet.dtau = (w_tau * tau - s.w) / (2.0 * tau * tau * jet.v);
    return jet;
}

// --- calibration -------------------------------------------------------------

namespace {

struct MaturityGroup {
    double tau = 0.0;
    double theta_seed = 0.0;             // ATM-nearest total variance
    std::vector<double> m;
    std::vector<double> target_w;        // observed v^2 tau
};

std::vector<MaturityGroup> group_by_maturity(const losses::DataBatch& points) {
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return points.points[a].tau < points.points[b].tau;
    });

    std::vector<MaturityGroup> groups;
    double best_abs_m = 0.0;
    for (const std::size_t idx : order) {
        const auto& pt = points.points[idx];
        if (groups.empty() || pt.tau - groups.back().tau > 1e-9 * std::max(1.0, pt.tau)) {
            groups.push_back({pt.tau, 0.0, {}, {}});
            best_abs_m = std::numeric_limits<double>::infinity();
        }
        MaturityGroup& g = groups.back();
        g.m.push_back(pt.m);
        g.target_w.push_back(pt.v * pt.v * pt.tau);
        if (std::abs(pt.m) < best_abs_m) {
            best_abs_m = std::abs(pt.m);
            g.theta_seed = pt.v * pt.v * pt.tau;
        }
    }
    return groups;
}

double group_residual(const MaturityGroup& g, double theta, double rho, double eta,
                      double lambda) {
    double sum = 0.0;
    for (std::size_t i = 0; i < g.m.size(); ++i) {
        const double w = slice_eval(theta, rho, eta, lambda, g.m[i]).w;
        const double rel = (w - g.target_w[i]) / g.target_w[i];
        sum += rel * rel;
    }
    return sum;
}

// Golden-section refit of one maturity's theta given smile parameters.
// Searches log-theta in a fixed window around the ATM seed, which always
// brackets the optimum because theta is exactly the ATM total variance.
double refit_theta(const MaturityGroup& g, double rho, double eta, double lambda) {
    constexpr double kGolden = 0.6180339887498949;
    double lo = std::log(g.theta_seed) - 1.2;
    double hi = std::log(g.theta_seed) + 1.2;
    double x1 = hi - kGolden * (hi - lo);
    double x2 = lo + kGolden * (hi - lo);
    double f1 = group_residual(g, std::exp(x1), rho, eta, lambda);
    double f2 = group_residual(g, std::exp(x2), rho, eta, lambda);
    for (int it = 0; it < 48; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kGolden * (hi - lo);
            f1 = group_residual(g, std::exp(x1), rho, eta, lambda);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kGolden * (hi - lo);
            f2 = group_residual(g, std::exp(x2), rho, eta, lambda);
        }
    }
    return std::exp(0.5 * (lo + hi));
}

struct SmilePoint {
    double rho = 0.0;
    double eta = 0.0;
};

SmilePoint project_smile(double rho_raw, double eta_raw) {
    SmilePoint s;
    s.rho = std::clamp(rho_raw, -0.999, 0.999);
    s.eta = std::clamp(eta_raw, 1e-4, 2.0 / (1.0 + std::abs(s.rho)));
    return s;
}

// Weighted pool-adjacent-violators: returns the nondecreasing sequence
// closest to `values` in the weighted least-squares sense.
std::vector<double> isotonic(const std::vector<double>& values, const std::vector<double>& weights) {
    struct Block {
        double mean;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < values.size(); ++i) {
        blocks.push_back({values[i], weights[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean >= blocks.back().mean) {
            const Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            a.mean = (a.mean * a.weight + b.mean * b.weight) / (a.weight + b.weight);
            a.weight += b.weight;
            a.count += b.count;
        }
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (const Block& b : blocks) {
        out.insert(out.end(), b.count, b.mean);
    }
    return out;
}

// Minimal Nelder-Mead on R^2; deterministic, bounded iteration count.
SmilePoint nelder_mead(const std::function<double(double, double)>& f, double x0, double y0,
                       double step) {
    std::array<std::array<double, 2>, 3> v{{{x0, y0}, {x0 + step, y0}, {x0, y0 + step}}};
    std::array<double, 3> fv{f(v[0][0], v[0][1]), f(v[1][0], v[1][1]), f(v[2][0], v[2][1])};

    for (int it = 0; it < 240; ++it) {
        // Order vertices best..worst.
        std::array<int, 3> idx{0, 1, 2};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const auto& best = v[idx[0]];
        const auto& second = v[idx[1]];
        auto& worst = v[idx[2]];
        if (fv[idx[2]] - fv[idx[0]] < 1e-14 * (1.0 + std::abs(fv[idx[0]]))) {
            break;
        }
        const double cx = 0.5 * (best[0] + second[0]);
        const double cy = 0.5 * (best[1] + second[1]);

        const double rx = cx + (cx - worst[0]);
        const double ry = cy + (cy - worst[1]);
        const double fr = f(rx, ry);
        if (fr < fv[idx[0]]) {
            const double ex = cx + 2.0 * (cx - worst[0]);
            const double ey = cy + 2.0 * (cy - worst[1]);
            const double fe = f(ex, ey);
            if (fe < fr) {
                worst = {ex, ey};
                fv[idx[2]] = fe;
            } else {
                worst = {rx, ry};
                fv[idx[2]] = fr;
            }
        } else if (fr < fv[idx[1]]) {
            worst = {rx, ry};
            fv[idx[2]] = fr;
        } else {
            const double kx = cx + 0.5 * (worst[0] - cx);
            const double ky = cy + 0.5 * (worst[1] - cy);
            const double fk = f(kx, ky);
            if (fk < fv[idx[2]]) {
                worst = {kx, ky};
                fv[idx[2]] = fk;
            } else {
                // Shrink toward the best vertex.
                for (int j = 1; j < 3; ++j) {
                    auto& vj = v[idx[j]];
                    vj[0] = best[0] + 0.5 * (vj[0] - best[0]);
                    vj[1] = best[1] + 0.5 * (vj[1] - best[1]);
                    fv[idx[j]] = f(vj[0], vj[1]);
                }
            }
        }
    }
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    return {v[idx[0]][0], v[idx[0]][1]};
}

} // namespace

Params fit(const losses::DataBatch& points, std::uint64_t seed) {
    if (points.size() < 20) {
        throw InsufficientData("ssvi fit needs at least 20 points, got " +
                               std::to_string(points.size()));
    }
    for (const auto& pt : points.points) {
        if (!(pt.v > 0.0) || !(pt.tau > 0.0)) {
            throw std::domain_error("ssvi fit: nonpositive vol or tau");
        }
    }
    const double lambda = 0.5;
    std::vector<MaturityGroup> groups = group_by_maturity(points);

    const auto objective = [&](double rho_raw, double eta_raw) {
        const SmilePoint s = project_smile(rho_raw, eta_raw);
        double sum = 0.0;
        for (const MaturityGroup& g : groups) {
            const double theta = refit_theta(g, s.rho, s.eta, lambda);
            sum += group_residual(g, theta, s.rho, s.eta, lambda);
        }
        return sum;
    };

    // A handful of restarts covers the (rho, eta) box; the objective is cheap
    // because theta is eliminated per maturity inside it.
    Rng rng(seed);
    constexpr std::array<SmilePoint, 5> kStarts{{
        {-0.3, 0.8}, {0.3, 0.8}, {-0.7, 1.3}, {0.0, 0.4}, {-0.5, 1.0}}};
    SmilePoint best{};
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < kStarts.size(); ++r) {
        double x0 = kStarts[r].rho;
        double y0 = kStarts[r].eta;
        if (r > 0) {
            x0 += rng.uniform(-0.05, 0.05);
            y0 += rng.uniform(-0.10, 0.10);
        }
        const SmilePoint cand = nelder_mead(objective, x0, y0, 0.25);
        const double val = objective(cand.rho, cand.eta);
        if (val < best_val) {
            best_val = val;
            best = project_smile(cand.rho, cand.eta);
        }
    }

    // Final theta refit at the winning smile parameters, then enforce an
    // increasing curve.
    std::vector<double> theta(groups.size());
    std::vector<double> weight(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        theta[g] = refit_theta(groups[g], best.rho, best.eta, lambda);
        weight[g] = static_cast<double>(groups[g].m.size());
    }
    theta = isotonic(theta, weight);
    for (std::size_t g = 0; g < theta.size(); ++g) {
        const double floor = g == 0 ? 1e-12 : theta[g - 1] * (1.0 + 1e-9);
        theta[g] = std::max(theta[g], floor);
    }

    Params out;
    out.knot_tau.resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        out.knot_tau[g] = groups[g].tau;
    }
    out.knot_theta = std::move(theta);
    out.rho = best.rho;
    out.eta = best.eta;
    out.lambda = lambda;
    out.validate();
    return out;
}

// --- synthetic market ----------------------------------------------------------

Params default_market_params() {
    Params p;
    p.knot_tau = {0.002, 0.05, 0.25, 1.0, 3.0};
    // ATM vols ~25% at the very short end easing to ~19% at three years.
    p.knot_theta = {0.000125, 0.00242, 0.01, 0.038025, 0.1083};
    p.rho = -0.35;
    p.eta = 0.9;
    p.lambda = 0.5;
    p.validate();
    return p;
}

SynthDay synth_market(const Params& p, int n_quotes, std::span<const int> maturity_days,
                      double noise_sd, std::uint64_t seed, const MarketSpec& market) {
    p.validate();
    if (maturity_days.empty()) {
        throw std::domain_error("synth_market: need at least one maturity");
    }
    for (const int days : maturity_days) {
        if (days < 1) {
            throw std::domain_error("synth_market: maturities must be at least one day");
        }
    }
    const int n_mat = static_cast<int>(maturity_days.size());
    if (n_quotes < 4 * n_mat) {
        throw std::domain_error("synth_market: need at least four quotes per maturity");
    }
    if (noise_sd < 0.0 || !(market.spot > 0.0) || !(market.spread_frac >= 0.0)) {
        throw std::domain_error("synth_market: bad noise/spot/spread");
    }

    Rng rng(seed);
    SynthDay day;
    day.truth.points.reserve(n_quotes);
    day.quotes.reserve(n_quotes + n_mat);

    const auto noisy = [&](double v) {
        if (noise_sd == 0.0) {
            return v;
        }
        // Mean-one lognormal factor.
        return v * std::exp(noise_sd * rng.normal() - 0.5 * noise_sd * noise_sd);
    };

    for (int g = 0; g < n_mat; ++g) {
        const int alloc = n_quotes / n_mat + (g < n_quotes % n_mat ? 1 : 0);
        const int n_otm = alloc - 2; // the forward-pinned pair uses two slots
        const double tau = static_cast<double>(maturity_days[g]) / kDaysPerYear;
        const Date expiry = add_days(market.trade_date, maturity_days[g]);
        const double forward = market.spot * std::exp(market.rate * tau);
        const double discount = std::exp(-market.rate * tau);
        const double half_spread = 0.5 * market.spread_frac;

        const auto push_quote = [&](data::OptionType type, double strike, double price) {
            data::Quote q;
            q.trade_date = market.trade_date;
            q.expiry_date = expiry;
            q.type = type;
            q.strike = strike;
            q.bid = price * (1.0 - half_spread);
            q.ask = price * (1.0 + half_spread);
            q.spot = market.spot;
            q.rate = market.rate;
            day.quotes.push_back(q);
        };

        // Call/put pair pinned at the forward: identical prices, so parity
        // recovers the forward exactly.
        {
            const double v = noisy(iv(p, 0.0, tau));
            const double price = discount * forward * bs::call_forward(0.0, tau, v);
            push_quote(data::OptionType::call, forward, price);
            push_quote(data::OptionType::put, forward, price);
            day.truth.points.push_back({0.0, tau, v});
        }

        for (int i = 0; i < n_otm; ++i) {
            const double m = rng.truncated_normal(-0.4, 0.8, -3.0, 1.0);
            const double v = noisy(iv(p, m, tau));
            const double strike = forward * std::exp(m);
            const double call_norm = bs::call_forward(m, tau, v);
            double price;
            data::OptionType type;
            if (m < 0.0) {
                type = data::OptionType::put;
                price = std::max(0.0, discount * forward * (call_norm - 1.0 + std::exp(m)));
            } else {
                type = data::OptionType::call;
                price = discount * forward * call_norm;
            }
            push_quote(type, strike, price);
            day.truth.points.push_back({m, tau, v});
        }
    }
    return day;
}

} // namespace ivsurf::ssvi
