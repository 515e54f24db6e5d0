// ivsurf — calibration and prediction toolkit for arbitrage-constrained
// implied-volatility surfaces.
//
// Subcommands:
//   simulate         generate a synthetic quote day from an SSVI surface
//   fit              calibrate a model to a quote file (one fit per trade day)
//   predict          evaluate a saved model on a regular (m, tau) grid
//   evaluate         score a saved model against a quote history
//   check-arbitrage  audit a saved model on fresh core/wings grids
//   density          extract the risk-neutral log-return density
//
// Global flags: --seed, --out-dir, --config <json>.  Config-file values apply
// only to flags not passed on the command line, so the precedence is
// command line > config file > built-in defaults.
//
// Every successful run writes exactly one manifest
// (<out-dir>/manifest_<command>.json) recording the command line, the
// effective configuration and an FNV-1a hash of every file read or written.
// All data artifacts are deterministic functions of the manifest; the
// manifest itself records wall time and is the only non-reproducible output.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
// failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ivsurf/black_scholes.hpp"
#include "ivsurf/constraints.hpp"
#include "ivsurf/data.hpp"
#include "ivsurf/dates.hpp"
#include "ivsurf/errors.hpp"
#include "ivsurf/evaluation.hpp"
#include "ivsurf/losses.hpp"
#include "ivsurf/model_io.hpp"
#include "ivsurf/models.hpp"
#include "ivsurf/ssvi.hpp"
#include "ivsurf/training.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ivsurf;

// --- file plumbing -----------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return std::move(os).str();
}

void spew(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

// --- run manifest --------------------------------------------------------------

struct RunRecord {
    std::string command;
    json config = json::object();  // effective settings after config merge
    json inputs = json::object();  // path -> content hash
    json outputs = json::object(); // path -> content hash
};

struct Global {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string config_path;
    json config = json::object(); // parsed --config file, {} when absent

    // Relative artifact paths land under --out-dir.
    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : fs::path(out_dir) / path;
    }
};

void record_input(RunRecord& rec, const fs::path& path) {
    rec.inputs[path.string()] = hex64(fnv1a64(slurp(path)));
}

void write_artifact(RunRecord& rec, const fs::path& path, std::string_view text) {
    spew(path, text);
    rec.outputs[path.string()] = hex64(fnv1a64(text));
}

// Hashes a file some library call already wrote (e.g. write_quotes_csv).
void record_output_file(RunRecord& rec, const fs::path& path) {
    rec.outputs[path.string()] = hex64(fnv1a64(slurp(path)));
}

void write_manifest(const Global& g, const RunRecord& rec, int argc, char** argv,
                    double wall_ms) {
    json m;
    m["command"] = rec.command;
    json args = json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
    m["argv"] = std::move(args);
    m["seed"] = g.seed;
    m["out_dir"] = g.out_dir;
    m["config"] = rec.config;
    m["inputs"] = rec.inputs;
    m["outputs"] = rec.outputs;
    m["wall_time_ms"] = wall_ms;
    spew(fs::path(g.out_dir) / ("manifest_" + rec.command + ".json"), m.dump(2) + "\n");
}

// --- config-file overrides -------------------------------------------------------

// Applies a config-file value to a flag the user did not pass.  Keys are the
// long flag names without the leading dashes.
template <typename T>
void config_override(const json& cfg, const std::string& key, const CLI::Option* opt, T& value) {
    if (opt != nullptr && opt->count() > 0) return;
    const auto it = cfg.find(key);
    if (it == cfg.end()) return;
    try {
        value = it->get<T>();
    } catch (const json::exception&) {
        throw ivsurf::ParseError("config file: bad value for '" + key + "'");
    }
}

json load_config_file(const std::string& path) {
    const std::string text = slurp(path);
    json cfg = json::parse(text, nullptr, false);
    if (cfg.is_discarded() || !cfg.is_object()) {
        throw ivsurf::ParseError("config file: not a JSON object: " + path);
    }
    return cfg;
}

// SSVI generator parameters from a config file's "ssvi" object; the library
// defaults otherwise.
ssvi::Params market_params_from_config(const json& cfg) {
    const auto it = cfg.find("ssvi");
    if (it == cfg.end()) return ssvi::default_market_params();
    if (!it->is_object()) {
        throw ivsurf::ParseError("config file: 'ssvi' must be an object");
    }
    ssvi::Params p = ssvi::default_market_params();
    try {
        if (it->contains("knot_tau")) p.knot_tau = it->at("knot_tau").get<std::vector<double>>();
        if (it->contains("knot_theta"))
            p.knot_theta = it->at("knot_theta").get<std::vector<double>>();
        if (it->contains("rho")) p.rho = it->at("rho").get<double>();
        if (it->contains("eta")) p.eta = it->at("eta").get<double>();
        if (it->contains("lambda")) p.lambda = it->at("lambda").get<double>();
    } catch (const json::exception&) {
        throw ivsurf::ParseError("config file: malformed 'ssvi' object");
    }
    p.validate();
    return p;
}

// --- simulate --------------------------------------------------------------------

struct SimulateOpts {
    int quotes = 600;
    double noise = 0.01;
    std::vector<int> maturities = {7, 30, 91, 182, 365, 730};
    std::string trade_date = "2020-06-15";
    double spot = 2000.0;
    double rate = 0.02;
    double spread = 0.01;
    std::string out = "day.csv";
    std::string truth_out; // default: <out stem>_truth.tsv
};

void run_simulate(const Global& g, const SimulateOpts& o, RunRecord& rec) {
    ssvi::MarketSpec market;
    market.trade_date = parse_date(o.trade_date);
    market.spot = o.spot;
    market.rate = o.rate;
    market.spread_frac = o.spread;

    const ssvi::Params params = market_params_from_config(g.config);
    const ssvi::SynthDay day =
        ssvi::synth_market(params, o.quotes, o.maturities, o.noise, g.seed, market);

    const fs::path quotes_path = g.resolve(o.out);
    if (quotes_path.has_parent_path()) fs::create_directories(quotes_path.parent_path());
    data::write_quotes_csv(quotes_path, day.quotes);
    record_output_file(rec, quotes_path);

    std::string truth_name = o.truth_out;
    if (truth_name.empty()) {
        fs::path t(o.out);
        t.replace_extension();
        truth_name = t.string() + "_truth.tsv";
    }
    std::ostringstream truth;
    truth << "m\ttau\tiv\n";
    char line[128];
    for (const auto& pt : day.truth.points) {
        std::snprintf(line, sizeof line, "%.12g\t%.12g\t%.12g\n", pt.m, pt.tau, pt.v);
        truth << line;
    }
    write_artifact(rec, g.resolve(truth_name), truth.str());

    rec.config = {{"quotes", o.quotes},
                  {"noise", o.noise},
                  {"maturities", o.maturities},
                  {"trade_date", o.trade_date},
                  {"spot", o.spot},
                  {"rate", o.rate},
                  {"spread", o.spread},
                  {"ssvi", {{"knot_tau", params.knot_tau},
                            {"knot_theta", params.knot_theta},
                            {"rho", params.rho},
                            {"eta", params.eta},
                            {"lambda", params.lambda}}}};
}

// --- fit -------------------------------------------------------------------------

struct FitOpts {
    std::string input;
    std::string arch = "multi";
    ModelDims dims{4, 0, 5}; // units == 0 -> architecture default (multi 8, else 32)
    losses::HyperParams hp;
    std::string grid_refresh = "once";
    bool incomplete_constraints = false;
    int log_every = 100;
    double split_fraction = 0.8;
    std::size_t min_quotes = 50;
    int days_parallel = 1;
    std::string model_out = "model_{date}.json";
    std::string trace_out = "trace_{date}.tsv";
};

std::string substitute_date(const std::string& pattern, const Date& date, bool must_vary) {
    const std::string token = "{date}";
    const std::size_t at = pattern.find(token);
    if (at == std::string::npos) {
        if (must_vary) {
            throw std::invalid_argument("output pattern '" + pattern +
                                        "' needs a {date} placeholder: input has several days");
        }
        return pattern;
    }
    std::string out = pattern;
    out.replace(at, token.size(), format_date(date));
    return out;
}

// One day's artifacts, produced in a worker and written by the main thread so
// manifest entries stay in date order.
struct DayArtifacts {
    Date date{};
    std::string model_json;
    std::string trace_tsv; // empty for the ssvi baseline (no optimizer trace)
};

void run_fit(const Global& g, const FitOpts& o, RunRecord& rec) {
    const fs::path input_path(o.input);
    record_input(rec, input_path);
    const data::LoadResult loaded = data::load_quotes(input_path);

    std::map<Date, std::vector<data::Quote>> days;
    for (const data::Quote& q : loaded.quotes) days[q.trade_date].push_back(q);
    if (days.empty()) {
        throw InsufficientData("fit: no usable quotes in " + o.input);
    }

    const bool is_ssvi = o.arch == "ssvi";
    train::TrainConfig config;
    if (!is_ssvi) {
        config.arch = arch_from_name(o.arch);
        config.dims = o.dims;
        if (config.dims.units == 0) {
            config.dims.units = config.arch == Arch::multi ? 8 : 32;
        }
        if (config.arch != Arch::multi) {
            config.dims.experts = 1;
            config.dims.gate_units = 0;
        }
    }
    config.hp = o.hp;
    if (o.incomplete_constraints) config.hp.drop_shape_penalties();
    config.seed = g.seed;
    config.grid_refresh = o.grid_refresh == "per-iteration" ? train::GridRefresh::per_iteration
                                                            : train::GridRefresh::once;
    config.log_every = o.log_every;
    config.split_fraction = o.split_fraction;
    config.min_quotes = o.min_quotes;

    // Fan the independent per-day fits across --days-parallel workers; file
    // writes and the manifest stay on this thread, in date order.
    std::vector<std::pair<Date, const std::vector<data::Quote>*>> jobs;
    for (const auto& [date, quotes] : days) jobs.emplace_back(date, &quotes);
    std::vector<DayArtifacts> results(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());

    const auto worker_body = [&](std::size_t j) {
        const auto& [date, quotes] = jobs[j];
        model_io::MetaMap meta = {{"source", o.input},
                                  {"trade_date", format_date(date)},
                                  {"seed", std::to_string(g.seed)},
                                  {"arch", o.arch}};
        DayArtifacts art;
        art.date = date;
        if (is_ssvi) {
            const data::FilterResult filtered = data::filter_quotes(*quotes);
            const data::PreparedQuotes prepared = data::prepare_points(filtered.kept);
            if (prepared.points.size() < o.min_quotes) {
                throw InsufficientData("fit: " + format_date(date) + " has " +
                                       std::to_string(prepared.points.size()) +
                                       " usable quotes, need " + std::to_string(o.min_quotes));
            }
            const ssvi::Params params = ssvi::fit(prepared.batch(), g.seed);
            art.model_json = model_io::to_json(params, meta);
        } else {
            meta["iterations"] = std::to_string(config.hp.iterations);
            const train::DayFitResult fit = train::fit_day(*quotes, config);
            art.model_json = model_io::to_json(*fit.fit.model, meta);
            art.trace_tsv = fit.fit.trace.to_tsv();
        }
        results[j] = std::move(art);
    };

    const int n_workers =
        std::clamp(o.days_parallel, 1, static_cast<int>(jobs.size()));
    if (n_workers <= 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) worker_body(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) {
                    try {
                        worker_body(j);
                    } catch (...) {
                        errors[j] = std::current_exception();
                    }
                }
            });
        }
        for (std::thread& t : pool) t.join();
        for (const std::exception_ptr& e : errors) {
            if (e) std::rethrow_exception(e); // first failing day, in date order
        }
    }

    const bool several = jobs.size() > 1;
    for (const DayArtifacts& art : results) {
        const fs::path model_path = g.resolve(substitute_date(o.model_out, art.date, several));
        write_artifact(rec, model_path, art.model_json);
        if (!art.trace_tsv.empty()) {
            const fs::path trace_path =
                g.resolve(substitute_date(o.trace_out, art.date, several));
            write_artifact(rec, trace_path, art.trace_tsv);
        }
    }

    rec.config = {{"arch", o.arch},
                  {"experts", config.dims.experts},
                  {"units", config.dims.units},
                  {"gate_units", config.dims.gate_units},
                  {"alpha", config.hp.msle_weight},
                  {"beta", config.hp.mspe_weight},
                  {"gamma", config.hp.calendar_weight},
                  {"delta", config.hp.butterfly_weight},
                  {"eta", config.hp.boundary_weight},
                  {"rho", config.hp.slope_weight},
                  {"omega", config.hp.ridge_weight},
                  {"slope_margin", config.hp.slope_margin},
                  {"lr", config.hp.learning_rate},
                  {"iters", config.hp.iterations},
                  {"synth_ratio", config.hp.synth_ratio},
                  {"incomplete_constraints", o.incomplete_constraints},
                  {"grid_refresh", o.grid_refresh},
                  {"log_every", o.log_every},
                  {"split_fraction", o.split_fraction},
                  {"min_quotes", o.min_quotes},
                  {"days_parallel", o.days_parallel},
                  {"days", jobs.size()}};
}

// --- predict ----------------------------------------------------------------------

struct PredictOpts {
    std::string model;
    std::string out = "surface.tsv";
    double m_lo = -1.5, m_hi = 1.5;
    double tau_lo = 0.02, tau_hi = 2.0;
    std::size_t n_m = 61, n_tau = 24;
};

void run_predict(const Global& g, const PredictOpts& o, RunRecord& rec) {
    const fs::path model_path(o.model);
    record_input(rec, model_path);
    const model_io::LoadedModel loaded = model_io::load_model(model_path);
    const std::vector<eval::GridRow> rows =
        eval::surface_grid(loaded.surface(), o.m_lo, o.m_hi, o.tau_lo, o.tau_hi, o.n_m, o.n_tau);
    write_artifact(rec, g.resolve(o.out), eval::grid_to_tsv(rows));
    rec.config = {{"model", o.model},      {"m_lo", o.m_lo},   {"m_hi", o.m_hi},
                  {"tau_lo", o.tau_lo},    {"tau_hi", o.tau_hi}, {"n_m", o.n_m},
                  {"n_tau", o.n_tau},      {"arch", loaded.arch}};
}

// --- evaluate ---------------------------------------------------------------------

struct EvaluateOpts {
    std::string model;
    std::string input;
    double split_fraction = 0.8;
    std::size_t audit_points = 2000;
    std::string out = "evaluation.json";
};

void run_evaluate(const Global& g, const EvaluateOpts& o, RunRecord& rec) {
    const fs::path model_path(o.model);
    const fs::path input_path(o.input);
    record_input(rec, model_path);
    record_input(rec, input_path);

    const model_io::LoadedModel loaded = model_io::load_model(model_path);
    const data::LoadResult quotes = data::load_quotes(input_path);
    const eval::EvalReport report =
        eval::evaluate(loaded.surface(), quotes.quotes, o.split_fraction, g.seed, o.audit_points);
    std::string text = report.to_json();
    if (text.empty() || text.back() != '\n') text += '\n';
    write_artifact(rec, g.resolve(o.out), text);

    rec.config = {{"model", o.model},
                  {"split_fraction", o.split_fraction},
                  {"audit_points", o.audit_points},
                  {"arch", loaded.arch}};
}

// --- check-arbitrage ----------------------------------------------------------------

struct CheckOpts {
    std::string model;
    std::size_t points = 2000;
    std::string out = "violations.json";
};

void run_check(const Global& g, const CheckOpts& o, RunRecord& rec) {
    const fs::path model_path(o.model);
    record_input(rec, model_path);
    const model_io::LoadedModel loaded = model_io::load_model(model_path);

    const std::vector<constraints::ConditionGrid> grids = {
        constraints::uniform_grid(constraints::Domain::core, o.points, g.seed),
        constraints::uniform_grid(constraints::Domain::wings, o.points,
                                  g.seed ^ 0x9E3779B97F4A7C15ULL),
    };
    const constraints::ViolationReport report = constraints::audit(loaded.surface(), grids);
    std::string text = constraints::to_json(report);
    if (text.empty() || text.back() != '\n') text += '\n';
    write_artifact(rec, g.resolve(o.out), text);

    rec.config = {{"model", o.model}, {"points", o.points}, {"arch", loaded.arch}};
}

// --- density -----------------------------------------------------------------------

struct DensityOpts {
    std::string model;
    double tau = 0.0;
    double m_lo = -1.5, m_hi = 1.0;
    std::size_t points = 801;
    std::string out = "density.tsv";
};

void run_density(const Global& g, const DensityOpts& o, RunRecord& rec) {
    const fs::path model_path(o.model);
    record_input(rec, model_path);
    const model_io::LoadedModel loaded = model_io::load_model(model_path);
    const std::vector<double> grid = eval::linspace(o.m_lo, o.m_hi, o.points);
    const eval::DensityResult res = eval::rn_density(loaded.surface(), o.tau, grid);
    write_artifact(rec, g.resolve(o.out), res.to_tsv());

    rec.config = {{"model", o.model}, {"tau", o.tau},       {"m_lo", o.m_lo},
                  {"m_hi", o.m_hi},   {"points", o.points}, {"integral", res.integral},
                  {"min_density", res.min_density}};
}

// --- wiring ------------------------------------------------------------------------

int run(int argc, char** argv) {
    CLI::App app{"arbitrage-constrained implied-volatility surface toolkit"};
    app.require_subcommand(1);

    Global g;
    app.add_option("--seed", g.seed, "random seed shared by every seeded stage")
        ->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "directory for artifacts and the run manifest")
        ->capture_default_str();
    app.add_option("--config", g.config_path,
                   "JSON file overriding defaults of flags not passed explicitly");

    SimulateOpts sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic quote day");
    c_sim->fallthrough();
    const CLI::Option* sim_quotes =
        c_sim->add_option("--quotes", sim.quotes, "number of quotes")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    const CLI::Option* sim_noise =
        c_sim->add_option("--noise", sim.noise, "lognormal vol noise (sd)")
            ->check(CLI::NonNegativeNumber)
            ->capture_default_str();
    c_sim->add_option("--maturities", sim.maturities, "expiries in calendar days")
        ->delimiter(',')
        ->capture_default_str();
    c_sim->add_option("--trade-date", sim.trade_date, "trade date (YYYY-MM-DD)")
        ->capture_default_str();
    c_sim->add_option("--spot", sim.spot, "underlying close")->capture_default_str();
    c_sim->add_option("--rate", sim.rate, "continuously compounded rate")->capture_default_str();
    c_sim->add_option("--spread", sim.spread, "bid/ask width relative to mid")
        ->capture_default_str();
    c_sim->add_option("--out", sim.out, "quote CSV path")->capture_default_str();
    c_sim->add_option("--truth", sim.truth_out, "ground-truth TSV path (default <out>_truth.tsv)");

    FitOpts fit;
    CLI::App* c_fit = app.add_subcommand("fit", "calibrate a model to a quote file");
    c_fit->fallthrough();
    c_fit->add_option("input", fit.input, "quote CSV")->required();
    const CLI::Option* fit_arch =
        c_fit->add_option("--arch", fit.arch, "model architecture")
            ->check(CLI::IsMember({"single", "multi", "vanilla", "ssvi"}))
            ->capture_default_str();
    const CLI::Option* fit_experts =
        c_fit->add_option("--I,--experts", fit.dims.experts, "experts (multi only)")
            ->capture_default_str();
    const CLI::Option* fit_units =
        c_fit->add_option("--J,--units", fit.dims.units,
                          "hidden units per expert (0 = architecture default)")
            ->capture_default_str();
    const CLI::Option* fit_gate =
        c_fit->add_option("--K,--gate-units", fit.dims.gate_units, "gate units (multi only)")
            ->capture_default_str();
    const CLI::Option* fit_alpha =
        c_fit->add_option("--alpha", fit.hp.msle_weight, "squared-log-error weight")
            ->capture_default_str();
    const CLI::Option* fit_beta =
        c_fit->add_option("--beta", fit.hp.mspe_weight, "squared-percentage-error weight")
            ->capture_default_str();
    const CLI::Option* fit_gamma =
        c_fit->add_option("--gamma", fit.hp.calendar_weight, "calendar penalty weight")
            ->capture_default_str();
    const CLI::Option* fit_delta =
        c_fit->add_option("--delta", fit.hp.butterfly_weight, "butterfly penalty weight")
            ->capture_default_str();
    const CLI::Option* fit_eta =
        c_fit->add_option("--eta", fit.hp.boundary_weight, "boundary penalty weight")
            ->capture_default_str();
    const CLI::Option* fit_rho =
        c_fit->add_option("--rho", fit.hp.slope_weight, "wing-slope penalty weight")
            ->capture_default_str();
    const CLI::Option* fit_omega =
        c_fit->add_option("--omega", fit.hp.ridge_weight, "ridge weight")->capture_default_str();
    const CLI::Option* fit_lr =
        c_fit->add_option("--lr", fit.hp.learning_rate, "Adam learning rate")
            ->capture_default_str();
    const CLI::Option* fit_iters =
        c_fit->add_option("--iters", fit.hp.iterations, "optimizer iterations")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    const CLI::Option* fit_synth =
        c_fit->add_option("--synth-ratio", fit.hp.synth_ratio,
                          "penalty grid points per data point")
            ->capture_default_str();
    c_fit->add_flag("--incomplete-constraints", fit.incomplete_constraints,
                    "zero every shape-penalty weight (ablation)");
    c_fit->add_option("--grid-refresh", fit.grid_refresh, "penalty grid sampling")
        ->check(CLI::IsMember({"once", "per-iteration"}))
        ->capture_default_str();
    c_fit->add_option("--log-every", fit.log_every, "trace row stride")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    const CLI::Option* fit_split =
        c_fit->add_option("--split-fraction", fit.split_fraction, "train share of each day")
            ->capture_default_str();
    const CLI::Option* fit_minq =
        c_fit->add_option("--min-quotes", fit.min_quotes, "minimum usable quotes per day")
            ->capture_default_str();
    c_fit->add_option("--days-parallel", fit.days_parallel, "fit this many days concurrently")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    c_fit->add_option("--model-out", fit.model_out, "model path pattern ({date} expands)")
        ->capture_default_str();
    c_fit->add_option("--trace-out", fit.trace_out, "trace path pattern ({date} expands)")
        ->capture_default_str();

    PredictOpts pred;
    CLI::App* c_pred = app.add_subcommand("predict", "evaluate a model on an (m, tau) grid");
    c_pred->fallthrough();
    c_pred->add_option("--model", pred.model, "model file")->required();
    c_pred->add_option("--out", pred.out, "grid TSV path")->capture_default_str();
    c_pred->add_option("--m-min", pred.m_lo, "grid moneyness lower edge")->capture_default_str();
    c_pred->add_option("--m-max", pred.m_hi, "grid moneyness upper edge")->capture_default_str();
    c_pred->add_option("--m-count", pred.n_m, "moneyness samples")->capture_default_str();
    c_pred->add_option("--tau-min", pred.tau_lo, "grid maturity lower edge")
        ->capture_default_str();
    c_pred->add_option("--tau-max", pred.tau_hi, "grid maturity upper edge")
        ->capture_default_str();
    c_pred->add_option("--tau-count", pred.n_tau, "maturity samples")->capture_default_str();

    EvaluateOpts ev;
    CLI::App* c_eval = app.add_subcommand("evaluate", "score a model against a quote history");
    c_eval->fallthrough();
    c_eval->add_option("--model", ev.model, "model file")->required();
    c_eval->add_option("input", ev.input, "quote CSV")->required();
    const CLI::Option* eval_split =
        c_eval->add_option("--split-fraction", ev.split_fraction, "train share of each day")
            ->capture_default_str();
    const CLI::Option* eval_audit =
        c_eval->add_option("--audit-points", ev.audit_points, "audit grid points per domain")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    c_eval->add_option("--out", ev.out, "report JSON path")->capture_default_str();

    CheckOpts chk;
    CLI::App* c_check =
        app.add_subcommand("check-arbitrage", "audit a model on fresh condition grids");
    c_check->fallthrough();
    c_check->add_option("--model", chk.model, "model file")->required();
    const CLI::Option* check_points =
        c_check->add_option("--points", chk.points, "grid points per domain")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    c_check->add_option("--out", chk.out, "report JSON path")->capture_default_str();

    DensityOpts den;
    CLI::App* c_den = app.add_subcommand("density", "extract the risk-neutral density");
    c_den->fallthrough();
    c_den->add_option("--model", den.model, "model file")->required();
    c_den->add_option("--tau", den.tau, "maturity of the density slice")->required();
    c_den->add_option("--m-min", den.m_lo, "grid lower edge")->capture_default_str();
    c_den->add_option("--m-max", den.m_hi, "grid upper edge")->capture_default_str();
    const CLI::Option* den_points =
        c_den->add_option("--points", den.points, "grid points")->capture_default_str();
    c_den->add_option("--out", den.out, "density TSV path")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (!g.config_path.empty()) {
        g.config = load_config_file(g.config_path);
    }

    const auto started = std::chrono::steady_clock::now();
    RunRecord rec;
    if (app.got_subcommand(c_sim)) {
        rec.command = "simulate";
        config_override(g.config, "quotes", sim_quotes, sim.quotes);
        config_override(g.config, "noise", sim_noise, sim.noise);
        if (sim.quotes <= 0) throw std::invalid_argument("simulate: --quotes must be positive");
        run_simulate(g, sim, rec);
    } else if (app.got_subcommand(c_fit)) {
        rec.command = "fit";
        config_override(g.config, "arch", fit_arch, fit.arch);
        config_override(g.config, "experts", fit_experts, fit.dims.experts);
        config_override(g.config, "units", fit_units, fit.dims.units);
        config_override(g.config, "gate-units", fit_gate, fit.dims.gate_units);
        config_override(g.config, "alpha", fit_alpha, fit.hp.msle_weight);
        config_override(g.config, "beta", fit_beta, fit.hp.mspe_weight);
        config_override(g.config, "gamma", fit_gamma, fit.hp.calendar_weight);
        config_override(g.config, "delta", fit_delta, fit.hp.butterfly_weight);
        config_override(g.config, "eta", fit_eta, fit.hp.boundary_weight);
        config_override(g.config, "rho", fit_rho, fit.hp.slope_weight);
        config_override(g.config, "omega", fit_omega, fit.hp.ridge_weight);
        config_override(g.config, "lr", fit_lr, fit.hp.learning_rate);
        config_override(g.config, "iters", fit_iters, fit.hp.iterations);
        config_override(g.config, "synth-ratio", fit_synth, fit.hp.synth_ratio);
        config_override(g.config, "split-fraction", fit_split, fit.split_fraction);
        config_override(g.config, "min-quotes", fit_minq, fit.min_quotes);
        if (fit.arch != "ssvi") arch_from_name(fit.arch); // validates config-supplied names
        if (fit.hp.iterations <= 0) {
            throw std::invalid_argument("fit: --iters must be positive");
        }
        run_fit(g, fit, rec);
    } else if (app.got_subcommand(c_pred)) {
        rec.command = "predict";
        run_predict(g, pred, rec);
    } else if (app.got_subcommand(c_eval)) {
        rec.command = "evaluate";
        config_override(g.config, "split-fraction", eval_split, ev.split_fraction);
        config_override(g.config, "audit-points", eval_audit, ev.audit_points);
        run_evaluate(g, ev, rec);
    } else if (app.got_subcommand(c_check)) {
        rec.command = "check-arbitrage";
        config_override(g.config, "points", check_points, chk.points);
        run_check(g, chk, rec);
    } else if (app.got_subcommand(c_den)) {
        rec.command = "density";
        config_override(g.config, "points", den_points, den.points);
        run_density(g, den, rec);
    }

    const double wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - started)
                               .count();
    if (!g.config_path.empty()) {
        record_input(rec, g.config_path);
    }
    write_manifest(g, rec, argc, argv, wall_ms);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ArbitrageViolation& ex) {
        std::fprintf(stderr, "numerical error: %s\n", ex.what());
        return 3;
    } catch (const ConvergenceError& ex) {
        std::fprintf(stderr, "numerical error: %s\n", ex.what());
        return 3;
    } catch (const DivergenceError& ex) {
        std::fprintf(stderr, "numerical error: %s\n", ex.what());
        return 3;
    } catch (const ivsurf::ParseError& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    } catch (const IoError& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    } catch (const InsufficientData& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    } catch (const std::domain_error& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    } catch (const std::invalid_argument& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 2;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "internal error: %s\n", ex.what());
        return 3;
    }
}
