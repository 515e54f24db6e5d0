#include "ivsurf/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ivsurf/errors.hpp"

namespace ivsurf::model_io {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "ivsurf-model";
constexpr int kFormatVersion = 1;

json params_to_json(const SingleParams& p) {
    return {
        {"w_m", p.w_m},   {"b_m", p.b_m},     {"w_tau", p.w_tau},
        {"b_tau", p.b_tau}, {"w_out", p.w_out}, {"b_out", p.b_out},
    };
}

json params_to_json(const GateParams& p) {
    // w_mix is stored as K rows of I entries (row k: weights from gate unit k
    // into every expert logit), matching its flat k-major layout.
    const std::size_t k_units = p.w_m.size();
    const std::size_t experts = p.b_mix.size();
    json mix = json::array();
    for (std::size_t k = 0; k < k_units; ++k) {
        json row = json::array();
        for (std::size_t i = 0; i < experts; ++i) {
            row.push_back(p.w_mix[k * experts + i]);
        }
        mix.push_back(std::move(row));
    }
    return {
        {"w_m", p.w_m}, {"w_tau", p.w_tau}, {"b", p.b}, {"w_mix", std::move(mix)},
        {"b_mix", p.b_mix},
    };
}

json params_to_json(const VanillaParams& p) {
    return {
        {"w_m", p.w_m}, {"w_tau", p.w_tau}, {"b", p.b}, {"w_out", p.w_out}, {"b_out", p.b_out},
    };
}

json envelope(const std::string& arch, json params, const MetaMap& meta) {
    json j;
    j["format"] = kFormatTag;
    j["version"] = kFormatVersion;
    j["arch"] = arch;
    j["params"] = std::move(params);
    j["training_meta"] = meta;
    return j;
}

// --- strict field access -----------------------------------------------------

const json& require(const json& j, const char* key, const char* where) {
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ParseError(std::string("model file: missing field '") + key + "' in " + where);
    }
    return *it;
}

double require_number(const json& j, const char* key, const char* where) {
    const json& field = require(j, key, where);
    if (!field.is_number()) {
        throw ParseError(std::string("model file: field '") + key + "' in " + where +
                         " must be a number");
    }
    return field.get<double>();
}

int require_int(const json& j, const char* key, const char* where) {
    const json& field = require(j, key, where);
    if (!field.is_number_integer()) {
        throw ParseError(std::string("model file: field '") + key + "' in " + where +
                         " must be an integer");
    }
    return field.get<int>();
}

std::string require_string(const json& j, const char* key, const char* where) {
    const json& field = require(j, key, where);
    if (!field.is_string()) {
        throw ParseError(std::string("model file: field '") + key + "' in " + where +
                         " must be a string");
    }
    return field.get<std::string>();
}

std::vector<double> require_vector(const json& j, const char* key, const char* where,
                                   std::size_t expected) {
    const json& field = require(j, key, where);
    if (!field.is_array()) {
        throw ParseError(std::string("model file: field '") + key + "' in " + where +
                         " must be an array");
    }
    if (field.size() != expected) {
        throw ParseError(std::string("model file: field '") + key + "' in " + where + " has " +
                         std::to_string(field.size()) + " entries, expected " +
                         std::to_string(expected));
    }
    std::vector<double> out;
    out.reserve(field.size());
    for (const json& x : field) {
        if (!x.is_number()) {
            throw ParseError(std::string("model file: field '") + key + "' in " + where +
                             " must contain only numbers");
        }
        out.push_back(x.get<double>());
    }
    return out;
}

SingleParams parse_single_params(const json& j, int units, const char* where) {
    const auto n = static_cast<std::size_t>(units);
    SingleParams p;
    p.w_m = require_vector(j, "w_m", where, n);
    p.b_m = require_vector(j, "b_m", where, n);
    p.w_tau = require_vector(j, "w_tau", where, n);
    p.b_tau = require_vector(j, "b_tau", where, n);
    p.w_out = require_vector(j, "w_out", where, n);
    p.b_out = require_number(j, "b_out", where);
    return p;
}

MetaMap parse_meta(const json& j) {
    MetaMap meta;
    const auto it = j.find("training_meta");
    if (it == j.end()) {
        return meta;
    }
    if (!it->is_object()) {
        throw ParseError("model file: 'training_meta' must be an object");
    }
    for (const auto& [key, value] : it->items()) {
        if (!value.is_string()) {
            throw ParseError("model file: training_meta entry '" + key + "' must be a string");
        }
        meta[key] = value.get<std::string>();
    }
    return meta;
}

} // namespace

std::string to_json(const Model& model, const MetaMap& training_meta) {
    const ModelDims dims = model.dims();
    json params;
    switch (model.arch()) {
    case Arch::single:
        params = params_to_json(static_cast<const SingleModel&>(model).params());
        break;
    case Arch::multi: {
        const MultiParams mp = static_cast<const MultiModel&>(model).params();
        json experts = json::array();
        for (const SingleParams& e : mp.experts) {
            experts.push_back(params_to_json(e));
        }
        params = {{"experts", std::move(experts)}, {"gate", params_to_json(mp.gate)}};
        break;
    }
    case Arch::vanilla:
        params = params_to_json(static_cast<const VanillaModel&>(model).params());
        break;
    }
    json j = envelope(std::string(arch_name(model.arch())), std::move(params), training_meta);
    j["eps_smile"] = model.smile_eps();
    j["dims"] = {
        {"experts", dims.experts}, {"units", dims.units}, {"gate_units", dims.gate_units}};
    return j.dump(2) + "\n";
}

std::string to_json(const ssvi::Params& params, const MetaMap& training_meta) {
    params.validate();
    json p = {
        {"knot_tau", params.knot_tau},
        {"knot_theta", params.knot_theta},
        {"rho", params.rho},
        {"eta", params.eta},
        {"lambda", params.lambda},
    };
    return envelope("ssvi", std::move(p), training_meta).dump(2) + "\n";
}

const Surface& LoadedModel::surface() const {
    if (net) {
        return *net;
    }
    if (ssvi_surface) {
        return *ssvi_surface;
    }
    throw std::logic_error("LoadedModel holds no surface");
}

LoadedModel from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ParseError("model file: top level must be a JSON object");
    }
    if (require_string(j, "format", "top level") != kFormatTag) {
        throw ParseError("model file: unrecognized 'format' tag");
    }
    if (require_int(j, "version", "top level") != kFormatVersion) {
        throw ParseError("model file: unsupported 'version'");
    }

    LoadedModel loaded;
    loaded.arch = require_string(j, "arch", "top level");
    loaded.training_meta = parse_meta(j);
    const json& params = require(j, "params", "top level");
    if (!params.is_object()) {
        throw ParseError("model file: 'params' must be an object");
    }

    try {
        if (loaded.arch == "ssvi") {
            ssvi::Params p;
            const json& kt = require(params, "knot_tau", "params");
            if (!kt.is_array()) {
                throw ParseError("model file: field 'knot_tau' in params must be an array");
            }
            p.knot_tau = require_vector(params, "knot_tau", "params", kt.size());
            p.knot_theta = require_vector(params, "knot_theta", "params", kt.size());
            p.rho = require_number(params, "rho", "params");
            p.eta = require_number(params, "eta", "params");
            p.lambda = require_number(params, "lambda", "params");
            loaded.ssvi_surface = std::make_unique<ssvi::SsviSurface>(std::move(p));
            return loaded;
        }

        const Arch arch = arch_from_name(loaded.arch);
        const double eps = require_number(j, "eps_smile", "top level");
        if (!std::isfinite(eps) || eps <= 0.0) {
            throw ParseError("model file: 'eps_smile' must be positive");
        }
        const json& dims = require(j, "dims", "top level");
        if (!dims.is_object()) {
            throw ParseError("model file: 'dims' must be an object");
        }
        const int experts = require_int(dims, "experts", "dims");
        const int units = require_int(dims, "units", "dims");
        const int gate_units = require_int(dims, "gate_units", "dims");
        if (units < 1 || experts < (arch == Arch::multi ? 1 : 0) ||
            (arch == Arch::multi && gate_units < 1)) {
            throw ParseError("model file: 'dims' out of range for arch '" + loaded.arch + "'");
        }

        switch (arch) {
        case Arch::single:
            loaded.net =
                std::make_unique<SingleModel>(parse_single_params(params, units, "params"), eps);
            break;
        case Arch::multi: {
            MultiParams mp;
            const json& expert_arr = require(params, "experts", "params");
            if (!expert_arr.is_array() || expert_arr.size() != static_cast<std::size_t>(experts)) {
                throw ParseError("model file: 'experts' must be an array of dims.experts entries");
            }
            for (const json& e : expert_arr) {
                if (!e.is_object()) {
                    throw ParseError("model file: each expert must be an object");
                }
                mp.experts.push_back(parse_single_params(e, units, "expert"));
            }
            const json& gate = require(params, "gate", "params");
            if (!gate.is_object()) {
                throw ParseError("model file: 'gate' must be an object");
            }
            const auto k_units = static_cast<std::size_t>(gate_units);
            mp.gate.w_m = require_vector(gate, "w_m", "gate", k_units);
            mp.gate.w_tau = require_vector(gate, "w_tau", "gate", k_units);
            mp.gate.b = require_vector(gate, "b", "gate", k_units);
            mp.gate.b_mix = require_vector(gate, "b_mix", "gate",
                                           static_cast<std::size_t>(experts));
            const json& mix = require(gate, "w_mix", "gate");
            if (!mix.is_array() || mix.size() != k_units) {
                throw ParseError("model file: 'w_mix' must have dims.gate_units rows");
            }
            mp.gate.w_mix.reserve(k_units * static_cast<std::size_t>(experts));
            for (const json& row : mix) {
                if (!row.is_array() || row.size() != static_cast<std::size_t>(experts)) {
                    throw ParseError("model file: each 'w_mix' row needs dims.experts entries");
                }
                for (const json& x : row) {
                    if (!x.is_number()) {
                        throw ParseError("model file: 'w_mix' must contain only numbers");
                    }
                    mp.gate.w_mix.push_back(x.get<double>());
                }
            }
            loaded.net = std::make_unique<MultiModel>(std::move(mp), eps);
            break;
        }
        case Arch::vanilla: {
            const auto n = static_cast<std::size_t>(units);
            VanillaParams vp;
            vp.w_m = require_vector(params, "w_m", "params", n);
            vp.w_tau = require_vector(params, "w_tau", "params", n);
            vp.b = require_vector(params, "b", "params", n);
            vp.w_out = require_vector(params, "w_out", "params", n);
            vp.b_out = require_number(params, "b_out", "params");
            loaded.net = std::make_unique<VanillaModel>(std::move(vp), eps);
            break;
        }
        }
    } catch (const std::domain_error& e) {
        throw ParseError(std::string("model file: invalid parameters: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("model file: invalid parameters: ") + e.what());
    }
    return loaded;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out.good()) {
        throw IoError("failed while writing '" + path.string() + "'");
    }
}

} // namespace

void save_model(const std::filesystem::path& path, const Model& model,
                const MetaMap& training_meta) {
    write_text(path, to_json(model, training_meta));
}

void save_model(const std::filesystem::path& path, const ssvi::Params& params,
                const MetaMap& training_meta) {
    write_text(path, to_json(params, training_meta));
}

LoadedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw IoError("failed while reading '" + path.string() + "'");
    }
    return from_json(buf.str());
}

} // namespace ivsurf::model_io
