#include <doctest.h>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivsurf/errors.hpp"
#include "ivsurf/model_io.hpp"
#include "ivsurf/models.hpp"
#include "ivsurf/rng.hpp"
#include "ivsurf/ssvi.hpp"

using namespace ivsurf;
using model_io::LoadedModel;
using model_io::MetaMap;

namespace {

std::unique_ptr<Model> perturbed_model(Arch arch, ModelDims dims, std::uint64_t seed) {
    std::unique_ptr<Model> model = init_model(arch, dims, seed);
    Rng rng(seed ^ 0xD15EA5E);
    std::vector<double> theta = model->flat_params();
    for (double& t : theta) {
        t += rng.uniform(-0.4, 0.4);
    }
    model->set_flat_params(theta);
    return model;
}

// Parses, mutates and re-serializes a model file for the error-path tests.
std::string mutate(const std::string& text, const char* pointer, nlohmann::json value) {
    nlohmann::json j = nlohmann::json::parse(text);
    j[nlohmann::json::json_pointer(pointer)] = std::move(value);
    return j.dump();
}

} // namespace

TEST_CASE("network models roundtrip bitwise through json") {
    for (const Arch arch : {Arch::single, Arch::multi, Arch::vanilla}) {
        const std::string name(arch_name(arch));
        CAPTURE(name);
        const ModelDims dims = arch == Arch::multi ? ModelDims{3, 4, 2} : ModelDims{1, 6, 0};
        const std::unique_ptr<Model> model = perturbed_model(arch, dims, 21);

        const std::string text = model_io::to_json(*model);
        const LoadedModel loaded = model_io::from_json(text);

        CHECK(loaded.arch == name);
        REQUIRE(loaded.net != nullptr);
        CHECK(loaded.ssvi_surface == nullptr);
        CHECK(loaded.net->arch() == arch);
        CHECK(loaded.net->smile_eps() == model->smile_eps());
        CHECK(loaded.net->flat_params() == model->flat_params()); // bit-exact

        // The adapter view evaluates through the deserialized network.
        CHECK(loaded.surface().value(0.1, 0.7) == model->value(0.1, 0.7));

        // Canonical writing: serialize -> parse -> serialize is a fixed point.
        CHECK(model_io::to_json(*loaded.net) == text);
    }
}

TEST_CASE("training metadata rides along verbatim") {
    const std::unique_ptr<Model> model = init_model(Arch::single, {1, 3, 0}, 2);
    const MetaMap meta = {{"seed", "7"}, {"source", "quotes_2020.csv"}, {"iterations", "20000"}};
    const LoadedModel loaded = model_io::from_json(model_io::to_json(*model, meta));
    CHECK(loaded.training_meta == meta);
}

TEST_CASE("ssvi parameters roundtrip through the same format") {
    const ssvi::Params params = ssvi::default_market_params();
    const std::string text = model_io::to_json(params, {{"fit", "baseline"}});
    const LoadedModel loaded = model_io::from_json(text);

    CHECK(loaded.arch == "ssvi");
    CHECK(loaded.net == nullptr);
    REQUIRE(loaded.ssvi_surface != nullptr);
    CHECK(loaded.training_meta.at("fit") == "baseline");

    const ssvi::Params& got = loaded.ssvi_surface->params();
    CHECK(got.knot_tau == params.knot_tau);
    CHECK(got.knot_theta == params.knot_theta);
    CHECK(got.rho == params.rho);
    CHECK(got.eta == params.eta);
    CHECK(got.lambda == params.lambda);
    CHECK(loaded.surface().value(-0.2, 0.5) ==
          doctest::Approx(ssvi::iv(params, -0.2, 0.5)).epsilon(1e-15));

    CHECK(model_io::to_json(loaded.ssvi_surface->params(), {{"fit", "baseline"}}) == text);
}

TEST_CASE("model files carry the format envelope") {
    const std::unique_ptr<Model> model = init_model(Arch::multi, {2, 2, 2}, 5);
    const std::string text = model_io::to_json(*model);
    CHECK(text.back() == '\n');

    const nlohmann::json j = nlohmann::json::parse(text);
    CHECK(j["format"] == "ivsurf-model");
    CHECK(j["version"] == 1);
    CHECK(j["arch"] == "multi");
    CHECK(j.contains("params"));
    CHECK(j["params"].contains("experts"));
    CHECK(j["params"].contains("gate"));
    CHECK(j["dims"]["experts"] == 2);
    CHECK(j["dims"]["gate_units"] == 2);
    CHECK(j["eps_smile"] == 0.01);
}

TEST_CASE("structural problems raise parse errors") {
    const std::unique_ptr<Model> model = perturbed_model(Arch::single, {1, 3, 0}, 9);
    const std::string good = model_io::to_json(*model);
    CHECK_NOTHROW(model_io::from_json(good));

    CHECK_THROWS_AS(model_io::from_json("this is not json"), ParseError);
    CHECK_THROWS_AS(model_io::from_json("[1, 2, 3]"), ParseError);
    CHECK_THROWS_AS(model_io::from_json(mutate(good, "/format", "other-format")), ParseError);
    CHECK_THROWS_AS(model_io::from_json(mutate(good, "/version", 99)), ParseError);
    CHECK_THROWS_AS(model_io::from_json(mutate(good, "/arch", "resnet")), ParseError);
    CHECK_THROWS_AS(model_io::from_json(mutate(good, "/params/w_m", "oops")), ParseError);
    // Wrong array length: w_m must match the declared unit count.
    CHECK_THROWS_AS(model_io::from_json(mutate(good, "/params/w_m",
                                               nlohmann::json::array({1.0, 2.0}))),
                    ParseError);

    nlohmann::json missing = nlohmann::json::parse(good);
    missing["params"].erase("b_out");
    CHECK_THROWS_AS(model_io::from_json(missing.dump()), ParseError);

    // Parameter-invariant violations surface as ParseError too.
    const std::string ssvi_good = model_io::to_json(ssvi::default_market_params());
    CHECK_NOTHROW(model_io::from_json(ssvi_good));
    CHECK_THROWS_AS(model_io::from_json(mutate(ssvi_good, "/params/eta", 5.0)), ParseError);
    CHECK_THROWS_AS(model_io::from_json(mutate(ssvi_good, "/params/rho", 1.5)), ParseError);
    CHECK_THROWS_AS(
        model_io::from_json(mutate(ssvi_good, "/params/knot_theta",
                                   nlohmann::json::array({0.01, 0.02}))),
        ParseError);

    // The error message names the offending field.
    try {
        model_io::from_json(mutate(good, "/params/w_m", "oops"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("w_m") != std::string::npos);
    }
}

TEST_CASE("negative smile offset is rejected on load") {
    const std::unique_ptr<Model> model = init_model(Arch::single, {1, 3, 0}, 9);
    const std::string good = model_io::to_json(*model);
    CHECK_THROWS_AS(model_io::from_json(mutate(good, "/eps_smile", -0.5)), ParseError);
}

TEST_CASE("file save and load") {
    const std::unique_ptr<Model> model = perturbed_model(Arch::vanilla, {1, 5, 0}, 13);
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "ivsurf_test_model.json";

    model_io::save_model(path, *model, {{"seed", "13"}});
    const LoadedModel loaded = model_io::load_model(path);
    std::filesystem::remove(path);

    CHECK(loaded.arch == "vanilla");
    REQUIRE(loaded.net != nullptr);
    CHECK(loaded.net->flat_params() == model->flat_params());
    CHECK(loaded.training_meta.at("seed") == "13");

    CHECK_THROWS_AS(model_io::save_model("/no/such/dir/model.json", *model), IoError);
    CHECK_THROWS_AS(model_io::load_model("/no/such/dir/model.json"), IoError);

    const ssvi::Params params = ssvi::default_market_params();
    const std::filesystem::path spath =
        std::filesystem::temp_directory_path() / "ivsurf_test_ssvi.json";
    model_io::save_model(spath, params);
    const LoadedModel sloaded = model_io::load_model(spath);
    std::filesystem::remove(spath);
    CHECK(sloaded.arch == "ssvi");
    REQUIRE(sloaded.ssvi_surface != nullptr);
    CHECK(sloaded.ssvi_surface->params().eta == params.eta);
}
