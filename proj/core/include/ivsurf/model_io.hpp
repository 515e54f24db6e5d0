#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "ivsurf/models.hpp"
#include "ivsurf/ssvi.hpp"
#include "ivsurf/surface.hpp"

// JSON persistence for fitted surfaces.  One format covers the three network
// architectures and the SSVI baseline (arch tag "ssvi"), so downstream
// commands can consume any fitted model through a single loader.  Writing is
// canonical — sorted keys, two-space indent, shortest round-trip numbers —
// which makes identical models produce byte-identical files.

namespace ivsurf::model_io {

// Free-form provenance strings stored verbatim in the model file
// (seed, source data path, hyperparameters, ...).
using MetaMap = std::map<std::string, std::string>;

std::string to_json(const Model& model, const MetaMap& training_meta = {});
std::string to_json(const ssvi::Params& params, const MetaMap& training_meta = {});

// A deserialized model: exactly one of `net` / `ssvi_surface` is set.
struct LoadedModel {
    std::string arch; // "single", "multi", "vanilla" or "ssvi"
    std::unique_ptr<Model> net;
    std::unique_ptr<ssvi::SsviSurface> ssvi_surface;
    MetaMap training_meta;

    const Surface& surface() const;
};

// Parses a model file's text.  Any structural problem — bad JSON, missing or
// ill-typed fields, wrong array lengths, parameter-invariant violations —
// throws ParseError naming the offending field.
LoadedModel from_json(const std::string& text);

// File variants; throw IoError when the path cannot be written or read.
void save_model(const std::filesystem::path& path, const Model& model,
                const MetaMap& training_meta = {});
void save_model(const std::filesystem::path& path, const ssvi::Params& params,
                const MetaMap& training_meta = {});
LoadedModel load_model(const std::filesystem::path& path);

} // namespace ivsurf::model_io
