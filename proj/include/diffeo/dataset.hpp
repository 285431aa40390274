#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffeo/darcy.hpp"
#include "diffeo/harmonic_map.hpp"
#include "diffeo/sampler.hpp"

namespace diffeo {

enum class CoefficientRange { Text, Table };  // [0.2, 0.8] or [2, 9]

struct DatasetConfig {
    PolygonFamily family = PolygonFamily::Pentagon;
    int n = 200;
    int resolution = 128;
    double h = 0.15;
    std::uint64_t seed = 0;
    std::uint64_t first_index = 0;  // sample indices first_index .. first_index + n - 1
    double scale = 1.0;             // magnification of the polygon and of a(x)
    CoefficientRange coefficient_range = CoefficientRange::Text;
    double forcing = 1.0;           // constant F
    SharedDomain2D shared;
    HarmonicOptions harmonic;
    bool write_meshes = false;

    void validate() const;
    std::pair<double, double> c_range() const;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

std::string sample_id(std::uint64_t index);

struct SampleRecord {
    GridSample grid;
    MappedMesh mapped;
    PolygonSpec polygon;
    CoefficientSpec coefficients;
    BijectivityReport bijectivity;
    double harmonic_residual = 0.0;
    double darcy_residual = 0.0;
    std::vector<double> u_vertices;
};

/// One sample end to end: polygon, mesh, harmonic map, FEM solve, grid.
/// Seeds: derive_seed(master, "sample", index) with "mesh" and
/// "coefficients" sub-streams below it.
SampleRecord generate_sample(const DatasetConfig& config, std::uint64_t index);

/// Manifest entry describing a generated sample (no checksums).
nlohmann::json describe_sample(const SampleRecord& r);

/// Writes manifest.json, config.json and one GridSample per sample into
/// `out` (samples run in parallel, files are written in index order).
/// Returns the manifest.
nlohmann::json generate_dataset(const DatasetConfig& config, const std::filesystem::path& out);

struct Dataset {
    nlohmann::json manifest;
    std::vector<GridSample> samples;
};

Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace diffeo
