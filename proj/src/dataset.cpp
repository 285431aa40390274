#include "diffeo/dataset.hpp"

#include <cstdio>
#include <mutex>

#include "diffeo/errors.hpp"
#include "diffeo/io.hpp"
#include "diffeo/mesher.hpp"
#include "diffeo/parallel.hpp"
#include "diffeo/rng.hpp"

namespace diffeo {

using nlohmann::json;

void DatasetConfig::validate() const {
    if (n < 0) fail(ErrorCode::InvalidInput, "n must be non-negative");
    if (resolution < 2) fail(ErrorCode::InvalidInput, "resolution must be at least 2");
    if (!(h > 0)) fail(ErrorCode::InvalidInput, "mesh size h must be positive");
    if (!(scale > 0)) fail(ErrorCode::InvalidInput, "scale must be positive");
    shared.validate();
    if (!(harmonic.clamp_epsilon > 0)) fail(ErrorCode::InvalidInput, "clamp epsilon must be positive");
}

std::pair<double, double> DatasetConfig::c_range() const {
    return coefficient_range == CoefficientRange::Text ? std::pair{0.2, 0.8} : std::pair{2.0, 9.0};
}

void to_json(json& j, const DatasetConfig& c) {
    j = json{{"family", to_string(c.family)},
             {"n", c.n},
             {"resolution", c.resolution},
             {"h", c.h},
             {"seed", c.seed},
             {"first_index", c.first_index},
             {"scale", c.scale},
             {"coefficient_range", c.coefficient_range == CoefficientRange::Text ? "text" : "table"},
             {"c_min", c.c_range().first},
             {"c_max", c.c_range().second},
             {"forcing", c.forcing},
             {"coefficient", "a(x, y) = psi(x / scale), psi = c1 sin(x/10) - c2 x (x - 10) + 2"},
             {"shared", {c.shared.x_min, c.shared.x_max, c.shared.y_min, c.shared.y_max}},
             {"grid", "vertex-centred, point i + rx * j; 2R-1 nests R"},
             {"weights", c.harmonic.mode == WeightMode::Clamped ? "clamped" : "raw"},
             {"clamp_epsilon", c.harmonic.clamp_epsilon},
             {"uniform_fallback", c.harmonic.uniform_fallback},
             {"write_meshes", c.write_meshes}};
}

void from_json(const json& j, DatasetConfig& c) {
    const auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    if (j.contains("family")) c.family = parse_family(j.at("family").get<std::string>());
    get("n", c.n);
    get("resolution", c.resolution);
    get("h", c.h);
    get("seed", c.seed);
    get("first_index", c.first_index);
    get("scale", c.scale);
    if (j.contains("coefficient_range")) {
        const auto r = j.at("coefficient_range").get<std::string>();
        if (r == "text") c.coefficient_range = CoefficientRange::Text;
        else if (r == "table") c.coefficient_range = CoefficientRange::Table;
        else fail(ErrorCode::InvalidInput, "coefficient_range must be 'text' or 'table'");
    }
    get("forcing", c.forcing);
    if (j.contains("shared")) {
        const auto& s = j.at("shared");
        c.shared = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>(), s[3].get<double>()};
    }
    if (j.contains("weights")) {
        const auto w = j.at("weights").get<std::string>();
        if (w == "clamped") c.harmonic.mode = WeightMode::Clamped;
        else if (w == "raw") c.harmonic.mode = WeightMode::Raw;
        else fail(ErrorCode::InvalidInput, "weights must be 'clamped' or 'raw'");
    }
    get("clamp_epsilon", c.harmonic.clamp_epsilon);
    get("uniform_fallback", c.harmonic.uniform_fallback);
    get("write_meshes", c.write_meshes);
}

std::string sample_id(std::uint64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05llu", static_cast<unsigned long long>(index));
    return buf;
}

SampleRecord generate_sample(const DatasetConfig& config, std::uint64_t index) {
    const std::uint64_t seed = derive_seed(config.seed, "sample", index);
    SampleRecord r;
    r.polygon = sample_polygon(config.family, derive_seed(seed, "mesh"), config.scale);

    Rng crng(derive_seed(seed, "coefficients"));
    const auto [lo, hi] = config.c_range();
    r.coefficients.c1 = crng.uniform(lo, hi);
    r.coefficients.c2 = crng.uniform(lo, hi);
    check_ellipticity(r.coefficients, 0.0, 10.0);

    const TriMesh mesh = mesh_polygon(insert_corner_anchors(r.polygon.vertices, config.shared), config.h);
    const EdgeWeightTable weights =
        preprocess_weights(cotangent_weights(mesh), config.harmonic.mode, config.harmonic.clamp_epsilon);
    r.mapped = solve_harmonic(mesh, weights, config.shared, config.harmonic);
    r.bijectivity = validate_bijectivity(r.mapped);
    if (!r.bijectivity.ok)
        fail(ErrorCode::FoldOver, std::to_string(r.bijectivity.fold_count) + " folded triangles");
    r.harmonic_residual = harmonic_residual(r.mapped.mesh, weights, r.mapped.shared_coords, config.shared.diameter());

    const CoefficientSpec coef = r.coefficients;
    const double scale = config.scale;
    const ScalarField a = [coef, scale](const Vec2& p) { return coefficient_field(coef, p.x() / scale); };
    const double f = config.forcing;
    const DarcySolution sol = solve_darcy(r.mapped.mesh, a, [f](const Vec2&) { return f; });
    r.u_vertices = sol.u;
    r.darcy_residual = sol.relative_residual;

    GridSample& g = r.grid;
    g.id = sample_id(index);
    g.rx = g.ry = config.resolution;
    g.shared = config.shared;
    g.seed = seed;
    g.shared_points = uniform_grid(config.shared, g.rx, g.ry);
    const PointLocator locator(r.mapped);
    const auto locations = locate_points(locator, g.shared_points);
    g.physics_points = pull_back(r.mapped, locations);
    g.param_field = sample_function(g.physics_points, a);
    g.solution_field = sample_vertex_field(r.mapped.mesh, r.u_vertices, locations);
    return r;
}

json describe_sample(const SampleRecord& r) {
    json vertices = json::array();
    for (const auto& v : r.polygon.vertices) vertices.push_back({v.x(), v.y()});
    return json{{"id", r.grid.id},
                {"seed", r.grid.seed},
                {"family", to_string(r.polygon.family)},
                {"params", r.polygon.params},
                {"vertices", vertices},
                {"c1", r.coefficients.c1},
                {"c2", r.coefficients.c2},
                {"mesh", {{"vertices", r.mapped.mesh.vertices().size()}, {"triangles", r.mapped.mesh.triangles().size()}}},
                {"bijectivity",
                 {{"ok", r.bijectivity.ok},
                  {"fold_count", r.bijectivity.fold_count},
                  {"min_mapped_area", r.bijectivity.min_mapped_area}}},
                {"harmonic_residual", r.harmonic_residual},
                {"darcy_relative_residual", r.darcy_residual}};
}

json generate_dataset(const DatasetConfig& config, const std::filesystem::path& out) {
    config.validate();
    std::filesystem::create_directories(out / "samples");
    if (config.write_meshes) std::filesystem::create_directories(out / "meshes");

    const auto n = static_cast<std::size_t>(config.n);
    std::vector<json> entries(n);
    parallel_for(n, [&](std::size_t k) {
        const std::uint64_t index = config.first_index + k;
        SampleRecord r;
        try {
            r = generate_sample(config, index);
        } catch (const Error& e) {
            throw Error(e.code(), "sample " + std::to_string(index) + ": " + e.what());
        }
        json entry = describe_sample(r);
        json checksums = json::object();
        for (const auto& [field, crc] : write_grid_sample(out / "samples", r.grid)) checksums[field] = crc;
        if (config.write_meshes) {
            const auto base = out / "meshes" / r.grid.id;
            save_mapped_mesh(base.string() + ".off", base.string() + ".coords", r.mapped);
        }
        entry["checksums"] = checksums;
        entries[k] = std::move(entry);
    });

    json manifest = {{"format", "diffeo-dataset v1"}, {"config", config}, {"samples", entries}};
    io::write_text(out / "config.json", json(config).dump(2) + "\n");
    io::write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset d;
    d.manifest = json::parse(io::read_text(dir / "manifest.json"));
    for (const auto& entry : d.manifest.at("samples")) {
        const auto id = entry.at("id").get<std::string>();
        d.samples.push_back(read_grid_sample(dir / "samples", id));
        for (const auto& [field, crc] : entry.at("checksums").items()) {
            const auto path = dir / "samples" / (id + "_" + field + ".f32");
            if (io::crc32_file(path) != crc.get<std::uint32_t>())
                fail(ErrorCode::Io, "checksum mismatch for " + path.string());
        }
    }
    return d;
}

}  // namespace diffeo
