#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffeo/cli.hpp"
#include "diffeo/darcy.hpp"
#include "diffeo/dataset.hpp"
#include "diffeo/dds.hpp"
#include "diffeo/errors.hpp"
#include "diffeo/fno.hpp"
#include "diffeo/harmonic_map.hpp"
#include "diffeo/mesher.hpp"
#include "diffeo/volparam.hpp"

namespace py = pybind11;
using namespace diffeo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<Vec2> to_points(const Array& a) {
    if (a.ndim() != 2 || a.shape(1) != 2) throw std::invalid_argument("expected an (n, 2) array of points");
    std::vector<Vec2> out(static_cast<std::size_t>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = Vec2(r(i, 0), r(i, 1));
    return out;
}

Array from_points(const std::vector<Vec2>& pts) {
    Array a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
    auto w = a.mutable_unchecked<2>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        w(static_cast<py::ssize_t>(i), 0) = pts[i].x();
        w(static_cast<py::ssize_t>(i), 1) = pts[i].y();
    }
    return a;
}

Array from_values(const std::vector<double>& v) {
    Array a(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

IndexArray from_triangles(const std::vector<Tri>& tris) {
    IndexArray a({static_cast<py::ssize_t>(tris.size()), py::ssize_t{3}});
    auto w = a.mutable_unchecked<2>();
    for (std::size_t t = 0; t < tris.size(); ++t)
        for (int k = 0; k < 3; ++k) w(static_cast<py::ssize_t>(t), k) = tris[t][static_cast<std::size_t>(k)];
    return a;
}

TriMesh to_mesh(const Array& vertices, const IndexArray& triangles) {
    if (triangles.ndim() != 2 || triangles.shape(1) != 3) throw std::invalid_argument("expected an (m, 3) index array");
    std::vector<Tri> tris(static_cast<std::size_t>(triangles.shape(0)));
    auto r = triangles.unchecked<2>();
    for (py::ssize_t t = 0; t < triangles.shape(0); ++t)
        tris[static_cast<std::size_t>(t)] = {r(t, 0), r(t, 1), r(t, 2)};
    return build_mesh(to_points(vertices), std::move(tris));
}

// Sample grid as (ry, rx) arrays, the row index running along y.
py::dict grid_dict(const GridSample& s) {
    const auto shape2 = std::vector<py::ssize_t>{s.ry, s.rx};
    const auto shape3 = std::vector<py::ssize_t>{s.ry, s.rx, 2};
    py::dict d;
    d["id"] = s.id;
    d["seed"] = s.seed;
    d["shared_points"] = from_points(s.shared_points).reshape(shape3);
    d["physics_points"] = from_points(s.physics_points).reshape(shape3);
    d["param_field"] = from_values(s.param_field).reshape(shape2);
    if (s.solution_field) d["solution_field"] = from_values(*s.solution_field).reshape(shape2);
    return d;
}

GeometryImage to_image(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("expected an (M, N) or (M, N, C) array");
    GeometryImage g;
    g.rows = static_cast<int>(a.shape(0));
    g.cols = static_cast<int>(a.shape(1));
    g.channels = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    g.data.assign(a.data(), a.data() + a.size());
    return g;
}

nlohmann::json to_json(const py::handle& obj) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of diffeo_op";

    py::register_exception<Error>(m, "DiffeoError", PyExc_RuntimeError);

    m.def(
        "sample_polygon",
        [](const std::string& family, std::uint64_t seed, double scale) {
            const PolygonSpec p = sample_polygon(parse_family(family), seed, scale);
            return py::make_tuple(from_points(p.vertices), p.params);
        },
        py::arg("family"), py::arg("seed"), py::arg("scale") = 1.0,
        "Random simple CCW polygon of the family; returns (vertices, params).");

    m.def(
        "mesh_polygon",
        [](const Array& polygon, double h, bool corner_anchors) {
            std::vector<Vec2> outline = to_points(polygon);
            if (corner_anchors) outline = insert_corner_anchors(outline, SharedDomain2D{});
            const TriMesh mesh = mesh_polygon(outline, h);
            return py::make_tuple(from_points(mesh.vertices()), from_triangles(mesh.triangles()));
        },
        py::arg("polygon"), py::arg("h"), py::arg("corner_anchors") = true,
        "Triangulates a CCW polygon; returns (vertices, triangles).");

    m.def(
        "harmonic_map",
        [](const Array& vertices, const IndexArray& triangles, const std::string& weights) {
            const TriMesh mesh = to_mesh(vertices, triangles);
            HarmonicOptions opts;
            if (weights == "raw") opts.mode = WeightMode::Raw;
            else if (weights != "clamped") throw std::invalid_argument("weights must be 'clamped' or 'raw'");
            const auto w = preprocess_weights(cotangent_weights(mesh), opts.mode, opts.clamp_epsilon);
            const MappedMesh mapped = solve_harmonic(mesh, w, SharedDomain2D{}, opts);
            const auto report = validate_bijectivity(mapped);
            py::dict d;
            d["shared_coords"] = from_points(mapped.shared_coords);
            d["fold_count"] = report.fold_count;
            d["min_mapped_area"] = report.min_mapped_area;
            d["residual"] = harmonic_residual(mesh, w, mapped.shared_coords, SharedDomain2D{}.diameter());
            return d;
        },
        py::arg("vertices"), py::arg("triangles"), py::arg("weights") = "clamped",
        "Harmonic map of a disk-topology mesh onto the unit square.");

    m.def(
        "solve_darcy",
        [](const Array& vertices, const IndexArray& triangles, double c1, double c2, double forcing) {
            const TriMesh mesh = to_mesh(vertices, triangles);
            const CoefficientSpec spec{c1, c2};
            const auto sol = solve_darcy(
                mesh, [&](const Vec2& p) { return coefficient_field(spec, p.x()); },
                [&](const Vec2&) { return forcing; });
            return py::make_tuple(from_values(sol.u), sol.relative_residual);
        },
        py::arg("vertices"), py::arg("triangles"), py::arg("c1"), py::arg("c2"), py::arg("forcing") = 1.0,
        "P1 solve of -div(a grad u) = F, u = 0 on the boundary; returns (u, relative residual).");

    m.def(
        "generate_sample",
        [](const py::dict& config, std::uint64_t index) {
            const DatasetConfig c = to_json(config).get<DatasetConfig>();
            c.validate();
            const SampleRecord r = generate_sample(c, index);
            py::dict d = grid_dict(r.grid);
            d["polygon"] = from_points(r.polygon.vertices);
            d["c1"] = r.coefficients.c1;
            d["c2"] = r.coefficients.c2;
            d["harmonic_residual"] = r.harmonic_residual;
            d["darcy_residual"] = r.darcy_residual;
            return d;
        },
        py::arg("config") = py::dict(), py::arg("index") = 0,
        "One labelled grid sample; config uses the gen settings (family, resolution, h, seed, scale, ...).");

    m.def(
        "load_dataset",
        [](const std::string& dir) {
            const Dataset ds = load_dataset(dir);
            py::list out;
            for (const auto& s : ds.samples) out.append(grid_dict(s));
            return out;
        },
        py::arg("dir"), "Samples of a generated dataset directory.");

    m.def(
        "predict",
        [](const std::string& checkpoint, const std::string& dataset, std::size_t index) {
            const fno::Checkpoint ckpt = fno::load_checkpoint(checkpoint);
            const Dataset ds = load_dataset(dataset);
            if (index >= ds.samples.size()) throw py::index_error("sample index out of range");
            const GridSample& s = ds.samples[index];
            return from_values(fno::predict(ckpt, s)).reshape(std::vector<py::ssize_t>{s.ry, s.rx});
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("index") = 0,
        "Model prediction on one sample of a dataset, shaped (ry, rx).");

    m.def(
        "ncc",
        [](const Array& a, const Array& b, bool per_channel) {
            return ncc(to_image(a), to_image(b), NccOptions{per_channel});
        },
        py::arg("a"), py::arg("b"), py::arg("per_channel_average") = false,
        "Normalized cross-correlation of two equally shaped images.");

    m.def(
        "dds",
        [](const Array& candidate, const std::vector<Array>& training, bool per_channel) {
            std::vector<GeometryImage> imgs;
            for (const auto& t : training) imgs.push_back(to_image(t));
            return dds(to_image(candidate), imgs, NccOptions{per_channel});
        },
        py::arg("candidate"), py::arg("training"), py::arg("per_channel_average") = false,
        "Mean NCC of the candidate image against each training image.");

    m.def(
        "certify_pocket_part",
        [](int pockets, double depth, double side_wave, std::size_t samples, std::uint64_t seed) {
            const VolparamReport r = certify_volume_map(synthetic_pocket_part(pockets, depth, side_wave), samples, seed);
            py::dict d;
            d["samples"] = r.samples;
            d["min_det"] = r.min_det;
            d["max_det"] = r.max_det;
            d["max_fd_rel_error"] = r.max_fd_rel_error;
            d["max_roundtrip_error"] = r.max_roundtrip_error;
            return d;
        },
        py::arg("pockets") = 2, py::arg("depth") = 24.0, py::arg("side_wave") = 0.0, py::arg("samples") = 100000,
        py::arg("seed") = 0, "Certifies the volume map of a synthetic pocket part.");

    m.def(
        "volume_parameterize",
        [](const Array& points, int pockets, double depth, double side_wave, bool inverse) {
            if (points.ndim() != 2 || points.shape(1) != 3) throw std::invalid_argument("expected an (n, 3) array");
            const PartSurfaces part = synthetic_pocket_part(pockets, depth, side_wave);
            Array out({points.shape(0), py::ssize_t{3}});
            auto r = points.unchecked<2>();
            auto w = out.mutable_unchecked<2>();
            for (py::ssize_t i = 0; i < points.shape(0); ++i) {
                const Vec3 p(r(i, 0), r(i, 1), r(i, 2));
                const Vec3 q = inverse ? inverse_parameterize(part, p) : volume_parameterize(part, p);
                for (int k = 0; k < 3; ++k) w(i, k) = q[k];
            }
            return out;
        },
        py::arg("points"), py::arg("pockets") = 2, py::arg("depth") = 24.0, py::arg("side_wave") = 0.0,
        py::arg("inverse") = false, "Maps points of a synthetic pocket part into its box, or back.");

    m.def(
        "run_command",
        [](const std::string& name, const py::dict& config) {
            const nlohmann::json c = to_json(config);
            nlohmann::json summary;
            {
                py::gil_scoped_release release;
                if (name == "gen") summary = cli::cmd_gen(c);
                else if (name == "train") summary = cli::cmd_train(c);
                else if (name == "eval") summary = cli::cmd_eval(c);
                else if (name == "dds") summary = cli::cmd_dds(c);
                else if (name == "volparam-check") summary = cli::cmd_volparam(c);
                else throw std::invalid_argument("unknown command '" + name + "'");
            }
            return from_json(summary);
        },
        py::arg("name"), py::arg("config"),
        "Runs a diffeo-op subcommand with a config dict and returns its summary.");
}
