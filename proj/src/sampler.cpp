#include "diffeo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "diffeo/errors.hpp"
#include "diffeo/io.hpp"

namespace diffeo {

using nlohmann::json;

std::vector<Vec2> uniform_grid(const SharedDomain2D& shared, int rx, int ry) {
    shared.validate();
    if (rx < 2 || ry < 2) fail(ErrorCode::InvalidInput, "grid resolution must be at least 2 per axis");
    std::vector<Vec2> pts;
    pts.reserve(static_cast<std::size_t>(rx) * static_cast<std::size_t>(ry));
    for (int j = 0; j < ry; ++j)
        for (int i = 0; i < rx; ++i)
            pts.emplace_back(shared.x_min + i * shared.width() / (rx - 1), shared.y_min + j * shared.height() / (ry - 1));
    return pts;
}

std::array<double, 3> barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    const double alpha = (-(p.x() - b.x()) * (c.y() - b.y()) + (p.y() - b.y()) * (c.x() - b.x())) /
                         (-(a.x() - b.x()) * (c.y() - b.y()) + (a.y() - b.y()) * (c.x() - b.x()));
    const double beta = (-(p.x() - c.x()) * (a.y() - c.y()) + (p.y() - c.y()) * (a.x() - c.x())) /
                        (-(b.x() - c.x()) * (a.y() - c.y()) + (b.y() - c.y()) * (a.x() - c.x()));
    return {alpha, beta, 1.0 - alpha - beta};
}

namespace {

constexpr double kInsideSlack = 1e-12;

std::array<double, 3> clip(std::array<double, 3> w) {
    double sum = 0.0;
    for (double& x : w) {
        x = std::max(x, 0.0);
        sum += x;
    }
    for (double& x : w) x /= sum;
    return w;
}

// Closest point of triangle (a, b, c) to q, as (distance, barycentric weights).
std::pair<double, std::array<double, 3>> closest_on_triangle(const Vec2& q, const Vec2* v) {
    double best = std::numeric_limits<double>::infinity();
    std::array<double, 3> weights{};
    for (int k = 0; k < 3; ++k) {
        const Vec2& a = v[k];
        const Vec2& b = v[(k + 1) % 3];
        const Vec2 ab = b - a;
        const double t = std::clamp((q - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        const double d = (a + t * ab - q).norm();
        if (d < best) {
            best = d;
            weights = {0.0, 0.0, 0.0};
            weights[static_cast<std::size_t>(k)] = 1.0 - t;
            weights[static_cast<std::size_t>((k + 1) % 3)] = t;
        }
    }
    return {best, weights};
}

}  // namespace

PointLocator::PointLocator(const MappedMesh& mapped) : mapped_(&mapped) {
    const auto& f = mapped.shared_coords;
    const auto& tris = mapped.mesh.triangles();
    Vec2 lo = f.front(), hi = f.front();
    for (const auto& p : f) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    tolerance_ = 1e-9 * (hi - lo).norm();

    double total = 0.0;
    for (const auto& e : mapped.mesh.edges())
        total += (f[static_cast<std::size_t>(e.hi)] - f[static_cast<std::size_t>(e.lo)]).norm();
    const double mean = total / static_cast<double>(std::max<std::size_t>(1, mapped.mesh.edges().size()));
    const Vec2 extent = (hi - lo).cwiseMax(1e-300);
    cell_ = std::max(mean, extent.maxCoeff() / 2048.0);
    origin_ = lo;
    nx_ = std::max(1, static_cast<int>(std::ceil(extent.x() / cell_)));
    ny_ = std::max(1, static_cast<int>(std::ceil(extent.y() / cell_)));

    const auto cell_range = [&](const Tri& t) {
        Vec2 a = f[static_cast<std::size_t>(t[0])], b = a;
        for (int v : t) {
            a = a.cwiseMin(f[static_cast<std::size_t>(v)]);
            b = b.cwiseMax(f[static_cast<std::size_t>(v)]);
        }
        const auto idx = [&](double x, double o, int n) {
            return std::clamp(static_cast<int>(std::floor((x - o) / cell_)), 0, n - 1);
        };
        return std::array<int, 4>{idx(a.x() - tolerance_, origin_.x(), nx_), idx(b.x() + tolerance_, origin_.x(), nx_),
                                  idx(a.y() - tolerance_, origin_.y(), ny_), idx(b.y() + tolerance_, origin_.y(), ny_)};
    };
    std::vector<int> counts(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_) + 1, 0);
    for (const auto& t : tris) {
        const auto r = cell_range(t);
        for (int j = r[2]; j <= r[3]; ++j)
            for (int i = r[0]; i <= r[1]; ++i) ++counts[static_cast<std::size_t>(j * nx_ + i) + 1];
    }
    offsets_.assign(counts.size(), 0);
    for (std::size_t c = 1; c < counts.size(); ++c) offsets_[c] = offsets_[c - 1] + counts[c];
    items_.resize(static_cast<std::size_t>(offsets_.back()));
    std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
    for (int ti = 0; ti < static_cast<int>(tris.size()); ++ti) {
        const auto r = cell_range(tris[static_cast<std::size_t>(ti)]);
        for (int j = r[2]; j <= r[3]; ++j)
            for (int i = r[0]; i <= r[1]; ++i) items_[static_cast<std::size_t>(fill[static_cast<std::size_t>(j * nx_ + i)]++)] = ti;
    }
}

std::optional<PointLocation> PointLocator::try_triangle(int t, const Vec2& q) const {
    const auto& tri = mapped_->mesh.triangles()[static_cast<std::size_t>(t)];
    const auto& f = mapped_->shared_coords;
    const auto w = barycentric(q, f[static_cast<std::size_t>(tri[0])], f[static_cast<std::size_t>(tri[1])],
                               f[static_cast<std::size_t>(tri[2])]);
    if (std::min({w[0], w[1], w[2]}) < -kInsideSlack) return std::nullopt;
    PointLocation loc;
    loc.tri = t;
    loc.weights = std::min({w[0], w[1], w[2]}) < 0.0 ? clip(w) : w;
    return loc;
}

PointLocation PointLocator::locate(const Vec2& q) const {
    const int i = std::clamp(static_cast<int>(std::floor((q.x() - origin_.x()) / cell_)), 0, nx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor((q.y() - origin_.y()) / cell_)), 0, ny_ - 1);
    const auto c = static_cast<std::size_t>(j * nx_ + i);
    for (int k = offsets_[c]; k < offsets_[c + 1]; ++k)
        if (auto loc = try_triangle(items_[static_cast<std::size_t>(k)], q)) return *loc;
    return locate_brute_force(q);
}

PointLocation PointLocator::locate_brute_force(const Vec2& q) const {
    const auto& tris = mapped_->mesh.triangles();
    const auto& f = mapped_->shared_coords;
    double best = std::numeric_limits<double>::infinity();
    PointLocation nearest;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
        if (auto loc = try_triangle(t, q)) return *loc;
        const Vec2 v[3] = {f[static_cast<std::size_t>(tris[static_cast<std::size_t>(t)][0])],
                           f[static_cast<std::size_t>(tris[static_cast<std::size_t>(t)][1])],
                           f[static_cast<std::size_t>(tris[static_cast<std::size_t>(t)][2])]};
        const auto [d, w] = closest_on_triangle(q, v);
        if (d < best) {
            best = d;
            nearest.tri = t;
            nearest.weights = w;
        }
    }
    if (best > tolerance_)
        fail(ErrorCode::OutsideMesh, "point (" + std::to_string(q.x()) + ", " + std::to_string(q.y()) +
                                         ") is " + std::to_string(best) + " away from the mapped mesh");
    nearest.snapped = true;
    return nearest;
}

std::vector<PointLocation> locate_points(const PointLocator& locator, std::span<const Vec2> shared_points) {
    std::vector<PointLocation> out;
    out.reserve(shared_points.size());
    for (const auto& q : shared_points) out.push_back(locator.locate(q));
    return out;
}

std::vector<Vec2> pull_back(const MappedMesh& mapped, std::span<const PointLocation> locations) {
    const auto& tris = mapped.mesh.triangles();
    const auto& x = mapped.mesh.vertices();
    std::vector<Vec2> out;
    out.reserve(locations.size());
    for (const auto& loc : locations) {
        const auto& t = tris[static_cast<std::size_t>(loc.tri)];
        out.push_back(loc.weights[0] * x[static_cast<std::size_t>(t[0])] + loc.weights[1] * x[static_cast<std::size_t>(t[1])] +
                      loc.weights[2] * x[static_cast<std::size_t>(t[2])]);
    }
    return out;
}

std::vector<double> sample_vertex_field(const TriMesh& mesh, std::span<const double> values,
                                        std::span<const PointLocation> locations) {
    if (values.size() != mesh.num_vertices()) fail(ErrorCode::ShapeMismatch, "one value per mesh vertex expected");
    std::vector<double> out;
    out.reserve(locations.size());
    for (const auto& loc : locations) {
        const auto& t = mesh.triangles()[static_cast<std::size_t>(loc.tri)];
        out.push_back(loc.weights[0] * values[static_cast<std::size_t>(t[0])] + loc.weights[1] * values[static_cast<std::size_t>(t[1])] +
                      loc.weights[2] * values[static_cast<std::size_t>(t[2])]);
    }
    return out;
}

std::vector<double> sample_function(std::span<const Vec2> physics_points,
                                    const std::function<double(const Vec2&)>& field) {
    std::vector<double> out;
    out.reserve(physics_points.size());
    for (const auto& p : physics_points) out.push_back(field(p));
    return out;
}

GridSample sample_grid(const MappedMesh& mapped, const SharedDomain2D& shared, int rx, int ry) {
    GridSample s;
    s.rx = rx;
    s.ry = ry;
    s.shared = shared;
    s.shared_points = uniform_grid(shared, rx, ry);
    const PointLocator locator(mapped);
    const auto locations = locate_points(locator, s.shared_points);
    s.physics_points = pull_back(mapped, locations);
    return s;
}

namespace {

std::vector<double> flatten(std::span<const Vec2> pts) {
    std::vector<double> out;
    out.reserve(pts.size() * 2);
    for (const auto& p : pts) {
        out.push_back(p.x());
        out.push_back(p.y());
    }
    return out;
}

std::vector<Vec2> unflatten(const std::vector<double>& v) {
    std::vector<Vec2> out(v.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[2 * i], v[2 * i + 1]};
    return out;
}

}  // namespace

std::vector<std::pair<std::string, std::uint32_t>> write_grid_sample(const std::filesystem::path& dir,
                                                                     const GridSample& s) {
    std::filesystem::create_directories(dir);
    std::vector<std::pair<std::string, std::vector<double>>> tensors;
    tensors.emplace_back("shared_points", flatten(s.shared_points));
    tensors.emplace_back("physics_points", flatten(s.physics_points));
    tensors.emplace_back("a", s.param_field);
    if (s.solution_field) tensors.emplace_back("u", *s.solution_field);

    json fields = json::object();
    std::vector<std::pair<std::string, std::uint32_t>> checksums;
    for (const auto& [name, values] : tensors) {
        const std::string file = s.id + "_" + name + ".f32";
        io::write_f32(dir / file, values);
        fields[name] = file;
        checksums.emplace_back(name, io::crc32_file(dir / file));
    }
    json manifest = {{"id", s.id},
                     {"resolution", {s.rx, s.ry}},
                     {"shared_bounds", {s.shared.x_min, s.shared.x_max, s.shared.y_min, s.shared.y_max}},
                     {"seed", s.seed},
                     {"layout", "little-endian float32; point index i + rx*j; 2-channel tensors interleaved"},
                     {"fields", fields}};
    io::write_text(dir / (s.id + ".json"), manifest.dump(2) + "\n");
    return checksums;
}

GridSample read_grid_sample(const std::filesystem::path& dir, const std::string& id) {
    const json manifest = json::parse(io::read_text(dir / (id + ".json")));
    GridSample s;
    s.id = manifest.at("id").get<std::string>();
    s.rx = manifest.at("resolution")[0].get<int>();
    s.ry = manifest.at("resolution")[1].get<int>();
    const auto& b = manifest.at("shared_bounds");
    s.shared = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    s.seed = manifest.at("seed").get<std::uint64_t>();
    const auto& fields = manifest.at("fields");
    const auto load = [&](const char* name) { return io::read_f32(dir / fields.at(name).get<std::string>()); };
    s.shared_points = unflatten(load("shared_points"));
    s.physics_points = unflatten(load("physics_points"));
    s.param_field = load("a");
    if (fields.contains("u")) s.solution_field = load("u");
    const std::size_t n = s.size();
    if (s.shared_points.size() != n || s.physics_points.size() != n || s.param_field.size() != n ||
        (s.solution_field && s.solution_field->size() != n))
        fail(ErrorCode::ShapeMismatch, "tensor sizes in sample " + id + " do not match its resolution");
    return s;
}

}  // namespace diffeo
