#include "diffeo/harmonic_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "diffeo/errors.hpp"

namespace diffeo {

void SharedDomain2D::validate() const {
    if (!(x_max > x_min) || !(y_max > y_min))
        fail(ErrorCode::InvalidInput, "shared domain must have positive extents");
}

double SharedDomain2D::diameter() const { return std::hypot(width(), height()); }

Vec2 SharedDomain2D::point_at(double s) const {
    const double w = width(), h = height();
    s = std::fmod(s, perimeter());
    if (s < 0) s += perimeter();
    if (s <= w) return {x_min + s, y_min};
    s -= w;
    if (s <= h) return {x_max, y_min + s};
    s -= h;
    if (s <= w) return {x_max - s, y_max};
    s -= w;
    return {x_min, y_max - std::min(s, h)};
}

std::vector<Vec2> parameterize_boundary(std::span<const Vec2> loop, const SharedDomain2D& shared) {
    shared.validate();
    if (loop.size() < 3) fail(ErrorCode::InvalidInput, "boundary loop needs at least 3 vertices");
    std::vector<double> cumulative(loop.size(), 0.0);
    for (std::size_t i = 1; i < loop.size(); ++i)
        cumulative[i] = cumulative[i - 1] + (loop[i] - loop[i - 1]).norm();
    const double total = cumulative.back() + (loop.front() - loop.back()).norm();
    if (!(total >= 1e-14)) fail(ErrorCode::ZeroPerimeter, "boundary loop length is " + std::to_string(total));

    const double perimeter = shared.perimeter();
    const double corners[] = {shared.width(), shared.width() + shared.height(), 2 * shared.width() + shared.height()};
    std::vector<Vec2> out;
    out.reserve(loop.size());
    for (double c : cumulative) {
        double s = c / total * perimeter;
        // Rounding-level misses of a corner would leave it uncovered.
        for (double corner : corners)
            if (std::abs(s - corner) <= 1e-12 * perimeter) s = corner;
        out.push_back(shared.point_at(s));
    }
    return out;
}

std::vector<Vec2> insert_corner_anchors(std::span<const Vec2> polygon, const SharedDomain2D& shared) {
    shared.validate();
    const std::size_t n = polygon.size();
    if (n < 3) fail(ErrorCode::InvalidInput, "polygon needs at least 3 vertices");
    std::size_t start = 0;
    for (std::size_t i = 1; i < n; ++i) {
        const Vec2& p = polygon[i];
        const Vec2& q = polygon[start];
        if (p.y() < q.y() || (p.y() == q.y() && p.x() < q.x())) start = i;
    }
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += (polygon[(i + 1) % n] - polygon[i]).norm();
    if (!(total >= 1e-14)) fail(ErrorCode::ZeroPerimeter, "polygon length is " + std::to_string(total));

    const double perimeter = shared.perimeter();
    std::vector<double> targets = {shared.width() / perimeter, (shared.width() + shared.height()) / perimeter,
                                   (2 * shared.width() + shared.height()) / perimeter};
    std::vector<Vec2> out;
    out.reserve(n + 3);
    std::size_t next = 0;
    double walked = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const Vec2& a = polygon[(start + k) % n];
        const Vec2& b = polygon[(start + k + 1) % n];
        const double len = (b - a).norm();
        out.push_back(a);
        while (next < targets.size()) {
            const double d = targets[next] * total - walked;
            if (d > len + 1e-12 * total) break;
            // Anchors that coincide with a vertex reuse it.
            if (d > 1e-12 * total && d < len - 1e-12 * total) out.push_back(a + (d / len) * (b - a));
            ++next;
        }
        walked += len;
    }
    return out;
}

EdgeWeightTable preprocess_weights(const EdgeWeightTable& weights, WeightMode mode, double epsilon) {
    EdgeWeightTable out = weights;
    if (mode == WeightMode::Clamped)
        for (double& w : out.weights) w = std::max(w, epsilon);
    return out;
}

namespace {

std::vector<Vec2> solve_dirichlet(const TriMesh& mesh, const EdgeWeightTable& weights,
                                  std::span<const Vec2> boundary_positions) {
    const int n = static_cast<int>(mesh.num_vertices());
    std::vector<Vec2> f(mesh.num_vertices(), Vec2::Zero());
    const auto& loop = mesh.boundary_loop();
    for (std::size_t k = 0; k < loop.size(); ++k) f[static_cast<std::size_t>(loop[k])] = boundary_positions[k];

    std::vector<int> unknown(mesh.num_vertices(), -1);
    std::vector<int> vertex_of;
    for (int v = 0; v < n; ++v) {
        if (mesh.is_boundary_vertex(v)) continue;
        unknown[static_cast<std::size_t>(v)] = static_cast<int>(vertex_of.size());
        vertex_of.push_back(v);
    }
    const int m = static_cast<int>(vertex_of.size());
    if (m == 0) return f;

    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 2);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
    const auto& edges = mesh.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const double w = weights[e];
        const int ends[2] = {edges[e].lo, edges[e].hi};
        for (int s = 0; s < 2; ++s) {
            const int i = ends[s], j = ends[1 - s];
            const int row = unknown[static_cast<std::size_t>(i)];
            if (row < 0) continue;
            diag[row] += w;
            const int col = unknown[static_cast<std::size_t>(j)];
            if (col >= 0) {
                triplets.emplace_back(row, col, -w);
            } else {
                rhs.row(row) += w * f[static_cast<std::size_t>(j)].transpose();
            }
        }
    }
    for (int r = 0; r < m; ++r) triplets.emplace_back(r, r, diag[r]);
    Eigen::SparseMatrix<double> a(m, m);
    a.setFromTriplets(triplets.begin(), triplets.end());

    Eigen::MatrixXd x;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
    int bad_row = -1;
    if (ldlt.info() == Eigen::Success) {
        const Eigen::VectorXd d = ldlt.vectorD();
        for (int k = 0; k < m; ++k) {
            if (!(d[k] > 0.0) || !std::isfinite(d[k])) {
                bad_row = ldlt.permutationPinv().indices()[k];
                break;
            }
        }
        if (bad_row < 0) x = ldlt.solve(rhs);
    }
    if (bad_row >= 0 || ldlt.info() != Eigen::Success) {
        // Indefinite (raw negative weights): fall back to pivoted LU.
        a.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success) {
            const int v = bad_row >= 0 ? vertex_of[static_cast<std::size_t>(bad_row)] : -1;
            fail(ErrorCode::SingularSystem, "Laplacian factorization failed at row " + std::to_string(bad_row) +
                                                " (vertex " + std::to_string(v) + "): " + lu.lastErrorMessage());
        }
        x = lu.solve(rhs);
    }
    if (!x.allFinite()) fail(ErrorCode::SingularSystem, "Laplacian solve produced non-finite values");
    for (int r = 0; r < m; ++r) f[static_cast<std::size_t>(vertex_of[static_cast<std::size_t>(r)])] = x.row(r).transpose();
    return f;
}

}  // namespace

MappedMesh solve_harmonic(const TriMesh& mesh, const EdgeWeightTable& weights, const SharedDomain2D& shared,
                          const HarmonicOptions& options) {
    shared.validate();
    if (weights.size() != mesh.edges().size())
        fail(ErrorCode::InvalidInput, "weight table does not match mesh edges");
    std::vector<Vec2> loop;
    loop.reserve(mesh.boundary_loop().size());
    for (int v : mesh.boundary_loop()) loop.push_back(mesh.vertices()[static_cast<std::size_t>(v)]);
    const auto b = parameterize_boundary(loop, shared);

    MappedMesh mapped{mesh, solve_dirichlet(mesh, weights, b)};
    auto report = validate_bijectivity(mapped);
    if (report.ok) return mapped;
    if (options.uniform_fallback) {
        EdgeWeightTable uniform{std::vector<double>(mesh.edges().size(), 1.0)};
        mapped.shared_coords = solve_dirichlet(mesh, uniform, b);
        report = validate_bijectivity(mapped);
        if (report.ok) return mapped;
    }
    fail(ErrorCode::FoldOver, std::to_string(report.fold_count) + " mapped triangles have non-positive area (min " +
                                  std::to_string(report.min_mapped_area) + ")");
}

MappedMesh harmonic_map(const TriMesh& mesh, const SharedDomain2D& shared, const HarmonicOptions& options) {
    const auto weights = preprocess_weights(cotangent_weights(mesh), options.mode, options.clamp_epsilon);
    return solve_harmonic(mesh, weights, shared, options);
}

BijectivityReport validate_bijectivity(const MappedMesh& mapped) {
    BijectivityReport report;
    report.min_mapped_area = std::numeric_limits<double>::infinity();
    const auto& f = mapped.shared_coords;
    for (const auto& t : mapped.mesh.triangles()) {
        const double area = signed_area(f[static_cast<std::size_t>(t[0])], f[static_cast<std::size_t>(t[1])],
                                        f[static_cast<std::size_t>(t[2])]);
        report.min_mapped_area = std::min(report.min_mapped_area, area);
        if (!(area > 0.0)) ++report.fold_count;
    }
    report.ok = report.fold_count == 0;
    return report;
}

double harmonic_residual(const TriMesh& mesh, const EdgeWeightTable& weights, std::span<const Vec2> coords,
                         double diameter) {
    std::vector<Vec2> acc(mesh.num_vertices(), Vec2::Zero());
    const auto& edges = mesh.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const Vec2 d = coords[static_cast<std::size_t>(edges[e].hi)] - coords[static_cast<std::size_t>(edges[e].lo)];
        acc[static_cast<std::size_t>(edges[e].lo)] += weights[e] * d;
        acc[static_cast<std::size_t>(edges[e].hi)] -= weights[e] * d;
    }
    double worst = 0.0;
    for (int v = 0; v < static_cast<int>(mesh.num_vertices()); ++v)
        if (!mesh.is_boundary_vertex(v)) worst = std::max(worst, acc[static_cast<std::size_t>(v)].cwiseAbs().maxCoeff());
    return worst / diameter;
}

void write_shared_coords(std::ostream& os, std::span<const Vec2> coords) {
    os << "SHAREDCOORDS v1 " << coords.size() << '\n' << std::setprecision(17);
    for (const auto& p : coords) os << p.x() << ' ' << p.y() << '\n';
}

std::vector<Vec2> read_shared_coords(std::istream& is) {
    std::string tag, version;
    std::size_t n = 0;
    if (!(is >> tag >> version >> n) || tag != "SHAREDCOORDS" || version != "v1")
        fail(ErrorCode::Io, "bad SHAREDCOORDS header");
    std::vector<Vec2> coords(n);
    for (auto& p : coords)
        if (!(is >> p.x() >> p.y())) fail(ErrorCode::Io, "truncated SHAREDCOORDS file");
    return coords;
}

void save_mapped_mesh(const std::filesystem::path& off_path, const std::filesystem::path& coords_path,
                      const MappedMesh& mapped) {
    write_off(off_path, mapped.mesh);
    std::ofstream os(coords_path);
    if (!os) fail(ErrorCode::Io, "cannot write " + coords_path.string());
    write_shared_coords(os, mapped.shared_coords);
}

MappedMesh load_mapped_mesh(const std::filesystem::path& off_path, const std::filesystem::path& coords_path) {
    MappedMesh mapped{read_off(off_path), {}};
    std::ifstream is(coords_path);
    if (!is) fail(ErrorCode::Io, "cannot open " + coords_path.string());
    mapped.shared_coords = read_shared_coords(is);
    if (mapped.shared_coords.size() != mapped.mesh.num_vertices())
        fail(ErrorCode::Io, "shared coordinate count does not match mesh");
    return mapped;
}

}  // namespace diffeo
