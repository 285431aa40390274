#include "diffeo/darcy.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "diffeo/errors.hpp"
#include "diffeo/rng.hpp"

namespace diffeo {

const char* to_string(PolygonFamily family) {
    return family == PolygonFamily::Pentagon ? "pentagon" : "hexagon";
}

PolygonFamily parse_family(const std::string& name) {
    if (name == "pentagon") return PolygonFamily::Pentagon;
    if (name == "hexagon") return PolygonFamily::Hexagon;
    fail(ErrorCode::InvalidInput, "unknown polygon family '" + name + "'");
}

PolygonSpec polygon_from_params(PolygonFamily family, std::vector<double> params, double scale) {
    const std::size_t expected = family == PolygonFamily::Pentagon ? 5 : 6;
    if (params.size() != expected)
        fail(ErrorCode::InvalidInput, std::string(to_string(family)) + " needs " + std::to_string(expected) + " parameters");
    const double x1 = params[0], y1 = params[1], x2 = params[2], y2 = params[3], x3 = params[4];
    PolygonSpec spec{family, std::move(params), {}};
    if (family == PolygonFamily::Pentagon) {
        spec.vertices = {{0, 0}, {10, 0}, {x2, y2}, {x3, 10}, {x1, y1}};
    } else {
        const double x4 = spec.params[5];
        spec.vertices = {{0, 0}, {10, 0}, {x2, y2}, {x4, 10}, {x3, 10}, {x1, y1}};
    }
    for (auto& v : spec.vertices) v *= scale;
    return spec;
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
    const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
    const auto on = [](const Vec2& a, const Vec2& b, const Vec2& p, double d) {
        return d == 0 && std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
               std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
    };
    return on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4);
}

}  // namespace

bool is_simple_polygon(const std::vector<Vec2>& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) {
                // Adjacent edges may only share their common vertex.
                const std::size_t shared = j == i + 1 ? j : i;
                const Vec2& a = poly[(shared + n - 1) % n];
                const Vec2& m = poly[shared];
                const Vec2& b = poly[(shared + 1) % n];
                if (cross(a, m, b) == 0 && (a - m).dot(b - m) > 0) return false;  // folds back
                continue;
            }
            if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
        }
    }
    return true;
}

PolygonSpec sample_polygon(PolygonFamily family, std::uint64_t seed, double scale) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<double> p;
        p.push_back(rng.uniform(0.0, 2.0));   // x1
        p.push_back(rng.uniform(4.0, 6.0));   // y1
        p.push_back(rng.uniform(8.0, 10.0));  // x2
        p.push_back(rng.uniform(4.0, 6.0));   // y2
        if (family == PolygonFamily::Pentagon) {
            p.push_back(rng.uniform(3.0, 7.0));  // x3
        } else {
            p.push_back(rng.uniform(2.0, 4.0));  // x3
            p.push_back(rng.uniform(6.0, 8.0));  // x4
        }
        auto spec = polygon_from_params(family, std::move(p), scale);
        if (is_simple_polygon(spec.vertices) && polygon_area(spec.vertices) > 0) return spec;
    }
    fail(ErrorCode::ExhaustedResampling, "100 polygon draws were not simple (seed " + std::to_string(seed) + ")");
}

double coefficient_field(const CoefficientSpec& spec, double x) {
    return spec.c1 * std::sin(x / 10.0) - spec.c2 * x * (x - 10.0) + 2.0;
}

void check_ellipticity(const CoefficientSpec& spec, double x0, double x1) {
    constexpr int kSamples = 2001;
    double lo = std::numeric_limits<double>::infinity();
    double at = x0;
    for (int i = 0; i < kSamples; ++i) {
        const double x = x0 + (x1 - x0) * i / (kSamples - 1);
        const double a = coefficient_field(spec, x);
        if (a < lo) {
            lo = a;
            at = x;
        }
    }
    if (!(lo > 1e-6))
        fail(ErrorCode::NonElliptic, "coefficient reaches " + std::to_string(lo) + " at x = " + std::to_string(at));
}

DarcySolution solve_darcy(const TriMesh& mesh, const ScalarField& a, const ScalarField& forcing) {
    const auto& x = mesh.vertices();
    std::vector<int> unknown(mesh.num_vertices(), -1);
    std::vector<int> vertex_of;
    for (int v = 0; v < static_cast<int>(mesh.num_vertices()); ++v) {
        if (mesh.is_boundary_vertex(v)) continue;
        unknown[static_cast<std::size_t>(v)] = static_cast<int>(vertex_of.size());
        vertex_of.push_back(v);
    }
    const int m = static_cast<int>(vertex_of.size());
    DarcySolution sol;
    sol.u.assign(mesh.num_vertices(), 0.0);
    if (m == 0) return sol;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.num_triangles() * 9);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    for (const auto& t : mesh.triangles()) {
        const Vec2& p0 = x[static_cast<std::size_t>(t[0])];
        const Vec2& p1 = x[static_cast<std::size_t>(t[1])];
        const Vec2& p2 = x[static_cast<std::size_t>(t[2])];
        const double area = signed_area(p0, p1, p2);
        const Vec2 c = (p0 + p1 + p2) / 3.0;
        const double ac = a(c);
        if (!(ac > 0)) fail(ErrorCode::NonElliptic, "coefficient is " + std::to_string(ac) + " at a triangle centroid");
        const double fc = forcing(c);
        const Vec2* p[3] = {&p0, &p1, &p2};
        double gb[3], gc[3];
        for (int k = 0; k < 3; ++k) {
            const Vec2& pj = *p[(k + 1) % 3];
            const Vec2& pk = *p[(k + 2) % 3];
            gb[k] = pj.y() - pk.y();
            gc[k] = pk.x() - pj.x();
        }
        for (int r = 0; r < 3; ++r) {
            const int row = unknown[static_cast<std::size_t>(t[r])];
            if (row < 0) continue;
            f[row] += fc * area / 3.0;
            for (int s = 0; s < 3; ++s) {
                const int col = unknown[static_cast<std::size_t>(t[s])];
                if (col < 0) continue;
                triplets.emplace_back(row, col, ac * (gb[r] * gb[s] + gc[r] * gc[s]) / (4.0 * area));
            }
        }
    }
    Eigen::SparseMatrix<double> k(m, m);
    k.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(k);
    if (llt.info() != Eigen::Success) fail(ErrorCode::SolverFailure, "reduced stiffness matrix is not positive definite");
    const Eigen::VectorXd u = llt.solve(f);
    if (!u.allFinite()) fail(ErrorCode::SolverFailure, "stiffness solve produced non-finite values");

    const double fnorm = f.norm();
    sol.relative_residual = fnorm > 0 ? (k * u - f).norm() / fnorm : (k * u).norm();
    sol.energy = u.dot(k * u);
    sol.load_work = u.dot(f);
    for (int r = 0; r < m; ++r) sol.u[static_cast<std::size_t>(vertex_of[static_cast<std::size_t>(r)])] = u[r];
    return sol;
}

double relative_l2_error(const TriMesh& mesh, const std::vector<double>& u, const ScalarField& exact) {
    // Degree-5 rule: (weight, barycentric a, b, b) and permutations.
    static constexpr double w0 = 0.225;
    static constexpr double w1 = 0.132394152788506, a1 = 0.059715871789770, b1 = 0.470142064105115;
    static constexpr double w2 = 0.125939180544827, a2 = 0.797426985353087, b2 = 0.101286507323456;
    static const std::array<std::array<double, 4>, 7> rule = {{{w0, 1.0 / 3, 1.0 / 3, 1.0 / 3},
                                                              {w1, a1, b1, b1},
                                                              {w1, b1, a1, b1},
                                                              {w1, b1, b1, a1},
                                                              {w2, a2, b2, b2},
                                                              {w2, b2, a2, b2},
                                                              {w2, b2, b2, a2}}};
    const auto& x = mesh.vertices();
    double err = 0.0, ref = 0.0;
    for (const auto& t : mesh.triangles()) {
        const double area = signed_area(mesh, static_cast<int>(&t - mesh.triangles().data()));
        for (const auto& q : rule) {
            const Vec2 p = q[1] * x[static_cast<std::size_t>(t[0])] + q[2] * x[static_cast<std::size_t>(t[1])] +
                           q[3] * x[static_cast<std::size_t>(t[2])];
            const double uh = q[1] * u[static_cast<std::size_t>(t[0])] + q[2] * u[static_cast<std::size_t>(t[1])] +
                              q[3] * u[static_cast<std::size_t>(t[2])];
            const double ue = exact(p);
            err += q[0] * area * (uh - ue) * (uh - ue);
            ref += q[0] * area * ue * ue;
        }
    }
    return std::sqrt(err / ref);
}

}  // namespace diffeo
