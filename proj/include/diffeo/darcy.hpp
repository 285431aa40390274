#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffeo/mesh.hpp"

namespace diffeo {

enum class PolygonFamily { Pentagon, Hexagon };

const char* to_string(PolygonFamily family);
PolygonFamily parse_family(const std::string& name);

/// Domain parameters of one Darcy polygon on the [0, 10]^2 canvas.
/// Pentagon params: x1, y1, x2, y2, x3. Hexagon params: x1, y1, x2, y2, x3, x4.
struct PolygonSpec {
    PolygonFamily family = PolygonFamily::Pentagon;
    std::vector<double> params;
    std::vector<Vec2> vertices;  // CCW
};

/// Vertices of the template polygon, multiplied by `scale`:
///   pentagon (0,0), (10,0), (x2,y2), (x3,10), (x1,y1)
///   hexagon  (0,0), (10,0), (x2,y2), (x4,10), (x3,10), (x1,y1)
PolygonSpec polygon_from_params(PolygonFamily family, std::vector<double> params, double scale = 1.0);

/// Draws parameters uniformly from the family's ranges until the polygon is
/// simple and CCW (at most 100 draws, else ExhaustedResampling).
PolygonSpec sample_polygon(PolygonFamily family, std::uint64_t seed, double scale = 1.0);

bool is_simple_polygon(const std::vector<Vec2>& polygon);

struct CoefficientSpec {
    double c1 = 0.0;
    double c2 = 0.0;
};

/// psi = c1 sin(x/10) - c2 x (x - 10) + 2.
double coefficient_field(const CoefficientSpec& spec, double x);

/// Throws NonElliptic if min of psi over [x0, x1] is <= 1e-6.
void check_ellipticity(const CoefficientSpec& spec, double x0, double x1);

using ScalarField = std::function<double(const Vec2&)>;

struct DarcySolution {
    std::vector<double> u;       // per vertex, zero on the boundary
    double relative_residual = 0.0;  // ||K u - f|| / ||f|| on the reduced system
    double energy = 0.0;             // u^T K u
    double load_work = 0.0;          // u^T f
};

/// P1 Galerkin solve of -div(a grad u) = F with u = 0 on the boundary.
/// a and F are evaluated at triangle centroids.
DarcySolution solve_darcy(const TriMesh& mesh, const ScalarField& a, const ScalarField& forcing);

/// Relative L2 error of the P1 interpolant of `u` against `exact`, using a
/// 7-point degree-5 triangle quadrature.
double relative_l2_error(const TriMesh& mesh, const std::vector<double>& u, const ScalarField& exact);

}  // namespace diffeo
