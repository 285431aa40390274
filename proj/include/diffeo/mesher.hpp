#pragma once

#include <span>
#include <vector>

#include "diffeo/mesh.hpp"

namespace diffeo {

/// Delaunay triangulation of a point set (Bowyer-Watson). Returns CCW
/// triangles covering the convex hull. Duplicate points are rejected.
std::vector<Tri> delaunay_triangulate(std::span<const Vec2> points);

/// Winding-rule point-in-polygon; points on the boundary count as inside.
bool point_in_polygon(std::span<const Vec2> polygon, const Vec2& p);

/// Distance from p to the closed polygon outline.
double distance_to_polygon(std::span<const Vec2> polygon, const Vec2& p);

/// Triangulates a simple polygon with target edge length h.
///
/// Boundary edges are subdivided uniformly, the interior is filled with an
/// equilateral lattice of spacing h, and a conforming Delaunay triangulation
/// is built (missing boundary segments are split until recovered). Interior
/// edges joining two boundary vertices are then split at their midpoint, so
/// every triangle touches the interior; this keeps fixed-boundary harmonic
/// maps onto rectangles free of collapsed triangles.
TriMesh mesh_polygon(std::span<const Vec2> polygon, double h);

/// Structured right-triangle mesh of [x0,x1]x[y0,y1] with n cells per side.
TriMesh structured_rectangle_mesh(double x0, double y0, double x1, double y1, int nx, int ny);

}  // namespace diffeo
