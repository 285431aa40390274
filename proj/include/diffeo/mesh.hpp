#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace diffeo {

using Vec2 = Eigen::Vector2d;
using Tri = std::array<int, 3>;

/// Undirected edge (lo < hi) with the one or two vertices opposite it.
struct Edge {
    int lo = -1;
    int hi = -1;
    int opposite[2] = {-1, -1};

    bool is_boundary() const { return opposite[1] < 0; }
};

/// Indexed triangle mesh of a simply connected planar domain.
///
/// Instances are produced by build_mesh(), which guarantees: all indices in
/// range, no degenerate triangles, every triangle counter-clockwise, edges
/// shared by at most two triangles, one boundary cycle, and V - E + F = 1.
/// The boundary loop is counter-clockwise and starts at the boundary vertex
/// with the lowest y (ties broken by lowest x).
class TriMesh {
public:
    TriMesh() = default;

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<Tri>& triangles() const { return triangles_; }
    const std::vector<int>& boundary_loop() const { return boundary_loop_; }
    /// Sorted by (lo, hi).
    const std::vector<Edge>& edges() const { return edges_; }

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_triangles() const { return triangles_.size(); }
    bool is_boundary_vertex(int v) const { return on_boundary_[static_cast<std::size_t>(v)] != 0; }

    /// Index into edges() of the edge {a, b}, or -1.
    int find_edge(int a, int b) const;

    /// Neighbouring vertices of v (sorted ascending).
    std::span<const int> neighbors(int v) const {
        const auto b = static_cast<std::size_t>(adjacency_offsets_[static_cast<std::size_t>(v)]);
        const auto e = static_cast<std::size_t>(adjacency_offsets_[static_cast<std::size_t>(v) + 1]);
        return {adjacency_.data() + b, e - b};
    }

    /// Axis-aligned bounding box as (min, max).
    std::pair<Vec2, Vec2> bounding_box() const;

private:
    friend TriMesh build_mesh(std::vector<Vec2> vertices, std::vector<Tri> triangles);

    std::vector<Vec2> vertices_;
    std::vector<Tri> triangles_;
    std::vector<int> boundary_loop_;
    std::vector<Edge> edges_;
    std::vector<char> on_boundary_;
    std::vector<int> adjacency_offsets_;
    std::vector<int> adjacency_;
};

/// Validates and canonicalizes a triangle soup into a TriMesh.
/// Clockwise triangles are flipped. Throws Error with NonManifold,
/// DegenerateTriangle, MultipleBoundaries or InvalidInput.
TriMesh build_mesh(std::vector<Vec2> vertices, std::vector<Tri> triangles);

/// Half the cross product; positive for counter-clockwise (a, b, c).
inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()));
}

double signed_area(const TriMesh& mesh, int tri_index);

/// Shoelace area of a closed polygon given by its vertices in order.
double polygon_area(std::span<const Vec2> polygon);

/// Per-edge weights aligned with TriMesh::edges().
struct EdgeWeightTable {
    std::vector<double> weights;

    double operator[](std::size_t edge) const { return weights[edge]; }
    std::size_t size() const { return weights.size(); }
};

/// w_ij = 1/2 (cot alpha_ij + cot beta_ij); boundary edges carry the single
/// available term 1/2 cot alpha_ij. Values may be negative on obtuse angles.
EdgeWeightTable cotangent_weights(const TriMesh& mesh);

/// ASCII OFF (z = 0). Output is byte-stable for identical meshes.
void write_off(std::ostream& os, const TriMesh& mesh);
void write_off(const std::filesystem::path& path, const TriMesh& mesh);
TriMesh read_off(std::istream& is);
TriMesh read_off(const std::filesystem::path& path);

}  // namespace diffeo
