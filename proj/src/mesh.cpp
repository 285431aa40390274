#include "diffeo/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "diffeo/errors.hpp"

namespace diffeo {

namespace {

struct HalfEdge {
    int lo, hi;
    int from;  // directed origin
    int opposite;
    bool operator<(const HalfEdge& o) const { return lo != o.lo ? lo < o.lo : hi < o.hi; }
};

std::string vertex_str(const Vec2& p) {
    std::ostringstream ss;
    ss << "(" << p.x() << ", " << p.y() << ")";
    return ss.str();
}

}  // namespace

int TriMesh::find_edge(int a, int b) const {
    if (a > b) std::swap(a, b);
    auto it = std::lower_bound(edges_.begin(), edges_.end(), std::pair{a, b},
                               [](const Edge& e, const std::pair<int, int>& key) {
                                   return e.lo != key.first ? e.lo < key.first : e.hi < key.second;
                               });
    if (it == edges_.end() || it->lo != a || it->hi != b) return -1;
    return static_cast<int>(it - edges_.begin());
}

std::pair<Vec2, Vec2> TriMesh::bounding_box() const {
    Vec2 lo = vertices_.front(), hi = vertices_.front();
    for (const auto& v : vertices_) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return {lo, hi};
}

TriMesh build_mesh(std::vector<Vec2> vertices, std::vector<Tri> triangles) {
    if (vertices.size() < 3) fail(ErrorCode::InvalidInput, "mesh needs at least 3 vertices");
    if (triangles.empty()) fail(ErrorCode::InvalidInput, "mesh needs at least 1 triangle");

    const int nv = static_cast<int>(vertices.size());
    Vec2 lo = vertices.front(), hi = vertices.front();
    for (const auto& v : vertices) {
        if (!v.allFinite()) fail(ErrorCode::InvalidInput, "non-finite vertex coordinate");
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const double bbox_area = (hi - lo).prod();
    const double min_area = 1e-14 * bbox_area;

    std::vector<char> referenced(vertices.size(), 0);
    for (std::size_t t = 0; t < triangles.size(); ++t) {
        auto& tri = triangles[t];
        for (int v : tri) {
            if (v < 0 || v >= nv)
                fail(ErrorCode::InvalidInput, "triangle " + std::to_string(t) + " index out of range");
            referenced[static_cast<std::size_t>(v)] = 1;
        }
        const double area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] || !(std::abs(area) >= min_area) ||
            bbox_area <= 0.0)
            fail(ErrorCode::DegenerateTriangle, "triangle " + std::to_string(t) + " has area " +
                                                    std::to_string(area));
        if (area < 0) std::swap(tri[1], tri[2]);
    }
    for (int v = 0; v < nv; ++v)
        if (!referenced[static_cast<std::size_t>(v)])
            fail(ErrorCode::NonManifold, "vertex " + std::to_string(v) + " is not used by any triangle");

    std::vector<HalfEdge> half;
    half.reserve(triangles.size() * 3);
    for (const auto& tri : triangles) {
        for (int k = 0; k < 3; ++k) {
            const int a = tri[k], b = tri[(k + 1) % 3];
            half.push_back({std::min(a, b), std::max(a, b), a, tri[(k + 2) % 3]});
        }
    }
    std::stable_sort(half.begin(), half.end());

    TriMesh mesh;
    std::vector<int> next(vertices.size(), -1);
    std::size_t boundary_edges = 0;
    for (std::size_t i = 0; i < half.size();) {
        std::size_t j = i;
        while (j < half.size() && half[j].lo == half[i].lo && half[j].hi == half[i].hi) ++j;
        const std::size_t count = j - i;
        const std::string where = vertex_str(vertices[half[i].lo]) + "-" + vertex_str(vertices[half[i].hi]);
        if (count > 2) fail(ErrorCode::NonManifold, "edge " + where + " borders " + std::to_string(count) + " triangles");
        Edge e;
        e.lo = half[i].lo;
        e.hi = half[i].hi;
        e.opposite[0] = half[i].opposite;
        if (count == 2) {
            if (half[i].from == half[i + 1].from)
                fail(ErrorCode::NonManifold, "triangles on both sides of edge " + where + " overlap");
            e.opposite[1] = half[i + 1].opposite;
        } else {
            const int a = half[i].from;
            const int b = a == half[i].lo ? half[i].hi : half[i].lo;
            if (next[static_cast<std::size_t>(a)] >= 0)
                fail(ErrorCode::NonManifold, "boundary pinches at vertex " + vertex_str(vertices[a]));
            next[static_cast<std::size_t>(a)] = b;
            ++boundary_edges;
        }
        mesh.edges_.push_back(e);
        i = j;
    }
    if (boundary_edges < 3) fail(ErrorCode::NonManifold, "mesh has no boundary cycle");

    int start = -1;
    for (int v = 0; v < nv; ++v) {
        if (next[static_cast<std::size_t>(v)] < 0) continue;
        if (start < 0) {
            start = v;
            continue;
        }
        const Vec2& p = vertices[v];
        const Vec2& s = vertices[start];
        if (p.y() < s.y() || (p.y() == s.y() && p.x() < s.x())) start = v;
    }
    mesh.boundary_loop_.push_back(start);
    for (int v = next[static_cast<std::size_t>(start)]; v != start; v = next[static_cast<std::size_t>(v)]) {
        if (v < 0 || mesh.boundary_loop_.size() > boundary_edges)
            fail(ErrorCode::NonManifold, "open boundary chain");
        mesh.boundary_loop_.push_back(v);
    }
    if (mesh.boundary_loop_.size() != boundary_edges)
        fail(ErrorCode::MultipleBoundaries, "found " + std::to_string(boundary_edges) +
                                                " boundary edges but the outer loop has " +
                                                std::to_string(mesh.boundary_loop_.size()));

    const long euler = static_cast<long>(nv) - static_cast<long>(mesh.edges_.size()) +
                       static_cast<long>(triangles.size());
    if (euler != 1) fail(ErrorCode::NonManifold, "Euler characteristic " + std::to_string(euler) + " != 1");

    mesh.on_boundary_.assign(vertices.size(), 0);
    for (int v : mesh.boundary_loop_) mesh.on_boundary_[static_cast<std::size_t>(v)] = 1;

    std::vector<int> degree(vertices.size() + 1, 0);
    for (const auto& e : mesh.edges_) {
        ++degree[static_cast<std::size_t>(e.lo) + 1];
        ++degree[static_cast<std::size_t>(e.hi) + 1];
    }
    mesh.adjacency_offsets_.resize(vertices.size() + 1);
    mesh.adjacency_offsets_[0] = 0;
    for (std::size_t v = 0; v < vertices.size(); ++v)
        mesh.adjacency_offsets_[v + 1] = mesh.adjacency_offsets_[v] + degree[v + 1];
    mesh.adjacency_.resize(static_cast<std::size_t>(mesh.adjacency_offsets_.back()));
    std::vector<int> fill(mesh.adjacency_offsets_.begin(), mesh.adjacency_offsets_.end() - 1);
    for (const auto& e : mesh.edges_) {
        mesh.adjacency_[static_cast<std::size_t>(fill[static_cast<std::size_t>(e.lo)]++)] = e.hi;
        mesh.adjacency_[static_cast<std::size_t>(fill[static_cast<std::size_t>(e.hi)]++)] = e.lo;
    }
    for (std::size_t v = 0; v < vertices.size(); ++v)
        std::sort(mesh.adjacency_.begin() + mesh.adjacency_offsets_[v],
                  mesh.adjacency_.begin() + mesh.adjacency_offsets_[v + 1]);

    mesh.vertices_ = std::move(vertices);
    mesh.triangles_ = std::move(triangles);
    return mesh;
}

double signed_area(const TriMesh& mesh, int tri_index) {
    const auto& t = mesh.triangles().at(static_cast<std::size_t>(tri_index));
    const auto& v = mesh.vertices();
    return signed_area(v[t[0]], v[t[1]], v[t[2]]);
}

double polygon_area(std::span<const Vec2> polygon) {
    double twice = 0.0;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const Vec2& a = polygon[i];
        const Vec2& b = polygon[(i + 1) % polygon.size()];
        twice += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * twice;
}

EdgeWeightTable cotangent_weights(const TriMesh& mesh) {
    const auto& v = mesh.vertices();
    EdgeWeightTable table;
    table.weights.reserve(mesh.edges().size());
    for (const auto& e : mesh.edges()) {
        double w = 0.0;
        for (int opp : e.opposite) {
            if (opp < 0) continue;
            const Vec2 a = v[e.lo] - v[opp];
            const Vec2 b = v[e.hi] - v[opp];
            const double cross = std::abs(a.x() * b.y() - a.y() * b.x());
            w += 0.5 * a.dot(b) / cross;
        }
        table.weights.push_back(w);
    }
    return table;
}

void write_off(std::ostream& os, const TriMesh& mesh) {
    os << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_triangles() << " 0\n";
    os << std::setprecision(17);
    for (const auto& p : mesh.vertices()) os << p.x() << ' ' << p.y() << " 0\n";
    for (const auto& t : mesh.triangles()) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void write_off(const std::filesystem::path& path, const TriMesh& mesh) {
    std::ofstream os(path);
    if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
    write_off(os, mesh);
}

TriMesh read_off(std::istream& is) {
    std::string header;
    is >> header;
    if (header != "OFF") fail(ErrorCode::Io, "missing OFF header");
    std::size_t nv = 0, nf = 0, ne = 0;
    if (!(is >> nv >> nf >> ne)) fail(ErrorCode::Io, "bad OFF counts line");
    std::vector<Vec2> vertices(nv);
    for (auto& p : vertices) {
        double z;
        if (!(is >> p.x() >> p.y() >> z)) fail(ErrorCode::Io, "truncated OFF vertex list");
    }
    std::vector<Tri> triangles(nf);
    for (auto& t : triangles) {
        int n;
        if (!(is >> n >> t[0] >> t[1] >> t[2]) || n != 3) fail(ErrorCode::Io, "OFF face is not a triangle");
    }
    return build_mesh(std::move(vertices), std::move(triangles));
}

TriMesh read_off(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
    return read_off(is);
}

}  // namespace diffeo
