#include "diffeo/mesher.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "diffeo/errors.hpp"

namespace diffeo {

namespace {

using Real = long double;

Real orient(const Vec2& a, const Vec2& b, const Vec2& c) {
    return (Real(b.x()) - a.x()) * (Real(c.y()) - a.y()) - (Real(b.y()) - a.y()) * (Real(c.x()) - a.x());
}

// > 0 when d lies strictly inside the circumcircle of counter-clockwise (a, b, c).
Real incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const Real adx = Real(a.x()) - d.x(), ady = Real(a.y()) - d.y();
    const Real bdx = Real(b.x()) - d.x(), bdy = Real(b.y()) - d.y();
    const Real cdx = Real(c.x()) - d.x(), cdy = Real(c.y()) - d.y();
    const Real alift = adx * adx + ady * ady;
    const Real blift = bdx * bdx + bdy * bdy;
    const Real clift = cdx * cdx + cdy * cdy;
    return alift * (bdx * cdy - bdy * cdx) + blift * (cdx * ady - cdy * adx) + clift * (adx * bdy - ady * bdx);
}

struct WorkTri {
    int v[3];
    int n[3];  // n[k] is the neighbour across the edge opposite v[k]
    bool alive;
};

class BowyerWatson {
public:
    explicit BowyerWatson(std::span<const Vec2> points) : n_input_(static_cast<int>(points.size())) {
        pts_.assign(points.begin(), points.end());
        Vec2 lo = pts_.front(), hi = pts_.front();
        for (const auto& p : pts_) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const Vec2 c = 0.5 * (lo + hi);
        const double m = std::max(1.0, (hi - lo).maxCoeff());
        pts_.emplace_back(c.x() - 20 * m, c.y() - 10 * m);
        pts_.emplace_back(c.x() + 20 * m, c.y() - 10 * m);
        pts_.emplace_back(c.x(), c.y() + 20 * m);
        tris_.push_back({{n_input_, n_input_ + 1, n_input_ + 2}, {-1, -1, -1}, true});
        mark_.push_back(0);
    }

    void insert(int pi) {
        const Vec2& p = pts_[static_cast<std::size_t>(pi)];
        const int t0 = locate(p);
        ++stamp_;
        cavity_.clear();
        cavity_.push_back(t0);
        mark_[static_cast<std::size_t>(t0)] = stamp_;
        for (std::size_t q = 0; q < cavity_.size(); ++q) {
            const WorkTri& t = tris_[static_cast<std::size_t>(cavity_[q])];
            for (int nb : t.n) {
                if (nb < 0 || mark_[static_cast<std::size_t>(nb)] == stamp_) continue;
                const WorkTri& u = tris_[static_cast<std::size_t>(nb)];
                if (incircle(pt(u.v[0]), pt(u.v[1]), pt(u.v[2]), p) > 0) {
                    mark_[static_cast<std::size_t>(nb)] = stamp_;
                    cavity_.push_back(nb);
                }
            }
        }

        rim_.clear();
        for (int ci : cavity_) {
            const WorkTri& t = tris_[static_cast<std::size_t>(ci)];
            for (int k = 0; k < 3; ++k) {
                const int nb = t.n[k];
                if (nb >= 0 && mark_[static_cast<std::size_t>(nb)] == stamp_) continue;
                rim_.push_back({t.v[(k + 1) % 3], t.v[(k + 2) % 3], nb, ci});
            }
        }
        for (int ci : cavity_) tris_[static_cast<std::size_t>(ci)].alive = false;

        const int first_new = static_cast<int>(tris_.size());
        for (const auto& r : rim_) {
            const int id = static_cast<int>(tris_.size());
            tris_.push_back({{r.a, r.b, pi}, {-1, -1, r.outside}, true});
            mark_.push_back(0);
            if (r.outside >= 0) {
                WorkTri& o = tris_[static_cast<std::size_t>(r.outside)];
                for (int& slot : o.n)
                    if (slot == r.old) slot = id;
            }
        }
        const int count = static_cast<int>(rim_.size());
        for (int i = 0; i < count; ++i) {
            WorkTri& t = tris_[static_cast<std::size_t>(first_new + i)];
            for (int j = 0; j < count; ++j) {
                if (i == j) continue;
                const WorkTri& u = tris_[static_cast<std::size_t>(first_new + j)];
                if (u.v[0] == t.v[1]) t.n[0] = first_new + j;  // edge (b, p)
                if (u.v[1] == t.v[0]) t.n[1] = first_new + j;  // edge (p, a)
            }
        }
        last_ = first_new;
    }

    std::vector<Tri> result() const {
        std::vector<Tri> out;
        for (const auto& t : tris_) {
            if (!t.alive || t.v[0] >= n_input_ || t.v[1] >= n_input_ || t.v[2] >= n_input_) continue;
            out.push_back({t.v[0], t.v[1], t.v[2]});
        }
        return out;
    }

private:
    struct RimEdge {
        int a, b, outside, old;
    };

    const Vec2& pt(int i) const { return pts_[static_cast<std::size_t>(i)]; }

    bool contains(const WorkTri& t, const Vec2& p) const {
        for (int k = 0; k < 3; ++k)
            if (orient(pt(t.v[(k + 1) % 3]), pt(t.v[(k + 2) % 3]), p) < 0) return false;
        return true;
    }

    int locate(const Vec2& p) {
        int t = last_;
        if (!tris_[static_cast<std::size_t>(t)].alive) t = static_cast<int>(tris_.size()) - 1;
        const std::size_t max_steps = 4 * tris_.size() + 16;
        for (std::size_t step = 0; step < max_steps; ++step) {
            const WorkTri& cur = tris_[static_cast<std::size_t>(t)];
            int next = -1;
            for (int s = 0; s < 3; ++s) {
                const int k = static_cast<int>((step + static_cast<std::size_t>(s)) % 3);
                if (orient(pt(cur.v[(k + 1) % 3]), pt(cur.v[(k + 2) % 3]), p) < 0) {
                    next = cur.n[k];
                    break;
                }
            }
            if (next < 0) {
                if (contains(cur, p)) return t;
                break;
            }
            t = next;
        }
        for (std::size_t i = 0; i < tris_.size(); ++i)
            if (tris_[i].alive && contains(tris_[i], p)) return static_cast<int>(i);
        fail(ErrorCode::InvalidInput, "point location failed during triangulation");
    }

    int n_input_;
    std::vector<Vec2> pts_;
    std::vector<WorkTri> tris_;
    std::vector<int> mark_;
    std::vector<int> cavity_;
    std::vector<RimEdge> rim_;
    int stamp_ = 0;
    int last_ = 0;
};

double segment_distance(const Vec2& a, const Vec2& b, const Vec2& p) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (a + t * ab - p).norm();
}

using EdgeKey = std::pair<int, int>;
EdgeKey key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

}  // namespace

std::vector<Tri> delaunay_triangulate(std::span<const Vec2> points) {
    if (points.size() < 3) fail(ErrorCode::InvalidInput, "triangulation needs at least 3 points");
    {
        std::vector<std::pair<double, double>> sorted;
        sorted.reserve(points.size());
        for (const auto& p : points) sorted.emplace_back(p.x(), p.y());
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            fail(ErrorCode::InvalidInput, "duplicate points in triangulation input");
    }
    BowyerWatson bw(points);
    for (int i = 0; i < static_cast<int>(points.size()); ++i) bw.insert(i);
    return bw.result();
}

bool point_in_polygon(std::span<const Vec2> polygon, const Vec2& p) {
    const std::size_t n = polygon.size();
    int winding = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = polygon[i];
        const Vec2& b = polygon[(i + 1) % n];
        const Real o = orient(a, b, p);
        if (o == 0 && std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
            std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y()))
            return true;
        if (a.y() <= p.y()) {
            if (b.y() > p.y() && o > 0) ++winding;
        } else if (b.y() <= p.y() && o < 0) {
            --winding;
        }
    }
    return winding != 0;
}

double distance_to_polygon(std::span<const Vec2> polygon, const Vec2& p) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < polygon.size(); ++i)
        d = std::min(d, segment_distance(polygon[i], polygon[(i + 1) % polygon.size()], p));
    return d;
}

TriMesh mesh_polygon(std::span<const Vec2> polygon, double h) {
    if (polygon.size() < 3) fail(ErrorCode::InvalidInput, "polygon needs at least 3 vertices");
    if (!(h > 0)) fail(ErrorCode::InvalidInput, "mesh size h must be positive");
    if (polygon_area(polygon) <= 0) fail(ErrorCode::InvalidInput, "polygon must be counter-clockwise");

    std::vector<Vec2> boundary;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const Vec2& a = polygon[i];
        const Vec2& b = polygon[(i + 1) % polygon.size()];
        const int m = std::max(1, static_cast<int>(std::ceil((b - a).norm() / h - 1e-9)));
        for (int k = 0; k < m; ++k) boundary.push_back(a + (static_cast<double>(k) / m) * (b - a));
    }

    Vec2 lo = polygon.front(), hi = polygon.front();
    for (const auto& p : polygon) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    std::vector<Vec2> interior;
    const double dy = h * std::sqrt(3.0) / 2.0;
    for (int j = 1; lo.y() + j * dy < hi.y(); ++j) {
        const double y = lo.y() + j * dy;
        const double x0 = lo.x() + ((j % 2) ? 0.5 * h : 0.0);
        for (int i = 0; x0 + i * h < hi.x(); ++i) {
            const Vec2 p(x0 + i * h, y);
            if (point_in_polygon(polygon, p) && distance_to_polygon(polygon, p) >= 0.6 * h) interior.push_back(p);
        }
    }

    std::vector<Tri> tris;
    std::vector<Vec2> pts;
    for (int round = 0;; ++round) {
        pts = boundary;
        pts.insert(pts.end(), interior.begin(), interior.end());
        tris = delaunay_triangulate(pts);
        std::set<EdgeKey> present;
        for (const auto& t : tris)
            for (int k = 0; k < 3; ++k) present.insert(key(t[k], t[(k + 1) % 3]));

        const int nb = static_cast<int>(boundary.size());
        std::vector<int> missing;
        for (int i = 0; i < nb; ++i)
            if (!present.count(key(i, (i + 1) % nb))) missing.push_back(i);
        if (missing.empty()) break;
        if (round >= 30) fail(ErrorCode::InvalidInput, "could not recover polygon boundary in the triangulation");

        std::vector<Vec2> refined;
        std::size_t mi = 0;
        for (int i = 0; i < nb; ++i) {
            refined.push_back(boundary[static_cast<std::size_t>(i)]);
            if (mi < missing.size() && missing[mi] == i) {
                const Vec2& a = boundary[static_cast<std::size_t>(i)];
                const Vec2& b = boundary[static_cast<std::size_t>((i + 1) % nb)];
                const Vec2 mid = 0.5 * (a + b);
                refined.push_back(mid);
                const double r = 0.5 * (b - a).norm();
                std::erase_if(interior, [&](const Vec2& p) { return (p - mid).norm() <= r * (1 + 1e-9); });
                ++mi;
            }
        }
        boundary = std::move(refined);
    }

    std::erase_if(tris, [&](const Tri& t) {
        const Vec2 c = (pts[t[0]] + pts[t[1]] + pts[t[2]]) / 3.0;
        return !point_in_polygon(polygon, c);
    });

    // Split interior edges whose endpoints both lie on the boundary.
    const int nb = static_cast<int>(boundary.size());
    for (;;) {
        std::map<EdgeKey, std::vector<int>> owners;
        for (int t = 0; t < static_cast<int>(tris.size()); ++t)
            for (int k = 0; k < 3; ++k)
                owners[key(tris[t][k], tris[t][(k + 1) % 3])].push_back(t);
        auto chord = std::find_if(owners.begin(), owners.end(), [&](const auto& kv) {
            return kv.second.size() == 2 && kv.first.first < nb && kv.first.second < nb;
        });
        if (chord == owners.end()) break;
        const auto [a, b] = chord->first;
        const int m = static_cast<int>(pts.size());
        pts.push_back(0.5 * (pts[a] + pts[b]));
        for (int t : chord->second) {
            Tri tri = tris[t];
            int k = 0;
            while (!((tri[k] == a && tri[(k + 1) % 3] == b) || (tri[k] == b && tri[(k + 1) % 3] == a))) ++k;
            const int p = tri[k], q = tri[(k + 1) % 3], r = tri[(k + 2) % 3];
            tris[t] = {p, m, r};
            tris.push_back({m, q, r});
        }
    }

    return build_mesh(std::move(pts), std::move(tris));
}

TriMesh structured_rectangle_mesh(double x0, double y0, double x1, double y1, int nx, int ny) {
    if (nx < 1 || ny < 1) fail(ErrorCode::InvalidInput, "structured mesh needs at least one cell per side");
    std::vector<Vec2> v;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            v.emplace_back(x0 + (x1 - x0) * i / nx, y0 + (y1 - y0) * j / ny);
    std::vector<Tri> t;
    const auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            t.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            t.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return build_mesh(std::move(v), std::move(t));
}

}  // namespace diffeo
