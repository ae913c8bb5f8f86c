#include "parec/mesh.hpp"

#include <algorithm>
#include <climits>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace parec::mesh {

namespace {

double dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

// Sorted facet key; unused -1 slots sort last so the valid vertices always
// occupy the leading entries.
std::array<int, 3> facet_key(std::array<int, 3> f) {
    std::sort(f.begin(), f.end(),
              [](int a, int b) { return (a < 0 ? INT_MAX : a) < (b < 0 ? INT_MAX : b); });
    return f;
}

}  // namespace

double SimplicialMesh::cell_measure(int cell) const {
    const auto& c = cells[cell];
    const auto& p0 = vertices[c[0]];
    switch (dim) {
        case 1:
            return std::fabs(vertices[c[1]][0] - p0[0]);
        case 2: {
            const auto& p1 = vertices[c[1]];
            const auto& p2 = vertices[c[2]];
            double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            return std::fabs(det) / 2.0;
        }
        default: {
            const auto& p1 = vertices[c[1]];
            const auto& p2 = vertices[c[2]];
            const auto& p3 = vertices[c[3]];
            double a[3] = {p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]};
            double b[3] = {p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]};
            double c3[3] = {p3[0] - p0[0], p3[1] - p0[1], p3[2] - p0[2]};
            double det = a[0] * (b[1] * c3[2] - b[2] * c3[1]) -
                         a[1] * (b[0] * c3[2] - b[2] * c3[0]) +
                         a[2] * (b[0] * c3[1] - b[1] * c3[0]);
            return std::fabs(det) / 6.0;
        }
    }
}

double SimplicialMesh::cell_diameter(int cell) const {
    const auto& c = cells[cell];
    double best = 0.0;
    for (int i = 0; i <= dim; ++i)
        for (int j = i + 1; j <= dim; ++j)
            best = std::max(best, dist(vertices[c[i]], vertices[c[j]]));
    return best;
}

double SimplicialMesh::total_measure() const {
    double acc = 0.0;
    for (int c = 0; c < n_cells(); ++c) acc += cell_measure(c);
    return acc;
}

std::array<double, 3> SimplicialMesh::cell_centroid(int cell) const {
    std::array<double, 3> p{0.0, 0.0, 0.0};
    for (int i = 0; i <= dim; ++i)
        for (int k = 0; k < 3; ++k) p[k] += vertices[cells[cell][i]][k];
    for (int k = 0; k < 3; ++k) p[k] /= (dim + 1);
    return p;
}

// ---------------------------------------------------------------------------
// Boundary derivation

namespace {

// Every (dim-1)-subsimplex that belongs to exactly one cell is boundary.
std::vector<std::array<int, 3>> boundary_facets_of(const SimplicialMesh& m) {
    std::map<std::array<int, 3>, int> count;
    const int d = m.dim;
    for (const auto& cell : m.cells) {
        for (int skip = 0; skip <= d; ++skip) {
            std::array<int, 3> f{-1, -1, -1};
            int n = 0;
            for (int i = 0; i <= d; ++i)
                if (i != skip) f[n++] = cell[i];
            ++count[facet_key(f)];
        }
    }
    std::vector<std::array<int, 3>> out;
    for (const auto& [f, c] : count)
        if (c == 1) out.push_back(f);
    return out;
}

void tag_all_boundary(SimplicialMesh& m, const std::string& tag) {
    m.boundary.clear();
    for (const auto& f : boundary_facets_of(m)) m.boundary.push_back({f, tag});
}

}  // namespace

// ---------------------------------------------------------------------------
// Box meshes

SimplicialMesh build_box_mesh(int dim, const Box& box, const std::array<int, 3>& divisions) {
    if (dim < 1 || dim > 3) throw MeshError("mesh dimension must be 1, 2 or 3");
    for (int k = 0; k < dim; ++k) {
        if (divisions[k] < 1) throw MeshError("box divisions must be positive");
        if (!(box.hi[k] > box.lo[k])) throw MeshError("box extents must be positive");
    }

    SimplicialMesh m;
    m.dim = dim;
    const int nx = divisions[0];
    const int ny = dim >= 2 ? divisions[1] : 0;
    const int nz = dim >= 3 ? divisions[2] : 0;

    auto coord = [&](int k, int i, int n) {
        return box.lo[k] + (box.hi[k] - box.lo[k]) * static_cast<double>(i) / n;
    };

    if (dim == 1) {
        for (int i = 0; i <= nx; ++i) m.vertices.push_back({coord(0, i, nx), 0.0, 0.0});
        for (int i = 0; i < nx; ++i) {
            m.cells.push_back({i, i + 1, -1, -1});
            m.bisect_tag.push_back(1);
        }
    } else if (dim == 2) {
        auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                m.vertices.push_back({coord(0, i, nx), coord(1, j, ny), 0.0});
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                // both triangles share the main diagonal (i,j)-(i+1,j+1)
                m.cells.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), -1});
                m.cells.push_back({vid(i, j), vid(i, j + 1), vid(i + 1, j + 1), -1});
                m.bisect_tag.push_back(2);
                m.bisect_tag.push_back(2);
            }
    } else {
        auto vid = [&](int i, int j, int k) { return (k * (ny + 1) + j) * (nx + 1) + i; };
        for (int k = 0; k <= nz; ++k)
            for (int j = 0; j <= ny; ++j)
                for (int i = 0; i <= nx; ++i)
                    m.vertices.push_back({coord(0, i, nx), coord(1, j, ny), coord(2, k, nz)});
        const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i)
                    for (const auto& p : perms) {
                        // walk the box edges axis by axis; every tetrahedron
                        // spans the main diagonal corner-to-corner
                        int at[3] = {i, j, k};
                        std::array<int, 4> cell{};
                        cell[0] = vid(at[0], at[1], at[2]);
                        for (int step = 0; step < 3; ++step) {
                            ++at[p[step]];
                            cell[step + 1] = vid(at[0], at[1], at[2]);
                        }
                        m.cells.push_back(cell);
                        m.bisect_tag.push_back(3);
                    }
    }

    tag_all_boundary(m, "dirichlet");
    return m;
}

// ---------------------------------------------------------------------------
// Polygon meshes

namespace {

double polygon_signed_area(const std::vector<std::array<double, 2>>& loop) {
    double acc = 0.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        const auto& a = loop[i];
        const auto& b = loop[(i + 1) % loop.size()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    return acc / 2.0;
}

double orient(const std::array<double, 2>& a, const std::array<double, 2>& b,
              const std::array<double, 2>& c) {
    return (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
}

bool on_segment(const std::array<double, 2>& a, const std::array<double, 2>& b,
                const std::array<double, 2>& p) {
    return std::min(a[0], b[0]) - 1e-14 <= p[0] && p[0] <= std::max(a[0], b[0]) + 1e-14 &&
           std::min(a[1], b[1]) - 1e-14 <= p[1] && p[1] <= std::max(a[1], b[1]) + 1e-14;
}

bool segments_intersect(const std::array<double, 2>& a, const std::array<double, 2>& b,
                        const std::array<double, 2>& c, const std::array<double, 2>& d) {
    double o1 = orient(a, b, c), o2 = orient(a, b, d);
    double o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 &&
        o4 != 0)
        return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

void check_simple_polygon(const std::vector<std::array<double, 2>>& loop) {
    const std::size_t n = loop.size();
    if (n < 3) throw MeshError("polygon needs at least three vertices");
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t i2 = (i + 1) % n;
        if (loop[i] == loop[i2]) throw MeshError("polygon has a zero-length edge");
        for (std::size_t j = i + 1; j < n; ++j) {
            std::size_t j2 = (j + 1) % n;
            if (i == j || i2 == j || i == j2) continue;  // adjacent edges share a vertex
            if (segments_intersect(loop[i], loop[i2], loop[j], loop[j2]))
                throw MeshError("polygon is self-intersecting");
        }
    }
}

bool point_in_polygon(const std::vector<std::array<double, 2>>& loop, double x, double y) {
    bool inside = false;
    for (std::size_t i = 0, j = loop.size() - 1; i < loop.size(); j = i++) {
        const auto& a = loop[i];
        const auto& b = loop[j];
        if ((a[1] > y) != (b[1] > y)) {
            double xi = a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if (x < xi) inside = !inside;
        }
    }
    return inside;
}

SimplicialMesh polygon_grid_mesh(const std::vector<std::array<double, 2>>& loop,
                                 double target_h) {
    // Grid lines snapped to the polygon's coordinates, subdivided so no cell
    // diagonal exceeds target_h.
    const double step = target_h / std::sqrt(2.0);
    auto build_axis = [&](int axis) {
        std::vector<double> base;
        for (const auto& p : loop) base.push_back(p[axis]);
        std::sort(base.begin(), base.end());
        base.erase(std::unique(base.begin(), base.end()), base.end());
        std::vector<double> lines;
        lines.push_back(base.front());
        for (std::size_t i = 0; i + 1 < base.size(); ++i) {
            double len = base[i + 1] - base[i];
            int pieces = std::max(1, static_cast<int>(std::ceil(len / step - 1e-12)));
            for (int k = 1; k <= pieces; ++k)
                lines.push_back(base[i] + len * static_cast<double>(k) / pieces);
        }
        return lines;
    };
    std::vector<double> xs = build_axis(0);
    std::vector<double> ys = build_axis(1);

    const int nx = static_cast<int>(xs.size());
    const int ny = static_cast<int>(ys.size());
    std::vector<int> vmap(static_cast<std::size_t>(nx) * ny, -1);

    SimplicialMesh m;
    m.dim = 2;
    auto vertex_at = [&](int i, int j) {
        int& id = vmap[static_cast<std::size_t>(j) * nx + i];
        if (id < 0) {
            id = m.n_vertices();
            m.vertices.push_back({xs[i], ys[j], 0.0});
        }
        return id;
    };

    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            double cx = (xs[i] + xs[i + 1]) / 2.0, cy = (ys[j] + ys[j + 1]) / 2.0;
            if (!point_in_polygon(loop, cx, cy)) continue;
            int p00 = vertex_at(i, j), p10 = vertex_at(i + 1, j);
            int p01 = vertex_at(i, j + 1), p11 = vertex_at(i + 1, j + 1);
            m.cells.push_back({p00, p10, p11, -1});
            m.cells.push_back({p00, p01, p11, -1});
            m.bisect_tag.push_back(2);
            m.bisect_tag.push_back(2);
        }
    if (m.cells.empty()) throw MeshError("polygon mesh came out empty; check target_h");
    return m;
}

bool ear_is_valid(const std::vector<std::array<double, 2>>& pts, const std::vector<int>& ring,
                  std::size_t i) {
    const std::size_t n = ring.size();
    const auto& a = pts[ring[(i + n - 1) % n]];
    const auto& b = pts[ring[i]];
    const auto& c = pts[ring[(i + 1) % n]];
    if (orient(a, b, c) <= 1e-14) return false;  // reflex or degenerate corner
    for (std::size_t k = 0; k < n; ++k) {
        if (k == i || k == (i + n - 1) % n || k == (i + 1) % n) continue;
        const auto& p = pts[ring[k]];
        // strictly inside test via barycentric signs
        if (orient(a, b, p) > 0 && orient(b, c, p) > 0 && orient(c, a, p) > 0) return false;
        if (orient(a, b, p) >= 0 && orient(b, c, p) >= 0 && orient(c, a, p) >= 0 &&
            (orient(a, b, p) == 0 || orient(b, c, p) == 0 || orient(c, a, p) == 0))
            return false;  // on the candidate ear's rim
    }
    return true;
}

SimplicialMesh polygon_earclip_mesh(std::vector<std::array<double, 2>> pts, double target_h) {
    SimplicialMesh m;
    m.dim = 2;
    for (const auto& p : pts) m.vertices.push_back({p[0], p[1], 0.0});

    std::vector<int> ring(pts.size());
    std::iota(ring.begin(), ring.end(), 0);

    while (ring.size() > 3) {
        bool clipped = false;
        for (std::size_t i = 0; i < ring.size(); ++i) {
            if (!ear_is_valid(pts, ring, i)) continue;
            const std::size_t n = ring.size();
            int a = ring[(i + n - 1) % n], b = ring[i], c = ring[(i + 1) % n];
            m.cells.push_back({a, b, c, -1});
            ring.erase(ring.begin() + static_cast<long>(i));
            clipped = true;
            break;
        }
        if (!clipped) throw MeshError("ear clipping failed; polygon may be degenerate");
    }
    m.cells.push_back({ring[0], ring[1], ring[2], -1});

    // Tag the longest edge of each triangle as the first bisection edge by
    // rotating it into the (v0, v2) slots.
    for (auto& cell : m.cells) {
        double best = -1.0;
        int rot = 0;
        for (int r = 0; r < 3; ++r) {
            double len = dist(m.vertices[cell[r]], m.vertices[cell[(r + 2) % 3]]);
            if (len > best) {
                best = len;
                rot = r;
            }
        }
        cell = {cell[rot], cell[(rot + 1) % 3], cell[(rot + 2) % 3], -1};
    }
    m.bisect_tag.assign(m.cells.size(), 2);

    for (int round = 0; round < 64; ++round) {
        MarkedSet oversized;
        for (int c = 0; c < m.n_cells(); ++c)
            if (m.cell_diameter(c) > target_h) oversized.cells.push_back(c);
        if (oversized.cells.empty()) return m;
        tag_all_boundary(m, "dirichlet");  // refine() wants a consistent boundary list
        m = refine(m, oversized);
    }
    throw MeshError("size-driven refinement did not reach target_h");
}

}  // namespace

SimplicialMesh build_polygon_mesh(const std::vector<std::array<double, 2>>& loop,
                                  double target_h) {
    if (!(target_h > 0.0)) throw MeshError("target_h must be positive");
    check_simple_polygon(loop);

    std::vector<std::array<double, 2>> ccw = loop;
    if (polygon_signed_area(ccw) < 0.0) std::reverse(ccw.begin(), ccw.end());

    bool rectilinear = true;
    for (std::size_t i = 0; i < ccw.size(); ++i) {
        const auto& a = ccw[i];
        const auto& b = ccw[(i + 1) % ccw.size()];
        if (a[0] != b[0] && a[1] != b[1]) rectilinear = false;
    }

    SimplicialMesh m =
        rectilinear ? polygon_grid_mesh(ccw, target_h) : polygon_earclip_mesh(ccw, target_h);
    tag_all_boundary(m, "dirichlet");
    return m;
}

// ---------------------------------------------------------------------------
// Refinement

namespace {

struct Refiner {
    SimplicialMesh out;
    std::vector<int> ancestor;
    std::unordered_map<std::uint64_t, int> edge_mid;
    std::vector<std::pair<int, int>> born_from;  // per new vertex (id - old_n)

    int midpoint(int a, int b) {
        auto key = edge_key(a, b);
        auto it = edge_mid.find(key);
        if (it != edge_mid.end()) return it->second;
        const auto& pa = out.vertices[a];
        const auto& pb = out.vertices[b];
        int id = out.n_vertices();
        out.vertices.push_back(
            {(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0});
        edge_mid.emplace(key, id);
        born_from.emplace_back(a, b);
        return id;
    }

    // Tagged bisection: split (v0, vk), children tagged k-1 (dim when k was 1).
    void bisect(int c) {
        const int d = out.dim;
        const std::array<int, 4> cell = out.cells[c];
        const int k = out.bisect_tag[c];
        const int z = midpoint(cell[0], cell[k]);

        std::array<int, 4> child1 = cell;
        child1[k] = z;
        std::array<int, 4> child2{-1, -1, -1, -1};
        for (int i = 0; i < k; ++i) child2[i] = cell[i + 1];
        child2[k] = z;
        for (int i = k + 1; i <= d; ++i) child2[i] = cell[i];

        const std::int8_t new_tag = static_cast<std::int8_t>(k > 1 ? k - 1 : d);
        out.cells[c] = child1;
        out.bisect_tag[c] = new_tag;
        out.cells.push_back(child2);
        out.bisect_tag.push_back(new_tag);
        ancestor.push_back(ancestor[c]);
    }
};

}  // namespace

SimplicialMesh refine(const SimplicialMesh& m, const MarkedSet& marked) {
    Refiner r;
    r.out.dim = m.dim;
    r.out.vertices = m.vertices;
    r.out.cells = m.cells;
    r.out.bisect_tag = m.bisect_tag;
    r.ancestor.resize(m.cells.size());
    std::iota(r.ancestor.begin(), r.ancestor.end(), 0);

    std::vector<char> need(m.cells.size(), 0);
    for (int c : marked.cells) {
        if (c < 0 || c >= m.n_cells()) throw MeshError("marked cell index out of range");
        need[c] = 1;
    }

    for (int sweep = 0; sweep < 64; ++sweep) {
        bool acted = false;
        for (std::size_t c = 0; c < need.size(); ++c) {
            if (!need[c]) continue;
            r.bisect(static_cast<int>(c));
            need[c] = 0;
            need.push_back(0);
            acted = true;
        }
        if (!acted && sweep > 0) break;

        // conformity: any cell still spanning a split edge must be bisected
        need.resize(r.out.cells.size(), 0);
        bool pending = false;
        for (std::size_t c = 0; c < r.out.cells.size(); ++c) {
            const auto& cell = r.out.cells[c];
            for (int i = 0; i <= m.dim && !need[c]; ++i)
                for (int j = i + 1; j <= m.dim; ++j)
                    if (r.edge_mid.count(edge_key(cell[i], cell[j]))) {
                        need[c] = 1;
                        pending = true;
                        break;
                    }
        }
        if (!pending) break;
        if (sweep == 63) throw MeshError("bisection closure did not terminate");
    }

    // Boundary: re-detect facets, then inherit tags by expanding new vertices
    // back to the pre-refinement facet they subdivide.
    std::map<std::array<int, 3>, std::string> old_tags;
    for (const auto& f : m.boundary) old_tags[facet_key(f.v)] = f.tag;

    const int old_n = m.n_vertices();
    for (const auto& f : boundary_facets_of(r.out)) {
        std::set<int> verts(f.begin(), f.end());
        verts.erase(-1);
        while (*verts.rbegin() >= old_n) {
            int v = *verts.rbegin();
            verts.erase(v);
            const auto& [a, b] = r.born_from[static_cast<std::size_t>(v - old_n)];
            verts.insert(a);
            verts.insert(b);
        }
        std::array<int, 3> key{-1, -1, -1};
        if (static_cast<int>(verts.size()) != m.dim)
            throw MeshError("boundary facet does not reduce to an ancestor facet");
        int i = 0;
        for (int v : verts) key[i++] = v;
        auto it = old_tags.find(facet_key(key));
        if (it == old_tags.end())
            throw MeshError("refined boundary facet has no tagged ancestor");
        r.out.boundary.push_back({f, it->second});
    }

    r.out.parent = std::move(r.ancestor);
    return r.out;
}

SimplicialMesh uniform_refine(const SimplicialMesh& m) {
    SimplicialMesh cur = m;
    std::vector<int> combined;
    for (int round = 0; round < m.dim; ++round) {
        MarkedSet all;
        all.cells.resize(cur.cells.size());
        std::iota(all.cells.begin(), all.cells.end(), 0);
        SimplicialMesh next = refine(cur, all);
        if (round == 0) {
            combined = next.parent;
        } else {
            std::vector<int> composed(next.parent.size());
            for (std::size_t c = 0; c < next.parent.size(); ++c)
                composed[c] = combined[next.parent[c]];
            combined = std::move(composed);
        }
        cur = std::move(next);
    }
    cur.parent = std::move(combined);
    return cur;
}

// ---------------------------------------------------------------------------
// Marking

MarkedSet mark_bulk(const std::vector<double>& indicators, double theta) {
    assert(theta >= 0.0 && theta <= 1.0);
    std::vector<int> order(indicators.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (indicators[a] != indicators[b]) return indicators[a] > indicators[b];
        return a < b;
    });

    double total = 0.0;
    for (int i : order) {
        assert(indicators[i] >= 0.0);
        total += indicators[i];
    }

    MarkedSet out;
    const double target = theta * total;
    double acc = 0.0;
    for (int i : order) {
        if (acc >= target) break;
        out.cells.push_back(i);
        acc += indicators[i];
    }
    std::sort(out.cells.begin(), out.cells.end());
    return out;
}

MarkedSet mark_average(const std::vector<double>& indicators) {
    MarkedSet out;
    if (indicators.empty()) return out;
    double mean = std::accumulate(indicators.begin(), indicators.end(), 0.0) /
                  static_cast<double>(indicators.size());
    for (std::size_t i = 0; i < indicators.size(); ++i)
        if (indicators[i] > mean) out.cells.push_back(static_cast<int>(i));
    return out;
}

// ---------------------------------------------------------------------------
// Tag editing and audit

void retag_boundary(SimplicialMesh& m,
                    const std::function<std::string(const std::array<double, 3>* verts,
                                                    int n_verts)>& namer) {
    std::vector<std::array<double, 3>> pts(static_cast<std::size_t>(m.dim));
    for (auto& f : m.boundary) {
        for (int i = 0; i < m.dim; ++i) pts[static_cast<std::size_t>(i)] = m.vertices[f.v[i]];
        f.tag = namer(pts.data(), m.dim);
    }
}

std::vector<std::string> audit(const SimplicialMesh& m) {
    std::vector<std::string> issues;
    auto complain = [&](const std::string& s) {
        if (issues.size() < 50) issues.push_back(s);
    };

    if (m.dim < 1 || m.dim > 3) {
        issues.push_back("dimension out of range");
        return issues;
    }
    if (m.bisect_tag.size() != m.cells.size()) complain("bisect_tag size mismatch");

    for (int c = 0; c < m.n_cells(); ++c) {
        const auto& cell = m.cells[c];
        bool ok = true;
        for (int i = 0; i <= m.dim; ++i) {
            if (cell[i] < 0 || cell[i] >= m.n_vertices()) {
                complain("cell " + std::to_string(c) + " has an invalid vertex index");
                ok = false;
            }
            for (int j = i + 1; j <= m.dim; ++j)
                if (cell[i] == cell[j]) {
                    complain("cell " + std::to_string(c) + " repeats a vertex");
                    ok = false;
                }
        }
        if (!ok) continue;
        double measure = m.cell_measure(c);
        double diam = m.cell_diameter(c);
        double scale = std::pow(diam, m.dim);
        if (!(measure > 0.0) || (scale > 0.0 && measure / scale < 1e-12))
            complain("cell " + std::to_string(c) + " is degenerate");
        if (c < static_cast<int>(m.bisect_tag.size()) &&
            (m.bisect_tag[c] < 1 || m.bisect_tag[c] > m.dim))
            complain("cell " + std::to_string(c) + " has an invalid bisection tag");
    }

    // facet conformity and boundary list consistency
    std::map<std::array<int, 3>, int> count;
    for (const auto& cell : m.cells)
        for (int skip = 0; skip <= m.dim; ++skip) {
            std::array<int, 3> f{-1, -1, -1};
            int n = 0;
            for (int i = 0; i <= m.dim; ++i)
                if (i != skip) f[n++] = cell[i];
            ++count[facet_key(f)];
        }
    for (const auto& [f, c] : count)
        if (c > 2)
            complain("facet shared by " + std::to_string(c) + " cells");

    std::set<std::array<int, 3>> listed;
    for (const auto& f : m.boundary) {
        auto key = facet_key(f.v);
        if (!listed.insert(key).second) complain("boundary facet listed twice");
        auto it = count.find(key);
        if (it == count.end())
            complain("boundary facet does not belong to any cell");
        else if (it->second != 1)
            complain("boundary facet belongs to " + std::to_string(it->second) + " cells");
    }
    for (const auto& [f, c] : count)
        if (c == 1 && !listed.count(f))
            complain("exterior facet missing from the boundary list");

    // hanging vertices: any vertex in the open interior of a cell edge breaks
    // conformity; quadratic scan, so only for test-sized meshes
    if (m.n_vertices() <= 2500) {
        std::set<std::uint64_t> edges;
        for (const auto& cell : m.cells)
            for (int i = 0; i <= m.dim; ++i)
                for (int j = i + 1; j <= m.dim; ++j)
                    edges.insert(edge_key(cell[i], cell[j]));
        for (std::uint64_t e : edges) {
            int a = static_cast<int>(e >> 32);
            int b = static_cast<int>(e & 0xffffffffu);
            double len = dist(m.vertices[a], m.vertices[b]);
            for (int w = 0; w < m.n_vertices(); ++w) {
                if (w == a || w == b) continue;
                double d1 = dist(m.vertices[a], m.vertices[w]);
                double d2 = dist(m.vertices[w], m.vertices[b]);
                if (d1 + d2 <= len * (1.0 + 1e-12) && d1 > 1e-12 * len && d2 > 1e-12 * len) {
                    complain("vertex " + std::to_string(w) + " hangs on an edge");
                    break;
                }
            }
        }
    }

    return issues;
}

}  // namespace parec::mesh
