#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "parec/mesh.hpp"

namespace parec::mesh {

namespace {

void write_coord(std::ostream& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw MeshError("mesh file line " + std::to_string(line) + ": " + what);
}

}  // namespace

void save_mesh(const SimplicialMesh& m, std::ostream& out) {
    out << m.dim << ' ' << m.n_vertices() << ' ' << m.n_cells() << '\n';
    for (const auto& v : m.vertices) {
        for (int k = 0; k < m.dim; ++k) {
            if (k) out << ' ';
            write_coord(out, v[k]);
        }
        out << '\n';
    }
    for (const auto& c : m.cells) {
        for (int i = 0; i <= m.dim; ++i) {
            if (i) out << ' ';
            out << c[i];
        }
        out << '\n';
    }
    for (const auto& f : m.boundary) {
        for (int i = 0; i < m.dim; ++i) out << f.v[i] << ' ';
        out << f.tag << '\n';
    }
}

SimplicialMesh load_mesh(std::istream& in) {
    SimplicialMesh m;
    std::string line;
    int lineno = 0;

    auto next_line = [&](std::istringstream& ls) {
        if (!std::getline(in, line)) fail(lineno + 1, "unexpected end of file");
        ++lineno;
        ls.clear();
        ls.str(line);
        return true;
    };

    std::istringstream ls;
    next_line(ls);
    int n_vertices = 0, n_cells = 0;
    if (!(ls >> m.dim >> n_vertices >> n_cells)) fail(lineno, "malformed header");
    if (m.dim < 1 || m.dim > 3) fail(lineno, "dimension must be 1, 2 or 3");
    if (n_vertices < m.dim + 1 || n_cells < 1) fail(lineno, "implausible mesh size");

    m.vertices.reserve(static_cast<std::size_t>(n_vertices));
    for (int i = 0; i < n_vertices; ++i) {
        next_line(ls);
        std::array<double, 3> p{0.0, 0.0, 0.0};
        for (int k = 0; k < m.dim; ++k)
            if (!(ls >> p[k])) fail(lineno, "malformed vertex coordinates");
        double trailing;
        if (ls >> trailing) fail(lineno, "extra tokens on a vertex line");
        for (int k = 0; k < m.dim; ++k)
            if (!std::isfinite(p[k])) fail(lineno, "non-finite vertex coordinate");
        m.vertices.push_back(p);
    }

    m.cells.reserve(static_cast<std::size_t>(n_cells));
    for (int i = 0; i < n_cells; ++i) {
        next_line(ls);
        std::array<int, 4> c{-1, -1, -1, -1};
        for (int k = 0; k <= m.dim; ++k) {
            if (!(ls >> c[k])) fail(lineno, "malformed cell line");
            if (c[k] < 0 || c[k] >= n_vertices) fail(lineno, "cell vertex index out of range");
        }
        int trailing;
        if (ls >> trailing) fail(lineno, "extra tokens on a cell line");
        m.cells.push_back(c);
    }

    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ls.clear();
        ls.str(line);
        BoundaryFacet f;
        for (int k = 0; k < m.dim; ++k) {
            if (!(ls >> f.v[k])) fail(lineno, "malformed boundary facet line");
            if (f.v[k] < 0 || f.v[k] >= n_vertices)
                fail(lineno, "boundary facet vertex index out of range");
        }
        if (!(ls >> f.tag)) fail(lineno, "boundary facet is missing its tag");
        m.boundary.push_back(f);
    }

    // The file stores no bisection lineage; restart it from the longest edge
    // incident to each cell's leading vertex.
    m.bisect_tag.reserve(m.cells.size());
    for (const auto& c : m.cells) {
        int best_k = 1;
        double best = -1.0;
        for (int k = 1; k <= m.dim; ++k) {
            double dx = 0.0;
            for (int a = 0; a < 3; ++a) {
                double d = m.vertices[c[0]][a] - m.vertices[c[k]][a];
                dx += d * d;
            }
            if (dx > best) {
                best = dx;
                best_k = k;
            }
        }
        m.bisect_tag.push_back(static_cast<std::int8_t>(best_k));
    }
    return m;
}

}  // namespace parec::mesh
