// Conforming simplicial meshes in dimension 1, 2 or 3 with local refinement
// by tagged bisection. Cells keep the vertex ordering the bisection scheme
// relies on: a cell with tag k splits its (v0, vk) edge at the midpoint and
// hands both children tag k-1 (or dim when k was 1). Box meshes are built so
// that neighboring cells agree on the first split edge, which makes the
// conformity closure terminate.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace parec::mesh {

class MeshError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BoundaryFacet {
    std::array<int, 3> v{-1, -1, -1};  // dim vertex indices used
    std::string tag;
};

struct MarkedSet {
    std::vector<int> cells;
};

struct SimplicialMesh {
    int dim = 2;
    std::vector<std::array<double, 3>> vertices;  // coords beyond dim stay 0
    std::vector<std::array<int, 4>> cells;        // dim+1 indices used
    std::vector<std::int8_t> bisect_tag;          // per cell, in 1..dim
    std::vector<BoundaryFacet> boundary;
    // For refined meshes: index of the ancestor cell in the mesh that was
    // refined; empty for freshly built meshes.
    std::vector<int> parent;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_cells() const { return static_cast<int>(cells.size()); }

    double cell_measure(int cell) const;
    double cell_diameter(int cell) const;
    double total_measure() const;
    std::array<double, 3> cell_centroid(int cell) const;
};

struct Box {
    std::array<double, 3> lo{0.0, 0.0, 0.0};
    std::array<double, 3> hi{1.0, 1.0, 1.0};
};

// Tensor grid of boxes, each split into dim! simplices sharing the main
// diagonal, all tagged dim.
SimplicialMesh build_box_mesh(int dim, const Box& box, const std::array<int, 3>& divisions);

// Triangulate a simple polygon (vertices in order, either orientation) so
// that no edge exceeds target_h. Purely axis-parallel polygons are meshed on
// a grid snapped to their vertex coordinates; others by ear clipping followed
// by refinement to size.
SimplicialMesh build_polygon_mesh(const std::vector<std::array<double, 2>>& loop,
                                  double target_h);

// Bisect the marked cells plus whatever the conformity closure demands.
// parent[] of the result maps every cell to its ancestor in `m`.
SimplicialMesh refine(const SimplicialMesh& m, const MarkedSet& marked);

// dim rounds of all-cell bisection; halves the mesh size h. parent[] maps to
// the input mesh.
SimplicialMesh uniform_refine(const SimplicialMesh& m);

// Smallest prefix of cells in decreasing indicator order whose sum first
// reaches theta * total (ties broken by ascending index). All-zero
// indicators give an empty set.
MarkedSet mark_bulk(const std::vector<double>& indicators, double theta);

// Cells with indicator strictly above the arithmetic mean.
MarkedSet mark_average(const std::vector<double>& indicators);

// Rename boundary facets; the callback sees the facet's vertex coordinates.
void retag_boundary(SimplicialMesh& m,
                    const std::function<std::string(const std::array<double, 3>* verts,
                                                    int n_verts)>& namer);

// Structural checks (index validity, positive measures, facet conformity,
// boundary list consistency, hanging vertices on small meshes). Returns
// human-readable problems; empty means the mesh is sound.
std::vector<std::string> audit(const SimplicialMesh& m);

// Plain text format: "dim n_vertices n_cells" header, then vertex lines, cell
// lines, and boundary facet lines (indices plus tag) until end of file.
// Coordinates are written with enough digits to round-trip bit-exactly.
// Bisection tags are not stored; loading derives a restartable assignment.
void save_mesh(const SimplicialMesh& m, std::ostream& out);
SimplicialMesh load_mesh(std::istream& in);

}  // namespace parec::mesh
