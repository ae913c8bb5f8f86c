// Adaptive refinement drivers. The slab loop advances the incremental scheme
// one time slab at a time, refining the spatial mesh inside the slab until a
// cap and carrying the refined mesh forward; the space-time loop alternates a
// full cylinder solve with marking and bisection of the space-time mesh. Both
// mark either on the flux indicator (the per-cell dual residual of the
// majorant) or on the true per-cell error when the exact solution is known.

#pragma once

#include <memory>
#include <vector>

#include "parec/fem.hpp"
#include "parec/majorant.hpp"
#include "parec/mesh.hpp"
#include "parec/parabolic.hpp"

namespace parec::adapt {

enum class Criterion { true_error, indicator };
enum class Marking { bulk, average };

struct AdaptOptions {
    Criterion criterion = Criterion::indicator;
    Marking marking = Marking::bulk;
    double theta = 0.3;        // bulk fraction; ignored by average marking
    int max_ref_per_slab = 1;  // refinement passes inside each slab
    int n_ref = 5;             // refinement iterations of the space-time loop
    maj::MajorantParams majorant;
};

// Interpolates a field onto a space over a mesh refined from the field's own
// mesh (the refined mesh's parent map identifies the ancestor cells). Exact
// whenever the target space can represent the field.
fem::DiscreteField interpolate_onto_refined(const fem::DiscreteField& u,
                                            const fem::FESpace& to);

struct SlabRecord {
    std::shared_ptr<const mesh::SimplicialMesh> mesh;  // final mesh of the slab
    std::shared_ptr<const fem::FESpace> space;
    fem::DiscreteField v1;       // end-of-slab approximation on `space`
    maj::MajorantReport report;  // flux report of the final pass
    double t0 = 0.0;
    double t1 = 0.0;
    int refinements = 0;  // passes that actually refined the mesh
};

struct SlabAdaptResult {
    std::vector<SlabRecord> slabs;
    double sigma0_term = 0.0;
    double majorant_total = 0.0;  // sigma0 plus all slab totals
    // Weighted error norm matching the bound and the two efficiency index
    // forms; NaN unless the exact solution is known.
    double error_combined;
    double i_eff_sqrt;
    double i_eff_ratio;

    SlabAdaptResult();
};

SlabAdaptResult adapt_slab_loop(const prob::ProblemSpec& spec, const fem::FESpace& space,
                                const prob::TimeGrid& grid, const AdaptOptions& opts);

struct SpacetimeRecord {
    std::shared_ptr<const mesh::SimplicialMesh> mesh;
    fem::DiscreteField v;        // owns its space
    fem::DiscreteField y;        // owns its space
    maj::MajorantReport report;  // sigma0 included; error fields set if exact
};

// Returns n_ref + 1 records: the initial mesh and every refinement stage.
// Stops early only when marking comes back empty.
std::vector<SpacetimeRecord> adapt_spacetime_loop(const prob::ProblemSpec& spec,
                                                  const mesh::SimplicialMesh& st_mesh,
                                                  const AdaptOptions& opts);

}  // namespace parec::adapt
