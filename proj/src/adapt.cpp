#include "parec/adapt.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace parec::adapt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

mesh::MarkedSet mark(const std::vector<double>& indicators, const AdaptOptions& opts) {
    if (opts.marking == Marking::bulk) return mesh::mark_bulk(indicators, opts.theta);
    return mesh::mark_average(indicators);
}

fem::Family flux_family(int degree) {
    return degree == 2 ? fem::Family::P2 : fem::Family::P1;
}

// Per-cell true gradient error of a single slab, for criterion: true-error.
std::vector<double> slab_true_error_cells(const prob::ProblemSpec& spec,
                                          const fem::FESpace& space,
                                          const fem::DiscreteField& v0,
                                          const fem::DiscreteField& v1, double t0, double t1) {
    prob::FieldSequence seq;
    seq.space = &space;
    seq.times = {t0, t1};
    seq.fields = {v0, v1};
    return prob::per_cell_gradient_error(spec, seq);
}

}  // namespace

SlabAdaptResult::SlabAdaptResult()
    : error_combined(kNaN), i_eff_sqrt(kNaN), i_eff_ratio(kNaN) {}

fem::DiscreteField interpolate_onto_refined(const fem::DiscreteField& u,
                                            const fem::FESpace& to) {
    const mesh::SimplicialMesh& fine = *to.msh;
    const mesh::SimplicialMesh& coarse = *u.space->msh;
    if (static_cast<int>(fine.parent.size()) != fine.n_cells()) {
        throw std::invalid_argument("target mesh carries no parent map");
    }
    if (to.components != u.space->components) {
        throw std::invalid_argument("component count mismatch in field transfer");
    }

    fem::DiscreteField out;
    out.space = &to;
    out.dofs.assign(static_cast<std::size_t>(to.n_dofs()), 0.0);
    std::vector<char> done(static_cast<std::size_t>(to.n_scalar), 0);

    for (int c = 0; c < fine.n_cells(); ++c) {
        const int pc = fine.parent[c];
        if (pc < 0 || pc >= coarse.n_cells()) {
            throw std::invalid_argument("parent map does not point into the source mesh");
        }
        const auto pgeom = fem::cell_geometry(coarse, pc);
        for (int l = 0; l < to.nloc; ++l) {
            const int sd = to.dof(c, l);
            if (done[sd]) continue;
            done[sd] = 1;
            double lambda[4];
            fem::barycentric(pgeom, to.dof_points[sd].data(), lambda);
            if (to.components == 1) {
                out.dofs[sd] = fem::eval_scalar(u, pc, lambda);
            } else {
                double vals[3] = {0.0, 0.0, 0.0};
                fem::eval_vector(u, pc, lambda, vals);
                for (int comp = 0; comp < to.components; ++comp) {
                    out.dofs[to.gdof(sd, comp)] = vals[comp];
                }
            }
        }
    }
    return out;
}

SlabAdaptResult adapt_slab_loop(const prob::ProblemSpec& spec, const fem::FESpace& space,
                                const prob::TimeGrid& grid, const AdaptOptions& opts) {
    grid.check();
    opts.majorant.check();
    if (opts.criterion == Criterion::true_error && !spec.has_exact) {
        throw std::invalid_argument("true-error marking needs the exact solution");
    }
    if (opts.max_ref_per_slab < 0) throw std::invalid_argument("negative refinement cap");

    const fem::Family scalar_fam = space.family;
    const fem::Family flux_fam = flux_family(opts.majorant.flux_degree);

    // Working copies so refinement never touches the caller's mesh.
    auto cur_mesh = std::make_shared<mesh::SimplicialMesh>(*space.msh);
    auto cur_space = std::make_shared<fem::FESpace>(fem::make_space(*cur_mesh, scalar_fam));
    auto cur_flux =
        std::make_shared<fem::FESpace>(fem::make_space(*cur_mesh, flux_fam, cur_mesh->dim));

    fem::DiscreteField v0 = fem::interpolate(spec.u_0, *cur_space, 0.0);
    v0.owned_space = cur_space;
    fem::DiscreteField y0 = maj::project_flux(spec, v0, *cur_flux, grid.t.front());
    y0.owned_space = cur_flux;

    SlabAdaptResult result;
    maj::MajorantParams params = opts.majorant;
    double e_d_sum = 0.0, e_delta_sum = 0.0, e_T_last = 0.0;

    for (int k = 0; k < grid.n_slabs(); ++k) {
        const double t0 = grid.t[k];
        const double tau = grid.tau(k);
        SlabRecord rec;
        rec.t0 = t0;
        rec.t1 = grid.t[k + 1];

        fem::DiscreteField v1;
        maj::SlabFluxResult flux_res;
        for (int pass = 0;; ++pass) {
            v1 = prob::step_implicit(spec, *cur_space, v0, t0, tau);
            v1.owned_space = cur_space;

            maj::SlabSolution slab;
            slab.v0 = &v0;
            slab.v1 = &v1;
            slab.y0 = &y0;
            slab.t_k = t0;
            slab.tau = tau;
            flux_res = maj::optimize_flux_slab(spec, slab, params);
            if (pass == opts.max_ref_per_slab) break;

            const std::vector<double> ind =
                opts.criterion == Criterion::indicator
                    ? flux_res.report.per_cell_md
                    : slab_true_error_cells(spec, *cur_space, v0, v1, t0, rec.t1);
            const auto marked = mark(ind, opts);
            if (marked.cells.empty()) break;

            auto next_mesh = std::make_shared<mesh::SimplicialMesh>(
                mesh::refine(*cur_mesh, marked));
            auto next_space =
                std::make_shared<fem::FESpace>(fem::make_space(*next_mesh, scalar_fam));
            auto next_flux = std::make_shared<fem::FESpace>(
                fem::make_space(*next_mesh, flux_fam, next_mesh->dim));

            // The first slab restarts from the known initial data; later
            // slabs can only transfer what the previous slab produced.
            if (k == 0) {
                v0 = fem::interpolate(spec.u_0, *next_space, 0.0);
            } else {
                v0 = interpolate_onto_refined(v0, *next_space);
            }
            v0.owned_space = next_space;
            y0 = interpolate_onto_refined(y0, *next_flux);
            y0.owned_space = next_flux;

            cur_mesh = std::move(next_mesh);
            cur_space = std::move(next_space);
            cur_flux = std::move(next_flux);
            ++rec.refinements;
        }

        if (k == 0) result.sigma0_term = maj::initial_mismatch(spec, v0);
        params.beta = flux_res.report.beta_final;  // warm start across slabs
        result.majorant_total += flux_res.report.total;

        if (spec.has_exact) {
            prob::FieldSequence seq;
            seq.space = cur_space.get();
            seq.times = {t0, rec.t1};
            seq.fields = {v0, v1};
            const auto err =
                prob::energy_error(spec, seq, maj::bound_weights(opts.majorant, spec.sigma));
            e_d_sum += err.e_d;
            e_delta_sum += err.e_delta;
            e_T_last = err.e_T;
        }

        rec.mesh = cur_mesh;
        rec.space = cur_space;
        rec.v1 = v1;
        rec.report = std::move(flux_res.report);
        result.slabs.push_back(std::move(rec));

        // advance: the refined mesh and the slab's outputs seed slab k+1
        v0 = std::move(v1);
        y0 = std::move(flux_res.y1);
        y0.owned_space = cur_flux;
    }

    result.majorant_total += result.sigma0_term;
    if (spec.has_exact) {
        const auto w = maj::bound_weights(opts.majorant, spec.sigma);
        result.error_combined = w.nu * e_d_sum + w.theta * e_delta_sum + w.zeta * e_T_last;
        const auto [s, r] = maj::efficiency_index(result.majorant_total, result.error_combined);
        result.i_eff_sqrt = s;
        result.i_eff_ratio = r;
    }
    return result;
}

std::vector<SpacetimeRecord> adapt_spacetime_loop(const prob::ProblemSpec& spec,
                                                  const mesh::SimplicialMesh& st_mesh,
                                                  const AdaptOptions& opts) {
    opts.majorant.check();
    if (opts.criterion == Criterion::true_error && !spec.has_exact) {
        throw std::invalid_argument("true-error marking needs the exact solution");
    }
    if (opts.n_ref < 0) throw std::invalid_argument("negative refinement count");

    std::vector<SpacetimeRecord> records;
    auto cur = std::make_shared<mesh::SimplicialMesh>(st_mesh);

    for (int i = 0;; ++i) {
        SpacetimeRecord rec;
        rec.mesh = cur;
        rec.v = prob::solve_spacetime(spec, *cur);
        auto res = maj::optimize_flux_spacetime(spec, rec.v, opts.majorant);
        rec.y = std::move(res.y);
        rec.report = std::move(res.report);

        if (spec.has_exact) {
            const auto w = maj::bound_weights(opts.majorant, spec.sigma);
            const auto err = prob::energy_error_spacetime(spec, rec.v, w);
            rec.report.error_combined = err.combined;
            const auto [s, r] = maj::efficiency_index(rec.report.total, err.combined);
            rec.report.i_eff_sqrt = s;
            rec.report.i_eff_ratio = r;
        }
        records.push_back(std::move(rec));
        if (i == opts.n_ref) break;

        const auto& back = records.back();
        const std::vector<double> ind =
            opts.criterion == Criterion::indicator
                ? back.report.per_cell_md
                : prob::per_cell_gradient_error_spacetime(spec, back.v);
        const auto marked = mark(ind, opts);
        if (marked.cells.empty()) break;
        cur = std::make_shared<mesh::SimplicialMesh>(mesh::refine(*cur, marked));
    }
    return records;
}

}  // namespace parec::adapt
