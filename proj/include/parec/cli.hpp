// Declarative experiment runner. A run is described by a flat key-value text
// file with [section] headers; the runner builds the problem and mesh from it,
// executes a uniform-refinement or adaptive study with either the incremental
// or the space-time discretization, and writes report.csv plus a readable
// summary.txt. A small library of built-in benchmark configurations covers the
// standard domains (square, cube, L-shape, Pi-shape, interval cylinders).
//
// Exit code contract: 0 success (an explicit-scheme blow-up counts as success,
// detection is the point), 2 configuration error, 3 numerical failure with
// whatever rows were finished already flushed to disk.

#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "parec/adapt.hpp"
#include "parec/majorant.hpp"
#include "parec/mesh.hpp"
#include "parec/parabolic.hpp"

namespace parec::cli {

// Configuration problem with the offending line; line 0 means the problem is
// not tied to a specific line (missing file, inconsistent combination).
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Mirrors the config file: raw expression strings plus plain numbers. Nothing
// is parsed or validated here; build_problem does that and reports failures
// as ConfigError.
struct RunConfig {
    // [problem]
    int dim = 2;
    double sigma = 1.0;
    std::string A = "1";        // scalar coefficient a(x,t) * I
    std::string A_diag;         // alternative: whitespace-separated diagonal entries
    std::string b_x = "0", b_y = "0", b_z = "0";
    std::string c = "0";
    std::string delta_sq = "0";
    double delta0 = 0.0;
    std::string f = "0";
    std::string u_D = "0";
    std::string u_0 = "0";
    double T = 1.0;
    double C_F = 0.0;  // 0 = derive from the domain's bounding box
    double nu_lower_A = 1.0;
    double nu_upper_A = 1.0;
    std::string exact_u;  // empty = no manufactured solution
    std::string exact_grad_x, exact_grad_y, exact_grad_z;
    std::string domain = "box";  // box | polygon
    std::array<double, 3> box_lo{0.0, 0.0, 0.0};
    std::array<double, 3> box_hi{1.0, 1.0, 1.0};
    std::vector<double> polygon;  // x0 y0 x1 y1 ... in loop order

    // [discretisation]
    std::string mode = "timestep";    // timestep | spacetime
    std::string scheme = "implicit";  // implicit | explicit
    int K = 10;                       // time steps of the incremental scheme
    std::array<int, 3> divisions{4, 4, 4};
    int time_divisions = 4;  // space-time mesh layers in t
    double mesh_h = 0.25;    // polygon meshing target edge length
    int flux_degree = 2;

    // [majorant]
    double nu = 1.0;
    double gamma = 1.0;
    std::string mu = "0";
    double beta0 = 1.0;
    int max_rounds = 3;

    // [adaptivity]
    std::string study = "uniform";        // uniform | adaptive
    std::string criterion = "indicator";  // indicator | true_error
    std::string marking = "bulk";         // bulk | average
    double theta = 0.3;
    int n_ref = 4;  // uniform refinements, adaptive space-time refinements,
                    // or refinement passes per slab in adaptive timestep mode

    // [output]
    std::string out_dir = "out";
    bool write_csv = true;
    bool dump_meshes = false;

    // [run]
    unsigned seed = 0;

    bool operator==(const RunConfig&) const = default;
};

// Parses the INI-like text. Unknown sections or keys, duplicate assignments
// and malformed lines raise ConfigError carrying the line number.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);

// Canonical text form; parse_config(dump_config(cfg)) reproduces cfg exactly.
std::string dump_config(const RunConfig& cfg);

// Built-in benchmark library, ids "ex1".."ex6" and "ex8". sigma rescales the
// diffusion-capacity coefficient: "ex8" bakes it into the manufactured
// solution, the other problems drop their exact-solution data since the
// manufactured identity no longer holds. NaN keeps the problem's default.
// "ex7" names the curved-boundary benchmark, which is out of scope; asking
// for it (or an unknown id) raises ConfigError.
RunConfig builtin_problem(const std::string& id, double sigma = 0.0 / 0.0);

// Compiles the expression strings, fills derived data (Friedrichs constant
// when requested) and cross-checks mode/scheme/criterion consistency.
prob::ProblemSpec build_problem(const RunConfig& cfg);

// Spatial mesh for timestep mode; box-cylinder mesh for spacetime mode.
mesh::SimplicialMesh build_initial_mesh(const RunConfig& cfg);
mesh::SimplicialMesh build_spacetime_mesh(const RunConfig& cfg);

// One report.csv line. Label is the refinement index, slab index, "total" for
// the cross-slab summary row of adaptive timestep studies, or "blowup" for a
// detected explicit-scheme blow-up. Unavailable values are NaN and print as
// "nan".
struct RunRow {
    std::string label;
    int n_cells = 0;
    int n_dofs = 0;
    double e_total, m_d, m_eq, majorant_total, i_eff_sqrt, i_eff_ratio;
    double wall_ms = 0.0;

    RunRow();
};

struct RunResult {
    std::vector<RunRow> rows;
    int exit_code = 0;
    std::string status;  // "ok", blow-up notice, or the failure message
};

inline constexpr const char* kCsvHeader =
    "ref_or_slab,n_cells,n_dofs,e_total,m_d,m_eq,majorant_total,i_eff_sqrt,i_eff_ratio,wall_ms";

std::string csv_line(const RunRow& row);

// Executes the study described by cfg and writes report.csv / summary.txt
// (and mesh dumps when asked) under out_dir, which is created if missing.
// Rows are flushed as they are produced so a numerical failure still leaves
// the finished part on disk. In deterministic mode wall_ms is reported as 0,
// making back-to-back runs byte-identical.
RunResult run_study(const RunConfig& cfg, const std::string& out_dir, bool deterministic);

// The full command line front end (flag parsing, config loading, dispatch);
// tools/parec_run.cpp forwards straight here, tests drive it with argv arrays.
int main_cli(int argc, const char* const* argv);

}  // namespace parec::cli
