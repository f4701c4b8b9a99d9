#pragma once

#include "romkit/dataset.hpp"
#include "romkit/ffd.hpp"
#include "romkit/galerkin.hpp"
#include "romkit/numerics.hpp"

#include <chrono>
#include <functional>
#include <string>

namespace romkit {

/// Monotonic wall-clock timer.
class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_;
};

// --- lid-driven cavity --------------------------------------------------------------

struct CavityConfig {
    Index cells = 64;           ///< per side, unit square
    double dt = 0.005;
    double final_time = 10.0;
    Index snapshot_count = 100; ///< evenly spaced over (0, final_time]
    double lid_velocity = 1.0;
    double pressure_tolerance = 1e-10;  ///< max-norm residual of the pressure equation
    Index pressure_max_iterations = 20000;

    Index steps() const;
    Index stride() const;
    void validate(double nu) const;
};

struct CavityResult {
    /// Columns hold [u; v] at cell centers (cells² each, x fastest), one per stored time.
    SnapshotSet snapshots;
    double wall_seconds = 0.0;
    double max_divergence = 0.0;       ///< over stored snapshots, face-velocity divergence max-norm
    Index max_pressure_iterations = 0;
};

/// Staggered-grid Chorin projection: explicit donor-cell advection and
/// diffusion, Jacobi-preconditioned CG for the pressure, velocity correction.
CavityResult solve_cavity(const CavityConfig& config, double nu);

// --- affine diffusion ("thermal block") ---------------------------------------------

struct DiffusionConfig {
    Index interior = 31;  ///< interior nodes per side; h = 1 / (interior + 1)
    Index blocks_x = 2;
    Index blocks_y = 2;
    /// Source evaluated at grid nodes.
    std::function<double(double, double)> forcing = [](double, double) { return 1.0; };

    double h() const { return 1.0 / double(interior + 1); }
    Index blocks() const { return blocks_x * blocks_y; }
};

/// -∇·(κ(μ)∇u) = f on the unit square, u = 0 on the boundary, five-point
/// stencil with edge conductivities taken from the block containing each edge
/// midpoint. κ = 1 on block 0 and μ_{b-1} on block b; block index runs x fastest.
AffineProblem diffusion_problem(const DiffusionConfig& config);

/// Default parameter box [0.1, 10]^(blocks - 1).
ParameterSpace diffusion_space(const DiffusionConfig& config);

/// Node coordinates (2 x N), x fastest.
Matrix diffusion_nodes(const DiffusionConfig& config);

/// Discrete L2 norm h·‖e‖₂ of a nodal vector.
double diffusion_l2(const DiffusionConfig& config, const Vector& e);

// --- Poisson on an FFD-morphed domain -----------------------------------------------

/// Disk of radius `radius` made of `rings` concentric rings (6 n² triangles).
TriMesh disk_mesh(Index rings, double radius = 1.0);
/// Unit square [0,1]² split into n x n squares, two triangles each.
TriMesh square_mesh(Index n);
/// Vertices that lie on boundary edges (edges used by a single triangle).
std::vector<bool> boundary_vertices(const TriMesh& mesh);
/// Area-weighted centroid.
Vec3 mesh_barycenter(const TriMesh& mesh);

using PlaneFn = std::function<double(double, double)>;

struct MorphedPoissonConfig {
    TriMesh reference = disk_mesh(18);
    FfdLattice lattice;  ///< template; parameters fill its active dofs
    /// Δu = s(x) with u = g on the boundary. When empty, s = exp(-|x-x_n|²) and
    /// g = exp(-|x-x_n|) with x_n the morphed barycenter.
    PlaneFn source;
    PlaneFn dirichlet;
    int quadrature_order = 5;  ///< 1, 2 or 5 (exact polynomial degree)

    /// Disk mesh with a degree-2 planar lattice whose center control point moves along x.
    static MorphedPoissonConfig disk_default(Index rings = 18);
};

struct PoissonSolution {
    Vector u;  ///< nodal values on all vertices
    TriMesh mesh;
    Vec3 barycenter = Vec3::Zero();
    double wall_seconds = 0.0;
};

PoissonSolution solve_morphed_poisson(const MorphedPoissonConfig& config, const Vector& mu);

/// Default parameter interval [-0.4, 0.4] per active dof.
ParameterSpace morphed_poisson_space(const MorphedPoissonConfig& config);

/// L2 norm of (u_h - exact) over the mesh using a degree-5 rule.
double fem_l2_error(const TriMesh& mesh, const Vector& u, const PlaneFn& exact);

/// Symmetric quadrature rule on the reference triangle: barycentric points and weights summing to 1.
struct TriangleRule {
    std::vector<Vec3> points;
    std::vector<double> weights;
};
TriangleRule triangle_rule(int order);

}  // namespace romkit
