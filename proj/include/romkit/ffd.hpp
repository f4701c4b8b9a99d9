#pragma once

#include "romkit/archive.hpp"
#include "romkit/numerics.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace romkit {

using Points3 = Eigen::Matrix<double, 3, Eigen::Dynamic>;  ///< one point per column
using Vec3 = Eigen::Vector3d;

/// Bernstein polynomial B_i^n(s).
double bernstein(Index n, Index i, double s);

/// One parameter-driven coordinate of a control point.
struct ControlDof {
    Index i = 0, j = 0, k = 0;
    int axis = 0;  ///< 0 = x, 1 = y, 2 = z

    bool operator==(const ControlDof&) const = default;
};

/// Bernstein control lattice over an axis-aligned box. A degree of 0 along an
/// axis makes the lattice degenerate there; that coordinate is ignored.
struct FfdLattice {
    Vec3 origin = Vec3::Zero();
    Vec3 extent = Vec3::Ones();
    std::array<Index, 3> degree{2, 2, 2};
    std::vector<Vec3> displacements;  ///< (L+1)(M+1)(N+1) entries, i fastest
    std::vector<ControlDof> active;   ///< declared parameter order

    Index control_count() const { return (degree[0] + 1) * (degree[1] + 1) * (degree[2] + 1); }
    Index index(Index i, Index j, Index k) const { return i + (degree[0] + 1) * (j + (degree[1] + 1) * k); }
    Vec3 control_point(Index i, Index j, Index k) const;
    bool is_identity() const;
    bool contains(const Vec3& x) const;
};

/// Lattice with zero displacements; the default active set is every
/// coordinate of every control point off the outer shell.
FfdLattice make_lattice(const Vec3& origin, const Vec3& extent, std::array<Index, 3> degree);

/// Active coordinates of control points that are not on the outer shell.
std::vector<ControlDof> interior_dofs(const FfdLattice& lattice);

/// Warnings for active control points on the shell; those make the morph
/// discontinuous across the box boundary.
std::vector<std::string> continuity_warnings(const FfdLattice& lattice);

/// FNV-1a checksum of the ordered active-dof registry.
std::uint64_t registry_checksum(const FfdLattice& lattice);

Points3 ffd_morph(const FfdLattice& lattice, const Points3& points);
Vec3 ffd_morph(const FfdLattice& lattice, const Vec3& point);

/// Jacobian of the morph at a point inside the box.
Eigen::Matrix3d ffd_jacobian(const FfdLattice& lattice, const Vec3& point);

/// Smallest Jacobian determinant on a probe grid of `per_axis` points per axis.
double ffd_min_jacobian(const FfdLattice& lattice, Index per_axis = 7);

/// Copies `templ` and writes μ into the active coordinates in declared order.
/// When `expected_checksum` is nonzero it must match the template registry.
FfdLattice ffd_from_parameters(const FfdLattice& templ, const Vector& mu, std::uint64_t expected_checksum = 0);

struct TriMesh {
    Points3 vertices;
    std::vector<std::array<Index, 3>> triangles;

    Index vertex_count() const { return vertices.cols(); }
    Index triangle_count() const { return static_cast<Index>(triangles.size()); }
    void validate() const;
};

/// Signed triangle areas measured against the reference normals: positive
/// when the element keeps its orientation. Planar meshes use +z.
Vector signed_areas(const TriMesh& mesh, const TriMesh& reference);
Vector signed_areas(const TriMesh& planar_mesh);
double mesh_area(const TriMesh& mesh);

struct MorphResult {
    TriMesh mesh;
    double min_area = 0.0;
    double min_quality = 0.0;         ///< 4√3·area / Σ edge² (1 for equilateral)
    std::vector<Index> inverted;      ///< elements with signed area below -1e-12

    bool valid() const { return inverted.empty(); }
    /// Throws NumericalError listing the inverted elements.
    void require_valid() const;
};

MorphResult morph_mesh(const FfdLattice& lattice, const TriMesh& mesh);

void write_mesh(const TriMesh& mesh, const std::filesystem::path& path);
TriMesh read_mesh(const std::filesystem::path& path);
/// Rows `v,x,y,z` and `f,i,j,k` (0-based); blank lines and `#` comments skipped.
TriMesh read_mesh_csv(const std::filesystem::path& path);

void save_lattice(const FfdLattice& lattice, Archive& ar, const std::string& prefix = "ffd");
FfdLattice load_lattice(const Archive& ar, const std::string& prefix = "ffd");

}  // namespace romkit
