#include "romkit/ffd.hpp"

#include "romkit/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace romkit {

double bernstein(Index n, Index i, double s) {
    if (i < 0 || i > n) return 0.0;
    double binom = 1.0;
    for (Index t = 1; t <= i; ++t) binom = binom * double(n - i + t) / double(t);
    return binom * std::pow(s, double(i)) * std::pow(1.0 - s, double(n - i));
}

namespace {

double bernstein_slope(Index n, Index i, double s) {
    if (n == 0) return 0.0;
    return double(n) * (bernstein(n - 1, i - 1, s) - bernstein(n - 1, i, s));
}

bool degenerate(const FfdLattice& l, int axis) { return l.degree[static_cast<std::size_t>(axis)] == 0; }

Vec3 local_coords(const FfdLattice& l, const Vec3& x) {
    return ((x - l.origin).array() / l.extent.array()).matrix();
}

void check_lattice(const FfdLattice& l) {
    if (!(l.extent.array() > 0.0).all()) throw ConfigError("ffd lattice: box extents must be positive");
    for (Index d : l.degree)
        if (d < 0) throw ConfigError("ffd lattice: degrees must be >= 0");
    if (static_cast<Index>(l.displacements.size()) != l.control_count())
        throw ConfigError("ffd lattice: displacement count does not match the control grid");
}

}  // namespace

Vec3 FfdLattice::control_point(Index i, Index j, Index k) const {
    const std::array<Index, 3> idx{i, j, k};
    Vec3 p = origin;
    for (std::size_t a = 0; a < 3; ++a)
        if (degree[a] > 0) p(static_cast<Index>(a)) += extent(static_cast<Index>(a)) * double(idx[a]) / double(degree[a]);
    return p + displacements[static_cast<std::size_t>(index(i, j, k))];
}

bool FfdLattice::is_identity() const {
    return std::all_of(displacements.begin(), displacements.end(), [](const Vec3& d) { return (d.array() == 0.0).all(); });
}

bool FfdLattice::contains(const Vec3& x) const {
    const Vec3 s = local_coords(*this, x);
    for (int a = 0; a < 3; ++a)
        if (!degenerate(*this, a) && !(s(a) >= 0.0 && s(a) <= 1.0)) return false;
    return true;
}

std::vector<ControlDof> interior_dofs(const FfdLattice& lattice) {
    auto inner = [&](Index v, int axis) {
        const Index n = lattice.degree[static_cast<std::size_t>(axis)];
        return n == 0 || (v > 0 && v < n);
    };
    std::vector<ControlDof> dofs;
    for (Index k = 0; k <= lattice.degree[2]; ++k)
        for (Index j = 0; j <= lattice.degree[1]; ++j)
            for (Index i = 0; i <= lattice.degree[0]; ++i) {
                if (!inner(i, 0) || !inner(j, 1) || !inner(k, 2)) continue;
                for (int axis = 0; axis < 3; ++axis)
                    if (!degenerate(lattice, axis)) dofs.push_back({i, j, k, axis});
            }
    return dofs;
}

FfdLattice make_lattice(const Vec3& origin, const Vec3& extent, std::array<Index, 3> degree) {
    FfdLattice l;
    l.origin = origin;
    l.extent = extent;
    l.degree = degree;
    l.displacements.assign(static_cast<std::size_t>(l.control_count()), Vec3::Zero());
    check_lattice(l);
    l.active = interior_dofs(l);
    return l;
}

std::vector<std::string> continuity_warnings(const FfdLattice& lattice) {
    std::vector<std::string> out;
    for (const ControlDof& d : lattice.active) {
        const std::array<Index, 3> idx{d.i, d.j, d.k};
        for (std::size_t a = 0; a < 3; ++a) {
            const Index n = lattice.degree[a];
            if (n > 0 && (idx[a] == 0 || idx[a] == n)) {
                out.push_back("control point (" + std::to_string(d.i) + "," + std::to_string(d.j) + "," +
                              std::to_string(d.k) + ") lies on the lattice shell; the morph is discontinuous at the box boundary");
                break;
            }
        }
    }
    return out;
}

std::uint64_t registry_checksum(const FfdLattice& lattice) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    };
    for (Index d : lattice.degree) mix(static_cast<std::uint64_t>(d));
    for (const ControlDof& d : lattice.active) {
        mix(static_cast<std::uint64_t>(d.i));
        mix(static_cast<std::uint64_t>(d.j));
        mix(static_cast<std::uint64_t>(d.k));
        mix(static_cast<std::uint64_t>(d.axis));
    }
    return h;
}

Vec3 ffd_morph(const FfdLattice& lattice, const Vec3& point) {
    if (lattice.is_identity() || !lattice.contains(point)) return point;
    const Vec3 s = local_coords(lattice, point);
    std::array<std::vector<double>, 3> w;
    for (std::size_t a = 0; a < 3; ++a) {
        const Index n = lattice.degree[a];
        for (Index i = 0; i <= n; ++i) w[a].push_back(n == 0 ? 1.0 : bernstein(n, i, s(static_cast<Index>(a))));
    }
    Vec3 shift = Vec3::Zero();
    for (Index k = 0; k <= lattice.degree[2]; ++k)
        for (Index j = 0; j <= lattice.degree[1]; ++j)
            for (Index i = 0; i <= lattice.degree[0]; ++i) {
                const Vec3& d = lattice.displacements[static_cast<std::size_t>(lattice.index(i, j, k))];
                if ((d.array() == 0.0).all()) continue;
                shift += (w[0][static_cast<std::size_t>(i)] * w[1][static_cast<std::size_t>(j)] *
                          w[2][static_cast<std::size_t>(k)]) * d;
            }
    return point + shift;
}

Points3 ffd_morph(const FfdLattice& lattice, const Points3& points) {
    check_lattice(lattice);
    if (lattice.is_identity()) return points;
    Points3 out(3, points.cols());
    for (Index c = 0; c < points.cols(); ++c) out.col(c) = ffd_morph(lattice, Vec3(points.col(c)));
    return out;
}

Eigen::Matrix3d ffd_jacobian(const FfdLattice& lattice, const Vec3& point) {
    const Vec3 s = local_coords(lattice, point);
    std::array<std::vector<double>, 3> w, dw;
    for (std::size_t a = 0; a < 3; ++a) {
        const Index n = lattice.degree[a];
        const auto ai = static_cast<Index>(a);
        for (Index i = 0; i <= n; ++i) {
            w[a].push_back(n == 0 ? 1.0 : bernstein(n, i, s(ai)));
            dw[a].push_back(n == 0 ? 0.0 : bernstein_slope(n, i, s(ai)) / lattice.extent(ai));
        }
    }
    Eigen::Matrix3d jac = Eigen::Matrix3d::Identity();
    for (Index k = 0; k <= lattice.degree[2]; ++k)
        for (Index j = 0; j <= lattice.degree[1]; ++j)
            for (Index i = 0; i <= lattice.degree[0]; ++i) {
                const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j), uk = static_cast<std::size_t>(k);
                const Vec3 grad(dw[0][ui] * w[1][uj] * w[2][uk], w[0][ui] * dw[1][uj] * w[2][uk],
                                w[0][ui] * w[1][uj] * dw[2][uk]);
                jac += lattice.displacements[static_cast<std::size_t>(lattice.index(i, j, k))] * grad.transpose();
            }
    return jac;
}

double ffd_min_jacobian(const FfdLattice& lattice, Index per_axis) {
    check_lattice(lattice);
    if (per_axis < 2) throw ConfigError("ffd_min_jacobian: need at least 2 probes per axis");
    std::array<Index, 3> counts{};
    for (int a = 0; a < 3; ++a) counts[static_cast<std::size_t>(a)] = degenerate(lattice, a) ? 1 : per_axis;
    double worst = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < counts[2]; ++k)
        for (Index j = 0; j < counts[1]; ++j)
            for (Index i = 0; i < counts[0]; ++i) {
                const std::array<Index, 3> idx{i, j, k};
                Vec3 x = lattice.origin;
                for (std::size_t a = 0; a < 3; ++a)
                    if (counts[a] > 1)
                        x(static_cast<Index>(a)) += lattice.extent(static_cast<Index>(a)) * double(idx[a]) / double(counts[a] - 1);
                worst = std::min(worst, ffd_jacobian(lattice, x).determinant());
            }
    return worst;
}

FfdLattice ffd_from_parameters(const FfdLattice& templ, const Vector& mu, std::uint64_t expected_checksum) {
    check_lattice(templ);
    if (mu.size() != static_cast<Index>(templ.active.size()))
        throw ConfigError("ffd_from_parameters: expected " + std::to_string(templ.active.size()) +
                          " parameters, got " + std::to_string(mu.size()));
    if (expected_checksum != 0 && expected_checksum != registry_checksum(templ))
        throw ConfigError("ffd_from_parameters: control-dof registry does not match the declared ordering");
    FfdLattice out = templ;
    for (std::size_t p = 0; p < templ.active.size(); ++p) {
        const ControlDof& d = templ.active[p];
        if (d.i < 0 || d.i > templ.degree[0] || d.j < 0 || d.j > templ.degree[1] || d.k < 0 || d.k > templ.degree[2] ||
            d.axis < 0 || d.axis > 2)
            throw ConfigError("ffd_from_parameters: active control dof out of range");
        out.displacements[static_cast<std::size_t>(out.index(d.i, d.j, d.k))](d.axis) += mu(static_cast<Index>(p));
    }
    return out;
}

void TriMesh::validate() const {
    for (const auto& t : triangles)
        for (Index v : t)
            if (v < 0 || v >= vertex_count()) throw ConfigError("mesh: triangle references a missing vertex");
}

namespace {

Vec3 edge_cross(const TriMesh& m, const std::array<Index, 3>& t) {
    const Vec3 a = m.vertices.col(t[0]), b = m.vertices.col(t[1]), c = m.vertices.col(t[2]);
    return (b - a).cross(c - a);
}

}  // namespace

Vector signed_areas(const TriMesh& mesh, const TriMesh& reference) {
    if (mesh.triangles != reference.triangles) throw ConfigError("signed_areas: connectivity differs from the reference");
    Vector out(mesh.triangle_count());
    for (Index e = 0; e < out.size(); ++e) {
        const auto& t = mesh.triangles[static_cast<std::size_t>(e)];
        const Vec3 now = edge_cross(mesh, t);
        const Vec3 ref = edge_cross(reference, t);
        const double rn = ref.norm();
        out(e) = rn > 0.0 ? 0.5 * now.dot(ref) / rn : 0.5 * now.norm();
    }
    return out;
}

Vector signed_areas(const TriMesh& planar_mesh) {
    Vector out(planar_mesh.triangle_count());
    for (Index e = 0; e < out.size(); ++e) out(e) = 0.5 * edge_cross(planar_mesh, planar_mesh.triangles[static_cast<std::size_t>(e)])(2);
    return out;
}

double mesh_area(const TriMesh& mesh) {
    double total = 0.0;
    for (const auto& t : mesh.triangles) total += 0.5 * edge_cross(mesh, t).norm();
    return total;
}

void MorphResult::require_valid() const {
    if (valid()) return;
    std::string list;
    for (std::size_t i = 0; i < inverted.size() && i < 20; ++i) list += (i ? ", " : "") + std::to_string(inverted[i]);
    if (inverted.size() > 20) list += ", ...";
    throw NumericalError("morphed mesh has " + std::to_string(inverted.size()) + " inverted elements: " + list);
}

MorphResult morph_mesh(const FfdLattice& lattice, const TriMesh& mesh) {
    mesh.validate();
    MorphResult result;
    result.mesh.triangles = mesh.triangles;
    result.mesh.vertices = ffd_morph(lattice, mesh.vertices);
    const Vector areas = signed_areas(result.mesh, mesh);
    result.min_area = areas.size() ? areas.minCoeff() : 0.0;
    result.min_quality = areas.size() ? 1.0 : 0.0;
    for (Index e = 0; e < areas.size(); ++e) {
        if (areas(e) < -1e-12) result.inverted.push_back(e);
        const auto& t = mesh.triangles[static_cast<std::size_t>(e)];
        const Points3& v = result.mesh.vertices;
        const double edges = (v.col(t[1]) - v.col(t[0])).squaredNorm() + (v.col(t[2]) - v.col(t[1])).squaredNorm() +
                             (v.col(t[0]) - v.col(t[2])).squaredNorm();
        const double q = edges > 0.0 ? 4.0 * std::sqrt(3.0) * areas(e) / edges : 0.0;
        result.min_quality = std::min(result.min_quality, q);
    }
    return result;
}

void write_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open mesh file for writing: " + path.string());
    out.precision(17);
    out << mesh.vertex_count() << '\n';
    for (Index c = 0; c < mesh.vertex_count(); ++c)
        out << mesh.vertices(0, c) << ' ' << mesh.vertices(1, c) << ' ' << mesh.vertices(2, c) << '\n';
    out << mesh.triangle_count() << '\n';
    for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    if (!out) throw IoError("failed writing mesh file: " + path.string());
}

TriMesh read_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh file: " + path.string());
    TriMesh mesh;
    long long nv = -1, nt = -1;
    if (!(in >> nv) || nv < 0) throw IoError(path.string() + ": missing vertex count");
    mesh.vertices.resize(3, nv);
    for (long long c = 0; c < nv; ++c)
        if (!(in >> mesh.vertices(0, c) >> mesh.vertices(1, c) >> mesh.vertices(2, c)))
            throw IoError(path.string() + ": vertex " + std::to_string(c) + " is malformed");
    if (!(in >> nt) || nt < 0) throw IoError(path.string() + ": missing triangle count");
    mesh.triangles.resize(static_cast<std::size_t>(nt));
    for (auto& t : mesh.triangles)
        if (!(in >> t[0] >> t[1] >> t[2])) throw IoError(path.string() + ": triangle list is truncated");
    try {
        mesh.validate();
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return mesh;
}

TriMesh read_mesh_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh file: " + path.string());
    std::vector<Vec3> verts;
    TriMesh mesh;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        auto fail = [&] { return IoError(path.string() + ":" + std::to_string(lineno) + ": malformed mesh row"); };
        if (cells.size() != 4) throw fail();
        if (cells[0] == "v") {
            Vec3 p;
            for (int a = 0; a < 3; ++a) {
                const std::string& s = cells[static_cast<std::size_t>(a + 1)];
                auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), p(a));
                if (ec != std::errc() || ptr != s.data() + s.size()) throw fail();
            }
            verts.push_back(p);
        } else if (cells[0] == "f") {
            std::array<Index, 3> t{};
            for (int a = 0; a < 3; ++a) {
                const std::string& s = cells[static_cast<std::size_t>(a + 1)];
                auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), t[static_cast<std::size_t>(a)]);
                if (ec != std::errc() || ptr != s.data() + s.size()) throw fail();
            }
            mesh.triangles.push_back(t);
        } else {
            throw fail();
        }
    }
    mesh.vertices.resize(3, static_cast<Index>(verts.size()));
    for (std::size_t c = 0; c < verts.size(); ++c) mesh.vertices.col(static_cast<Index>(c)) = verts[c];
    try {
        mesh.validate();
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return mesh;
}

void save_lattice(const FfdLattice& lattice, Archive& ar, const std::string& prefix) {
    ar.put(prefix + ".origin", Matrix(lattice.origin));
    ar.put(prefix + ".extent", Matrix(lattice.extent));
    ar.put(prefix + ".degree", Matrix(Vec3(double(lattice.degree[0]), double(lattice.degree[1]), double(lattice.degree[2]))));
    Matrix disp(3, lattice.control_count());
    for (Index c = 0; c < disp.cols(); ++c) disp.col(c) = lattice.displacements[static_cast<std::size_t>(c)];
    ar.put(prefix + ".displacements", disp);
    Matrix act(4, static_cast<Index>(lattice.active.size()));
    for (Index c = 0; c < act.cols(); ++c) {
        const ControlDof& d = lattice.active[static_cast<std::size_t>(c)];
        act.col(c) << double(d.i), double(d.j), double(d.k), double(d.axis);
    }
    ar.put(prefix + ".active", act);
    ar.put_text(prefix + ".checksum", std::to_string(registry_checksum(lattice)));
}

FfdLattice load_lattice(const Archive& ar, const std::string& prefix) {
    FfdLattice l;
    const Vector origin = ar.vector(prefix + ".origin"), extent = ar.vector(prefix + ".extent"),
                 degree = ar.vector(prefix + ".degree");
    if (origin.size() != 3 || extent.size() != 3 || degree.size() != 3) throw IoError("lattice archive: malformed box");
    l.origin = origin;
    l.extent = extent;
    for (std::size_t a = 0; a < 3; ++a) l.degree[a] = static_cast<Index>(degree(static_cast<Index>(a)));
    const Matrix& disp = ar.matrix(prefix + ".displacements");
    if (disp.rows() != 3 || disp.cols() != l.control_count()) throw IoError("lattice archive: displacement block has wrong shape");
    for (Index c = 0; c < disp.cols(); ++c) l.displacements.push_back(disp.col(c));
    const Matrix& act = ar.matrix(prefix + ".active");
    for (Index c = 0; c < act.cols(); ++c)
        l.active.push_back({static_cast<Index>(act(0, c)), static_cast<Index>(act(1, c)), static_cast<Index>(act(2, c)),
                            static_cast<int>(act(3, c))});
    if (ar.text(prefix + ".checksum") != std::to_string(registry_checksum(l)))
        throw IoError("lattice archive: control-dof registry checksum mismatch");
    return l;
}

}  // namespace romkit
