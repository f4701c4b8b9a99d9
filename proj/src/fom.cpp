#include "romkit/fom.hpp"

#include "romkit/error.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace romkit {

// --- lid-driven cavity --------------------------------------------------------------

Index CavityConfig::steps() const { return static_cast<Index>(std::llround(final_time / dt)); }

Index CavityConfig::stride() const { return steps() / snapshot_count; }

void CavityConfig::validate(double nu) const {
    if (cells < 2) throw ConfigError("cavity: need at least 2 cells per side");
    if (!(dt > 0.0) || !(final_time > 0.0)) throw ConfigError("cavity: dt and final time must be positive");
    if (!(nu > 0.0)) throw ConfigError("cavity: viscosity must be positive");
    if (snapshot_count < 1) throw ConfigError("cavity: snapshot count must be >= 1");
    const Index n = steps();
    if (std::abs(double(n) * dt - final_time) > 1e-9 * final_time)
        throw ConfigError("cavity: final time is not a whole number of steps");
    if (n % snapshot_count != 0) throw ConfigError("cavity: step count is not a multiple of the snapshot count");
    const double h = 1.0 / double(cells);
    if (nu * dt / (h * h) > 0.25)
        throw ConfigError("cavity: explicit diffusion limit violated (nu dt / h^2 = " + std::to_string(nu * dt / (h * h)) +
                          " > 0.25)");
    if (!(pressure_tolerance > 0.0) || pressure_max_iterations < 1)
        throw ConfigError("cavity: invalid pressure solver settings");
}

namespace {

class CavitySolver {
public:
    CavitySolver(const CavityConfig& c, double nu)
        : c_(c), nu_(nu), n_(c.cells), h_(1.0 / double(c.cells)),
          u_((n_ + 1) * (n_ + 2), 0.0), v_((n_ + 2) * (n_ + 1), 0.0), f_(u_.size(), 0.0), g_(v_.size(), 0.0),
          phi_(n_ * n_, 0.0), rhs_(n_ * n_, 0.0), r_(n_ * n_), z_(n_ * n_), p_(n_ * n_), q_(n_ * n_) {}

    CavityResult run() {
        CavityResult out;
        const Index steps = c_.steps(), stride = c_.stride();
        Matrix states(2 * n_ * n_, c_.snapshot_count);
        Vector times(c_.snapshot_count);
        Index stored = 0;
        for (Index s = 1; s <= steps; ++s) {
            step(out);
            if (s % stride == 0) {
                out.max_divergence = std::max(out.max_divergence, divergence());
                states.col(stored) = centered();
                times(stored) = double(s) * c_.dt;
                ++stored;
            }
        }
        Matrix params = Matrix::Constant(1, c_.snapshot_count, nu_);
        out.snapshots = SnapshotSet(std::move(states), std::move(params), std::move(times),
                                    "cavity cells=" + std::to_string(n_) + " fields=u,v");
        return out;
    }

private:
    double& u(Index i, Index j) { return u_[static_cast<std::size_t>(i + (n_ + 1) * j)]; }
    double& v(Index i, Index j) { return v_[static_cast<std::size_t>(i + (n_ + 2) * j)]; }
    double& F(Index i, Index j) { return f_[static_cast<std::size_t>(i + (n_ + 1) * j)]; }
    double& G(Index i, Index j) { return g_[static_cast<std::size_t>(i + (n_ + 2) * j)]; }
    static std::size_t cell(Index i, Index j, Index n) { return static_cast<std::size_t>((i - 1) + n * (j - 1)); }

    void boundary() {
        for (Index j = 1; j <= n_; ++j) u(0, j) = u(n_, j) = 0.0;
        for (Index i = 0; i <= n_; ++i) {
            u(i, 0) = -u(i, 1);
            u(i, n_ + 1) = 2.0 * c_.lid_velocity - u(i, n_);
        }
        for (Index i = 1; i <= n_; ++i) v(i, 0) = v(i, n_) = 0.0;
        for (Index j = 0; j <= n_; ++j) {
            v(0, j) = -v(1, j);
            v(n_ + 1, j) = -v(n_, j);
        }
    }

    void step(CavityResult& out) {
        boundary();
        double umax = 0.0, vmax = 0.0;
        for (double x : u_) umax = std::max(umax, std::abs(x));
        for (double x : v_) vmax = std::max(vmax, std::abs(x));
        const double cfl = std::max(umax, vmax) * c_.dt / h_;
        if (!(cfl <= 1.0)) throw NumericalError("cavity: CFL condition violated (u_max dt / h = " + std::to_string(cfl) + ")");
        const double gamma = std::min(1.0, cfl);
        const double dt = c_.dt, h = h_, ih = 1.0 / h_, ih2 = 1.0 / (h_ * h_);

        for (Index j = 1; j <= n_; ++j) {
            F(0, j) = u(0, j);
            F(n_, j) = u(n_, j);
            for (Index i = 1; i < n_; ++i) {
                const double lap = (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j) + u(i, j + 1) - 2.0 * u(i, j) + u(i, j - 1)) * ih2;
                const double ur = 0.5 * (u(i, j) + u(i + 1, j)), ul = 0.5 * (u(i - 1, j) + u(i, j));
                const double du2 = ih * (ur * ur - ul * ul) +
                                   gamma * ih * (std::abs(ur) * 0.5 * (u(i, j) - u(i + 1, j)) - std::abs(ul) * 0.5 * (u(i - 1, j) - u(i, j)));
                const double vt = 0.5 * (v(i, j) + v(i + 1, j)), vb = 0.5 * (v(i, j - 1) + v(i + 1, j - 1));
                const double duv = ih * (vt * 0.5 * (u(i, j) + u(i, j + 1)) - vb * 0.5 * (u(i, j - 1) + u(i, j))) +
                                   gamma * ih * (std::abs(vt) * 0.5 * (u(i, j) - u(i, j + 1)) - std::abs(vb) * 0.5 * (u(i, j - 1) - u(i, j)));
                F(i, j) = u(i, j) + dt * (nu_ * lap - du2 - duv);
            }
        }
        for (Index i = 1; i <= n_; ++i) {
            G(i, 0) = v(i, 0);
            G(i, n_) = v(i, n_);
            for (Index j = 1; j < n_; ++j) {
                const double lap = (v(i + 1, j) - 2.0 * v(i, j) + v(i - 1, j) + v(i, j + 1) - 2.0 * v(i, j) + v(i, j - 1)) * ih2;
                const double ur = 0.5 * (u(i, j) + u(i, j + 1)), ul = 0.5 * (u(i - 1, j) + u(i - 1, j + 1));
                const double duv = ih * (ur * 0.5 * (v(i, j) + v(i + 1, j)) - ul * 0.5 * (v(i - 1, j) + v(i, j))) +
                                   gamma * ih * (std::abs(ur) * 0.5 * (v(i, j) - v(i + 1, j)) - std::abs(ul) * 0.5 * (v(i - 1, j) - v(i, j)));
                const double vt = 0.5 * (v(i, j) + v(i, j + 1)), vb = 0.5 * (v(i, j - 1) + v(i, j));
                const double dv2 = ih * (vt * vt - vb * vb) +
                                   gamma * ih * (std::abs(vt) * 0.5 * (v(i, j) - v(i, j + 1)) - std::abs(vb) * 0.5 * (v(i, j - 1) - v(i, j)));
                G(i, j) = v(i, j) + dt * (nu_ * lap - duv - dv2);
            }
        }

        double mean = 0.0;
        for (Index j = 1; j <= n_; ++j)
            for (Index i = 1; i <= n_; ++i) {
                const double d = (F(i, j) - F(i - 1, j) + G(i, j) - G(i, j - 1)) * ih;
                rhs_[cell(i, j, n_)] = d;
                mean += d;
            }
        mean /= double(n_ * n_);
        for (double& x : rhs_) x -= mean;
        out.max_pressure_iterations = std::max(out.max_pressure_iterations, pressure());

        for (Index j = 1; j <= n_; ++j)
            for (Index i = 1; i < n_; ++i) u(i, j) = F(i, j) - (phi_[cell(i + 1, j, n_)] - phi_[cell(i, j, n_)]) / h;
        for (Index j = 1; j < n_; ++j)
            for (Index i = 1; i <= n_; ++i) v(i, j) = G(i, j) - (phi_[cell(i, j + 1, n_)] - phi_[cell(i, j, n_)]) / h;
        boundary();
        for (double x : u_)
            if (!std::isfinite(x)) throw NumericalError("cavity: velocity became non-finite");
    }

    // y = -L x with the Neumann five-point Laplacian.
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        const double ih2 = 1.0 / (h_ * h_);
        for (Index j = 1; j <= n_; ++j)
            for (Index i = 1; i <= n_; ++i) {
                const double xc = x[cell(i, j, n_)];
                double s = 0.0;
                if (i > 1) s += xc - x[cell(i - 1, j, n_)];
                if (i < n_) s += xc - x[cell(i + 1, j, n_)];
                if (j > 1) s += xc - x[cell(i, j - 1, n_)];
                if (j < n_) s += xc - x[cell(i, j + 1, n_)];
                y[cell(i, j, n_)] = s * ih2;
            }
    }

    double diag(Index i, Index j) const {
        const int nb = (i > 1) + (i < n_) + (j > 1) + (j < n_);
        return double(nb) / (h_ * h_);
    }

    static double inf_norm(const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m = std::max(m, std::abs(v));
        return m;
    }

    // Solves -L phi = -rhs by Jacobi-preconditioned CG, warm-started from the previous phi.
    Index pressure() {
        const std::size_t m = phi_.size();
        Index iterations = 0;
        for (int restart = 0; restart < 4; ++restart) {
            apply(phi_, q_);
            for (std::size_t k = 0; k < m; ++k) r_[k] = -rhs_[k] - q_[k];
            if (inf_norm(r_) <= c_.pressure_tolerance) return iterations;
            double rz = 0.0;
            for (Index j = 1; j <= n_; ++j)
                for (Index i = 1; i <= n_; ++i) {
                    const std::size_t k = cell(i, j, n_);
                    z_[k] = r_[k] / diag(i, j);
                    p_[k] = z_[k];
                    rz += r_[k] * z_[k];
                }
            while (iterations < c_.pressure_max_iterations) {
                ++iterations;
                apply(p_, q_);
                double pq = 0.0;
                for (std::size_t k = 0; k < m; ++k) pq += p_[k] * q_[k];
                if (!(pq > 0.0)) break;
                const double alpha = rz / pq;
                for (std::size_t k = 0; k < m; ++k) {
                    phi_[k] += alpha * p_[k];
                    r_[k] -= alpha * q_[k];
                }
                if (inf_norm(r_) <= 0.5 * c_.pressure_tolerance) break;
                double rz_new = 0.0;
                for (Index j = 1; j <= n_; ++j)
                    for (Index i = 1; i <= n_; ++i) {
                        const std::size_t k = cell(i, j, n_);
                        z_[k] = r_[k] / diag(i, j);
                        rz_new += r_[k] * z_[k];
                    }
                const double beta = rz_new / rz;
                rz = rz_new;
                for (std::size_t k = 0; k < m; ++k) p_[k] = z_[k] + beta * p_[k];
            }
            if (iterations >= c_.pressure_max_iterations) break;
        }
        apply(phi_, q_);
        for (std::size_t k = 0; k < m; ++k) r_[k] = -rhs_[k] - q_[k];
        if (inf_norm(r_) > c_.pressure_tolerance)
            throw NumericalError("cavity: pressure solve did not reach tolerance within " +
                                 std::to_string(c_.pressure_max_iterations) + " iterations (residual " +
                                 std::to_string(inf_norm(r_)) + ")");
        return iterations;
    }

    double divergence() {
        double m = 0.0;
        for (Index j = 1; j <= n_; ++j)
            for (Index i = 1; i <= n_; ++i)
                m = std::max(m, std::abs((u(i, j) - u(i - 1, j) + v(i, j) - v(i, j - 1)) / h_));
        return m;
    }

    Vector centered() {
        Vector s(2 * n_ * n_);
        for (Index j = 1; j <= n_; ++j)
            for (Index i = 1; i <= n_; ++i) {
                const auto k = static_cast<Index>(cell(i, j, n_));
                s(k) = 0.5 * (u(i, j) + u(i - 1, j));
                s(n_ * n_ + k) = 0.5 * (v(i, j) + v(i, j - 1));
            }
        return s;
    }

    const CavityConfig& c_;
    double nu_;
    Index n_;
    double h_;
    std::vector<double> u_, v_, f_, g_, phi_, rhs_, r_, z_, p_, q_;
};

}  // namespace

CavityResult solve_cavity(const CavityConfig& config, double nu) {
    config.validate(nu);
    Stopwatch clock;
    CavityResult out = CavitySolver(config, nu).run();
    out.wall_seconds = clock.seconds();
    return out;
}

// --- affine diffusion ---------------------------------------------------------------

AffineProblem diffusion_problem(const DiffusionConfig& config) {
    const Index n = config.interior;
    if (n < 1) throw ConfigError("diffusion: need at least one interior node per side");
    if (config.blocks_x < 1 || config.blocks_y < 1) throw ConfigError("diffusion: block counts must be >= 1");
    if (!config.forcing) throw ConfigError("diffusion: missing forcing function");
    const double h = config.h(), ih2 = 1.0 / (h * h);
    const Index N = n * n, B = config.blocks();
    auto node = [n](Index i, Index j) { return (i - 1) + n * (j - 1); };
    // Twice the coordinate in grid units keeps the block lookup exact.
    auto block = [&](Index x2, Index y2) {
        const Index bx = std::min(x2 * config.blocks_x / (2 * (n + 1)), config.blocks_x - 1);
        const Index by = std::min(y2 * config.blocks_y / (2 * (n + 1)), config.blocks_y - 1);
        return bx + config.blocks_x * by;
    };

    std::vector<std::vector<Eigen::Triplet<double>>> trips(static_cast<std::size_t>(B));
    auto edge = [&](Index b, Index i0, Index j0, Index i1, Index j1) {
        auto& t = trips[static_cast<std::size_t>(b)];
        const bool in0 = i0 >= 1 && i0 <= n && j0 >= 1 && j0 <= n;
        const bool in1 = i1 >= 1 && i1 <= n && j1 >= 1 && j1 <= n;
        if (in0) t.emplace_back(node(i0, j0), node(i0, j0), ih2);
        if (in1) t.emplace_back(node(i1, j1), node(i1, j1), ih2);
        if (in0 && in1) {
            t.emplace_back(node(i0, j0), node(i1, j1), -ih2);
            t.emplace_back(node(i1, j1), node(i0, j0), -ih2);
        }
    };
    for (Index j = 1; j <= n; ++j)
        for (Index i = 0; i <= n; ++i) edge(block(2 * i + 1, 2 * j), i, j, i + 1, j);
    for (Index j = 0; j <= n; ++j)
        for (Index i = 1; i <= n; ++i) edge(block(2 * i, 2 * j + 1), i, j, i, j + 1);

    AffineProblem p;
    for (Index b = 0; b < B; ++b) {
        SparseMatrix a(N, N);
        const auto& t = trips[static_cast<std::size_t>(b)];
        a.setFromTriplets(t.begin(), t.end());
        p.operators.push_back(std::move(a));
        p.theta_a.push_back(theta_named(b == 0 ? "one" : "mu[" + std::to_string(b - 1) + "]"));
    }
    Vector f(N);
    for (Index j = 1; j <= n; ++j)
        for (Index i = 1; i <= n; ++i) f(node(i, j)) = config.forcing(double(i) * h, double(j) * h);
    p.rhs.push_back(std::move(f));
    p.theta_f.push_back(theta_named("one"));
    const double s = std::sin(std::numbers::pi * h / 2.0);
    p.unit_coercivity = 8.0 * ih2 * s * s;
    if (B > 1) p.space = diffusion_space(config);
    return p;
}

ParameterSpace diffusion_space(const DiffusionConfig& config) {
    const Index d = config.blocks() - 1;
    if (d < 1) throw ConfigError("diffusion: a single block has no parameters");
    std::vector<std::string> labels;
    for (Index b = 1; b <= d; ++b) labels.push_back("kappa_" + std::to_string(b));
    return ParameterSpace(Vector::Constant(d, 0.1), Vector::Constant(d, 10.0), labels);
}

Matrix diffusion_nodes(const DiffusionConfig& config) {
    const Index n = config.interior;
    Matrix xy(2, n * n);
    for (Index j = 1; j <= n; ++j)
        for (Index i = 1; i <= n; ++i) {
            xy(0, (i - 1) + n * (j - 1)) = double(i) * config.h();
            xy(1, (i - 1) + n * (j - 1)) = double(j) * config.h();
        }
    return xy;
}

double diffusion_l2(const DiffusionConfig& config, const Vector& e) { return config.h() * e.norm(); }

// --- meshes and P1 finite elements --------------------------------------------------

TriMesh disk_mesh(Index rings, double radius) {
    if (rings < 1) throw ConfigError("disk_mesh: need at least one ring");
    const double pi = std::numbers::pi;
    TriMesh m;
    std::vector<Vec3> verts{Vec3::Zero()};
    std::vector<Index> ring_start{0};
    for (Index k = 1; k <= rings; ++k) {
        ring_start.push_back(static_cast<Index>(verts.size()));
        const double r = radius * double(k) / double(rings);
        for (Index j = 0; j < 6 * k; ++j) {
            const double a = 2.0 * pi * double(j) / double(6 * k);
            verts.emplace_back(r * std::cos(a), r * std::sin(a), 0.0);
        }
    }
    m.vertices.resize(3, static_cast<Index>(verts.size()));
    for (std::size_t c = 0; c < verts.size(); ++c) m.vertices.col(static_cast<Index>(c)) = verts[c];

    for (Index k = 1; k <= rings; ++k) {
        auto outer = [&](Index j) { return ring_start[static_cast<std::size_t>(k)] + (j % (6 * k)); };
        auto inner = [&](Index j) {
            return k == 1 ? Index{0} : ring_start[static_cast<std::size_t>(k - 1)] + (j % (6 * (k - 1)));
        };
        for (Index s = 0; s < 6; ++s) {
            for (Index q = 0; q < k; ++q)
                m.triangles.push_back({outer(s * k + q), outer(s * k + q + 1), inner(s * (k - 1) + q)});
            for (Index q = 0; q + 1 < k; ++q)
                m.triangles.push_back({inner(s * (k - 1) + q), outer(s * k + q + 1), inner(s * (k - 1) + q + 1)});
        }
    }
    const Vector areas = signed_areas(m);
    for (Index e = 0; e < areas.size(); ++e)
        if (areas(e) < 0.0) std::swap(m.triangles[static_cast<std::size_t>(e)][1], m.triangles[static_cast<std::size_t>(e)][2]);
    return m;
}

TriMesh square_mesh(Index n) {
    if (n < 1) throw ConfigError("square_mesh: need at least one cell per side");
    TriMesh m;
    m.vertices.resize(3, (n + 1) * (n + 1));
    for (Index j = 0; j <= n; ++j)
        for (Index i = 0; i <= n; ++i) m.vertices.col(i + (n + 1) * j) = Vec3(double(i) / double(n), double(j) / double(n), 0.0);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) {
            const Index a = i + (n + 1) * j, b = a + 1, c = a + n + 1, d = c + 1;
            m.triangles.push_back({a, b, d});
            m.triangles.push_back({a, d, c});
        }
    return m;
}

std::vector<bool> boundary_vertices(const TriMesh& mesh) {
    std::map<std::pair<Index, Index>, int> edges;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            const Index a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
            ++edges[{std::min(a, b), std::max(a, b)}];
        }
    std::vector<bool> out(static_cast<std::size_t>(mesh.vertex_count()), false);
    for (const auto& [e, count] : edges)
        if (count == 1) out[static_cast<std::size_t>(e.first)] = out[static_cast<std::size_t>(e.second)] = true;
    return out;
}

Vec3 mesh_barycenter(const TriMesh& mesh) {
    Vec3 acc = Vec3::Zero();
    double total = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3 a = mesh.vertices.col(t[0]), b = mesh.vertices.col(t[1]), c = mesh.vertices.col(t[2]);
        const double area = 0.5 * (b - a).cross(c - a).norm();
        acc += area * (a + b + c) / 3.0;
        total += area;
    }
    if (!(total > 0.0)) throw NumericalError("mesh_barycenter: mesh has zero area");
    return acc / total;
}

TriangleRule triangle_rule(int order) {
    TriangleRule r;
    auto perm3 = [&r](double a, double b, double w) {
        r.points.emplace_back(a, b, b);
        r.points.emplace_back(b, a, b);
        r.points.emplace_back(b, b, a);
        for (int i = 0; i < 3; ++i) r.weights.push_back(w);
    };
    switch (order) {
    case 1:
        r.points.emplace_back(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        r.weights.push_back(1.0);
        break;
    case 2:
        perm3(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0);
        break;
    case 5:
        r.points.emplace_back(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        r.weights.push_back(0.225);
        perm3(0.0597158717897698, 0.4701420641051151, 0.1323941527885062);
        perm3(0.7974269853530873, 0.1012865073234563, 0.1259391805448271);
        break;
    default:
        throw ConfigError("quadrature order must be 1, 2 or 5");
    }
    return r;
}

MorphedPoissonConfig MorphedPoissonConfig::disk_default(Index rings) {
    MorphedPoissonConfig c;
    c.reference = disk_mesh(rings);
    c.lattice = make_lattice(Vec3(-1.25, -1.25, 0.0), Vec3(2.5, 2.5, 1.0), {2, 2, 0});
    c.lattice.active = {ControlDof{1, 1, 0, 0}};
    return c;
}

ParameterSpace morphed_poisson_space(const MorphedPoissonConfig& config) {
    const auto d = static_cast<Index>(config.lattice.active.size());
    if (d < 1) throw ConfigError("morphed poisson: lattice has no active control dofs");
    std::vector<std::string> labels;
    for (Index i = 0; i < d; ++i) labels.push_back("ffd_" + std::to_string(i));
    return ParameterSpace(Vector::Constant(d, -0.4), Vector::Constant(d, 0.4), labels);
}

PoissonSolution solve_morphed_poisson(const MorphedPoissonConfig& config, const Vector& mu) {
    Stopwatch clock;
    const TriangleRule rule = triangle_rule(config.quadrature_order);
    const FfdLattice lattice = ffd_from_parameters(config.lattice, mu);
    MorphResult morphed = morph_mesh(lattice, config.reference);
    morphed.require_valid();

    PoissonSolution sol;
    sol.mesh = std::move(morphed.mesh);
    sol.barycenter = mesh_barycenter(sol.mesh);
    const Vec3 xn = sol.barycenter;
    PlaneFn source = config.source, dirichlet = config.dirichlet;
    if (!source) source = [xn](double x, double y) { return std::exp(-((x - xn(0)) * (x - xn(0)) + (y - xn(1)) * (y - xn(1)))); };
    if (!dirichlet)
        dirichlet = [xn](double x, double y) { return std::exp(-std::hypot(x - xn(0), y - xn(1))); };

    const TriMesh& mesh = sol.mesh;
    const Index nv = mesh.vertex_count();
    const std::vector<bool> on_boundary = boundary_vertices(mesh);
    std::vector<Index> map(static_cast<std::size_t>(nv), -1);
    Index ni = 0;
    for (Index v = 0; v < nv; ++v)
        if (!on_boundary[static_cast<std::size_t>(v)]) map[static_cast<std::size_t>(v)] = ni++;

    Vector g = Vector::Zero(nv);
    for (Index v = 0; v < nv; ++v)
        if (on_boundary[static_cast<std::size_t>(v)]) g(v) = dirichlet(mesh.vertices(0, v), mesh.vertices(1, v));

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(mesh.triangles.size() * 9);
    Vector rhs = Vector::Zero(ni);
    for (const auto& t : mesh.triangles) {
        double x[3], y[3];
        for (int a = 0; a < 3; ++a) {
            x[a] = mesh.vertices(0, t[static_cast<std::size_t>(a)]);
            y[a] = mesh.vertices(1, t[static_cast<std::size_t>(a)]);
        }
        const double area = 0.5 * ((x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]));
        if (!(area > 0.0)) throw NumericalError("morphed poisson: degenerate or inverted element");
        double b[3], c[3];
        for (int a = 0; a < 3; ++a) {
            b[a] = y[(a + 1) % 3] - y[(a + 2) % 3];
            c[a] = x[(a + 2) % 3] - x[(a + 1) % 3];
        }
        double load[3] = {0.0, 0.0, 0.0};
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const Vec3& l = rule.points[q];
            const double s = source(l(0) * x[0] + l(1) * x[1] + l(2) * x[2], l(0) * y[0] + l(1) * y[1] + l(2) * y[2]);
            for (int a = 0; a < 3; ++a) load[a] += rule.weights[q] * area * s * l(a);
        }
        for (int a = 0; a < 3; ++a) {
            const Index ia = map[static_cast<std::size_t>(t[static_cast<std::size_t>(a)])];
            if (ia < 0) continue;
            rhs(ia) -= load[a];
            for (int bb = 0; bb < 3; ++bb) {
                const double k = (b[a] * b[bb] + c[a] * c[bb]) / (4.0 * area);
                const Index vb = t[static_cast<std::size_t>(bb)];
                const Index ib = map[static_cast<std::size_t>(vb)];
                if (ib >= 0)
                    trips.emplace_back(ia, ib, k);
                else
                    rhs(ia) -= k * g(vb);
            }
        }
    }
    SparseMatrix K(ni, ni);
    K.setFromTriplets(trips.begin(), trips.end());
    Vector ui = Vector::Zero(ni);
    if (ni > 0) {
        Eigen::SimplicialLLT<SparseMatrix> llt(K);
        if (llt.info() != Eigen::Success) throw NumericalError("morphed poisson: stiffness matrix is not positive definite");
        ui = llt.solve(rhs);
        const Vector r = rhs - K * ui;
        if (r.norm() > 1e-10 * std::max(1.0, rhs.norm())) ui += llt.solve(r);
    }
    sol.u = g;
    for (Index v = 0; v < nv; ++v)
        if (map[static_cast<std::size_t>(v)] >= 0) sol.u(v) = ui(map[static_cast<std::size_t>(v)]);
    if (!sol.u.allFinite()) throw NumericalError("morphed poisson: solution is not finite");
    sol.wall_seconds = clock.seconds();
    return sol;
}

double fem_l2_error(const TriMesh& mesh, const Vector& u, const PlaneFn& exact) {
    if (u.size() != mesh.vertex_count()) throw ConfigError("fem_l2_error: nodal vector length mismatch");
    const TriangleRule rule = triangle_rule(5);
    double sum = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3 a = mesh.vertices.col(t[0]), b = mesh.vertices.col(t[1]), c = mesh.vertices.col(t[2]);
        const double area = 0.5 * (b - a).cross(c - a).norm();
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            const Vec3& l = rule.points[q];
            const Vec3 x = l(0) * a + l(1) * b + l(2) * c;
            const double uh = l(0) * u(t[0]) + l(1) * u(t[1]) + l(2) * u(t[2]);
            const double e = uh - exact(x(0), x(1));
            sum += rule.weights[q] * area * e * e;
        }
    }
    return std::sqrt(sum);
}

}  // namespace romkit
