#include "calderon/ucp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

#include "calderon/norms.hpp"
#include "calderon/parallel.hpp"

namespace calderon {

int boundary_distance_halfsteps(const GridSpec& spec, const Coord& c) {
    int best = std::numeric_limits<int>::max();
    for (int k = 0; k < spec.d; ++k) best = std::min({best, c[k], spec.top() - c[k]});
    return best;
}

CollarSpec build_collar(const MeshPtr& mesh, double rho, double rho1, double rho2) {
    if (!(rho > 0.0 && rho1 > 0.0 && rho1 < rho2 && rho2 < 8.0 * rho))
        throw std::invalid_argument("build_collar: need 0 < rho1 < rho2 < 8 rho");
    const GridSpec& spec = mesh->spec();
    const double half = 0.5 * spec.h();
    std::vector<Coord> near, band, collar, far;
    for (const Coord& c : mesh->primal()->nodes()) {
        const double dist = half * boundary_distance_halfsteps(spec, c);
        (dist < 8.0 * rho ? near : far).push_back(c);
        if (dist > rho1 && dist < rho2) band.push_back(c);
        if (dist > rho && dist < 3.0 * rho) collar.push_back(c);
    }
    if (near.empty() || band.empty() || collar.empty())
        throw std::invalid_argument("build_collar: empty collar set at this h");
    CollarSpec out;
    out.mesh = mesh;
    out.rho = rho;
    out.rho1 = rho1;
    out.rho2 = rho2;
    out.near = make_set(spec, SetKind::Derived, std::move(near));
    out.band = make_set(spec, SetKind::Derived, std::move(band));
    out.collar = make_set(spec, SetKind::Derived, std::move(collar));
    out.far = make_set(spec, SetKind::Derived, std::move(far));
    return out;
}

double cutoff_profile(double p) {
    auto smooth = [](double t) { return t * t * t * (t * (6.0 * t - 15.0) + 10.0); };
    if (p <= 0.5 || p >= 8.0) return 0.0;
    if (p >= 0.75 && p <= 7.0) return 1.0;
    if (p < 0.75) return smooth((p - 0.5) / 0.25);
    return smooth(8.0 - p);
}

GridField cutoff(const GridField& p) {
    GridField out = p;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cutoff_profile(p[i].real());
    return out;
}

NodeSetPtr gamma_nodes(const Mesh& mesh, const GammaBox& gamma) {
    return window(mesh, gamma.axis, gamma.sign, gamma.lo, gamma.hi);
}

namespace {

double norm(const Point& a, const Point& b, int d) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

double dist_to_cube(const Point& x, int d) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        const double e = std::max({0.0, -x[k], x[k] - 1.0});
        s += e * e;
    }
    return std::sqrt(s);
}

double plane_value(const GammaBox& g) { return g.sign > 0 ? 1.0 : 0.0; }

// Distance from x to the closed face (axis, sign) of the cube.
double dist_to_face(const Point& x, int d, int axis, int sign) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        const double e = k == axis ? x[k] - (sign > 0 ? 1.0 : 0.0) : std::max({0.0, -x[k], x[k] - 1.0});
        s += e * e;
    }
    return std::sqrt(s);
}

// Distance from x to the closed gamma box.
double dist_to_gamma(const Point& x, int d, const GammaBox& g) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        const double e = k == g.axis ? x[k] - plane_value(g) : std::max({0.0, g.lo[k] - x[k], x[k] - g.hi[k]});
        s += e * e;
    }
    return std::sqrt(s);
}

// Distance from x to the gamma face minus the open gamma box.
double dist_to_face_outside_gamma(const Point& x, int d, const GammaBox& g) {
    const double normal = x[g.axis] - plane_value(g);
    bool inside = true;
    double in_plane = std::numeric_limits<double>::infinity();
    double outside2 = 0.0;
    for (int k = 0; k < d; ++k) {
        if (k == g.axis) continue;
        const double lo = std::max(0.0, g.lo[k]), hi = std::min(1.0, g.hi[k]);
        if (x[k] <= lo || x[k] >= hi) inside = false;
        in_plane = std::min({in_plane, x[k] - lo, hi - x[k]});
        const double e = std::max({0.0, -x[k], x[k] - 1.0});
        outside2 += e * e;
    }
    if (d == 1) return std::numeric_limits<double>::infinity();  // a face is a single point
    if (inside) return std::hypot(normal, in_plane);
    return std::sqrt(normal * normal + outside2);
}

}  // namespace

ChainCheck check_chain(const BallChain& chain, const CollarSpec& collar, const GammaBox& gamma) {
    const int d = collar.mesh->d();
    ChainCheck c;
    c.delta_small = chain.delta < collar.rho / 4.0;
    const double dcube = dist_to_cube(chain.x0, d);
    c.exterior = dcube > chain.delta;
    c.meets_interior = dcube < 2.0 * chain.delta;

    double rest = dist_to_face_outside_gamma(chain.x0, d, gamma);
    for (int k = 0; k < d; ++k)
        for (int sgn : {-1, 1})
            if (k != gamma.axis || sgn != gamma.sign) rest = std::min(rest, dist_to_face(chain.x0, d, k, sgn));
    c.boundary_in_gamma = rest >= 4.0 * chain.delta;

    c.x1_far_from_gamma = dist_to_gamma(chain.x1, d, gamma) >= 4.0 * chain.r;
    const double r01 = norm(chain.x0, chain.x1, d);
    c.x1_ball_in_shell = r01 - chain.r >= chain.delta && r01 + chain.r <= 2.0 * chain.delta;

    c.chained = !chain.centres.empty() && norm(chain.centres.front(), chain.x1, d) == 0.0;
    for (std::size_t j = 1; c.chained && j < chain.centres.size(); ++j)
        c.chained = norm(chain.centres[j], chain.centres[j - 1], d) <= chain.r * (1.0 + 1e-12);

    c.covers_collar = true;
    const NodeSet& W = *collar.collar;
    for (std::size_t i = 0; i < W.size() && c.covers_collar; ++i) {
        const Point x = W.position(i);
        c.covers_collar = std::any_of(chain.centres.begin(), chain.centres.end(),
                                      [&](const Point& z) { return norm(x, z, d) < chain.r; });
    }
    return c;
}

BallChain build_ball_chain(const CollarSpec& collar, const GammaBox& gamma) {
    const int d = collar.mesh->d();
    if (gamma.axis < 0 || gamma.axis >= d || (gamma.sign != 1 && gamma.sign != -1))
        throw std::invalid_argument("build_ball_chain: bad gamma face");
    Point p{};
    for (int k = 0; k < d; ++k) p[k] = k == gamma.axis ? plane_value(gamma) : 0.5 * (gamma.lo[k] + gamma.hi[k]);

    // Collar nodes visited greedily by nearest neighbour, starting next to x1.
    std::vector<Point> stops;
    for (std::size_t i = 0; i < collar.collar->size(); ++i) stops.push_back(collar.collar->position(i));

    for (int m = 0; m < 30; ++m) {
        BallChain chain;
        chain.delta = 0.9 * collar.rho / 4.0 * std::pow(0.5, m);
        chain.r = 0.1 * chain.delta;
        chain.x0 = p;
        chain.x0[gamma.axis] += gamma.sign * 1.25 * chain.delta;
        chain.x1 = p;
        chain.x1[gamma.axis] -= gamma.sign * 0.5 * chain.delta;

        chain.centres.push_back(chain.x1);
        const ChainCheck pre = check_chain(chain, collar, gamma);
        if (!(pre.delta_small && pre.exterior && pre.meets_interior && pre.boundary_in_gamma &&
              pre.x1_far_from_gamma && pre.x1_ball_in_shell))
            continue;
        std::vector<bool> used(stops.size(), false);
        for (std::size_t n = 0; n < stops.size(); ++n) {
            const Point from = chain.centres.back();
            std::size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < stops.size(); ++i)
                if (!used[i] && norm(from, stops[i], d) < bd) {
                    bd = norm(from, stops[i], d);
                    best = i;
                }
            used[best] = true;
            const int steps = std::max(1, static_cast<int>(std::ceil(bd / chain.r)));
            for (int s = 1; s <= steps; ++s) {
                Point z{};
                for (int k = 0; k < d; ++k) z[k] = from[k] + (stops[best][k] - from[k]) * s / steps;
                chain.centres.push_back(z);
            }
            chain.centres.back() = stops[best];
        }
        if (check_chain(chain, collar, gamma).all()) return chain;
    }
    throw std::runtime_error("build_ball_chain: no admissible exterior point in front of gamma");
}

double UcpReport::term1(double tau, double alpha1) const { return std::exp(-alpha1 * tau) * h1_total; }
double UcpReport::term2(double tau, double alpha2) const { return std::exp(alpha2 * tau) * dn_gamma; }

std::vector<double> tau_grid(double h, double eps_tilde, int count) {
    if (count < 1) throw std::invalid_argument("tau_grid: count must be positive");
    std::vector<double> t(static_cast<std::size_t>(count));
    const double top = eps_tilde / h;
    for (int i = 0; i < count; ++i) t[static_cast<std::size_t>(i)] = top * (i + 1) / count;
    return t;
}

UcpReport ucp_sides(const GridField& u_in, const GridField& f, const SigmaFamily& sigma, const NodeSetPtr& gamma,
                    const CollarSpec& collar, std::span<const double> taus, double eps_tilde) {
    const Mesh& mesh = sigma.mesh();
    const GridField u = u_in.restrict_to(mesh.closure());
    const double scale = std::max(1.0, u.max_abs());
    if (u.restrict_to(mesh.boundary()).max_abs() > 1e-13 * scale)
        throw std::invalid_argument("ucp_sides: u must vanish on the boundary");
    if (f.restrict_to(collar.near).max_abs() > 1e-13 * std::max(1.0, f.max_abs()))
        throw std::invalid_argument("ucp_sides: f must vanish on O_h");
    if (gamma->kind() != SetKind::Window && gamma->kind() != SetKind::Face)
        throw std::invalid_argument("ucp_sides: gamma must lie within one face");
    UcpReport rep;
    rep.h = mesh.h();
    for (double t : taus) {
        if (!(t > 0.0) || rep.h * t > eps_tilde * (1.0 + 1e-12))
            throw std::invalid_argument("ucp_sides: tau outside 0 < h tau <= eps_tilde");
        rep.taus.push_back(t);
    }
    rep.lhs = norm_on(u, collar.collar->nodes(), NormKind::H1);
    rep.h1_total = norm(u, NormKind::H1, mesh);
    rep.dn_gamma = l2_norm(normal_derivative(u, sigma).restrict_to(gamma));
    return rep;
}

double ucp_needed_constant(std::span<const UcpReport> reports, double alpha1, double alpha2) {
    double C = 0.0;
    for (const auto& r : reports) {
        if (r.lhs == 0.0) continue;
        for (double t : r.taus) {
            const double rhs = r.rhs(t, alpha1, alpha2);
            C = std::max(C, rhs > 0.0 ? r.lhs / rhs : std::numeric_limits<double>::infinity());
        }
    }
    return C;
}

UcpFit fit_ucp(std::span<const UcpReport> reports, const UcpFitOptions& o) {
    if (o.alpha_steps < 2) throw std::invalid_argument("fit_ucp: need at least two alpha steps");
    std::vector<double> alphas(static_cast<std::size_t>(o.alpha_steps));
    const double l0 = std::log(o.alpha_min), l1 = std::log(o.alpha_max);
    for (int i = 0; i < o.alpha_steps; ++i)
        alphas[static_cast<std::size_t>(i)] = std::exp(l0 + (l1 - l0) * i / (o.alpha_steps - 1));

    UcpFit best;
    best.C = std::numeric_limits<double>::infinity();
    UcpFit fallback = best;
    for (auto a1 = alphas.rbegin(); a1 != alphas.rend(); ++a1) {
        for (double a2 : alphas) {
            const double C = ucp_needed_constant(reports, *a1, a2);
            if (C < fallback.C) fallback = {*a1, a2, C, false};
            if (C <= o.C_cap) {
                best = {*a1, a2, C, true};
                break;  // smallest alpha2 for this alpha1
            }
        }
        if (best.satisfiable) return best;
    }
    return fallback;
}

UcpExperiment run_ucp_experiment(const UcpExperimentOptions& o) {
    auto mesh = Mesh::build(build_grid(o.d, o.N));
    UcpExperiment ex;
    ex.collar = build_collar(mesh, o.rho, 2.0 * o.rho, 6.0 * o.rho);
    ex.chain = build_ball_chain(ex.collar, o.gamma);
    ex.chain_check = check_chain(ex.chain, ex.collar, o.gamma);
    if (ex.collar.far->empty()) throw std::invalid_argument("run_ucp_experiment: no room for sources");

    const auto sigma = sample_sigma(SigmaDescription::smooth_bump(o.d, 0.25), mesh);
    const NodeSetPtr gamma = gamma_nodes(*mesh, o.gamma);
    const double eps_tilde = o.eps_tilde_factor * o.eps0;
    const auto taus = tau_grid(mesh->h(), eps_tilde, o.tau_count);

    ex.reports.resize(static_cast<std::size_t>(o.solutions));
    parallel_for(ex.reports.size(), o.threads, [&](std::size_t i) {
        std::mt19937_64 rng(o.seed + i);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 10.0);
        const GridField q = GridField::constant(mesh->primal(), unit(rng));
        GridField f = GridField::zeros(mesh->primal());
        for (std::size_t n = 0; n < f.size(); ++n)
            if (ex.collar.far->contains(f.support().node(n))) f[n] = gauss(rng);
        ForwardSolver solver(sigma, q);
        const GridField u = solver.solve(f, GridField::zeros(mesh->boundary()));
        ex.reports[i] = ucp_sides(u, f, *sigma, gamma, ex.collar, taus, eps_tilde);
    });
    ex.fit = fit_ucp(ex.reports, o.fit);
    return ex;
}

void write_ucp_csv(std::ostream& os, std::span<const UcpReport> reports, const UcpFit& fit) {
    os << "h,tau,lhs,term1,term2,satisfiable_at_best_fit\n" << std::setprecision(12);
    for (const auto& r : reports)
        for (double t : r.taus) {
            const bool ok = fit.satisfiable && r.lhs <= fit.C * r.rhs(t, fit.alpha1, fit.alpha2) * (1.0 + 1e-12);
            os << r.h << ',' << t << ',' << r.lhs << ',' << r.term1(t, fit.alpha1) << ','
               << r.term2(t, fit.alpha2) << ',' << (ok ? 1 : 0) << '\n';
        }
}

}  // namespace calderon
