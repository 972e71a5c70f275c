#include "calderon/cgo.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "calderon/carleman.hpp"
#include "calderon/norms.hpp"

namespace calderon {

namespace {

constexpr double kPi = std::numbers::pi;
const Complex kI(0.0, 1.0);

double inv_or_inf(double x) { return x > 0.0 ? 1.0 / x : std::numeric_limits<double>::infinity(); }

}  // namespace

double CgoRegime::upper(double eps_d, double eps_a, double h) const {
    return c * std::min({inv_or_inf(eps_d), inv_or_inf(eps_a), std::pow(h, -2.0 / 3.0)});
}

Complex CgoParams::eta_dot_eta() const {
    Complex s = 0.0;
    for (int k = 0; k < d; ++k) s += eta[k] * eta[k];
    return s;
}

std::pair<CgoParams, CgoParams> make_eta(int d, const Frequency& xi, double a, const CgoRegime& regime,
                                         double eps_d, double eps_a, double h) {
    if (d < 3) throw std::invalid_argument("make_eta: needs d >= 3");
    double xi2 = 0.0;
    for (int k = 0; k < d; ++k) xi2 += static_cast<double>(xi[k]) * xi[k];
    if (kPi * std::sqrt(xi2) > a) throw std::invalid_argument("make_eta: pi |xi| exceeds a");
    if (a < regime.a0) throw std::invalid_argument("make_eta: a below a0");
    const double top = regime.upper(eps_d, eps_a, h);
    if (a > top) {
        std::ostringstream msg;
        msg << "make_eta: a = " << a << " above c min{1/eps_d, 1/eps_a, h^{-2/3}} = " << top;
        throw std::invalid_argument(msg.str());
    }

    // Gram-Schmidt of (xi, e_1, ..., e_d); the first two survivors after xi.
    std::vector<Point> basis;
    if (xi2 > 0.0) {
        Point u{};
        for (int k = 0; k < d; ++k) u[k] = xi[k] / std::sqrt(xi2);
        basis.push_back(u);
    }
    const std::size_t skip = basis.size();
    for (int e = 0; e < d && basis.size() < skip + 2; ++e) {
        Point v{};
        v[e] = 1.0;
        for (const Point& b : basis) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += v[k] * b[k];
            for (int k = 0; k < d; ++k) v[k] -= dot * b[k];
        }
        double n = 0.0;
        for (int k = 0; k < d; ++k) n += v[k] * v[k];
        if (n < 1e-16) continue;
        for (int k = 0; k < d; ++k) v[k] /= std::sqrt(n);
        basis.push_back(v);
    }

    CgoParams p1;
    p1.d = d;
    p1.xi = xi;
    p1.a = a;
    p1.zeta1 = basis[skip];
    p1.zeta2 = basis[skip + 1];
    CgoParams p2 = p1;
    const double root = std::sqrt(std::max(0.0, a * a - kPi * kPi * xi2));
    for (int k = 0; k < d; ++k) {
        p1.eta[k] = Complex(-kPi * xi[k] + root * p1.zeta1[k], a * p1.zeta2[k]);
        p2.eta[k] = Complex(-kPi * xi[k] - root * p1.zeta1[k], -a * p1.zeta2[k]);
    }
    for (const auto* p : {&p1, &p2})
        if (std::abs(p->eta_dot_eta()) > 1e-12 * std::max(1.0, a * a))
            throw std::logic_error("make_eta: eta . eta does not vanish");
    return {p1, p2};
}

std::vector<Complex> conjugated_symbol(const ComplexPoint& eta, const GridSpec& spec, const Point& shift) {
    const int d = spec.d;
    const int n = spec.N + 1;
    const double h = spec.h();
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(n);
    std::vector<Complex> out(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rest = idx;
        Complex s = 0.0;
        for (int k = d - 1; k >= 0; --k) {
            const double m = static_cast<double>(rest % static_cast<std::size_t>(n)) + shift[k];
            rest /= static_cast<std::size_t>(n);
            s += (2.0 * std::cos((eta[k] + 2.0 * kPi * m) * h) - 2.0) / (h * h);
        }
        out[idx] = s;
    }
    return out;
}

GridField plane_wave(const ComplexPoint& eta, const NodeSetPtr& set) {
    const int d = set->spec().d;
    return GridField::from_function(set, [&](const Point& x) {
        Complex phase = 0.0;
        for (int k = 0; k < d; ++k) phase += eta[k] * x[k];
        return std::exp(kI * phase);
    });
}

namespace {

// Separable transform on the torus Z_{N+1}^d with twisted frequencies m + shift.
class TorusTransform {
public:
    TorusTransform(int d, int n, const Point& shift) : d_(d), n_(n) {
        total_ = 1;
        for (int k = 0; k < d; ++k) total_ *= static_cast<std::size_t>(n);
        const double h = 1.0 / n;
        for (int k = 0; k < d; ++k) {
            std::vector<Complex> E(static_cast<std::size_t>(n * n));
            for (int m = 0; m < n; ++m)
                for (int j = 0; j < n; ++j)
                    E[static_cast<std::size_t>(m * n + j)] = std::exp(-2.0 * kPi * kI * ((m + shift[k]) * j * h));
            forward_.push_back(std::move(E));
        }
    }

    [[nodiscard]] std::size_t size() const { return total_; }

    [[nodiscard]] std::vector<Complex> forward(std::vector<Complex> v) const { return apply(std::move(v), false); }
    [[nodiscard]] std::vector<Complex> inverse(std::vector<Complex> v) const {
        v = apply(std::move(v), true);
        for (auto& x : v) x /= static_cast<double>(total_);
        return v;
    }

private:
    [[nodiscard]] std::vector<Complex> apply(std::vector<Complex> v, bool inverse) const {
        std::size_t stride = 1;
        std::vector<Complex> line(static_cast<std::size_t>(n_));
        for (int k = d_ - 1; k >= 0; --k) {
            const auto& E = forward_[static_cast<std::size_t>(k)];
            const std::size_t n = static_cast<std::size_t>(n_);
            for (std::size_t base = 0; base < total_; ++base) {
                if ((base / stride) % n != 0) continue;
                for (std::size_t m = 0; m < n; ++m) {
                    Complex s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const Complex w = inverse ? std::conj(E[j * n + m]) : E[m * n + j];
                        s += w * v[base + j * stride];
                    }
                    line[m] = s;
                }
                for (std::size_t m = 0; m < n; ++m) v[base + m * stride] = line[m];
            }
            stride *= n;
        }
        return v;
    }

    int d_, n_;
    std::size_t total_ = 1;
    std::vector<std::vector<Complex>> forward_;
};

// Torus index of a lattice coordinate with even entries in [0, top]; the top
// face wraps to 0 and picks up the twist factor.
std::size_t torus_index(const Coord& c, int d, int n, const Point& shift, Complex* factor) {
    std::size_t idx = 0;
    Complex f = 1.0;
    for (int k = 0; k < d; ++k) {
        int j = c[k] / 2;
        if (j == n) {
            j = 0;
            f *= std::exp(2.0 * kPi * kI * shift[k]);
        }
        idx = idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(j);
    }
    if (factor) *factor = f;
    return idx;
}

void fill_diagnostics(CgoSolution& sol, const GridField& q, const SigmaFamily& sigma) {
    const Mesh& mesh = sigma.mesh();
    sol.r_L2 = l2_norm(sol.remainder);
    sol.r_H1ring = norm(sol.remainder, NormKind::H1Ring, mesh);
    const GridField Lu = apply_laplacian(sol.u, sigma);
    const GridField qu = q * sol.u.restrict_to(mesh.primal());
    sol.residual = l2_norm(qu - Lu);
    sol.residual_scale = l2_norm(Lu) + l2_norm(qu);
}

}  // namespace

CgoSolution cgo_fixed_point(const GridField& q, const SigmaFamily& sigma, const CgoParams& params,
                            const CgoOptions& options) {
    const Mesh& mesh = sigma.mesh();
    const int d = mesh.d();
    const int n = mesh.N() + 1;
    const double h = mesh.h();
    require_same_support(q, GridField::zeros(mesh.primal()), "cgo_fixed_point q");

    // Twist along the axis where the imaginary part of eta dominates, which
    // keeps the imaginary part of the symbol away from zero.
    Point shift{};
    int axis = 0;
    for (int k = 1; k < d; ++k)
        if (std::abs(params.eta[k].imag()) > std::abs(params.eta[axis].imag())) axis = k;
    shift[axis] = 0.5;

    const TorusTransform T(d, n, shift);
    const auto symbol = conjugated_symbol(params.eta, mesh.spec(), shift);
    const double a = params.a;
    const double threshold = options.threshold_factor * std::pow(a, 4) * h * h;
    std::vector<Complex> green(symbol.size(), 0.0);
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < symbol.size(); ++i) {
        if (std::abs(symbol[i]) < threshold) {
            ++excluded;
            continue;
        }
        green[i] = -1.0 / symbol[i];  // inverse of -Delta_eta
    }
    if (excluded == symbol.size()) throw std::invalid_argument("cgo_fixed_point: every mode excluded");

    const NodeSetPtr& closure = mesh.closure();
    const GridField wave = plane_wave(params.eta, closure);
    const GridField wave_in = wave.restrict_to(mesh.primal());
    const SigmaPtr unit = sigma.is_identity() ? nullptr
                                              : sample_sigma(SigmaDescription::identity(d), sigma.mesh_ptr());

    // Delta_h e^{i eta.x} = p_eta(0) e^{i eta.x}: O(a^4 h^2) because eta . eta = 0.
    Complex defect = 0.0;
    if (!options.fold_defect)
        for (int k = 0; k < d; ++k) defect += (2.0 * std::cos(params.eta[k] * h) - 2.0) / (h * h);

    std::vector<std::size_t> prim_idx(mesh.primal()->size());
    for (std::size_t i = 0; i < prim_idx.size(); ++i)
        prim_idx[i] = torus_index(mesh.primal()->node(i), d, n, shift, nullptr);

    auto to_closure = [&](const std::vector<Complex>& r) {
        GridField out = GridField::zeros(closure);
        for (std::size_t i = 0; i < closure->size(); ++i) {
            Complex f;
            const std::size_t t = torus_index(closure->node(i), d, n, shift, &f);
            out[i] = f * r[t];
        }
        return out;
    };

    // (q + V_sigma)(1 + r) on the torus; zero on the wrapped face slices.
    auto source = [&](const std::vector<Complex>& r) {
        std::vector<Complex> g(T.size(), 0.0);
        GridField one_plus_r = to_closure(r);
        for (auto& v : one_plus_r.values()) v += 1.0;
        GridField V;
        if (unit) {
            const GridField u = wave * one_plus_r;
            V = apply_laplacian(u, *unit) - apply_laplacian(u, sigma);
        }
        const GridField w_in = one_plus_r.restrict_to(mesh.primal());
        for (std::size_t i = 0; i < prim_idx.size(); ++i) {
            Complex v = q[i] * w_in[i] - defect;
            if (unit) v += V[i] / wave_in[i];
            g[prim_idx[i]] = v;
        }
        return g;
    };

    CgoSolution sol;
    sol.params = params;
    sol.method = "multiplier";
    sol.excluded_modes = excluded;
    std::vector<Complex> r(T.size(), 0.0);
    double last_update = std::numeric_limits<double>::infinity();
    int growth = 0;
    for (int it = 0; it < options.max_iterations; ++it) {
        const auto g = source(r);
        double gmax = 0.0;
        for (const auto& v : g) gmax = std::max(gmax, std::abs(v));
        if (gmax == 0.0) break;  // nothing to correct
        auto G = T.forward(g);
        for (std::size_t i = 0; i < G.size(); ++i) G[i] *= -green[i];
        const auto next = T.inverse(std::move(G));
        double du = 0.0, nr = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            du += std::norm(next[i] - r[i]);
            nr += std::norm(next[i]);
        }
        du = std::sqrt(du);
        nr = std::sqrt(nr);
        r = next;
        sol.iterations = it + 1;
        if (du <= options.tolerance * std::max(nr, 1e-300)) break;
        growth = du > last_update ? growth + 1 : 0;
        if (growth >= 3)
            throw NonContractionError("cgo_fixed_point: update grew three times in a row; use the Dirichlet method");
        last_update = du;
    }

    sol.remainder = to_closure(r);
    GridField one_plus_r = sol.remainder;
    for (auto& v : one_plus_r.values()) v += 1.0;
    sol.u = wave * one_plus_r;
    fill_diagnostics(sol, q, sigma);
    return sol;
}

CgoSolution cgo_dirichlet(const ForwardSolver& solver, const CgoParams& params) {
    const Mesh& mesh = solver.mesh();
    CgoSolution sol;
    sol.params = params;
    sol.method = "dirichlet";
    const GridField wave = plane_wave(params.eta, mesh.closure());
    sol.u = solver.solve(GridField::zeros(mesh.primal()), wave.restrict_to(mesh.boundary()));
    sol.remainder = sol.u;
    for (std::size_t i = 0; i < sol.u.size(); ++i) sol.remainder[i] = sol.u[i] / wave[i] - 1.0;
    fill_diagnostics(sol, solver.q(), solver.sigma());
    return sol;
}

void write_cgo_csv(std::ostream& os, std::span<const CgoSolution> rows) {
    os << "xi,a,h,method,res_L2,r_L2,r_H1ring,iters\n" << std::setprecision(12);
    for (const auto& s : rows) {
        for (int k = 0; k < s.params.d; ++k) os << (k ? ":" : "") << s.params.xi[k];
        os << ',' << s.params.a << ',' << s.remainder.support().spec().h() << ',' << s.method << ','
           << s.relative_residual() << ',' << s.r_L2 << ',' << s.r_H1ring << ',' << s.iterations << '\n';
    }
}

RemainderProbe remainder_probe(std::span<const int> N_ladder, double a_scale, double q_amp,
                               const CgoRegime& regime, const CgoOptions& options) {
    RemainderProbe probe;
    std::vector<double> hs, qs, ps;
    for (int N : N_ladder) {
        auto mesh = Mesh::build(build_grid(3, N));
        const double h = mesh->h();
        const double a = a_scale / std::sqrt(h);
        auto sigma = sample_sigma(SigmaDescription::identity(3), mesh);
        const GridField q = GridField::from_function(mesh->primal(), [&](const Point& x) {
            return q_amp * std::sin(kPi * x[0]) * std::sin(kPi * x[1]) * std::sin(kPi * x[2]);
        });
        const auto eta = make_eta(3, {0, 0, 0}, a, regime, sigma->eps_d(), sigma->eps_a(), h).first;
        CgoSolution sol;
        try {
            sol = cgo_fixed_point(q, *sigma, eta, options);
        } catch (const NonContractionError&) {
            ForwardSolver solver(sigma, q);
            sol = cgo_dirichlet(solver, eta);
        }
        RemainderPoint pt;
        pt.N = N;
        pt.h = h;
        pt.a = a;
        pt.quantity = a * sol.r_L2 + sol.r_H1ring;
        pt.predicted = 1.0 + a * a * sigma->eps_a() + std::pow(a, 4) * h * h;
        pt.relative_residual = sol.relative_residual();
        pt.method = sol.method;
        probe.points.push_back(pt);
        hs.push_back(h);
        qs.push_back(pt.quantity);
        ps.push_back(pt.predicted);
    }
    probe.fitted_slope = fitted_slope(hs, qs);
    probe.predicted_slope = fitted_slope(hs, ps);
    return probe;
}

}  // namespace calderon
