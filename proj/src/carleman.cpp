#include "calderon/carleman.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include "calderon/calculus.hpp"
#include "calderon/parallel.hpp"

namespace calderon {

PsiFunction PsiFunction::quadratic(const Point& x0) {
    PsiFunction p;
    p.name = "quadratic";
    p.value = [x0](const Point& x) {
        double v = 0.0;
        for (int k = 0; k < kMaxDim; ++k) v += (x[k] - x0[k]) * (x[k] - x0[k]);
        return v;
    };
    p.gradient = [x0](const Point& x) {
        Point g{};
        for (int k = 0; k < kMaxDim; ++k) g[k] = 2.0 * (x[k] - x0[k]);
        return g;
    };
    p.hessian = [](const Point&) {
        Hessian H{};
        for (int k = 0; k < kMaxDim; ++k) H[k][k] = 2.0;
        return H;
    };
    return p;
}

PsiFunction PsiFunction::quadratic_default(int d) {
    // Unused axes stay at 0 so they contribute nothing to |x - x0|^2.
    Point x0{};
    x0[0] = -0.5;
    for (int k = 1; k < d; ++k) x0[k] = 0.5;
    return quadratic(x0);
}

PsiFunction PsiFunction::linear(const Point& g, double c) {
    PsiFunction p;
    p.name = "linear";
    p.value = [g, c](const Point& x) {
        double v = c;
        for (int k = 0; k < kMaxDim; ++k) v += g[k] * x[k];
        return v;
    };
    p.gradient = [g](const Point&) { return g; };
    p.hessian = [](const Point&) { return Hessian{}; };
    return p;
}

PsiFunction PsiFunction::constant(double c) { return linear(Point{}, c); }

WeightParams WeightParams::defaults(int d) {
    WeightParams p;
    p.psi = PsiFunction::quadratic_default(d);
    return p;
}

double WeightParams::phi(const Point& x) const { return std::exp(-lambda * psi.value(x)); }

double WeightParams::r_d_rho(const Point& x, int k) const {
    return s * lambda * phi(x) * psi.gradient(x)[k];
}

double WeightParams::r_dd_rho(const Point& x, int k, int j) const {
    const double f = phi(x);
    const Point g = psi.gradient(x);
    const Hessian H = psi.hessian(x);
    const double dk = -lambda * f * g[k];
    const double dj = -lambda * f * g[j];
    const double dkj = lambda * lambda * f * g[k] * g[j] - lambda * f * H[k][j];
    return s * s * dk * dj - s * dkj;
}

namespace {

void check_psi(const WeightParams& params, const NodeSet& set) {
    const int d = set.spec().d;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Point x = set.position(i);
        if (!(params.psi.value(x) > 0.0))
            throw std::invalid_argument("weight: psi must be positive at every sample");
        const Point g = params.psi.gradient(x);
        double n2 = 0.0;
        for (int k = 0; k < d; ++k) n2 += g[k] * g[k];
        if (!(n2 > 0.0)) throw std::invalid_argument("weight: grad psi vanishes at a sample");
    }
}

GridField sample(const NodeSetPtr& set, const std::function<double(const Point&)>& fn) {
    return GridField::from_function(set, [&](const Point& x) { return Complex(fn(x), 0.0); });
}

}  // namespace

WeightFields weight_fields(const WeightParams& params, const NodeSetPtr& set) {
    if (!params.psi.value || !params.psi.gradient) throw std::invalid_argument("weight: psi not set");
    check_psi(params, *set);
    WeightFields w;
    w.phi = sample(set, [&](const Point& x) { return params.phi(x); });
    w.r = w.phi;
    w.rho = w.phi;
    for (std::size_t i = 0; i < w.phi.size(); ++i) {
        const double sp = params.s * w.phi[i].real();
        w.r[i] = std::exp(sp);
        w.rho[i] = std::exp(-sp);
    }
    return w;
}

std::vector<WeightFields> weight_fields(const WeightParams& params, std::span<const NodeSetPtr> sets) {
    std::vector<WeightFields> out;
    out.reserve(sets.size());
    for (const auto& s : sets) out.push_back(weight_fields(params, s));
    return out;
}

double fitted_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fitted_slope: need >= 2 points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / n;
        my += std::log(y[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

namespace {

// max |r(x) v(x) - ref(x)| / scale over v's support.
double weighted_gap(const GridField& v, const WeightParams& p, const std::function<double(const Point&)>& ref,
                    double scale) {
    double worst = 0.0;
    const NodeSet& set = v.support();
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Point x = set.position(i);
        const double r = std::exp(p.s * p.phi(x));
        worst = std::max(worst, std::abs(r * v[i] - ref(x)) / scale);
    }
    return worst;
}

GridField times_r(const GridField& v, const WeightParams& p) {
    GridField out = v;
    const NodeSet& set = v.support();
    for (std::size_t i = 0; i < set.size(); ++i) out[i] *= std::exp(p.s * p.phi(set.position(i)));
    return out;
}

}  // namespace

std::vector<ProbeSeries> weight_probe(const WeightParams& params, const ProbeOptions& options) {
    const int k = options.k;
    const int j = options.d > 1 ? options.j : -1;
    if (k < 0 || k >= options.d || (j >= 0 && (j >= options.d || j == k)))
        throw std::invalid_argument("weight_probe: bad axes");

    const double s = params.s;
    auto one = [](const Point&) { return 1.0; };
    auto dk = [&](const Point& x) { return params.r_d_rho(x, k); };
    auto dkk = [&](const Point& x) { return params.r_dd_rho(x, k, k); };
    auto dkj = [&](const Point& x) { return params.r_dd_rho(x, k, j); };

    std::vector<ProbeSeries> series{
        {"r A_k rho - 1", 2.0, {}, {}, {}, 0.0},
        {"r A_k^2 rho - 1", 2.0, {}, {}, {}, 0.0},
        {"(r D_k rho - r d_k rho)/s", 2.0, {}, {}, {}, 0.0},
        {"(r A_k D_k rho - r d_k rho)/s", 2.0, {}, {}, {}, 0.0},
        {"(r D_k^2 rho - r d_k^2 rho)/s^2", 2.0, {}, {}, {}, 0.0},
        {"D_k(r A_k^2 rho)", 2.0, {}, {}, {}, 0.0},
    };
    if (j >= 0) series.push_back({"(r D_k D_j rho - r d_k d_j rho)/s^2", 2.0, {}, {}, {}, 0.0});

    for (int N : options.N_ladder) {
        auto mesh = Mesh::build(build_grid(options.d, N));
        const double h = mesh->h();
        if (!params.in_regime(h)) throw std::invalid_argument("weight_probe: sh exceeds eps0");
        const GridField rho = weight_fields(params, mesh->lattice()).rho;
        const GridField Dk = diff(rho, k);
        const GridField Ak = avg(rho, k);
        const GridField Akk = avg(Ak, k);

        std::vector<double> errs{
            weighted_gap(Ak, params, one, 1.0),
            weighted_gap(Akk, params, one, 1.0),
            weighted_gap(Dk, params, dk, s),
            weighted_gap(avg(Dk, k), params, dk, s),
            weighted_gap(diff(Dk, k), params, dkk, s * s),
            diff(times_r(Akk, params), k).max_abs(),
        };
        if (j >= 0) errs.push_back(weighted_gap(diff(diff(rho, j), k), params, dkj, s * s));
        for (std::size_t i = 0; i < series.size(); ++i) {
            series[i].h.push_back(h);
            series[i].sh.push_back(s * h);
            series[i].error.push_back(errs[i]);
        }
    }
    for (auto& row : series) row.fitted_order = fitted_slope(row.sh, row.error);
    return series;
}

CarlemanReport carleman_sides(const GridField& u_in, const GridField& q, const SigmaFamily& sigma,
                              const WeightParams& params) {
    const Mesh& mesh = sigma.mesh();
    const int d = mesh.d();
    const double h = mesh.h();
    if (!params.in_regime(h)) throw std::invalid_argument("carleman_sides: sh exceeds eps0");
    const GridField u = u_in.restrict_to(mesh.closure());
    const GridField ub = u.restrict_to(mesh.boundary());
    if (ub.max_abs() > 1e-13 * std::max(1.0, u.max_abs()))
        throw std::invalid_argument("carleman_sides: u must vanish on the boundary");
    require_same_support(q, GridField::zeros(mesh.primal()), "carleman_sides q");

    CarlemanReport rep;
    rep.lambda = params.lambda;
    rep.s = params.s;
    rep.h = h;
    rep.sh = params.s * h;
    rep.q_sup = q.max_abs();
    const double s = params.s;
    const double wd = std::pow(h, d);

    const GridField r_in = weight_fields(params, mesh.primal()).r;
    const GridField ui = u.restrict_to(mesh.primal());
    double mass = 0.0;
    for (std::size_t i = 0; i < ui.size(); ++i) mass += std::norm(r_in[i] * ui[i]);
    double grad = 0.0;
    double bdy = 0.0;
    const GridField dn = normal_derivative(u, sigma);
    for (int k = 0; k < d; ++k) {
        const NodeSetPtr& st = mesh.staggered(k);
        const GridField r_st = weight_fields(params, st).r;
        const GridField Du = diff(u, k, st);
        for (std::size_t i = 0; i < Du.size(); ++i) grad += std::norm(r_st[i]) * std::norm(Du[i]);
        const GridField tr = trace(r_st * r_st, k, mesh);
        for (std::size_t i = 0; i < tr.size(); ++i)
            bdy += tr[i].real() * std::norm(dn.at(tr.support().node(i)));
    }
    rep.lhs = s * s * s * wd * mass + s * wd * grad;

    const GridField Lu = apply_laplacian(u, sigma);
    double res = 0.0;
    for (std::size_t i = 0; i < Lu.size(); ++i) res += std::norm(r_in[i] * (-Lu[i] + q[i] * ui[i]));
    rep.rhs_interior = wd * res;
    rep.rhs_boundary = s * std::pow(h, d - 1) * bdy;
    const double rhs = rep.rhs_interior + rep.rhs_boundary;
    rep.constant = rhs > 0.0 ? rep.lhs / rhs : 0.0;
    return rep;
}

GridField carleman_random_field(const Mesh& mesh, std::uint64_t seed) {
    constexpr int K = 4;
    const int d = mesh.d();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Mode (m_1..m_d) in [1, K]^d, flattened.
    int modes = 1;
    for (int k = 0; k < d; ++k) modes *= K;
    std::vector<double> coef(static_cast<std::size_t>(modes));
    for (auto& c : coef) c = gauss(rng);

    struct Bump {
        Point centre{};
        double width = 0.1, amp = 1.0;
    };
    const int nb = 1 + static_cast<int>(unit(rng) * 3.0);
    std::vector<Bump> bumps(static_cast<std::size_t>(nb));
    for (auto& b : bumps) {
        for (int k = 0; k < d; ++k) b.centre[k] = 0.1 + 0.8 * unit(rng);
        b.width = 0.05 + 0.15 * unit(rng);
        b.amp = gauss(rng);
    }

    GridField u = GridField::from_function(mesh.closure(), [&](const Point& x) {
        double v = 0.0;
        for (int m = 0; m < modes; ++m) {
            double term = coef[static_cast<std::size_t>(m)];
            int rest = m;
            for (int k = 0; k < d; ++k) {
                term *= std::sin(std::numbers::pi * (1 + rest % K) * x[k]);
                rest /= K;
            }
            v += term;
        }
        for (const auto& b : bumps) {
            double r2 = 0.0;
            for (int k = 0; k < d; ++k) r2 += (x[k] - b.centre[k]) * (x[k] - b.centre[k]);
            v += b.amp * std::exp(-r2 / (b.width * b.width));
        }
        return Complex(v, 0.0);
    });
    for (std::size_t i = 0; i < u.size(); ++i)
        if (mesh.boundary()->contains(u.support().node(i))) u[i] = 0.0;
    return u;
}

std::vector<ConstantRow> fit_constant(const WeightParams& base, const FitOptions& options,
                                      const FieldGenerator& family,
                                      const std::function<SigmaPtr(const MeshPtr&)>& sigma_factory) {
    if (options.samples < 1) throw std::invalid_argument("fit_constant: samples must be positive");
    std::vector<ConstantRow> rows;
    for (int N : options.N_ladder) {
        auto mesh = Mesh::build(build_grid(options.d, N));
        WeightParams p = base;
        p.s = options.sh / mesh->h();
        if (!p.in_regime(mesh->h())) throw std::invalid_argument("fit_constant: sh exceeds eps0");
        const SigmaPtr sigma = sigma_factory ? sigma_factory(mesh)
                                             : sample_sigma(SigmaDescription::identity(options.d), mesh);
        const GridField q = GridField::zeros(mesh->primal());
        std::vector<double> quotient(static_cast<std::size_t>(options.samples));
        parallel_for(quotient.size(), options.threads, [&](std::size_t i) {
            const GridField u = family(*mesh, options.seed + i);
            quotient[i] = carleman_sides(u, q, *sigma, p).constant;
        });
        std::size_t best = 0;
        for (std::size_t i = 1; i < quotient.size(); ++i)
            if (quotient[i] > quotient[best]) best = i;
        rows.push_back({options.d, N, mesh->h(), p.s, p.lambda, options.sh, quotient[best], options.seed + best});
    }
    return rows;
}

void write_constant_csv(std::ostream& os, std::span<const ConstantRow> rows) {
    os << "d,N,h,s,lambda,sh,C_fitted,seed\n" << std::setprecision(12);
    for (const auto& r : rows)
        os << r.d << ',' << r.N << ',' << r.h << ',' << r.s << ',' << r.lambda << ',' << r.sh << ','
           << r.C_fitted << ',' << r.seed << '\n';
}

}  // namespace calderon
