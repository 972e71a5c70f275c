#include "calderon/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "calderon/parallel.hpp"

namespace calderon {

namespace {

constexpr double kPi = std::numbers::pi;

/// Symmetric Gaussian block on gamma x gamma, scaled to unit gamma gap norm.
RealMatrix synthetic_perturbation(const Mesh& mesh, const NodeSet& gamma, const BoundaryGram& gram,
                                  std::uint64_t seed) {
    const auto& boundary = *mesh.boundary();
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < boundary.size(); ++i)
        if (gamma.contains(boundary.node(i))) rows.push_back(static_cast<Eigen::Index>(i));
    const auto nb = static_cast<Eigen::Index>(boundary.size());
    RealMatrix P = RealMatrix::Zero(nb, nb);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j <= i; ++j) P(rows[i], rows[j]) = P(rows[j], rows[i]) = normal(rng);
    const double size = dtn_gap_norm(P, RealMatrix::Zero(nb, nb), gamma, gram).value;
    if (!(size > 0.0)) throw std::invalid_argument("synthetic perturbation: gamma has no boundary nodes");
    return P / size;
}

std::string xi_label(const Frequency& xi, int d) {
    std::ostringstream os;
    for (int k = 0; k < d; ++k) os << (k ? ":" : "") << xi[k];
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

PotentialDescription PotentialDescription::zero() { return constant(0.0); }

PotentialDescription PotentialDescription::constant(double c) {
    std::ostringstream os;
    os << "constant(" << c << ")";
    return {os.str(), [c](const Point&) { return c; }};
}

PotentialDescription PotentialDescription::bump(const Point& centre, double radius, double amplitude) {
    if (!(radius > 0.0)) throw std::invalid_argument("bump: radius must be positive");
    std::ostringstream os;
    os << "bump(" << centre[0] << ',' << centre[1] << ',' << centre[2] << ";R=" << radius << ";A=" << amplitude
       << ")";
    return {os.str(), [centre, radius, amplitude](const Point& x) {
                double s = 0.0;
                for (int k = 0; k < kMaxDim; ++k) s += (x[k] - centre[k]) * (x[k] - centre[k]);
                const double t = 1.0 - s / (radius * radius);
                return t > 0.0 ? amplitude * t * t * t : 0.0;
            }};
}

GridField PotentialDescription::sample(const Mesh& mesh) const {
    return GridField::from_function(mesh.primal(), [this](const Point& x) { return Complex(value(x), 0.0); });
}

double ConstantsBox::c_tilde() const { return std::min(eps_tilde / gamma_tilde, c); }

std::string to_string(CgoMethod method) { return method == CgoMethod::Dirichlet ? "dirichlet" : "multiplier"; }

void validate(const ExperimentConfig& config, const Mesh& mesh) {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("experiment config: " + field + ": " + why);
    };
    if (config.d < 3 || config.d > kMaxDim) fail("d", "CGO pairs need d = 3");
    if (mesh.d() != config.d) fail("d", "mesh dimension differs");
    if (!(config.r > 0.0)) fail("r", "Sobolev index must be positive");
    if (!(config.collar_rho > 0.0)) fail("collar_rho", "must be positive");
    if (config.N_ladder.empty()) fail("N_ladder", "empty");
    if (config.perturbation.empty()) fail("perturbation", "empty (use {0} for exact maps)");
    for (double t : config.perturbation)
        if (!(t >= 0.0)) fail("perturbation", "amplitudes must be non-negative");
    const auto& b = config.constants;
    if (!(b.alpha3 > 0.0 && b.a0 > 0.0 && b.c > 0.0 && b.eps_tilde > 0.0 && b.gamma_tilde > 0.0))
        fail("constants", "every constant must be positive");
    if (config.gamma.axis < 0 || config.gamma.axis >= config.d || (config.gamma.sign != 1 && config.gamma.sign != -1))
        fail("gamma", "must name one face (axis, sign = +-1)");

    const GridField q1 = config.q1.sample(mesh);
    const GridField q2 = config.q2.sample(mesh);
    const auto& primal = *mesh.primal();
    const double h = mesh.h();
    for (std::size_t i = 0; i < primal.size(); ++i) {
        const double dist = 0.5 * h * boundary_distance_halfsteps(mesh.spec(), primal.node(i));
        if (dist < 8.0 * config.collar_rho && q1[i] != q2[i]) {
            std::ostringstream os;
            os << "q1 != q2 at a node of O_h (distance " << dist << " < 8 rho = " << 8.0 * config.collar_rho << ")";
            fail("q2", os.str());
        }
    }
}

// ---------------------------------------------------------------------------
// Pairing

RealMatrix dtn_difference(const ForwardSolver& s1, const ForwardSolver& s2, int threads) {
    if (s1.sigma().hash() != s2.sigma().hash())
        throw std::invalid_argument("dtn_difference: solvers must share sigma");
    const RealMatrix rhs(s1.L_IB());
    const Eigen::Index nb = rhs.cols();
    RealVector dq(static_cast<Eigen::Index>(s1.q().size()));
    for (std::size_t i = 0; i < s1.q().size(); ++i)
        dq(static_cast<Eigen::Index>(i)) = s1.q()[i].real() - s2.q()[i].real();
    RealMatrix interior(rhs.rows(), nb);
    const std::size_t blocks = static_cast<std::size_t>(std::max(1, threads));
    parallel_for(blocks, threads, [&](std::size_t b) {
        const Eigen::Index begin = nb * static_cast<Eigen::Index>(b) / static_cast<Eigen::Index>(blocks);
        const Eigen::Index end = nb * static_cast<Eigen::Index>(b + 1) / static_cast<Eigen::Index>(blocks);
        if (end <= begin) return;
        const RealMatrix u1 = s1.solve_interior(RealMatrix(rhs.middleCols(begin, end - begin)));
        interior.middleCols(begin, end - begin) = s2.solve_interior(RealMatrix(dq.asDiagonal() * u1));
    });
    return s1.N_I() * interior;
}

Complex boundary_pairing(const RealMatrix& gap, const GridField& g1, const GridField& g2) {
    const auto& set = g1.support();
    require_same_support(g1, g2, "boundary_pairing");
    if (static_cast<Eigen::Index>(g1.size()) != gap.rows() || gap.rows() != gap.cols())
        throw std::invalid_argument("boundary_pairing: gap size does not match the boundary data");
    ComplexVector a(gap.rows()), b(gap.rows());
    for (std::size_t i = 0; i < g1.size(); ++i) {
        a(static_cast<Eigen::Index>(i)) = g1[i];
        b(static_cast<Eigen::Index>(i)) = g2[i];
    }
    const ComplexVector gb = gap.cast<Complex>() * b;
    return set.weight() * (a.transpose() * gb)(0);
}

double PairingForms::relative_gap() const {
    const double scale = std::max(std::abs(interior), std::abs(boundary));
    return scale > 0.0 ? std::abs(interior - boundary) / scale : 0.0;
}

PairingForms alessandrini_pairing(const ForwardSolver& s1, const ForwardSolver& s2, const RealMatrix& gap,
                                  const GridField& u1, const GridField& u2, double tolerance) {
    const Mesh& mesh = s1.mesh();
    const GridField zero = GridField::zeros(mesh.primal());
    if (s1.residual(u1, zero) > tolerance) throw std::invalid_argument("alessandrini_pairing: u1 is not a solution");
    if (s2.residual(u2, zero) > tolerance) throw std::invalid_argument("alessandrini_pairing: u2 is not a solution");
    const GridField dq = s2.q() - s1.q();
    PairingForms out;
    out.interior = integrate(dq * u1.restrict_to(mesh.primal()) * u2.restrict_to(mesh.primal()));
    out.boundary = boundary_pairing(gap, u1.restrict_to(mesh.boundary()), u2.restrict_to(mesh.boundary()));
    return out;
}

// ---------------------------------------------------------------------------
// Fourier estimates

FourierEstimate fourier_estimate(const EstimateContext& ctx, const Frequency& xi, double a) {
    const ForwardSolver& s1 = *ctx.s1;
    const Mesh& mesh = s1.mesh();
    const SigmaFamily& sigma = s1.sigma();
    const double h = mesh.h();
    const auto [p1, p2] = make_eta(mesh.d(), xi, a, ctx.constants.regime(), sigma.eps_d(), sigma.eps_a(), h);

    auto solve = [&](const ForwardSolver& s, const CgoParams& p) {
        if (ctx.method == CgoMethod::Multiplier) {
            try {
                return cgo_fixed_point(s.q(), s.sigma(), p);
            } catch (const NonContractionError&) {
            }
        }
        return cgo_dirichlet(s, p);
    };
    const CgoSolution c1 = solve(s1, p1);
    const CgoSolution c2 = solve(*ctx.s2, p2);

    FourierEstimate e;
    e.xi = xi;
    e.a = a;
    e.method = c1.method == c2.method ? c1.method : c1.method + "+" + c2.method;
    e.estimate = boundary_pairing(ctx.gap, c1.u.restrict_to(mesh.boundary()), c2.u.restrict_to(mesh.boundary()));

    // Oracle columns.
    e.reference = ctx.reference.at(xi);
    const auto& primal = mesh.primal();
    e.interior_pairing = integrate(ctx.dq * c1.u.restrict_to(primal) * c2.u.restrict_to(primal));
    const GridField r1 = c1.remainder.restrict_to(primal);
    const GridField r2 = c2.remainder.restrict_to(primal);
    ComplexPoint k{};
    for (int j = 0; j < mesh.d(); ++j) k[j] = -2.0 * kPi * xi[j];
    e.cross_term = integrate(ctx.dq * plane_wave(k, primal) * (r1 + r2 + r1 * r2));
    e.r1_L2 = l2_norm(r1);
    e.r2_L2 = l2_norm(r2);

    e.inv_a = 1.0 / a;
    e.a_eps_a = a * sigma.eps_a();
    e.a3h2 = a * a * a * h * h;
    e.data_term = std::pow(a, 4) * std::exp(ctx.constants.alpha3 * a) * std::sqrt(ctx.delta);
    return e;
}

// ---------------------------------------------------------------------------
// Parameter selection and truncation

ParameterChoice select_parameters(double delta, double eps_a, double eps_d, double h, const ConstantsBox& box) {
    if (!(delta >= 0.0)) throw std::invalid_argument("select_parameters: delta must be non-negative");
    ParameterChoice p;
    const double k = 2.0 * (box.alpha3 + 3.0);
    p.mu_tilde = std::max({std::sqrt(eps_a), std::sqrt(h), eps_d}) / box.c_tilde();
    const double log_inv = delta > 0.0 ? -std::log(delta) : std::numeric_limits<double>::infinity();

    if (delta == 0.0 || log_inv >= k / p.mu_tilde) {
        p.branch = delta == 0.0 ? "exact" : "small-delta";
        p.a = 1.0 / p.mu_tilde;
    } else if (log_inv > k * box.a0) {
        p.branch = "log";
        p.a = log_inv / k;
    } else {
        p.branch = "large-delta";
        p.a = box.a0;
        p.warning = "delta above e^{-2(alpha3+3) a0}; a set to a0";
    }
    if (p.a < box.a0) {
        p.warning = "1/mu~ below a0; a clamped to a0";
        p.a = box.a0;
    }
    if (delta == 0.0) {
        p.mu = p.mu_tilde;
    } else {
        const double abs_log = std::abs(std::log(delta));
        p.mu = abs_log > 0.0 ? std::max(p.mu_tilde, k / abs_log) : std::numeric_limits<double>::infinity();
    }
    return p;
}

double truncation_radius(double mu, int d, double r) {
    if (!(mu > 0.0)) throw std::invalid_argument("truncation_radius: mu must be positive");
    if (std::isinf(mu)) return 0.0;
    return std::pow(mu, -2.0 / (d + 2.0 * r)) / kPi;
}

Reconstruction reconstruct_lowpass(const Mesh& mesh, const GridField& dq, double mu, double r,
                                   std::span<const FourierEstimate> estimates) {
    Reconstruction out;
    out.rho_trunc = truncation_radius(mu, mesh.d(), r);
    const SpectralField truth = dft(dq, mesh);
    SpectralField est = truth;
    std::fill(est.coeffs.begin(), est.coeffs.end(), Complex{});
    out.keep.assign(truth.size(), false);

    std::vector<bool> have(truth.size(), false);
    for (const auto& e : estimates) {
        const std::size_t i = truth.index(e.xi);
        est.coeffs[i] = e.estimate;
        have[i] = true;
    }
    const double factor = plancherel_factor(mesh);
    double low = 0.0, tail = 0.0, total = 0.0, tail_mass = 0.0, max_gap2 = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto xi = truth.frequency(i);
        double xi2 = 0.0;
        for (int k = 0; k < mesh.d(); ++k) xi2 += static_cast<double>(xi[k]) * xi[k];
        const double w = std::pow(1.0 + xi2, -r);
        if (std::sqrt(xi2) <= out.rho_trunc || i == 0) {
            if (!have[i]) throw std::invalid_argument("reconstruct_lowpass: missing estimate at xi = " + xi_label(xi, mesh.d()));
            out.keep[i] = true;
            ++out.kept;
            const double g2 = std::norm(truth.coeffs[i] - est.coeffs[i]);
            low += w * g2;
            total += w * g2;
            max_gap2 = std::max(max_gap2, g2);
        } else {
            tail += w * std::norm(truth.coeffs[i]);
            total += w * std::norm(truth.coeffs[i]);
            tail_mass += std::norm(truth.coeffs[i]);
        }
    }
    out.err_total = std::sqrt(factor * total);
    out.err_lowpass = std::sqrt(factor * low);
    out.err_tail = std::sqrt(factor * tail);
    out.lowpass_bound = std::sqrt(factor * static_cast<double>(out.kept) * max_gap2);
    out.tail_bound = out.rho_trunc > 0.0 ? std::pow(out.rho_trunc, -r) * std::sqrt(factor * tail_mass)
                                         : std::numeric_limits<double>::infinity();
    out.q_hat = inverse_dft(est, mesh, out.keep);
    out.err_field = norm_hr(dq - out.q_hat, -r, mesh);
    return out;
}

double stability_bound(double eps_d, double eps_a, double h, double delta, double alpha) {
    double log_term = 0.0;
    if (delta >= 1.0) log_term = std::numeric_limits<double>::infinity();
    else if (delta > 0.0) log_term = std::pow(std::abs(std::log(delta)), -2.0 * alpha);
    return std::max({std::pow(eps_d, 2.0 * alpha), std::pow(eps_a, alpha), std::pow(h, alpha), log_term});
}

// ---------------------------------------------------------------------------
// Experiment

std::vector<StabilityReport> stability_experiment(const ExperimentConfig& config) {
    std::vector<StabilityReport> reports;
    const double alpha = config.r / (2.0 * config.r + config.d);
    for (int N : config.N_ladder) {
        std::vector<StabilityReport> block(config.perturbation.size());
        for (std::size_t t = 0; t < block.size(); ++t) {
            block[t].N = N;
            block[t].perturbation = config.perturbation[t];
            block[t].alpha = alpha;
        }
        std::string stage = "mesh";
        try {
            if (N < 1) throw std::invalid_argument("N must be positive");
            const MeshPtr mesh = Mesh::build(build_grid(config.d, N));
            stage = "config";
            validate(config, *mesh);
            stage = "forward";
            const SigmaPtr sigma = sample_sigma(config.sigma, mesh);
            EstimateContext ctx;
            ctx.s1 = std::make_shared<const ForwardSolver>(sigma, config.q1.sample(*mesh));
            ctx.s2 = std::make_shared<const ForwardSolver>(sigma, config.q2.sample(*mesh));
            ctx.constants = config.constants;
            ctx.method = config.method;
            ctx.dq = ctx.s2->q() - ctx.s1->q();
            ctx.reference = dft(ctx.dq, *mesh);
            stage = "dtn";
            const RealMatrix exact_gap = dtn_difference(*ctx.s1, *ctx.s2, config.threads);
            const BoundaryGram gram(mesh);
            const NodeSetPtr gamma = gamma_nodes(*mesh, config.gamma);
            const RealMatrix P = synthetic_perturbation(*mesh, *gamma, gram, config.seed + static_cast<std::uint64_t>(N));
            const RealMatrix zero = RealMatrix::Zero(exact_gap.rows(), exact_gap.cols());
            const double diff = norm_hr(ctx.dq, -config.r, *mesh);

            for (auto& rep : block) {
                try {
                    stage = "gap";
                    rep.h = mesh->h();
                    rep.eps_d = sigma->eps_d();
                    rep.eps_a = sigma->eps_a();
                    rep.diff_Hminus_r = diff;
                    ctx.gap = exact_gap + rep.perturbation * P;
                    rep.delta_gamma = dtn_gap_norm(ctx.gap, zero, *gamma, gram).value;
                    rep.delta_full = dtn_gap_norm(ctx.gap, zero, *mesh->boundary(), gram).value;
                    ctx.delta = rep.delta_gamma;
                    stage = "select";
                    rep.choice = select_parameters(rep.delta_gamma, rep.eps_a, rep.eps_d, rep.h, config.constants);
                    rep.rho_trunc = truncation_radius(rep.choice.mu, config.d, config.r);
                    rep.bound_value = stability_bound(rep.eps_d, rep.eps_a, rep.h, rep.delta_gamma, alpha);

                    stage = "estimate";
                    std::vector<Frequency> low;
                    for (std::size_t i = 0; i < ctx.reference.size(); ++i) {
                        const auto xi = ctx.reference.frequency(i);
                        double xi2 = 0.0;
                        for (int k = 0; k < config.d; ++k) xi2 += static_cast<double>(xi[k]) * xi[k];
                        if (std::sqrt(xi2) <= rep.rho_trunc || i == 0) low.push_back(xi);
                    }
                    rep.estimates.resize(low.size());
                    parallel_for(low.size(), config.threads, [&](std::size_t i) {
                        rep.estimates[i] = fourier_estimate(ctx, low[i], rep.choice.a);
                    });

                    stage = "reconstruct";
                    const auto rec = reconstruct_lowpass(*mesh, ctx.dq, rep.choice.mu, config.r, rep.estimates);
                    rep.kept = rec.kept;
                    rep.err_Hminus_r = rec.err_total;
                    rep.err_lowpass = rec.err_lowpass;
                    rep.err_tail = rec.err_tail;
                    rep.err_field = rec.err_field;
                } catch (const std::exception& e) {
                    rep.error = stage + ": " + e.what();
                }
            }
        } catch (const std::exception& e) {
            for (auto& rep : block) rep.error = stage + ": " + e.what();
        }
        for (auto& rep : block) reports.push_back(std::move(rep));
    }
    return reports;
}

double fit_bound_constant(std::span<const StabilityReport> reports) {
    double C = 0.0;
    for (const auto& r : reports)
        if (r.ok() && std::isfinite(r.bound_value) && r.bound_value > 0.0)
            C = std::max(C, r.err_Hminus_r / r.bound_value);
    return C;
}

void write_stability_csv(std::ostream& os, std::span<const StabilityReport> reports) {
    os << "N,h,eps_d,eps_a,delta_full,delta_gamma,mu,a,err_Hminus_r,bound_value,alpha\n";
    const auto flags = os.flags();
    const auto precision = os.precision(12);
    for (const auto& r : reports) {
        os << r.N << ',' << r.h << ',' << r.eps_d << ',' << r.eps_a << ',' << r.delta_full << ',' << r.delta_gamma
           << ',' << r.choice.mu << ',' << r.choice.a << ',';
        if (r.ok()) os << r.err_Hminus_r;
        else os << "nan";
        os << ',' << r.bound_value << ',' << r.alpha << '\n';
    }
    os.flags(flags);
    os.precision(precision);
}

}  // namespace calderon
