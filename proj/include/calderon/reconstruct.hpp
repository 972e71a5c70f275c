#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "calderon/cgo.hpp"
#include "calderon/norms.hpp"
#include "calderon/ucp.hpp"

namespace calderon {

/// Closed-form potential, sampled on the primal set.
struct PotentialDescription {
    std::string name;
    std::function<double(const Point&)> value;

    static PotentialDescription zero();
    static PotentialDescription constant(double c);
    /// amplitude (1 - |x - centre|^2 / radius^2)^3 inside the ball, 0 outside (C^2).
    static PotentialDescription bump(const Point& centre, double radius, double amplitude);
    [[nodiscard]] GridField sample(const Mesh& mesh) const;
};

/// Proof constants the theorem leaves unspecified.
struct ConstantsBox {
    double alpha3 = 1.0;
    double a0 = 2.0;
    double c = 3.0;
    double eps_tilde = 0.125;
    double eps0 = 0.5;
    double gamma_tilde = 0.125;

    /// c~ = min{eps~ / gamma~, c}.
    [[nodiscard]] double c_tilde() const;
    [[nodiscard]] CgoRegime regime() const { return {a0, c}; }
};

enum class CgoMethod { Dirichlet, Multiplier };
std::string to_string(CgoMethod method);

struct ExperimentConfig {
    int d = 3;
    std::vector<int> N_ladder{5, 7, 9};
    SigmaDescription sigma = SigmaDescription::identity(3);
    PotentialDescription q1 = PotentialDescription::zero();
    PotentialDescription q2 = PotentialDescription::bump({0.5, 0.5, 0.5}, 0.3, 5.0);
    double collar_rho = 0.02;  // O_h = omega(8 rho)
    GammaBox gamma{0, -1, {0.0, 0.25, 0.25}, {0.0, 0.75, 0.75}};
    double r = 1.0;
    ConstantsBox constants;
    /// Amplitudes t of the synthetic perturbation Lambda_2 + t P (P has unit
    /// gamma gap norm); 0 keeps the exact maps.
    std::vector<double> perturbation{0.0};
    CgoMethod method = CgoMethod::Dirichlet;
    std::uint64_t seed = 11;
    int threads = 1;
};

/// Throws std::invalid_argument naming the first violated field, including
/// q1 != q2 at a node of O_h.
void validate(const ExperimentConfig& config, const Mesh& mesh);

/// Lambda_2 - Lambda_1 through the resolvent identity
/// N_I A_2^{-1} diag(q1 - q2) A_1^{-1} L_IB, free of cancellation. Both
/// solvers must share sigma.
RealMatrix dtn_difference(const ForwardSolver& s1, const ForwardSolver& s2, int threads = 1);

/// int_{boundary} (gap g2) g1 with boundary data in mesh.boundary() order.
Complex boundary_pairing(const RealMatrix& gap, const GridField& g1, const GridField& g2);

struct PairingForms {
    Complex interior;  // int (q2 - q1) u1 u2
    Complex boundary;  // int_{boundary} ((Lambda_2 - Lambda_1) u2) u1
    [[nodiscard]] double relative_gap() const;
};

/// Both forms for exact solutions u_j of (-Delta_h + q_j) u = 0 on the closure.
/// Throws std::invalid_argument if either residual exceeds `tolerance`.
PairingForms alessandrini_pairing(const ForwardSolver& s1, const ForwardSolver& s2, const RealMatrix& gap,
                                  const GridField& u1, const GridField& u2, double tolerance = 1e-8);

/// Everything a Fourier estimate may touch. `dq` and `reference` are oracle
/// inputs; the estimate itself reads only `gap` and boundary traces.
struct EstimateContext {
    SolverPtr s1, s2;
    RealMatrix gap;
    double delta = 0.0;
    ConstantsBox constants;
    CgoMethod method = CgoMethod::Dirichlet;
    GridField dq;           // q2 - q1 on the primal set (oracle)
    SpectralField reference;  // dft(dq) (oracle)
};

struct FourierEstimate {
    Frequency xi{};
    double a = 0.0;
    std::string method;
    Complex estimate;          // boundary pairing value
    Complex reference;         // F(q2 - q1)(xi), oracle
    Complex interior_pairing;  // oracle
    Complex cross_term;        // int (q2 - q1) e^{-2 pi i xi.x} (r1 + r2 + r1 r2), oracle
    double r1_L2 = 0.0, r2_L2 = 0.0;
    double inv_a = 0.0, a_eps_a = 0.0, a3h2 = 0.0, data_term = 0.0;

    [[nodiscard]] double gap() const { return std::abs(estimate - reference); }
    [[nodiscard]] double bound_shape() const { return inv_a + a_eps_a + a3h2 + data_term; }
};

/// Throws std::invalid_argument from make_eta on regime violations.
FourierEstimate fourier_estimate(const EstimateContext& ctx, const Frequency& xi, double a);

struct ParameterChoice {
    double mu_tilde = 0.0;
    double mu = 0.0;
    double a = 0.0;
    std::string branch;   // "exact", "small-delta", "log", "large-delta"
    std::string warning;  // empty unless a degenerate branch or a clamp fired
};

/// mu~ = max{eps_a^{1/2}, h^{1/2}, eps_d} / c~ and the three-case choice of a.
ParameterChoice select_parameters(double delta, double eps_a, double eps_d, double h, const ConstantsBox& box);

/// rho = mu^{-2/(d+2r)} / pi.
double truncation_radius(double mu, int d, double r);

struct Reconstruction {
    double rho_trunc = 0.0;
    std::vector<bool> keep;  // DFT layout
    std::size_t kept = 0;
    GridField q_hat;         // low-pass inverse DFT of the estimates
    // Spectral error E = F(dq) - 1_K est; total^2 = lowpass^2 + tail^2.
    double err_total = 0.0;
    double err_lowpass = 0.0;
    double err_tail = 0.0;
    /// |dq - q_hat|_{H^{-r}} through the primal field. Differs from err_total
    /// because dft maps N^d nodes onto (N+1)^d frequencies, so a masked
    /// spectrum is generally not the transform of any primal field.
    double err_field = 0.0;
    double lowpass_bound = 0.0;  // sqrt(c |K| max gap^2)
    double tail_bound = 0.0;     // rho^{-r} |dq|_{L^2} on the tail; inf when rho = 0
};

/// Keeps {xi in [0, N]^d : |xi| <= rho_trunc}; throws std::invalid_argument if
/// an estimate for a kept frequency is missing.
Reconstruction reconstruct_lowpass(const Mesh& mesh, const GridField& dq, double mu, double r,
                                   std::span<const FourierEstimate> estimates);

/// max{eps_d^{2 alpha}, eps_a^alpha, h^alpha, |ln delta|^{-2 alpha}}; the log
/// term is 0 at delta = 0 and infinite for delta >= 1.
double stability_bound(double eps_d, double eps_a, double h, double delta, double alpha);

struct StabilityReport {
    int N = 0;
    double h = 0.0, eps_d = 0.0, eps_a = 0.0;
    double perturbation = 0.0;
    double delta_full = 0.0, delta_gamma = 0.0;
    ParameterChoice choice;
    double rho_trunc = 0.0;
    std::size_t kept = 0;
    double err_Hminus_r = 0.0, err_lowpass = 0.0, err_tail = 0.0, err_field = 0.0;
    double diff_Hminus_r = 0.0;  // |q2 - q1|_{H^{-r}}, the theorem's left side
    double bound_value = 0.0;
    double alpha = 0.0;
    std::vector<FourierEstimate> estimates;
    std::string error;  // stage-labelled failure, empty on success

    [[nodiscard]] bool ok() const { return error.empty(); }
};

/// One report per (N, perturbation) pair, N-major. Failures are recorded in
/// the report and the remaining points still run.
std::vector<StabilityReport> stability_experiment(const ExperimentConfig& config);

/// max err / bound over successful reports with a finite positive bound.
double fit_bound_constant(std::span<const StabilityReport> reports);

/// Header "N,h,eps_d,eps_a,delta_full,delta_gamma,mu,a,err_Hminus_r,bound_value,alpha".
void write_stability_csv(std::ostream& os, std::span<const StabilityReport> reports);

}  // namespace calderon
