#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "calderon/grid.hpp"
#include "calderon/operators.hpp"

namespace calderon {

/// dist(x, boundary of the unit cube) = min_k min(x_k, 1 - x_k) at a node, in half-steps.
int boundary_distance_halfsteps(const GridSpec& spec, const Coord& c);

/// Interior collar sets: omega(8 rho), omega(rho1, rho2), omega(rho, 3 rho).
struct CollarSpec {
    MeshPtr mesh;
    double rho = 0.0, rho1 = 0.0, rho2 = 0.0;
    NodeSetPtr near;    // omega_h(8 rho); also used as O_h
    NodeSetPtr band;    // omega_h(rho1, rho2)
    NodeSetPtr collar;  // omega_h(rho, 3 rho)
    NodeSetPtr far;     // interior nodes outside O_h (where sources may live)
};

/// Throws std::invalid_argument unless 0 < rho1 < rho2 < 8 rho and every set is nonempty.
CollarSpec build_collar(const MeshPtr& mesh, double rho, double rho1, double rho2);

/// Profile equal to 0 for p <= 1/2 or p >= 8, 1 on [3/4, 7], quintic
/// smoothstep bridges in between.
double cutoff_profile(double p);
GridField cutoff(const GridField& p);

/// Box-shaped observed part of one face in continuous coordinates.
struct GammaBox {
    int axis = 0;
    int sign = -1;
    Point lo{}, hi{};  // in-plane bounds; the normal coordinate is ignored
};

NodeSetPtr gamma_nodes(const Mesh& mesh, const GammaBox& gamma);

/// Exterior point x0 with radius delta, first interior ball B(x1, r), and a
/// chain of centres with |x^{j+1} - x^j| <= r through every collar node.
struct BallChain {
    Point x0{}, x1{};
    double delta = 0.0;
    double r = 0.0;
    std::vector<Point> centres;  // centres[0] == x1

    [[nodiscard]] std::size_t count() const { return centres.size(); }
};

struct ChainCheck {
    bool delta_small = false;        // delta < rho / 4
    bool exterior = false;           // closed B(x0, delta) misses the closed cube
    bool meets_interior = false;     // B(x0, 2 delta) meets the open cube
    bool boundary_in_gamma = false;  // B(x0, 4 delta) on the boundary lies in gamma
    bool x1_far_from_gamma = false;  // dist(x1, gamma) >= 4 r
    bool x1_ball_in_shell = false;   // B(x1, r) inside delta <= |x - x0| <= 2 delta
    bool chained = false;            // B(x^{j+1}, r) inside B(x^j, 2 r)
    bool covers_collar = false;      // every collar node lies in some ball

    [[nodiscard]] bool all() const {
        return delta_small && exterior && meets_interior && boundary_in_gamma && x1_far_from_gamma &&
               x1_ball_in_shell && chained && covers_collar;
    }
};

ChainCheck check_chain(const BallChain& chain, const CollarSpec& collar, const GammaBox& gamma);

/// Searches admissible (x0, delta) in front of gamma; throws std::runtime_error
/// when none passes every check.
BallChain build_ball_chain(const CollarSpec& collar, const GammaBox& gamma);

struct UcpReport {
    double h = 0.0;
    double lhs = 0.0;       // |u|_{H^1(omega(rho, 3 rho))}
    double h1_total = 0.0;  // |u|_{H^1(Omega)}
    double dn_gamma = 0.0;  // |d_n u|_{L^2(Gamma)}
    std::vector<double> taus;

    [[nodiscard]] double term1(double tau, double alpha1) const;
    [[nodiscard]] double term2(double tau, double alpha2) const;
    [[nodiscard]] double rhs(double tau, double alpha1, double alpha2) const {
        return term1(tau, alpha1) + term2(tau, alpha2);
    }
};

/// Default tau grid: `count` equispaced values in (0, eps_tilde / h].
std::vector<double> tau_grid(double h, double eps_tilde, int count = 20);

/// u on the closure with u = 0 on the boundary; f on the interior with f = 0
/// on O_h. Throws std::invalid_argument when either precondition fails or a
/// tau violates h tau <= eps_tilde.
UcpReport ucp_sides(const GridField& u, const GridField& f, const SigmaFamily& sigma, const NodeSetPtr& gamma,
                    const CollarSpec& collar, std::span<const double> taus, double eps_tilde);

struct UcpFitOptions {
    double alpha_min = 0.01, alpha_max = 10.0;
    int alpha_steps = 31;  // log-spaced per exponent
    double C_cap = 10.0;
};

struct UcpFit {
    double alpha1 = 0.0, alpha2 = 0.0, C = 0.0;
    bool satisfiable = false;  // lhs <= C rhs at every tau for every report
};

/// Smallest C making every report hold at every tau for fixed exponents.
double ucp_needed_constant(std::span<const UcpReport> reports, double alpha1, double alpha2);

/// Grid search: the largest alpha1 whose needed C is at most C_cap, ties
/// broken by the smallest alpha2, then the smallest C.
UcpFit fit_ucp(std::span<const UcpReport> reports, const UcpFitOptions& options = {});

struct UcpExperimentOptions {
    int d = 2;
    int N = 15;
    double rho = 0.05;
    int solutions = 20;
    double eps0 = 0.5;
    double eps_tilde_factor = 0.25;
    int tau_count = 20;
    std::uint64_t seed = 5;
    int threads = 1;
    GammaBox gamma{0, -1, {0.0, 0.25, 0.25}, {0.0, 0.75, 0.75}};
    UcpFitOptions fit;
};

struct UcpExperiment {
    CollarSpec collar;
    BallChain chain;
    ChainCheck chain_check;
    std::vector<UcpReport> reports;
    UcpFit fit;
};

/// Solves (-Delta_h + q) u = f, u = 0 on the boundary, for random f on the
/// far set and random constant q >= 0, then fits (C, alpha1, alpha2).
UcpExperiment run_ucp_experiment(const UcpExperimentOptions& options);

/// Header "h,tau,lhs,term1,term2,satisfiable_at_best_fit"; one row per report and tau.
void write_ucp_csv(std::ostream& os, std::span<const UcpReport> reports, const UcpFit& fit);

}  // namespace calderon
