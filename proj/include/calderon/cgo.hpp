#pragma once

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "calderon/grid.hpp"
#include "calderon/operators.hpp"

namespace calderon {

using ComplexPoint = std::array<Complex, kMaxDim>;
using Frequency = std::array<int, kMaxDim>;

/// Admissible amplitudes a0 <= a <= c min{1/eps_d, 1/eps_a, h^{-2/3}}.
struct CgoRegime {
    double a0 = 3.0;
    double c = 0.5;

    [[nodiscard]] double upper(double eps_d, double eps_a, double h) const;
};

struct CgoParams {
    int d = 3;
    Frequency xi{};
    double a = 0.0;
    Point zeta1{}, zeta2{};
    ComplexPoint eta{};

    [[nodiscard]] Complex eta_dot_eta() const;
};

/// eta_1 = -pi xi + sqrt(a^2 - pi^2|xi|^2) zeta1 + i a zeta2 and eta_2 with both
/// signs flipped on the zeta terms. zeta1, zeta2 come from Gram-Schmidt on
/// e_1..e_d against xi. Throws std::invalid_argument for d < 3, a < pi|xi| or
/// a outside the regime (message names the violated bound).
std::pair<CgoParams, CgoParams> make_eta(int d, const Frequency& xi, double a, const CgoRegime& regime,
                                         double eps_d, double eps_a, double h);

/// Fourier symbol of e^{-i eta.x} Delta_h e^{i eta.x} (sigma = 1) at the torus
/// frequencies m + shift, m in [0, N]^d, last axis fastest.
std::vector<Complex> conjugated_symbol(const ComplexPoint& eta, const GridSpec& spec,
                                       const Point& shift = {});

struct CgoOptions {
    double tolerance = 1e-12;
    int max_iterations = 200;
    double threshold_factor = 0.1;  // modes with |p| < factor a^4 h^2 are dropped
    /// Leave the constant symbol defect p_eta(0) out of the iteration and
    /// report it through the residual instead of absorbing it into r.
    bool fold_defect = false;
};

struct CgoSolution {
    CgoParams params;
    std::string method;  // "multiplier" or "dirichlet"
    GridField remainder;  // r on the closure
    GridField u;          // e^{i eta.x} (1 + r) on the closure
    double r_L2 = 0.0;      // over the closure
    double r_H1ring = 0.0;
    double residual = 0.0;  // |(-Delta_h + q) u|_{L^2}
    double residual_scale = 0.0;  // |Delta_h u| + |q u|
    int iterations = 0;
    std::size_t excluded_modes = 0;

    [[nodiscard]] double relative_residual() const {
        return residual_scale > 0.0 ? residual / residual_scale : residual;
    }
};

class NonContractionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Multiplier fixed point r <- -G_eta[(q + V_sigma)(1 + r)] on the torus with
/// an antiperiodic twist along the axis of largest |Im eta_k|. Throws
/// NonContractionError when the update grows three times in a row (use
/// cgo_dirichlet instead) and std::invalid_argument if every mode is excluded.
CgoSolution cgo_fixed_point(const GridField& q, const SigmaFamily& sigma, const CgoParams& params,
                            const CgoOptions& options = {});

/// Exact discrete solution with boundary data e^{i eta.x}; r = e^{-i eta.x} u - 1.
CgoSolution cgo_dirichlet(const ForwardSolver& solver, const CgoParams& params);

/// e^{i eta.x} on any node set.
GridField plane_wave(const ComplexPoint& eta, const NodeSetPtr& set);

/// Header "xi,a,h,method,res_L2,r_L2,r_H1ring,iters".
void write_cgo_csv(std::ostream& os, std::span<const CgoSolution> rows);

struct RemainderPoint {
    int N = 0;
    double h = 0.0, a = 0.0;
    double quantity = 0.0;  // a |r|_{L^2} + |r|_{H1ring}
    double predicted = 0.0; // 1 + a^2 eps_a + a^4 h^2
    double relative_residual = 0.0;
    std::string method;
};

struct RemainderProbe {
    std::vector<RemainderPoint> points;
    double fitted_slope = 0.0;      // log quantity against log h
    double predicted_slope = 0.0;   // same fit applied to the predicted bound
};

/// Ladder a = a_scale h^{-1/2} over N, xi = 0, sigma = 1, q = q_amp prod sin(pi x_k).
/// The default regime lowers a0 to 2 so the coarsest rung (N = 5) is admissible.
RemainderProbe remainder_probe(std::span<const int> N_ladder, double a_scale = 1.0, double q_amp = 5.0,
                               const CgoRegime& regime = {2.0, 1.0}, const CgoOptions& options = {});

}  // namespace calderon
