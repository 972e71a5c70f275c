#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "calderon/grid.hpp"
#include "calderon/operators.hpp"

namespace calderon {

using Hessian = std::array<Point, kMaxDim>;

/// Closed-form psi with its first and second derivatives.
struct PsiFunction {
    std::string name;
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> gradient;
    std::function<Hessian(const Point&)> hessian;

    /// |x - x0|^2.
    static PsiFunction quadratic(const Point& x0);
    /// The default centre (-0.5, 0.5, ..., 0.5), outside the cube.
    static PsiFunction quadratic_default(int d);
    /// c + g . x (positive on the enlarged cube when c is large enough).
    static PsiFunction linear(const Point& g, double c);
    /// Constant psi; rejected by every sampling routine.
    static PsiFunction constant(double c);
};

struct WeightParams {
    PsiFunction psi;
    double lambda = 2.0;
    double s = 2.0;
    double eps0 = 0.5;  // regime cap sh <= eps0
    double s0 = 2.0;

    static WeightParams defaults(int d);
    [[nodiscard]] bool in_regime(double h) const { return s * h <= eps0 + 1e-12; }

    [[nodiscard]] double phi(const Point& x) const;
    /// Continuous r d_k rho = s lambda phi d_k psi.
    [[nodiscard]] double r_d_rho(const Point& x, int k) const;
    /// Continuous r d_k d_j rho = s^2 d_k phi d_j phi - s d_k d_j phi.
    [[nodiscard]] double r_dd_rho(const Point& x, int k, int j) const;
};

struct WeightFields {
    GridField phi, r, rho;
};

/// phi, r = e^{s phi} and rho = e^{-s phi} on `set`. Throws std::invalid_argument
/// where psi <= 0 or grad psi = 0 at a sample.
WeightFields weight_fields(const WeightParams& params, const NodeSetPtr& set);
std::vector<WeightFields> weight_fields(const WeightParams& params, std::span<const NodeSetPtr> sets);

/// One row of the asymptotic probe: a discrete weight expression compared with
/// its continuous limit, normalized by s^m so the remainder is O((sh)^order).
struct ProbeSeries {
    std::string name;
    double expected_order = 2.0;
    std::vector<double> h;
    std::vector<double> sh;
    std::vector<double> error;
    double fitted_order = 0.0;
};

struct ProbeOptions {
    int d = 2;
    int k = 0;
    int j = 1;  // second axis for the mixed difference (ignored when d = 1)
    std::vector<int> N_ladder{7, 15, 31, 63};
};

/// Least-squares slope of log(error) against log(sh).
double fitted_slope(std::span<const double> x, std::span<const double> y);

/// Max-norm remainders of the weight calculus along a ladder of h with s fixed.
std::vector<ProbeSeries> weight_probe(const WeightParams& params, const ProbeOptions& options = {});

struct CarlemanReport {
    double lhs = 0.0;
    double rhs_interior = 0.0;
    double rhs_boundary = 0.0;
    double constant = 0.0;  // lhs / (rhs_interior + rhs_boundary); 0 when both sides vanish
    double lambda = 0.0, s = 0.0, h = 0.0, sh = 0.0;
    double q_sup = 0.0;
};

/// Both sides of the weighted estimate for u on the closure, u = 0 on the
/// boundary. Throws std::invalid_argument on a boundary violation or sh > eps0.
CarlemanReport carleman_sides(const GridField& u, const GridField& q, const SigmaFamily& sigma,
                              const WeightParams& params);

/// Random boundary-vanishing field on the closure: a few low sine modes plus
/// Gaussian bumps, boundary samples zeroed.
GridField carleman_random_field(const Mesh& mesh, std::uint64_t seed);

struct ConstantRow {
    int d = 0, N = 0;
    double h = 0.0, s = 0.0, lambda = 0.0, sh = 0.0;
    double C_fitted = 0.0;
    std::uint64_t seed = 0;
};

struct FitOptions {
    int d = 2;
    std::vector<int> N_ladder{7, 11, 15};
    double sh = 0.25;
    int samples = 100;
    std::uint64_t seed = 1;
    int threads = 1;
};

using FieldGenerator = std::function<GridField(const Mesh&, std::uint64_t)>;

/// For each N, s = sh / h and the max quotient over `samples` fields with
/// seeds seed, seed+1, ...; q = 0, sigma = 1 unless a sigma factory is given.
std::vector<ConstantRow> fit_constant(const WeightParams& base, const FitOptions& options,
                                      const FieldGenerator& family = carleman_random_field,
                                      const std::function<SigmaPtr(const MeshPtr&)>& sigma = {});

/// Header "d,N,h,s,lambda,sh,C_fitted,seed" then one row per entry.
void write_constant_csv(std::ostream& os, std::span<const ConstantRow> rows);

}  // namespace calderon
