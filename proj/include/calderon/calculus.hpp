#pragma once

#include "calderon/grid.hpp"

namespace calderon {

// Difference and average in direction k. Without a target the result lives on
// every node whose two half-step neighbours are in u's support; with a target
// every target node must have both neighbours.
GridField diff(const GridField& u, int k);
GridField diff(const GridField& u, int k, const NodeSetPtr& target);
GridField avg(const GridField& u, int k);
GridField avg(const GridField& u, int k, const NodeSetPtr& target);

/// Shift by +-h/2 along k: (tau_{dir k} u)(x) = u(x + dir h/2 e_k) on the target.
GridField shift(const GridField& u, int k, int dir, const NodeSetPtr& target);

/// Inward half-step sample of a k-staggered field on both k-faces.
GridField trace(const GridField& v, int k, const Mesh& mesh);

/// Pointwise complex conjugate and squared magnitude.
GridField conj(const GridField& u);
GridField abs2(const GridField& u);

/// Absolute residual of an exact identity together with the magnitude of the
/// terms involved, so callers can form a relative error.
struct Residual {
    double abs = 0.0;
    double scale = 0.0;
    [[nodiscard]] double relative() const { return scale > 0.0 ? abs / scale : abs; }
};

struct IbpResidual {
    Complex res_d;   // integration by parts for D_k
    Complex res_a;   // integration by parts for A_k
    double scale_d = 0.0;
    double scale_a = 0.0;
    [[nodiscard]] Residual d() const { return {std::abs(res_d), scale_d}; }
    [[nodiscard]] Residual a() const { return {std::abs(res_a), scale_a}; }
};

/// u on (or containing) the k axis closure, v on (or containing) the k-staggered set.
IbpResidual ibp_residual(const GridField& u, const GridField& v, int k, const Mesh& mesh);

/// Max pointwise residuals of the two product rules on the k-staggered set.
/// u and v must be given on the closure.
Residual product_rule_d_residual(const GridField& u, const GridField& v, int k, const Mesh& mesh);
Residual product_rule_a_residual(const GridField& u, const GridField& v, int k, const Mesh& mesh);

/// Max pointwise residual of the three commutation rules on the kj-staggered
/// set. The compositions reach the cube corners, so u lives on the lattice.
Residual commutation_residual(const GridField& u, int k, int j, const Mesh& mesh);

/// A_k(u^2) = (A_k u)^2 + h^2/4 (D_k u)^2 and D_k(u^2) = 2 D_k u A_k u on the
/// k-staggered set; u on the closure.
Residual square_identity_residual(const GridField& u, int k, const Mesh& mesh);

/// Largest violation (positive means broken) of |A_k u|^2 <= A_k|u|^2 and
/// |D_k u|^2 <= 4/h^2 A_k|u|^2 on the k-staggered set.
double square_inequality_violation(const GridField& u, int k, const Mesh& mesh);

}  // namespace calderon
