#pragma once

#include <Eigen/Cholesky>

#include <array>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "calderon/grid.hpp"
#include "calderon/operators.hpp"

namespace calderon {

enum class NormKind { L2, H1Ring, H1, H2Ring, H2 };

std::string to_string(NormKind kind);

/// Discrete norms over the interior: L2 on the primal set, H1 adds the closure
/// L2 part and the staggered differences, H2 adds all second differences.
/// u must be defined on the closure for every kind except L2.
double norm(const GridField& u, NormKind kind, const Mesh& mesh);

/// Same norms over an arbitrary interior subset W of the primal lattice:
/// W* = star_k(W), closure = union_k star_k(star_k(W)). Second differences use
/// the part of star_j(star_k(W)) where the stencil is available in u.
double norm_on(const GridField& u, std::span<const Coord> W, NormKind kind);

/// Discrete Fourier coefficients F(u)(xi) = h^d sum_x u(x) exp(-2 pi i x.xi),
/// xi in [0, N]^d, stored with the last axis fastest.
struct SpectralField {
    int d = 0;
    int N = 0;
    std::vector<Complex> coeffs;

    [[nodiscard]] std::size_t index(const std::array<int, kMaxDim>& xi) const;
    [[nodiscard]] std::array<int, kMaxDim> frequency(std::size_t index) const;
    [[nodiscard]] Complex at(const std::array<int, kMaxDim>& xi) const { return coeffs[index(xi)]; }
    [[nodiscard]] std::size_t size() const { return coeffs.size(); }
};

SpectralField dft(const GridField& u, const Mesh& mesh);

/// Inverse transform over the kept frequencies (all when keep is empty) back
/// to the primal set. Exact inverse of dft when nothing is dropped.
GridField inverse_dft(const SpectralField& F, const Mesh& mesh, const std::vector<bool>& keep = {});

/// Spectral-sum prefactor making the r = 0 norm equal the L2 norm, calibrated
/// once on u = 1. With h (N+1) = 1 it equals 1 up to rounding.
double plancherel_factor(const Mesh& mesh);

/// |u|_{H^r} = (c sum_xi |F(u)(xi)|^2 (1 + |xi|^2)^r)^{1/2} with the calibrated c.
double norm_hr(const GridField& u, double r, const Mesh& mesh);
double norm_hr(const SpectralField& F, double r, double factor = 1.0);

/// Schur complement of the H^1 quadratic form onto the boundary nodes
/// (ordered as mesh.boundary()). Independent of sigma and q.
class BoundaryGram {
public:
    explicit BoundaryGram(MeshPtr mesh);

    [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
    [[nodiscard]] const RealMatrix& G() const { return G_; }
    /// Interior values of the minimizing extension: u_I = E g.
    [[nodiscard]] const RealMatrix& extension() const { return E_; }
    /// Dense H^1 form on the closure (for oracles and diagnostics).
    [[nodiscard]] RealMatrix closure_form() const;

    [[nodiscard]] double half_norm(const ComplexVector& g) const;
    [[nodiscard]] double dual_norm(const ComplexVector& f) const;
    /// The g attaining the dual norm (unnormalized): G^{-1} conj(f).
    [[nodiscard]] ComplexVector dual_direction(const ComplexVector& f) const;
    [[nodiscard]] RealMatrix G_inverse() const;

private:
    MeshPtr mesh_;
    SparseMatrix Q_;
    RealMatrix G_, E_;
    Eigen::LLT<RealMatrix> llt_;
};

struct HalfNormResult {
    double value = 0.0;
    GridField minimizer;  // on the closure
};

/// |g|_{H^{1/2}} as the minimum H^1 norm over closure extensions of g.
HalfNormResult norm_boundary_half(const GridField& g, const BoundaryGram& gram);

/// |f|_{H^{-1/2}}; fields on a face or window are extended by zero first.
double norm_boundary_dual(const GridField& f, const BoundaryGram& gram);

ComplexVector boundary_vector(const GridField& f, const Mesh& mesh);

/// Dense Dirichlet-to-Neumann map over mesh.boundary() ordering.
struct DtNMap {
    MeshPtr mesh;
    RealMatrix matrix;
    std::string sigma_name;
    std::uint64_t sigma_hash = 0;
    std::uint64_t q_hash = 0;

    [[nodiscard]] GridField apply(const GridField& g) const;
    /// Rows outside gamma set to zero (zero extension of the restricted map).
    [[nodiscard]] RealMatrix restricted(const NodeSet& gamma) const;
};

/// One solve per boundary basis vector; columns spread over `threads` workers.
DtNMap dtn_assemble(const ForwardSolver& solver, int threads = 1);

/// Text format: '#'-prefixed metadata lines (d, N, h, sigma, hashes, size),
/// then one matrix row per line, values separated by spaces.
void write_dtn(std::ostream& os, const DtNMap& map);
DtNMap read_dtn(std::istream& is);

struct GapNorm {
    double value = 0.0;
    GridField maximizer;  // boundary data with |g|_{H^{1/2}} = 1
};

/// max |P_gamma (L1 - L2) g|_{H^{-1/2}} over |g|_{H^{1/2}} = 1, via the
/// generalized symmetric eigenproblem K^T M K g = delta^2 G g.
GapNorm dtn_gap_norm(const RealMatrix& L1, const RealMatrix& L2, const NodeSet& gamma,
                     const BoundaryGram& gram);
GapNorm dtn_gap_norm(const DtNMap& L1, const DtNMap& L2, const NodeSet& gamma,
                     const BoundaryGram& gram);

}  // namespace calderon
