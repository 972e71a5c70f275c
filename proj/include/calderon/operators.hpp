#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "calderon/grid.hpp"

namespace calderon {

using SparseMatrix = Eigen::SparseMatrix<double>;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Closed-form diffusion coefficients, one function per axis, evaluable at
/// any point of a neighbourhood of the unit cube.
struct SigmaDescription {
    std::string name;
    std::vector<std::function<double(const Point&)>> coeff;

    static SigmaDescription identity(int d);
    /// sigma^k(x) = 1 + amplitude * prod_j sin(pi x_j) for every k.
    static SigmaDescription smooth_bump(int d, double amplitude);
};

/// Coefficients sampled on the staggered sets plus the mesh metrics; all
/// metrics are recomputed from samples.
class SigmaFamily {
public:
    SigmaFamily(MeshPtr mesh, const SigmaDescription& desc);

    [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
    [[nodiscard]] const MeshPtr& mesh_ptr() const { return mesh_; }
    [[nodiscard]] const std::string& name() const { return name_; }
    /// sigma^k on the k-staggered set, parallel to mesh().staggered(k).
    [[nodiscard]] const GridField& on_staggered(int k) const { return samples_[static_cast<std::size_t>(k)]; }
    /// Closed-form evaluation at an arbitrary half-lattice coordinate.
    [[nodiscard]] double at(int k, const Coord& c) const;

    [[nodiscard]] double eps_d() const { return eps_d_; }
    [[nodiscard]] double eps_a() const { return eps_a_; }
    [[nodiscard]] double M() const { return M_; }
    /// Bounds of A_j sigma^k over the k axis closure.
    [[nodiscard]] double lower() const { return lower_; }
    [[nodiscard]] double upper() const { return upper_; }
    /// Smallest sampled value on the staggered sets.
    [[nodiscard]] double min_sample() const { return min_sample_; }
    [[nodiscard]] bool is_identity() const { return identity_; }
    [[nodiscard]] std::uint64_t hash() const { return hash_; }

private:
    MeshPtr mesh_;
    std::string name_;
    std::vector<std::function<double(const Point&)>> coeff_;
    std::vector<GridField> samples_;
    double eps_d_ = 0.0, eps_a_ = 0.0, M_ = 0.0;
    double lower_ = 0.0, upper_ = 0.0, min_sample_ = 0.0;
    bool identity_ = false;
    std::uint64_t hash_ = 0;
};

using SigmaPtr = std::shared_ptr<const SigmaFamily>;

/// Throws std::invalid_argument if any consumed sample is non-positive.
SigmaPtr sample_sigma(const SigmaDescription& desc, MeshPtr mesh);

/// Delta_h = sum_k D_k(sigma^k D_k .) as a sparse map from closure values to
/// interior values (rows follow mesh.primal(), columns mesh.closure()).
SparseMatrix laplacian_matrix(const SigmaFamily& sigma);

/// Normal derivative as a sparse map closure -> boundary (rows follow mesh.boundary()).
SparseMatrix normal_derivative_matrix(const SigmaFamily& sigma);

/// Field-level evaluation through the difference operators.
GridField apply_laplacian(const GridField& u, const SigmaFamily& sigma);
GridField normal_derivative(const GridField& u, const SigmaFamily& sigma);

/// LHS - RHS of the discrete Green identity; both fields on the closure.
struct GreenResidual {
    Complex residual;
    double scale = 0.0;
    [[nodiscard]] double relative() const { return scale > 0 ? std::abs(residual) / scale : std::abs(residual); }
};
GreenResidual greens_residual(const GridField& u, const GridField& v, const SigmaFamily& sigma);

/// Raised when the forward operator fails the invertibility check.
class SingularSystemError : public std::runtime_error {
public:
    SingularSystemError(const std::string& what, double sigma_min, RealVector near_null)
        : std::runtime_error(what), sigma_min_(sigma_min), near_null_(std::move(near_null)) {}
    [[nodiscard]] double sigma_min() const { return sigma_min_; }
    /// Interior vector with ||A v|| ~ sigma_min ||v||; empty if unavailable.
    [[nodiscard]] const RealVector& near_null() const { return near_null_; }

private:
    double sigma_min_;
    RealVector near_null_;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SolverOptions {
    std::size_t direct_limit = 20000;
    double tolerance = 1e-10;
    int max_iterations = 5000;
    /// Relative threshold for the smallest singular value estimate.
    double singular_threshold = 1e-10;
};

/// Factorized -Delta_h + q on the interior for one (sigma, q) pair. Immutable
/// after construction, so concurrent solves are safe.
class ForwardSolver {
public:
    ForwardSolver(SigmaPtr sigma, const GridField& q, SolverOptions options = {});
    ~ForwardSolver();
    ForwardSolver(const ForwardSolver&) = delete;
    ForwardSolver& operator=(const ForwardSolver&) = delete;

    [[nodiscard]] const SigmaFamily& sigma() const { return *sigma_; }
    [[nodiscard]] const SigmaPtr& sigma_ptr() const { return sigma_; }
    [[nodiscard]] const Mesh& mesh() const { return sigma_->mesh(); }
    [[nodiscard]] const GridField& q() const { return q_; }
    [[nodiscard]] bool direct() const { return direct_; }
    [[nodiscard]] double sigma_min_estimate() const { return sigma_min_; }
    [[nodiscard]] double norm_inf() const { return norm_inf_; }

    /// (-Delta_h + q) u = f in the interior, u = g on the boundary.
    [[nodiscard]] GridField solve(const GridField& f, const GridField& g) const;
    /// Homogeneous-source solves for many boundary vectors at once (columns).
    [[nodiscard]] ComplexMatrix solve_interior(const ComplexMatrix& rhs) const;
    [[nodiscard]] RealMatrix solve_interior(const RealMatrix& rhs) const;

    /// Assembled blocks, rows/cols following mesh().primal() and mesh().boundary().
    [[nodiscard]] const SparseMatrix& A() const { return A_; }
    [[nodiscard]] const SparseMatrix& L_IB() const { return L_IB_; }
    [[nodiscard]] const SparseMatrix& N_I() const { return N_I_; }
    [[nodiscard]] const SparseMatrix& N_B() const { return N_B_; }

    /// Relative residual of a computed closure solution.
    [[nodiscard]] double residual(const GridField& u, const GridField& f) const;

private:
    struct Impl;
    SigmaPtr sigma_;
    GridField q_;
    SolverOptions options_;
    SparseMatrix A_, L_IB_, N_I_, N_B_;
    bool direct_ = true;
    double sigma_min_ = 0.0;
    double norm_inf_ = 0.0;
    std::unique_ptr<Impl> impl_;
};

using SolverPtr = std::shared_ptr<const ForwardSolver>;

/// Factorizations keyed by (grid, sigma samples, q samples). Lookups and
/// inserts are serialized; returned solvers are immutable.
class SolverCache {
public:
    SolverPtr get(const SigmaPtr& sigma, const GridField& q, const SolverOptions& options = {});
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::size_t hits() const;
    void clear();

private:
    mutable std::mutex mutex_;
    std::map<std::uint64_t, SolverPtr> entries_;
    std::size_t hits_ = 0;
};

struct DirichletProblem {
    SigmaPtr sigma;
    GridField q;  // interior
    GridField f;  // interior
    GridField g;  // boundary
};

GridField solve_dirichlet(const DirichletProblem& problem, SolverCache* cache = nullptr);

/// ||u||_{H^2} / ||f||_{L^2} for the solution with zero boundary data (0 when f = 0).
double regularity_ratio(const SigmaPtr& sigma, const GridField& q, const GridField& f);

/// Sparse triplet export: header comment lines, then "row col value" per entry.
void write_triplets(std::ostream& os, const SparseMatrix& m, const std::string& title);

/// FNV-1a over raw bytes; used for cache keys and config hashes.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t hash_field(const GridField& f, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace calderon
