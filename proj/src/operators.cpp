#include "calderon/operators.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "calderon/calculus.hpp"
#include "calderon/norms.hpp"

namespace calderon {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t hash_field(const GridField& f, std::uint64_t seed) {
    const auto nodes = f.support().nodes();
    std::uint64_t h = fnv1a(nodes.data(), nodes.size_bytes(), seed);
    const auto values = f.values();
    return fnv1a(values.data(), values.size_bytes(), h);
}

// ---------------------------------------------------------------------------
// Coefficients

SigmaDescription SigmaDescription::identity(int d) {
    SigmaDescription s;
    s.name = "identity";
    s.coeff.assign(static_cast<std::size_t>(d), [](const Point&) { return 1.0; });
    return s;
}

SigmaDescription SigmaDescription::smooth_bump(int d, double amplitude) {
    SigmaDescription s;
    std::ostringstream name;
    name << "smooth-bump(" << std::setprecision(17) << amplitude << ")";
    s.name = name.str();
    s.coeff.assign(static_cast<std::size_t>(d), [d, amplitude](const Point& x) {
        double prod = 1.0;
        for (int j = 0; j < d; ++j) prod *= std::sin(std::numbers::pi * x[j]);
        return 1.0 + amplitude * prod;
    });
    return s;
}

SigmaFamily::SigmaFamily(MeshPtr mesh, const SigmaDescription& desc)
    : mesh_(std::move(mesh)), name_(desc.name), coeff_(desc.coeff) {
    const int d = mesh_->d();
    if (static_cast<int>(coeff_.size()) != d) {
        throw std::invalid_argument("sample_sigma: expected " + std::to_string(d) +
                                    " coefficient functions, got " + std::to_string(coeff_.size()));
    }
    const double h = mesh_->h();
    identity_ = true;
    min_sample_ = std::numeric_limits<double>::infinity();
    auto checked = [&](int k, const Coord& c) {
        const double v = at(k, c);
        if (!(v > 0.0)) {
            const Point p = to_point(mesh_->spec(), c);
            std::ostringstream msg;
            msg << "sample_sigma: sigma^" << (k + 1) << " = " << v << " is not positive at ("
                << p[0] << ", " << p[1] << ", " << p[2] << ")";
            throw std::invalid_argument(msg.str());
        }
        if (v != 1.0) identity_ = false;
        return v;
    };

    std::uint64_t hash = fnv1a(name_.data(), name_.size());
    samples_.reserve(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        const auto& stag = mesh_->staggered(k);
        std::vector<Complex> vals(stag->size());
        double kmax = 0.0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double v = checked(k, stag->node(i));
            vals[i] = v;
            kmax = std::max(kmax, v);
            min_sample_ = std::min(min_sample_, v);
        }
        M_ += kmax;
        samples_.emplace_back(stag, std::move(vals));
        hash = hash_field(samples_.back(), hash);
    }
    hash_ = hash;

    lower_ = std::numeric_limits<double>::infinity();
    upper_ = 0.0;
    for (int k = 0; k < d; ++k) {
        const auto& closure_k = mesh_->axis_closure(k);
        for (int j = 0; j < d; ++j) {
            double dmax = 0.0, amax = 0.0;
            for (const auto& x : closure_k->nodes()) {
                Coord p = x, m = x;
                p[j] += 1;
                m[j] -= 1;
                const double sp = checked(k, p), sm = checked(k, m);
                const double a = 0.5 * (sp + sm);
                dmax = std::max(dmax, std::abs(sp - sm) / h);
                amax = std::max(amax, std::abs(a - 1.0));
                lower_ = std::min(lower_, a);
                upper_ = std::max(upper_, a);
            }
            eps_d_ += dmax;
            eps_a_ += amax;
        }
    }
}

double SigmaFamily::at(int k, const Coord& c) const {
    return coeff_[static_cast<std::size_t>(k)](to_point(mesh_->spec(), c));
}

SigmaPtr sample_sigma(const SigmaDescription& desc, MeshPtr mesh) {
    return std::make_shared<const SigmaFamily>(std::move(mesh), desc);
}

// ---------------------------------------------------------------------------
// Assembly

namespace {

using Triplet = Eigen::Triplet<double>;

int face_axis(const GridSpec& spec, const Coord& c) {
    for (int k = 0; k < spec.d; ++k)
        if (c[k] == 0 || c[k] == spec.top()) return k;
    throw std::logic_error("boundary node does not lie on a face");
}

double sigma_sample(const SigmaFamily& sigma, int k, const Coord& c) {
    const auto& field = sigma.on_staggered(k);
    auto i = field.support().find(c);
    if (!i) throw std::logic_error("sigma sample requested off the staggered set");
    return field[*i].real();
}

}  // namespace

SparseMatrix laplacian_matrix(const SigmaFamily& sigma) {
    const auto& mesh = sigma.mesh();
    const auto& primal = *mesh.primal();
    const auto& closure = *mesh.closure();
    const double inv_h2 = 1.0 / (mesh.h() * mesh.h());
    std::vector<Triplet> trip;
    trip.reserve(primal.size() * static_cast<std::size_t>(1 + 2 * mesh.d()));
    for (std::size_t i = 0; i < primal.size(); ++i) {
        const Coord& x = primal.node(i);
        const int row = static_cast<int>(i);
        const int self = static_cast<int>(*closure.find(x));
        for (int k = 0; k < mesh.d(); ++k) {
            Coord yp = x, ym = x, xp = x, xm = x;
            yp[k] += 1;
            ym[k] -= 1;
            xp[k] += 2;
            xm[k] -= 2;
            const double sp = sigma_sample(sigma, k, yp) * inv_h2;
            const double sm = sigma_sample(sigma, k, ym) * inv_h2;
            trip.emplace_back(row, static_cast<int>(*closure.find(xp)), sp);
            trip.emplace_back(row, static_cast<int>(*closure.find(xm)), sm);
            trip.emplace_back(row, self, -(sp + sm));
        }
    }
    SparseMatrix L(static_cast<Eigen::Index>(primal.size()), static_cast<Eigen::Index>(closure.size()));
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
}

SparseMatrix normal_derivative_matrix(const SigmaFamily& sigma) {
    const auto& mesh = sigma.mesh();
    const auto& boundary = *mesh.boundary();
    const auto& closure = *mesh.closure();
    const double inv_h = 1.0 / mesh.h();
    std::vector<Triplet> trip;
    trip.reserve(2 * boundary.size());
    for (std::size_t b = 0; b < boundary.size(); ++b) {
        const Coord& x = boundary.node(b);
        const int k = face_axis(mesh.spec(), x);
        const int n = x[k] == 0 ? -1 : +1;
        Coord y = x, inner = x;
        y[k] -= n;
        inner[k] -= 2 * n;
        const double s = sigma_sample(sigma, k, y) * inv_h;
        trip.emplace_back(static_cast<int>(b), static_cast<int>(*closure.find(x)), s);
        trip.emplace_back(static_cast<int>(b), static_cast<int>(*closure.find(inner)), -s);
    }
    SparseMatrix Nm(static_cast<Eigen::Index>(boundary.size()), static_cast<Eigen::Index>(closure.size()));
    Nm.setFromTriplets(trip.begin(), trip.end());
    return Nm;
}

GridField apply_laplacian(const GridField& u, const SigmaFamily& sigma) {
    const auto& mesh = sigma.mesh();
    GridField out = GridField::zeros(mesh.primal());
    for (int k = 0; k < mesh.d(); ++k) {
        const auto flux = sigma.on_staggered(k) * diff(u, k, mesh.staggered(k));
        out += diff(flux, k, mesh.primal());
    }
    return out;
}

GridField normal_derivative(const GridField& u, const SigmaFamily& sigma) {
    const auto& mesh = sigma.mesh();
    GridField out = GridField::zeros(mesh.boundary());
    for (int k = 0; k < mesh.d(); ++k) {
        const auto flux = sigma.on_staggered(k) * diff(u, k, mesh.staggered(k));
        const auto t = trace(flux, k, mesh);
        const auto n = normals(mesh, k);
        for (std::size_t i = 0; i < t.size(); ++i) {
            out[*mesh.boundary()->find(n.faces->node(i))] += static_cast<double>(n.values[i]) * t[i];
        }
    }
    return out;
}

GreenResidual greens_residual(const GridField& u, const GridField& v, const SigmaFamily& sigma) {
    const auto& mesh = sigma.mesh();
    const Complex lhs = integrate(apply_laplacian(u, sigma) * v.restrict_to(mesh.primal()));
    Complex vol = 0.0;
    for (int k = 0; k < mesh.d(); ++k) {
        const auto& stag = mesh.staggered(k);
        vol += integrate(sigma.on_staggered(k) * diff(u, k, stag) * diff(v, k, stag));
    }
    const Complex bdy = integrate(normal_derivative(u, sigma) * v.restrict_to(mesh.boundary()));
    return {lhs - (-vol + bdy), std::abs(lhs) + std::abs(vol) + std::abs(bdy)};
}

// ---------------------------------------------------------------------------
// Forward solver

struct ForwardSolver::Impl {
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    std::unique_ptr<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                                             Eigen::IncompleteCholesky<double>>> cg;
    std::unique_ptr<Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>>> bicg;
};

namespace {

RealVector dense_near_null(const SparseMatrix& A, double& sigma_min) {
    const RealMatrix dense(A);
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(dense);
    Eigen::Index idx = 0;
    es.eigenvalues().cwiseAbs().minCoeff(&idx);
    sigma_min = std::abs(es.eigenvalues()(idx));
    return es.eigenvectors().col(idx);
}

}  // namespace

ForwardSolver::ForwardSolver(SigmaPtr sigma, const GridField& q, SolverOptions options)
    : sigma_(std::move(sigma)), q_(q), options_(options), impl_(std::make_unique<Impl>()) {
    const auto& mesh = sigma_->mesh();
    if (!same_support(q_.support(), *mesh.primal())) {
        throw std::invalid_argument("ForwardSolver: potential must live on the interior set");
    }
    if (!q_.is_real()) throw std::invalid_argument("ForwardSolver: potential must be real");

    const auto& closure = *mesh.closure();
    const auto& primal = *mesh.primal();
    const auto& boundary = *mesh.boundary();
    // closure index -> (is interior, index within primal/boundary)
    std::vector<std::pair<bool, int>> where(closure.size());
    for (std::size_t c = 0; c < closure.size(); ++c) {
        const Coord& x = closure.node(c);
        if (auto i = primal.find(x)) {
            where[c] = {true, static_cast<int>(*i)};
        } else {
            where[c] = {false, static_cast<int>(*boundary.find(x))};
        }
    }
    auto split = [&](const SparseMatrix& M, SparseMatrix& inner, SparseMatrix& outer, double scale) {
        std::vector<Triplet> ti, tb;
        for (int col = 0; col < M.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(M, col); it; ++it) {
                const auto [interior, idx] = where[static_cast<std::size_t>(it.col())];
                (interior ? ti : tb).emplace_back(static_cast<int>(it.row()), idx, scale * it.value());
            }
        }
        inner.resize(M.rows(), static_cast<Eigen::Index>(primal.size()));
        outer.resize(M.rows(), static_cast<Eigen::Index>(boundary.size()));
        inner.setFromTriplets(ti.begin(), ti.end());
        outer.setFromTriplets(tb.begin(), tb.end());
    };

    SparseMatrix L_II;
    split(laplacian_matrix(*sigma_), L_II, L_IB_, 1.0);
    split(normal_derivative_matrix(*sigma_), N_I_, N_B_, 1.0);

    A_ = -L_II;
    for (std::size_t i = 0; i < primal.size(); ++i) {
        A_.coeffRef(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += q_[i].real();
    }
    A_.makeCompressed();

    norm_inf_ = 0.0;
    for (Eigen::Index r = 0; r < A_.rows(); ++r) {
        norm_inf_ = std::max(norm_inf_, A_.row(r).cwiseAbs().sum());
    }
    const double threshold = options_.singular_threshold * norm_inf_;
    const auto n = static_cast<std::size_t>(A_.rows());
    direct_ = n <= options_.direct_limit;

    if (direct_) {
        impl_->lu.analyzePattern(A_);
        impl_->lu.factorize(A_);
        if (impl_->lu.info() != Eigen::Success) {
            double smin = 0.0;
            RealVector v;
            if (n <= 4000) v = dense_near_null(A_, smin);
            throw SingularSystemError("forward operator is singular (factorization failed)", smin, v);
        }
        // Inverse iteration; each step's 1/||A^{-1} x|| bounds sigma_min from above.
        RealVector x(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 1.0 + 0.5 * std::sin(1.3 * static_cast<double>(i));
        x.normalize();
        double estimate = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 25; ++it) {
            RealVector y = impl_->lu.solve(x);
            const double ny = y.norm();
            if (!std::isfinite(ny) || ny == 0.0) {
                estimate = 0.0;
                break;
            }
            const double next = 1.0 / ny;
            x = y / ny;
            const bool settled = std::abs(next - estimate) <= 1e-6 * next;
            estimate = next;
            if (settled || estimate < threshold) break;
        }
        sigma_min_ = estimate;
        if (sigma_min_ < threshold) {
            std::ostringstream msg;
            msg << "forward operator is numerically singular: sigma_min ~ " << sigma_min_
                << " < " << threshold;
            throw SingularSystemError(msg.str(), sigma_min_, x);
        }
    } else {
        sigma_min_ = std::numeric_limits<double>::quiet_NaN();
        bool nonnegative = true;
        for (const auto& v : q_.values()) nonnegative = nonnegative && v.real() >= 0.0;
        if (nonnegative) {
            impl_->cg = std::make_unique<decltype(impl_->cg)::element_type>();
            impl_->cg->setTolerance(options_.tolerance);
            impl_->cg->setMaxIterations(options_.max_iterations);
            impl_->cg->compute(A_);
            if (impl_->cg->info() != Eigen::Success) throw SolverError("incomplete Cholesky failed");
        } else {
            impl_->bicg = std::make_unique<decltype(impl_->bicg)::element_type>();
            impl_->bicg->setTolerance(options_.tolerance);
            impl_->bicg->setMaxIterations(options_.max_iterations);
            impl_->bicg->compute(A_);
            if (impl_->bicg->info() != Eigen::Success) throw SolverError("incomplete LU failed");
        }
    }
}

ForwardSolver::~ForwardSolver() = default;

RealMatrix ForwardSolver::solve_interior(const RealMatrix& rhs) const {
    if (direct_) return impl_->lu.solve(rhs);
    RealMatrix out(rhs.rows(), rhs.cols());
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
        if (impl_->cg) {
            out.col(c) = impl_->cg->solve(rhs.col(c));
            if (impl_->cg->info() != Eigen::Success)
                throw SolverError("conjugate gradient did not reach the tolerance");
        } else {
            out.col(c) = impl_->bicg->solve(rhs.col(c));
            if (impl_->bicg->info() != Eigen::Success)
                throw SolverError("BiCGSTAB did not reach the tolerance");
        }
    }
    return out;
}

ComplexMatrix ForwardSolver::solve_interior(const ComplexMatrix& rhs) const {
    const Eigen::Index m = rhs.cols();
    RealMatrix stacked(rhs.rows(), 2 * m);
    stacked.leftCols(m) = rhs.real();
    stacked.rightCols(m) = rhs.imag();
    const RealMatrix sol = solve_interior(stacked);
    ComplexMatrix out(rhs.rows(), m);
    out.real() = sol.leftCols(m);
    out.imag() = sol.rightCols(m);
    return out;
}

namespace {

ComplexVector to_vector(const GridField& f) {
    ComplexVector v(static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) v(static_cast<Eigen::Index>(i)) = f[i];
    return v;
}

}  // namespace

GridField ForwardSolver::solve(const GridField& f, const GridField& g) const {
    const auto& mesh = this->mesh();
    require_same_support(f, GridField::zeros(mesh.primal()), "solve: source");
    require_same_support(g, GridField::zeros(mesh.boundary()), "solve: boundary data");
    const ComplexVector gv = to_vector(g);
    ComplexMatrix rhs = to_vector(f) + L_IB_ * gv;
    const ComplexMatrix ui = solve_interior(rhs);
    GridField u = GridField::zeros(mesh.closure());
    const auto& closure = *mesh.closure();
    for (std::size_t i = 0; i < mesh.primal()->size(); ++i)
        u[*closure.find(mesh.primal()->node(i))] = ui(static_cast<Eigen::Index>(i), 0);
    for (std::size_t b = 0; b < mesh.boundary()->size(); ++b)
        u[*closure.find(mesh.boundary()->node(b))] = g[b];
    return u;
}

double ForwardSolver::residual(const GridField& u, const GridField& f) const {
    const auto& mesh = this->mesh();
    const ComplexVector ui = to_vector(u.restrict_to(mesh.primal()));
    const ComplexVector ub = to_vector(u.restrict_to(mesh.boundary()));
    const ComplexVector fv = to_vector(f);
    const ComplexVector au = A_ * ui;
    const ComplexVector lb = L_IB_ * ub;
    const double scale = fv.norm() + au.norm() + lb.norm();
    const double r = (au - lb - fv).norm();
    return scale > 0.0 ? r / scale : r;
}

// ---------------------------------------------------------------------------
// Cache

SolverPtr SolverCache::get(const SigmaPtr& sigma, const GridField& q, const SolverOptions& options) {
    const GridSpec spec = sigma->mesh().spec();
    const std::array<double, 6> fields{static_cast<double>(spec.d), static_cast<double>(spec.N),
                                       static_cast<double>(options.direct_limit), options.tolerance,
                                       static_cast<double>(options.max_iterations),
                                       options.singular_threshold};
    std::uint64_t key = fnv1a(fields.data(), sizeof fields, sigma->hash());
    key = hash_field(q, key);
    {
        std::lock_guard lock(mutex_);
        if (auto it = entries_.find(key); it != entries_.end()) {
            ++hits_;
            return it->second;
        }
    }
    auto solver = std::make_shared<const ForwardSolver>(sigma, q, options);
    std::lock_guard lock(mutex_);
    auto [it, inserted] = entries_.emplace(key, std::move(solver));
    if (!inserted) ++hits_;
    return it->second;
}

std::size_t SolverCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::size_t SolverCache::hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
}

void SolverCache::clear() {
    std::lock_guard lock(mutex_);
    entries_.clear();
    hits_ = 0;
}

GridField solve_dirichlet(const DirichletProblem& problem, SolverCache* cache) {
    SolverPtr solver = cache ? cache->get(problem.sigma, problem.q)
                             : std::make_shared<const ForwardSolver>(problem.sigma, problem.q);
    return solver->solve(problem.f, problem.g);
}

double regularity_ratio(const SigmaPtr& sigma, const GridField& q, const GridField& f) {
    const double fn = l2_norm(f);
    if (fn == 0.0) return 0.0;
    ForwardSolver solver(sigma, q);
    const auto u = solver.solve(f, GridField::zeros(sigma->mesh().boundary()));
    return norm(u, NormKind::H2, sigma->mesh()) / fn;
}

void write_triplets(std::ostream& os, const SparseMatrix& m, const std::string& title) {
    os << "# " << title << "\n";
    os << "# rows " << m.rows() << " cols " << m.cols() << " nnz " << m.nonZeros() << "\n";
    os << "# format: row col value (0-based, one entry per line)\n";
    std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> entries;
    entries.reserve(static_cast<std::size_t>(m.nonZeros()));
    for (int c = 0; c < m.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(m, c); it; ++it) entries.emplace_back(it.row(), it.col(), it.value());
    std::sort(entries.begin(), entries.end());
    os << std::setprecision(17);
    for (const auto& [r, c, v] : entries) os << r << ' ' << c << ' ' << v << '\n';
}

}  // namespace calderon
