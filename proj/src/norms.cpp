#include "calderon/norms.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "calderon/parallel.hpp"

namespace calderon {

std::string to_string(NormKind kind) {
    switch (kind) {
        case NormKind::L2: return "L2";
        case NormKind::H1Ring: return "H1ring";
        case NormKind::H1: return "H1";
        case NormKind::H2Ring: return "H2ring";
        case NormKind::H2: return "H2";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Volume norms

namespace {

Complex need(const GridField& u, const Coord& c, const char* what) {
    auto i = u.support().find(c);
    if (!i) throw std::invalid_argument(std::string("norm: field lacks a node needed for ") + what);
    return u[*i];
}

double sum_abs2(const GridField& u, std::span<const Coord> nodes) {
    double s = 0.0;
    for (const auto& c : nodes) s += std::norm(need(u, c, "the L2 part"));
    return s;
}

double first_differences(const GridField& u, std::span<const Coord> W, double h) {
    const int d = u.support().spec().d;
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        for (const auto& x : star(W, k)) {
            Coord p = x, m = x;
            p[k] += 1;
            m[k] -= 1;
            s += std::norm((need(u, p, "D_k") - need(u, m, "D_k")) / h);
        }
    }
    return s;
}

double second_differences(const GridField& u, std::span<const Coord> W, double h) {
    const int d = u.support().spec().d;
    const auto& s_u = u.support();
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        const auto wk = star(W, k);
        for (int j = 0; j < d; ++j) {
            for (const auto& x : star(wk, j)) {
                if (j == k) {
                    Coord p = x, m = x;
                    p[k] += 2;
                    m[k] -= 2;
                    auto ip = s_u.find(p), i0 = s_u.find(x), im = s_u.find(m);
                    if (!ip || !i0 || !im) continue;
                    s += std::norm((u[*ip] - 2.0 * u[*i0] + u[*im]) / (h * h));
                } else {
                    Coord pp = x, pm = x, mp = x, mm = x;
                    pp[k] += 1; pp[j] += 1;
                    pm[k] += 1; pm[j] -= 1;
                    mp[k] -= 1; mp[j] += 1;
                    mm[k] -= 1; mm[j] -= 1;
                    auto a = s_u.find(pp), b = s_u.find(pm), c = s_u.find(mp), e = s_u.find(mm);
                    if (!a || !b || !c || !e) continue;
                    s += std::norm((u[*a] - u[*b] - u[*c] + u[*e]) / (h * h));
                }
            }
        }
    }
    return s;
}

std::vector<Coord> closure_of(std::span<const Coord> W, int d) {
    std::vector<Coord> out(W.begin(), W.end());
    for (int k = 0; k < d; ++k) out = set_union(out, star(star(W, k), k));
    return out;
}

}  // namespace

double norm_on(const GridField& u, std::span<const Coord> W, NormKind kind) {
    const auto& spec = u.support().spec();
    const double h = spec.h();
    const double w = std::pow(h, spec.d);
    switch (kind) {
        case NormKind::L2: return std::sqrt(w * sum_abs2(u, W));
        case NormKind::H1Ring: return std::sqrt(w * first_differences(u, W, h));
        case NormKind::H1:
            return std::sqrt(w * (sum_abs2(u, closure_of(W, spec.d)) + first_differences(u, W, h)));
        case NormKind::H2Ring: return std::sqrt(w * second_differences(u, W, h));
        case NormKind::H2:
            return std::sqrt(w * (sum_abs2(u, closure_of(W, spec.d)) + first_differences(u, W, h) +
                                  second_differences(u, W, h)));
    }
    return 0.0;
}

double norm(const GridField& u, NormKind kind, const Mesh& mesh) {
    return norm_on(u, mesh.primal()->nodes(), kind);
}

// ---------------------------------------------------------------------------
// Fourier side

std::size_t SpectralField::index(const std::array<int, kMaxDim>& xi) const {
    std::size_t idx = 0;
    for (int k = 0; k < d; ++k) {
        if (xi[k] < 0 || xi[k] > N) throw std::out_of_range("SpectralField: frequency outside [0, N]");
        idx = idx * static_cast<std::size_t>(N + 1) + static_cast<std::size_t>(xi[k]);
    }
    return idx;
}

std::array<int, kMaxDim> SpectralField::frequency(std::size_t index) const {
    std::array<int, kMaxDim> xi{0, 0, 0};
    for (int k = d - 1; k >= 0; --k) {
        xi[k] = static_cast<int>(index % static_cast<std::size_t>(N + 1));
        index /= static_cast<std::size_t>(N + 1);
    }
    return xi;
}

namespace {

// Applies a dense 1-D map (out_len x in_len) along `axis` of a row-major
// tensor whose current extents are `shape`.
std::vector<Complex> apply_axis(const std::vector<Complex>& data, std::array<int, kMaxDim>& shape,
                                int d, int axis, const std::vector<Complex>& kernel, int out_len) {
    const int in_len = shape[axis];
    std::size_t outer = 1, inner = 1;
    for (int k = 0; k < axis; ++k) outer *= static_cast<std::size_t>(shape[k]);
    for (int k = axis + 1; k < d; ++k) inner *= static_cast<std::size_t>(shape[k]);
    std::vector<Complex> out(outer * static_cast<std::size_t>(out_len) * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        for (int a = 0; a < out_len; ++a) {
            for (int b = 0; b < in_len; ++b) {
                const Complex kv = kernel[static_cast<std::size_t>(a) * static_cast<std::size_t>(in_len) +
                                          static_cast<std::size_t>(b)];
                const Complex* src = &data[(o * static_cast<std::size_t>(in_len) + static_cast<std::size_t>(b)) * inner];
                Complex* dst = &out[(o * static_cast<std::size_t>(out_len) + static_cast<std::size_t>(a)) * inner];
                for (std::size_t i = 0; i < inner; ++i) dst[i] += kv * src[i];
            }
        }
    }
    shape[axis] = out_len;
    return out;
}

}  // namespace

SpectralField dft(const GridField& u, const Mesh& mesh) {
    const int d = mesh.d(), N = mesh.N();
    const double h = mesh.h();
    const GridField ui = u.restrict_to(mesh.primal());
    std::vector<Complex> data(ui.values().begin(), ui.values().end());
    // forward kernel: row xi in [0,N], column m in [0,N-1] for x = (m+1) h
    std::vector<Complex> kernel(static_cast<std::size_t>((N + 1) * N));
    for (int xi = 0; xi <= N; ++xi)
        for (int m = 0; m < N; ++m)
            kernel[static_cast<std::size_t>(xi * N + m)] =
                std::polar(h, -2.0 * std::numbers::pi * (m + 1) * h * xi);
    std::array<int, kMaxDim> shape{N, N, N};
    for (int k = 0; k < d; ++k) data = apply_axis(data, shape, d, k, kernel, N + 1);
    return SpectralField{d, N, std::move(data)};
}

GridField inverse_dft(const SpectralField& F, const Mesh& mesh, const std::vector<bool>& keep) {
    const int d = mesh.d(), N = mesh.N();
    if (F.d != d || F.N != N) throw std::invalid_argument("inverse_dft: grid mismatch");
    const double h = mesh.h();
    std::vector<Complex> data = F.coeffs;
    if (!keep.empty()) {
        if (keep.size() != data.size()) throw std::invalid_argument("inverse_dft: mask size mismatch");
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!keep[i]) data[i] = 0.0;
    }
    // u(x) = (h (N+1))^{-d} sum_xi F(xi) exp(2 pi i x.xi)
    const double scale = 1.0 / (h * (N + 1));
    std::vector<Complex> kernel(static_cast<std::size_t>(N * (N + 1)));
    for (int m = 0; m < N; ++m)
        for (int xi = 0; xi <= N; ++xi)
            kernel[static_cast<std::size_t>(m * (N + 1) + xi)] =
                std::polar(scale, 2.0 * std::numbers::pi * (m + 1) * h * xi);
    std::array<int, kMaxDim> shape{N + 1, N + 1, N + 1};
    for (int k = 0; k < d; ++k) data = apply_axis(data, shape, d, k, kernel, N);
    return GridField(mesh.primal(), std::move(data));
}

double norm_hr(const SpectralField& F, double r, double factor) {
    double s = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) {
        const auto xi = F.frequency(i);
        double xi2 = 0.0;
        for (int k = 0; k < F.d; ++k) xi2 += static_cast<double>(xi[k]) * xi[k];
        s += std::norm(F.coeffs[i]) * std::pow(1.0 + xi2, r);
    }
    return std::sqrt(factor * s);
}

double plancherel_factor(const Mesh& mesh) {
    const auto one = GridField::constant(mesh.primal(), 1.0);
    const double l2 = l2_norm(one);
    const double spectral = norm_hr(dft(one, mesh), 0.0, 1.0);
    return (l2 * l2) / (spectral * spectral);
}

double norm_hr(const GridField& u, double r, const Mesh& mesh) {
    return norm_hr(dft(u, mesh), r, plancherel_factor(mesh));
}

// ---------------------------------------------------------------------------
// Boundary norms

BoundaryGram::BoundaryGram(MeshPtr mesh) : mesh_(std::move(mesh)) {
    const auto& closure = *mesh_->closure();
    const auto& primal = *mesh_->primal();
    const auto& boundary = *mesh_->boundary();
    const double h = mesh_->h();
    const double w = std::pow(h, mesh_->d());
    const auto nc = static_cast<Eigen::Index>(closure.size());

    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index i = 0; i < nc; ++i) trip.emplace_back(i, i, w);
    for (int k = 0; k < mesh_->d(); ++k) {
        for (const auto& x : mesh_->staggered(k)->nodes()) {
            Coord p = x, m = x;
            p[k] += 1;
            m[k] -= 1;
            const auto ip = static_cast<Eigen::Index>(*closure.find(p));
            const auto im = static_cast<Eigen::Index>(*closure.find(m));
            const double c = w / (h * h);
            trip.emplace_back(ip, ip, c);
            trip.emplace_back(im, im, c);
            trip.emplace_back(ip, im, -c);
            trip.emplace_back(im, ip, -c);
        }
    }
    Q_.resize(nc, nc);
    Q_.setFromTriplets(trip.begin(), trip.end());

    std::vector<Eigen::Index> interior_of(closure.size(), -1), boundary_of(closure.size(), -1);
    for (std::size_t i = 0; i < primal.size(); ++i)
        interior_of[*closure.find(primal.node(i))] = static_cast<Eigen::Index>(i);
    for (std::size_t b = 0; b < boundary.size(); ++b)
        boundary_of[*closure.find(boundary.node(b))] = static_cast<Eigen::Index>(b);

    const auto ni = static_cast<Eigen::Index>(primal.size());
    const auto nb = static_cast<Eigen::Index>(boundary.size());
    std::vector<Eigen::Triplet<double>> tii, tib;
    RealMatrix Qbb = RealMatrix::Zero(nb, nb);
    for (int c = 0; c < Q_.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(Q_, c); it; ++it) {
            const auto r = static_cast<std::size_t>(it.row()), cc = static_cast<std::size_t>(it.col());
            if (interior_of[r] >= 0 && interior_of[cc] >= 0) {
                tii.emplace_back(interior_of[r], interior_of[cc], it.value());
            } else if (interior_of[r] >= 0) {
                tib.emplace_back(interior_of[r], boundary_of[cc], it.value());
            } else if (interior_of[cc] < 0) {
                Qbb(boundary_of[r], boundary_of[cc]) += it.value();
            }
        }
    }
    SparseMatrix Qii(ni, ni), Qib(ni, nb);
    Qii.setFromTriplets(tii.begin(), tii.end());
    Qib.setFromTriplets(tib.begin(), tib.end());
    Eigen::SimplicialLLT<SparseMatrix> chol(Qii);
    if (chol.info() != Eigen::Success) throw std::runtime_error("BoundaryGram: H1 form not positive definite");
    const RealMatrix Qib_dense(Qib);
    E_ = -chol.solve(Qib_dense);
    G_ = Qbb + Qib_dense.transpose() * E_;
    G_ = 0.5 * (G_ + G_.transpose());
    llt_.compute(G_);
    if (llt_.info() != Eigen::Success) throw std::runtime_error("BoundaryGram: Schur complement not positive definite");
}

RealMatrix BoundaryGram::closure_form() const { return RealMatrix(Q_); }

double BoundaryGram::half_norm(const ComplexVector& g) const {
    const double v = (g.adjoint() * (G_ * g))(0).real();
    return std::sqrt(std::max(0.0, v));
}

double BoundaryGram::dual_norm(const ComplexVector& f) const {
    const ComplexVector y = llt_.solve(f);
    const double v = (f.adjoint() * y)(0).real();
    return std::pow(mesh_->h(), mesh_->d() - 1) * std::sqrt(std::max(0.0, v));
}

ComplexVector BoundaryGram::dual_direction(const ComplexVector& f) const {
    return llt_.solve(ComplexVector(f.conjugate()));
}

RealMatrix BoundaryGram::G_inverse() const {
    return llt_.solve(RealMatrix::Identity(G_.rows(), G_.cols()));
}

ComplexVector boundary_vector(const GridField& f, const Mesh& mesh) {
    const auto full = f.extend_by_zero(mesh.boundary());
    for (const auto& c : f.support().nodes()) {
        if (!mesh.boundary()->contains(c)) throw std::invalid_argument("boundary field has a non-boundary node");
    }
    ComplexVector v(static_cast<Eigen::Index>(full.size()));
    for (std::size_t i = 0; i < full.size(); ++i) v(static_cast<Eigen::Index>(i)) = full[i];
    return v;
}

HalfNormResult norm_boundary_half(const GridField& g, const BoundaryGram& gram) {
    const auto& mesh = gram.mesh();
    const ComplexVector gv = boundary_vector(g, mesh);
    const ComplexVector ui = gram.extension() * gv;
    GridField u = GridField::zeros(mesh.closure());
    const auto& closure = *mesh.closure();
    for (std::size_t i = 0; i < mesh.primal()->size(); ++i)
        u[*closure.find(mesh.primal()->node(i))] = ui(static_cast<Eigen::Index>(i));
    for (std::size_t b = 0; b < mesh.boundary()->size(); ++b)
        u[*closure.find(mesh.boundary()->node(b))] = gv(static_cast<Eigen::Index>(b));
    return {gram.half_norm(gv), std::move(u)};
}

double norm_boundary_dual(const GridField& f, const BoundaryGram& gram) {
    return gram.dual_norm(boundary_vector(f, gram.mesh()));
}

// ---------------------------------------------------------------------------
// DtN

GridField DtNMap::apply(const GridField& g) const {
    const ComplexVector gv = boundary_vector(g, *mesh);
    const ComplexVector out = matrix.cast<Complex>() * gv;
    return GridField(mesh->boundary(), std::vector<Complex>(out.data(), out.data() + out.size()));
}

RealMatrix DtNMap::restricted(const NodeSet& gamma) const {
    RealMatrix out = RealMatrix::Zero(matrix.rows(), matrix.cols());
    for (const auto& c : gamma.nodes()) {
        auto b = mesh->boundary()->find(c);
        if (!b) throw std::invalid_argument("DtNMap::restricted: window node not on the boundary");
        out.row(static_cast<Eigen::Index>(*b)) = matrix.row(static_cast<Eigen::Index>(*b));
    }
    return out;
}

DtNMap dtn_assemble(const ForwardSolver& solver, int threads) {
    const Eigen::Index nb = solver.N_B().rows();
    const RealMatrix rhs(solver.L_IB());
    RealMatrix interior(rhs.rows(), nb);
    const std::size_t blocks = static_cast<std::size_t>(std::max(1, threads));
    parallel_for(blocks, threads, [&](std::size_t b) {
        const Eigen::Index begin = nb * static_cast<Eigen::Index>(b) / static_cast<Eigen::Index>(blocks);
        const Eigen::Index end = nb * static_cast<Eigen::Index>(b + 1) / static_cast<Eigen::Index>(blocks);
        if (end > begin) interior.middleCols(begin, end - begin) = solver.solve_interior(RealMatrix(rhs.middleCols(begin, end - begin)));
    });
    DtNMap map;
    map.mesh = solver.sigma().mesh_ptr();
    map.matrix = RealMatrix(solver.N_B()) + solver.N_I() * interior;
    map.sigma_name = solver.sigma().name();
    map.sigma_hash = solver.sigma().hash();
    map.q_hash = hash_field(solver.q());
    return map;
}

void write_dtn(std::ostream& os, const DtNMap& map) {
    const auto& spec = map.mesh->spec();
    os << "# dtn-map\n";
    os << "# d " << spec.d << "\n# N " << spec.N << "\n";
    os << "# h " << std::setprecision(17) << spec.h() << "\n";
    os << "# sigma " << map.sigma_name << "\n";
    os << "# sigma_hash " << std::hex << map.sigma_hash << "\n# q_hash " << map.q_hash << std::dec << "\n";
    os << "# ordering boundary nodes, lexicographic in half-step coordinates\n";
    os << "# size " << map.matrix.rows() << "\n";
    for (Eigen::Index r = 0; r < map.matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < map.matrix.cols(); ++c) {
            if (c) os << ' ';
            os << map.matrix(r, c);
        }
        os << '\n';
    }
}

DtNMap read_dtn(std::istream& is) {
    DtNMap map;
    int d = 0, N = 0;
    Eigen::Index n = -1;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] != '#') break;
        std::istringstream ls(line.substr(1));
        std::string key;
        ls >> key;
        if (key == "d") ls >> d;
        else if (key == "N") ls >> N;
        else if (key == "sigma") { ls >> std::ws; std::getline(ls, map.sigma_name); }
        else if (key == "sigma_hash") ls >> std::hex >> map.sigma_hash;
        else if (key == "q_hash") ls >> std::hex >> map.q_hash;
        else if (key == "size") ls >> n;
    }
    if (d == 0 || N == 0 || n < 0) throw std::runtime_error("read_dtn: missing metadata header");
    map.mesh = Mesh::build(build_grid(d, N));
    if (static_cast<std::size_t>(n) != map.mesh->boundary()->size())
        throw std::runtime_error("read_dtn: size does not match the grid's boundary");
    map.matrix.resize(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (r > 0 && !std::getline(is, line)) throw std::runtime_error("read_dtn: truncated matrix");
        std::istringstream ls(line);
        for (Eigen::Index c = 0; c < n; ++c) {
            if (!(ls >> map.matrix(r, c))) throw std::runtime_error("read_dtn: malformed row");
        }
    }
    return map;
}

GapNorm dtn_gap_norm(const RealMatrix& L1, const RealMatrix& L2, const NodeSet& gamma,
                     const BoundaryGram& gram) {
    const auto& mesh = gram.mesh();
    if (L1.rows() != L2.rows() || L1.cols() != L2.cols() ||
        static_cast<std::size_t>(L1.rows()) != mesh.boundary()->size()) {
        throw std::invalid_argument("dtn_gap_norm: maps do not share the boundary ordering");
    }
    RealMatrix K = RealMatrix::Zero(L1.rows(), L1.cols());
    for (const auto& c : gamma.nodes()) {
        auto b = mesh.boundary()->find(c);
        if (!b) throw std::invalid_argument("dtn_gap_norm: window node not on the boundary");
        const auto r = static_cast<Eigen::Index>(*b);
        K.row(r) = L1.row(r) - L2.row(r);
    }
    const double scale = std::pow(mesh.h(), 2 * (mesh.d() - 1));
    RealMatrix A = scale * K.transpose() * gram.G_inverse() * K;
    A = 0.5 * (A + A.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<RealMatrix> ges(A, gram.G());
    if (ges.info() != Eigen::Success) throw std::runtime_error("dtn_gap_norm: eigen-solver failed");
    const Eigen::Index top = A.rows() - 1;
    GapNorm out;
    out.value = std::sqrt(std::max(0.0, ges.eigenvalues()(top)));
    RealVector g = ges.eigenvectors().col(top);
    const double gn = std::sqrt(g.dot(gram.G() * g));
    if (gn > 0) g /= gn;
    out.maximizer = GridField(mesh.boundary(), std::vector<Complex>(g.data(), g.data() + g.size()));
    return out;
}

GapNorm dtn_gap_norm(const DtNMap& L1, const DtNMap& L2, const NodeSet& gamma, const BoundaryGram& gram) {
    return dtn_gap_norm(L1.matrix, L2.matrix, gamma, gram);
}

}  // namespace calderon
