#include "calderon/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace calderon {

namespace {

NodeSetPtr stencil_set(const NodeSet& support, int k) {
    if (k < 0 || k >= support.spec().d) {
        throw std::out_of_range("axis " + std::to_string(k) + " outside the grid dimension");
    }
    auto nodes = set_intersection(shifted(support.nodes(), k, +1), shifted(support.nodes(), k, -1));
    return make_set(support.spec(), SetKind::Derived, std::move(nodes), {k});
}

template <class Combine>
GridField two_point(const GridField& u, int k, const NodeSetPtr& target, Combine combine) {
    if (k < 0 || k >= u.support().spec().d) {
        throw std::out_of_range("axis " + std::to_string(k) + " outside the grid dimension");
    }
    std::vector<Complex> out(target->size());
    const auto& s = u.support();
    for (std::size_t i = 0; i < out.size(); ++i) {
        Coord lo = target->node(i), hi = target->node(i);
        lo[k] -= 1;
        hi[k] += 1;
        auto a = s.find(lo);
        auto b = s.find(hi);
        if (!a || !b) {
            throw std::invalid_argument("difference stencil leaves the field's support (" +
                                        to_string(s.kind()) + " -> " + to_string(target->kind()) +
                                        ")");
        }
        out[i] = combine(u[*a], u[*b]);
    }
    return GridField(target, std::move(out));
}

double max_abs_diff(const GridField& a, const GridField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

GridField diff(const GridField& u, int k, const NodeSetPtr& target) {
    const double inv_h = 1.0 / u.support().spec().h();
    return two_point(u, k, target, [inv_h](Complex lo, Complex hi) { return (hi - lo) * inv_h; });
}

GridField diff(const GridField& u, int k) { return diff(u, k, stencil_set(u.support(), k)); }

GridField avg(const GridField& u, int k, const NodeSetPtr& target) {
    return two_point(u, k, target, [](Complex lo, Complex hi) { return 0.5 * (hi + lo); });
}

GridField avg(const GridField& u, int k) { return avg(u, k, stencil_set(u.support(), k)); }

GridField shift(const GridField& u, int k, int dir, const NodeSetPtr& target) {
    std::vector<Complex> out(target->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        Coord c = target->node(i);
        c[k] += dir;
        out[i] = u.at(c);
    }
    return GridField(target, std::move(out));
}

GridField trace(const GridField& v, int k, const Mesh& mesh) {
    const auto n = normals(mesh, k);
    std::vector<Complex> out(n.faces->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        Coord c = n.faces->node(i);
        c[k] -= n.values[i];  // step back inside
        auto idx = v.support().find(c);
        if (!idx) throw std::invalid_argument("trace: field is not defined on the k-staggered set");
        out[i] = v[*idx];
    }
    return GridField(n.faces, std::move(out));
}

GridField conj(const GridField& u) {
    GridField out = u;
    for (auto& v : out.values()) v = std::conj(v);
    return out;
}

GridField abs2(const GridField& u) {
    GridField out = u;
    for (auto& v : out.values()) v = std::norm(v);
    return out;
}

IbpResidual ibp_residual(const GridField& u, const GridField& v, int k, const Mesh& mesh) {
    const auto& primal = mesh.primal();
    const auto& stag = mesh.staggered(k);
    const auto uc = u.restrict_to(mesh.axis_closure(k));
    const auto vs = v.restrict_to(stag);
    const auto u_in = uc.restrict_to(primal);
    const auto n = normals(mesh, k);
    const auto u_face = uc.restrict_to(n.faces);
    const auto tv = trace(vs, k, mesh);

    GridField un = u_face * tv;
    for (std::size_t i = 0; i < un.size(); ++i) un[i] *= static_cast<double>(n.values[i]);

    const Complex lhs_d = integrate(u_in * diff(vs, k, primal));
    const Complex vol_d = integrate(vs * diff(uc, k, stag));
    const Complex bdy_d = integrate(un);

    const Complex lhs_a = integrate(u_in * avg(vs, k, primal));
    const Complex vol_a = integrate(vs * avg(uc, k, stag));
    const Complex bdy_a = 0.5 * mesh.h() * integrate(u_face * tv);

    IbpResidual r;
    r.res_d = lhs_d - (-vol_d + bdy_d);
    r.res_a = lhs_a - (vol_a - bdy_a);
    r.scale_d = std::abs(lhs_d) + std::abs(vol_d) + std::abs(bdy_d);
    r.scale_a = std::abs(lhs_a) + std::abs(vol_a) + std::abs(bdy_a);
    return r;
}

Residual product_rule_d_residual(const GridField& u, const GridField& v, int k, const Mesh& mesh) {
    const auto& stag = mesh.staggered(k);
    const auto lhs = diff(u * v, k, stag);
    const auto rhs = diff(u, k, stag) * avg(v, k, stag) + avg(u, k, stag) * diff(v, k, stag);
    return {max_abs_diff(lhs, rhs), std::max(lhs.max_abs(), rhs.max_abs())};
}

Residual product_rule_a_residual(const GridField& u, const GridField& v, int k, const Mesh& mesh) {
    const auto& stag = mesh.staggered(k);
    const double h = mesh.h();
    const auto lhs = avg(u * v, k, stag);
    const auto rhs =
        avg(u, k, stag) * avg(v, k, stag) + (0.25 * h * h) * (diff(u, k, stag) * diff(v, k, stag));
    return {max_abs_diff(lhs, rhs), std::max(lhs.max_abs(), rhs.max_abs())};
}

Residual commutation_residual(const GridField& u, int k, int j, const Mesh& mesh) {
    const auto& target = mesh.staggered(k, j);
    Residual r;
    auto check = [&](const GridField& a, const GridField& b) {
        const auto ra = a.restrict_to(target);
        const auto rb = b.restrict_to(target);
        r.abs = std::max(r.abs, max_abs_diff(ra, rb));
        r.scale = std::max({r.scale, ra.max_abs(), rb.max_abs()});
    };
    check(avg(avg(u, j), k), avg(avg(u, k), j));
    check(avg(diff(u, j), k), diff(avg(u, k), j));
    check(diff(diff(u, j), k), diff(diff(u, k), j));
    return r;
}

Residual square_identity_residual(const GridField& u, int k, const Mesh& mesh) {
    const auto& stag = mesh.staggered(k);
    const double h = mesh.h();
    const auto au = avg(u, k, stag);
    const auto du = diff(u, k, stag);
    const auto uu = u * u;
    const auto a_lhs = avg(uu, k, stag);
    const auto a_rhs = au * au + (0.25 * h * h) * (du * du);
    const auto d_lhs = diff(uu, k, stag);
    const auto d_rhs = Complex(2.0) * (du * au);
    Residual r;
    r.abs = std::max(max_abs_diff(a_lhs, a_rhs), max_abs_diff(d_lhs, d_rhs));
    r.scale = std::max({a_lhs.max_abs(), a_rhs.max_abs(), d_lhs.max_abs(), d_rhs.max_abs()});
    return r;
}

double square_inequality_violation(const GridField& u, int k, const Mesh& mesh) {
    const auto& stag = mesh.staggered(k);
    const double h = mesh.h();
    const auto au = avg(u, k, stag);
    const auto du = diff(u, k, stag);
    const auto a_sq = avg(abs2(u), k, stag);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < stag->size(); ++i) {
        const double bound = a_sq[i].real();
        worst = std::max(worst, std::norm(au[i]) - bound);
        worst = std::max(worst, std::norm(du[i]) - 4.0 / (h * h) * bound);
    }
    return worst;
}

}  // namespace calderon
