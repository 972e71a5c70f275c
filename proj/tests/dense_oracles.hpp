// Dense reference forms for the boundary norms, assembled with plain loops.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "calderon/grid.hpp"
#include "oracles.hpp"

namespace oracle {

using calderon::Mesh;

// Dense H^1 form on the closure, assembled from the definition with plain loops.
inline Eigen::MatrixXd dense_h1_form(const Mesh& m) {
    const auto nodes = m.closure()->nodes();
    const auto n = static_cast<Eigen::Index>(nodes.size());
    const double h = m.h(), w = std::pow(h, m.d());
    auto idx = [&](const Coord& c) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (nodes[static_cast<std::size_t>(i)] == c) return i;
        throw std::logic_error("missing node");
    };
    Eigen::MatrixXd Q = w * Eigen::MatrixXd::Identity(n, n);
    for (int k = 0; k < m.d(); ++k) {
        for (const auto& y : oracle::enumerate_staggered(m.spec(), k)) {
            Coord p = y, q = y;
            p[k] += 1;
            q[k] -= 1;
            const auto a = idx(p), b = idx(q);
            Q(a, a) += w / (h * h);
            Q(b, b) += w / (h * h);
            Q(a, b) -= w / (h * h);
            Q(b, a) -= w / (h * h);
        }
    }
    return Q;
}

// min over interior values of [u_I; g]^T Q [u_I; g] by dense normal equations.
inline double dense_half_norm(const Mesh& m, const Eigen::VectorXd& g) {
    const auto Q = dense_h1_form(m);
    const auto nodes = m.closure()->nodes();
    std::vector<Eigen::Index> I, B;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        (m.primal()->contains(nodes[i]) ? I : B).push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd Qii(I.size(), I.size()), Qib(I.size(), B.size());
    for (std::size_t a = 0; a < I.size(); ++a) {
        for (std::size_t b = 0; b < I.size(); ++b) Qii(a, b) = Q(I[a], I[b]);
        for (std::size_t b = 0; b < B.size(); ++b) Qib(a, b) = Q(I[a], B[b]);
    }
    // g is given in mesh.boundary() order, which matches closure order restricted to B
    const Eigen::VectorXd ui = Qii.ldlt().solve(-Qib * g);
    Eigen::VectorXd full(nodes.size());
    for (std::size_t a = 0; a < I.size(); ++a) full(I[a]) = ui(a);
    for (std::size_t b = 0; b < B.size(); ++b) full(B[b]) = g(b);
    return std::sqrt(full.dot(Q * full));
}

}  // namespace oracle
