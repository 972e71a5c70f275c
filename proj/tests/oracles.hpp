// Independent brute-force reference implementations used only by tests.
// Nothing here calls into the library's set algebra or operators.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "calderon/grid.hpp"

namespace oracle {

using calderon::Complex;
using calderon::Coord;
using calderon::GridSpec;

inline int ipow(int base, int e) {
    int r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

inline bool same(std::span<const Coord> a, std::span<const Coord> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

/// Every coordinate in [-4, top+4]^d that satisfies pred, in lexicographic order.
inline std::vector<Coord> enumerate(const GridSpec& spec, const std::function<bool(const Coord&)>& pred) {
    std::vector<Coord> out;
    const int lo = -4, hi = spec.top() + 4;
    Coord c{0, 0, 0};
    std::function<void(int)> rec = [&](int k) {
        if (k == spec.d) {
            if (pred(c)) out.push_back(c);
            return;
        }
        for (int v = lo; v <= hi; ++v) {
            c[k] = v;
            rec(k + 1);
        }
        c[k] = 0;
    };
    rec(0);
    return out;
}

inline bool even_interior(int v, const GridSpec& s) { return v % 2 == 0 && v >= 2 && v <= 2 * s.N; }
inline bool odd_span(int v, const GridSpec& s) { return v % 2 != 0 && v >= 1 && v <= 2 * s.N + 1; }
inline bool even_closed(int v, const GridSpec& s) { return v % 2 == 0 && v >= 0 && v <= s.top(); }

inline std::vector<Coord> enumerate_primal(const GridSpec& s) {
    return enumerate(s, [&](const Coord& c) {
        for (int k = 0; k < s.d; ++k)
            if (!even_interior(c[k], s)) return false;
        return true;
    });
}

inline std::vector<Coord> enumerate_lattice(const GridSpec& s) {
    return enumerate(s, [&](const Coord& c) {
        for (int k = 0; k < s.d; ++k)
            if (!even_closed(c[k], s)) return false;
        return true;
    });
}

inline std::vector<Coord> enumerate_staggered(const GridSpec& s, int axis) {
    return enumerate(s, [&](const Coord& c) {
        for (int k = 0; k < s.d; ++k) {
            if (k == axis ? !odd_span(c[k], s) : !even_interior(c[k], s)) return false;
        }
        return true;
    });
}

inline std::vector<Coord> enumerate_staggered2(const GridSpec& s, int a, int b) {
    return enumerate(s, [&](const Coord& c) {
        for (int k = 0; k < s.d; ++k) {
            const bool shifted = (k == a || k == b);
            if (shifted ? !odd_span(c[k], s) : !even_interior(c[k], s)) return false;
        }
        return true;
    });
}

inline std::vector<Coord> enumerate_axis_closure(const GridSpec& s, int axis) {
    return enumerate(s, [&](const Coord& c) {
        for (int k = 0; k < s.d; ++k) {
            if (k == axis ? !even_closed(c[k], s) : !even_interior(c[k], s)) return false;
        }
        return true;
    });
}

using Rng = std::mt19937_64;

inline Complex random_complex(Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double re = u(rng);
    const double im = u(rng);
    return {re, im};
}

inline double random_real(Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return u(rng);
}

inline calderon::GridField random_field(const calderon::NodeSetPtr& support, Rng& rng,
                                        bool real = false) {
    std::vector<Complex> v(support->size());
    for (auto& x : v) x = real ? Complex(random_real(rng), 0.0) : random_complex(rng);
    return calderon::GridField(support, std::move(v));
}

/// Naive value lookup: linear scan, independent of the library's index.
inline Complex value_at(const calderon::GridField& f, const Coord& c) {
    const auto nodes = f.support().nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] == c) return f[i];
    throw std::out_of_range("oracle::value_at: node missing");
}

inline bool has_node(const calderon::GridField& f, const Coord& c) {
    const auto nodes = f.support().nodes();
    return std::find(nodes.begin(), nodes.end(), c) != nodes.end();
}

}  // namespace oracle
