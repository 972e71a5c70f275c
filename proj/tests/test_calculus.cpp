#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "calderon/calculus.hpp"
#include "oracles.hpp"

using namespace calderon;

namespace {

// Straight-loop reference for D_k and A_k at one node.
Complex naive_diff(const GridField& u, const Coord& x, int k, double h) {
    Coord p = x, m = x;
    p[k] += 1;
    m[k] -= 1;
    return (oracle::value_at(u, p) - oracle::value_at(u, m)) / h;
}

Complex naive_avg(const GridField& u, const Coord& x, int k) {
    Coord p = x, m = x;
    p[k] += 1;
    m[k] -= 1;
    return 0.5 * (oracle::value_at(u, p) + oracle::value_at(u, m));
}

}  // namespace

TEST_CASE("diff and avg on hand examples") {
    auto m = Mesh::build(build_grid(1, 3));
    const double h = m->h();
    auto x = GridField::from_function(m->closure(), [](const Point& p) { return Complex(p[0]); });
    auto dx = diff(x, 0);
    CHECK(dx.support().same_nodes(*m->staggered(0)));
    for (std::size_t i = 0; i < dx.size(); ++i) CHECK(std::abs(dx[i] - 1.0) < 1e-14);

    auto c = GridField::constant(m->closure(), Complex(2.5, -1.0));
    CHECK(diff(c, 0).max_abs() == 0.0);
    auto ac = avg(c, 0);
    for (std::size_t i = 0; i < ac.size(); ++i) CHECK(ac[i] == Complex(2.5, -1.0));

    auto x2 = GridField::from_function(m->closure(), [](const Point& p) { return Complex(p[0] * p[0]); });
    auto dx2 = diff(x2, 0, m->staggered(0));
    // node 3h/2 is the second staggered node
    CHECK(dx2[1].real() == doctest::Approx(3 * h));
    CHECK(avg(x, 0, m->staggered(0))[1].real() == doctest::Approx(1.5 * h));
}

TEST_CASE("diff and avg agree with straight-loop oracle") {
    oracle::Rng rng(3);
    for (int d = 1; d <= 3; ++d) {
        auto m = Mesh::build(build_grid(d, 3));
        auto u = oracle::random_field(m->closure(), rng);
        for (int k = 0; k < d; ++k) {
            auto du = diff(u, k, m->staggered(k));
            auto au = avg(u, k, m->staggered(k));
            for (std::size_t i = 0; i < du.size(); ++i) {
                const auto& node = m->staggered(k)->node(i);
                CHECK(std::abs(du[i] - naive_diff(u, node, k, m->h())) < 1e-12);
                CHECK(std::abs(au[i] - naive_avg(u, node, k)) < 1e-14);
            }
        }
    }
}

TEST_CASE("operators reject fields lacking the stencil") {
    auto m = Mesh::build(build_grid(2, 3));
    auto u = GridField::zeros(m->primal());
    CHECK_THROWS_AS(diff(u, 0, m->staggered(0)), std::invalid_argument);
    CHECK_THROWS_AS(diff(u, 2), std::out_of_range);
    CHECK_THROWS_AS(trace(u, 0, *m), std::invalid_argument);
}

TEST_CASE("trace samples the inward neighbour") {
    auto m = Mesh::build(build_grid(1, 3));
    auto v = GridField::from_function(m->staggered(0), [](const Point& p) { return Complex(p[0]); });
    auto t = trace(v, 0, *m);
    const double h = m->h();
    REQUIRE(t.size() == 2);
    CHECK(t[0].real() == doctest::Approx(h / 2));      // x = 0
    CHECK(t[1].real() == doctest::Approx(1 - h / 2));  // x = 1
    auto one = trace(GridField::constant(m->staggered(0), 1.0), 0, *m);
    for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i] == Complex(1.0));
}

TEST_CASE("integration by parts identities") {
    SUBCASE("hand example d=1") {
        auto m = Mesh::build(build_grid(1, 3));
        auto u = GridField::from_function(m->closure(), [](const Point& p) { return Complex(p[0]); });
        auto v = GridField::constant(m->staggered(0), 1.0);
        auto r = ibp_residual(u, v, 0, *m);
        CHECK(std::abs(r.res_d) < 1e-15);
        // boundary term u(1)*1*(+1) + u(0)*1*(-1) = 1
        auto un = u.restrict_to(m->face(0));
        CHECK(integrate(un * trace(v, 0, *m)).real() == doctest::Approx(1.0));
    }
    SUBCASE("zero field") {
        auto m = Mesh::build(build_grid(2, 3));
        oracle::Rng rng(1);
        auto r = ibp_residual(GridField::zeros(m->closure()), oracle::random_field(m->staggered(0), rng), 0, *m);
        CHECK(r.res_d == Complex(0.0));
        CHECK(r.res_a == Complex(0.0));
    }
    SUBCASE("random complex fields") {
        oracle::Rng rng(5);
        for (int d = 1; d <= 3; ++d) {
            for (int N = 2; N <= 4; ++N) {
                auto m = Mesh::build(build_grid(d, N));
                for (int k = 0; k < d; ++k) {
                    auto u = oracle::random_field(m->axis_closure(k), rng);
                    auto v = oracle::random_field(m->staggered(k), rng);
                    auto r = ibp_residual(u, v, k, *m);
                    CHECK(r.d().relative() < 1e-12);
                    CHECK(r.a().relative() < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("product rules, commutation and square identities") {
    oracle::Rng rng(9);
    for (int d = 1; d <= 3; ++d) {
        for (int N = 2; N <= 4; ++N) {
            auto m = Mesh::build(build_grid(d, N));
            auto u = oracle::random_field(m->closure(), rng);
            auto v = oracle::random_field(m->closure(), rng);
            auto w = oracle::random_field(m->lattice(), rng);
            auto ur = oracle::random_field(m->closure(), rng, true);
            for (int k = 0; k < d; ++k) {
                CHECK(product_rule_d_residual(u, v, k, *m).relative() < 1e-13);
                CHECK(product_rule_a_residual(u, v, k, *m).relative() < 1e-13);
                CHECK(square_identity_residual(u, k, *m).relative() < 1e-13);
                CHECK(square_inequality_violation(u, k, *m) <= 1e-12);
                CHECK(square_inequality_violation(ur, k, *m) <= 1e-12);
                for (int j = 0; j < d; ++j) {
                    if (j == k) continue;
                    CHECK(commutation_residual(w, k, j, *m).relative() < 1e-13);
                }
            }
        }
    }
}

TEST_CASE("square identity checked pointwise against a hand formula") {
    auto m = Mesh::build(build_grid(1, 4));
    oracle::Rng rng(2);
    auto u = oracle::random_field(m->closure(), rng, true);
    const double h = m->h();
    for (const auto& x : m->staggered(0)->nodes()) {
        Coord p = x, q = x;
        p[0] += 1;
        q[0] -= 1;
        const double a = oracle::value_at(u, q).real(), b = oracle::value_at(u, p).real();
        const double au = 0.5 * (a + b), du = (b - a) / h, a_sq = 0.5 * (a * a + b * b);
        CHECK(std::abs(a_sq - au * au - 0.25 * h * h * du * du) < 1e-14);
    }
}
