#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "calderon/carleman.hpp"
#include "oracles.hpp"

using namespace calderon;

namespace {

double pos(const GridSpec& s, int c) { return 0.5 * s.h() * c; }

Point point_of(const GridSpec& s, const Coord& c) {
    Point p{};
    for (int k = 0; k < s.d; ++k) p[k] = pos(s, c[k]);
    return p;
}

// Straight-loop evaluation of the three Carleman terms with sigma = 1.
CarlemanReport naive_sides(const GridField& u, const GridField& q, const WeightParams& w, const GridSpec& spec) {
    const double h = spec.h();
    const int d = spec.d;
    const double s = w.s;
    auto e2 = [&](const Coord& c) { return std::exp(2.0 * s * w.phi(point_of(spec, c))); };
    auto val = [&](Coord c) { return oracle::value_at(u, c); };

    CarlemanReport r;
    double mass = 0.0, res = 0.0;
    for (const Coord& x : oracle::enumerate_primal(spec)) {
        mass += e2(x) * std::norm(val(x));
        Complex lap = 0.0;
        for (int k = 0; k < d; ++k) {
            Coord p = x, m = x;
            p[k] += 2;
            m[k] -= 2;
            lap += (val(p) - 2.0 * val(x) + val(m)) / (h * h);
        }
        res += e2(x) * std::norm(-lap + oracle::value_at(q, x) * val(x));
    }
    double grad = 0.0, bdy = 0.0;
    for (int k = 0; k < d; ++k) {
        for (const Coord& y : oracle::enumerate_staggered(spec, k)) {
            Coord p = y, m = y;
            p[k] += 1;
            m[k] -= 1;
            grad += e2(y) * std::norm((val(p) - val(m)) / h);
        }
        for (const Coord& x : oracle::enumerate_axis_closure(spec, k)) {
            const int n = x[k] == 0 ? -1 : (x[k] == spec.top() ? 1 : 0);
            if (n == 0) continue;
            Coord inner = x, y = x;
            inner[k] -= 2 * n;
            y[k] -= n;
            const Complex dn = (val(x) - val(inner)) / h;
            bdy += e2(y) * std::norm(dn);
        }
    }
    r.lhs = s * s * s * std::pow(h, d) * mass + s * std::pow(h, d) * grad;
    r.rhs_interior = std::pow(h, d) * res;
    r.rhs_boundary = s * std::pow(h, d - 1) * bdy;
    return r;
}

GridField zero_boundary_random(const MeshPtr& m, oracle::Rng& rng) {
    GridField u = oracle::random_field(m->closure(), rng);
    for (std::size_t i = 0; i < u.size(); ++i)
        if (m->boundary()->contains(u.support().node(i))) u[i] = 0.0;
    return u;
}

}  // namespace

TEST_CASE("weight fields: r rho = 1, s = 0 edge, psi checks") {
    auto m = Mesh::build(build_grid(2, 7));
    auto p = WeightParams::defaults(2);
    p.s = 3.0;
    auto w = weight_fields(p, m->lattice());
    for (std::size_t i = 0; i < w.r.size(); ++i) {
        CHECK(std::abs(w.r[i] * w.rho[i] - 1.0) <= 1e-15);
        CHECK(w.phi[i].real() > 0.0);
        CHECK(w.phi[i].real() < 1.0);
    }

    p.s = 0.0;
    auto w0 = weight_fields(p, m->closure());
    CHECK(w0.r.max_abs() == 1.0);
    for (std::size_t i = 0; i < w0.rho.size(); ++i) CHECK(w0.rho[i] == Complex(1.0, 0.0));

    WeightParams bad = p;
    bad.psi = PsiFunction::constant(1.0);
    CHECK_THROWS_AS(weight_fields(bad, m->primal()), std::invalid_argument);
    bad.psi = PsiFunction::linear({1.0, 0.0, 0.0}, -0.5);
    CHECK_THROWS_AS(weight_fields(bad, m->primal()), std::invalid_argument);
}

TEST_CASE("default psi is admissible one step outside the cube") {
    auto p = WeightParams::defaults(3);
    const double h = 1.0 / 8.0;
    for (double x = -h; x <= 1.0 + h + 1e-12; x += h / 2)
        for (double y = -h; y <= 1.0 + h + 1e-12; y += h / 2)
            for (double z = -h; z <= 1.0 + h + 1e-12; z += h / 2) {
                const Point pt{x, y, z};
                CHECK(p.psi.value(pt) > 0.0);
                const Point g = p.psi.gradient(pt);
                CHECK(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] > 0.0);
            }
}

TEST_CASE("continuous references against finite differences of rho") {
    auto p = WeightParams::defaults(2);
    p.s = 2.5;
    auto rho = [&](double x, double y) { return std::exp(-p.s * p.phi({x, y, 0.0})); };
    const double e = 1e-4;
    const Point x{0.3, 0.7, 0.0};
    const double r = 1.0 / rho(x[0], x[1]);
    const double dx = (rho(x[0] + e, x[1]) - rho(x[0] - e, x[1])) / (2 * e);
    CHECK(r * dx == doctest::Approx(p.r_d_rho(x, 0)).epsilon(1e-6));
    const double dxx = (rho(x[0] + e, x[1]) - 2 * rho(x[0], x[1]) + rho(x[0] - e, x[1])) / (e * e);
    CHECK(r * dxx == doctest::Approx(p.r_dd_rho(x, 0, 0)).epsilon(1e-5));
    const double dxy = (rho(x[0] + e, x[1] + e) - rho(x[0] + e, x[1] - e) - rho(x[0] - e, x[1] + e) +
                        rho(x[0] - e, x[1] - e)) / (4 * e * e);
    CHECK(r * dxy == doctest::Approx(p.r_dd_rho(x, 0, 1)).epsilon(1e-5));
}

TEST_CASE("weight probe orders on the h ladder") {
    auto p = WeightParams::defaults(2);
    p.s = 2.0;
    const auto series = weight_probe(p);
    REQUIRE(series.size() == 7);
    for (const auto& row : series) {
        INFO(row.name);
        CHECK(row.h.front() == doctest::Approx(1.0 / 8));
        CHECK(row.h.back() == doctest::Approx(1.0 / 64));
        CHECK(std::abs(row.fitted_order - row.expected_order) <= 0.3);
        for (std::size_t i = 1; i < row.error.size(); ++i) CHECK(row.error[i] < row.error[i - 1]);
    }
    // The first rung already gives the rate at least 1.7.
    CHECK(series[0].fitted_order >= 1.7);
}

TEST_CASE("weight probe with psi linear in x_k") {
    WeightParams p;
    p.psi = PsiFunction::linear({1.0, 0.3, 0.0}, 1.0);
    p.s = 2.0;
    p.lambda = 1.0;
    const auto series = weight_probe(p);
    // (r D_k rho - r d_k rho)/s converges to the closed form at second order.
    CHECK(series[2].error.back() < 1e-3);
    CHECK(std::abs(series[2].fitted_order - 2.0) <= 0.3);
}

TEST_CASE("carleman sides against a naive loop") {
    SUBCASE("single hat, d = 1, N = 3, s = lambda = 1") {
        auto m = Mesh::build(build_grid(1, 3));
        auto p = WeightParams::defaults(1);
        p.s = 1.0;
        p.lambda = 1.0;
        GridField u = GridField::zeros(m->closure());
        u[*u.support().find({4, 0, 0})] = 1.0;
        auto q = GridField::zeros(m->primal());
        auto sigma = sample_sigma(SigmaDescription::identity(1), m);
        const auto got = carleman_sides(u, q, *sigma, p);
        const auto ref = naive_sides(u, q, p, m->spec());
        CHECK(got.lhs == doctest::Approx(ref.lhs).epsilon(1e-13));
        CHECK(got.rhs_interior == doctest::Approx(ref.rhs_interior).epsilon(1e-13));
        CHECK(got.rhs_boundary == doctest::Approx(ref.rhs_boundary).epsilon(1e-13));
        // The hat's boundary neighbours are the primal endpoints, so no flux reaches the faces.
        CHECK(got.rhs_boundary == 0.0);
        CHECK(got.sh == doctest::Approx(0.25));
    }
    SUBCASE("random complex fields with q, d = 2 and d = 3") {
        oracle::Rng rng(11);
        for (int d = 2; d <= 3; ++d) {
            auto m = Mesh::build(build_grid(d, 4));
            auto p = WeightParams::defaults(d);
            p.s = 2.0;
            auto sigma = sample_sigma(SigmaDescription::identity(d), m);
            for (int t = 0; t < 5; ++t) {
                const GridField u = zero_boundary_random(m, rng);
                const GridField q = oracle::random_field(m->primal(), rng, true);
                const auto got = carleman_sides(u, q, *sigma, p);
                const auto ref = naive_sides(u, q, p, m->spec());
                CHECK(got.lhs == doctest::Approx(ref.lhs).epsilon(1e-12));
                CHECK(got.rhs_interior == doctest::Approx(ref.rhs_interior).epsilon(1e-12));
                CHECK(got.rhs_boundary == doctest::Approx(ref.rhs_boundary).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("carleman sides: zero field, homogeneity, preconditions") {
    auto m = Mesh::build(build_grid(2, 7));
    auto p = WeightParams::defaults(2);
    auto sigma = sample_sigma(SigmaDescription::identity(2), m);
    auto q = GridField::zeros(m->primal());

    const auto z = carleman_sides(GridField::zeros(m->closure()), q, *sigma, p);
    CHECK(z.lhs == 0.0);
    CHECK(z.rhs_interior == 0.0);
    CHECK(z.rhs_boundary == 0.0);

    const GridField u = carleman_random_field(*m, 3);
    const auto a = carleman_sides(u, q, *sigma, p);
    const auto b = carleman_sides(2.0 * u, q, *sigma, p);
    CHECK(b.lhs == doctest::Approx(4.0 * a.lhs).epsilon(1e-14));
    CHECK(b.rhs_interior == doctest::Approx(4.0 * a.rhs_interior).epsilon(1e-14));
    CHECK(b.rhs_boundary == doctest::Approx(4.0 * a.rhs_boundary).epsilon(1e-14));
    const auto c = carleman_sides(Complex(0.0, -3.0) * u, q, *sigma, p);
    CHECK(c.constant == doctest::Approx(a.constant).epsilon(1e-13));
    CHECK(a.lhs > 0.0);
    CHECK(a.rhs_interior > 0.0);
    CHECK(a.rhs_boundary > 0.0);

    GridField bad = u;
    bad[*bad.support().find({0, 4, 0})] = 1.0;
    CHECK_THROWS_AS(carleman_sides(bad, q, *sigma, p), std::invalid_argument);
    WeightParams big = p;
    big.s = 5.0;  // sh = 0.625 > eps0
    CHECK_THROWS_AS(carleman_sides(u, q, *sigma, big), std::invalid_argument);

    // Far below the s0 regime the quotient is still finite.
    WeightParams tiny = p;
    tiny.s = 1e-3;
    const auto t = carleman_sides(u, q, *sigma, tiny);
    CHECK(std::isfinite(t.constant));
    CHECK(t.constant > 0.0);
}

TEST_CASE("random family is reproducible and boundary-vanishing") {
    auto m = Mesh::build(build_grid(2, 9));
    const GridField a = carleman_random_field(*m, 42);
    const GridField b = carleman_random_field(*m, 42);
    const GridField c = carleman_random_field(*m, 43);
    CHECK(hash_field(a) == hash_field(b));
    CHECK(hash_field(a) != hash_field(c));
    CHECK(a.restrict_to(m->boundary()).max_abs() == 0.0);
}

TEST_CASE("fitted constant stays bounded across N with sh fixed") {
    FitOptions opt;
    opt.threads = 4;
    const auto rows = fit_constant(WeightParams::defaults(2), opt);
    REQUIRE(rows.size() == 3);
    double lo = rows[0].C_fitted, hi = rows[0].C_fitted;
    for (const auto& r : rows) {
        CHECK(r.sh == doctest::Approx(0.25));
        CHECK(r.s * r.h == doctest::Approx(0.25));
        CHECK(r.s >= 2.0);
        CHECK(r.seed >= opt.seed);
        CHECK(r.seed < opt.seed + 100);
        lo = std::min(lo, r.C_fitted);
        hi = std::max(hi, r.C_fitted);
    }
    CHECK(hi / lo < 3.0);

    // The thread count does not change the table.
    FitOptions serial = opt;
    serial.threads = 1;
    const auto again = fit_constant(WeightParams::defaults(2), serial);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(again[i].C_fitted == rows[i].C_fitted);
        CHECK(again[i].seed == rows[i].seed);
    }

    std::ostringstream os;
    write_constant_csv(os, rows);
    CHECK(os.str().rfind("d,N,h,s,lambda,sh,C_fitted,seed\n", 0) == 0);
}
