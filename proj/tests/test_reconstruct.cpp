#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "calderon/reconstruct.hpp"
#include "oracles.hpp"

using namespace calderon;

namespace {

constexpr double kPi = std::numbers::pi;

PotentialDescription small_bump(double amp) { return PotentialDescription::bump({0.5, 0.5, 0.5}, 0.3, amp); }

struct Pair {
    MeshPtr mesh;
    SolverPtr s1, s2;
    RealMatrix gap;
};

Pair make_pair(int N, const PotentialDescription& q1, const PotentialDescription& q2,
               const SigmaDescription& sigma = SigmaDescription::identity(3)) {
    Pair p;
    p.mesh = Mesh::build(build_grid(3, N));
    auto s = sample_sigma(sigma, p.mesh);
    p.s1 = std::make_shared<const ForwardSolver>(s, q1.sample(*p.mesh));
    p.s2 = std::make_shared<const ForwardSolver>(s, q2.sample(*p.mesh));
    p.gap = dtn_difference(*p.s1, *p.s2);
    return p;
}

EstimateContext context(const Pair& p, double delta = 0.0) {
    EstimateContext ctx;
    ctx.s1 = p.s1;
    ctx.s2 = p.s2;
    ctx.gap = p.gap;
    ctx.delta = delta;
    ctx.dq = p.s2->q() - p.s1->q();
    ctx.reference = dft(ctx.dq, *p.mesh);
    return ctx;
}

// Direct triple-sum DFT at one frequency.
Complex direct_dft(const GridField& u, const Frequency& xi) {
    const auto& set = u.support();
    Complex s = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Point x = set.position(i);
        double ph = 0.0;
        for (int k = 0; k < set.spec().d; ++k) ph += x[k] * xi[k];
        s += u[i] * std::exp(Complex(0.0, -2.0 * kPi * ph));
    }
    return s * std::pow(set.spec().h(), set.spec().d);
}

ExperimentConfig quick_config() {
    ExperimentConfig c;
    c.N_ladder = {5};
    c.q2 = small_bump(5e-7);
    c.perturbation = {0.0, 1e-7, 1e-6, 1e-5};
    return c;
}

}  // namespace

TEST_CASE("dtn difference matches two assembled maps") {
    const auto p = make_pair(4, PotentialDescription::constant(0.5), small_bump(3.0),
                             SigmaDescription::smooth_bump(3, 0.2));
    const RealMatrix ref = dtn_assemble(*p.s2).matrix - dtn_assemble(*p.s1).matrix;
    CHECK((p.gap - ref).norm() <= 1e-9 * ref.norm());
    CHECK((p.gap - p.gap.transpose()).norm() <= 1e-12 * p.gap.norm());
    CHECK((dtn_difference(*p.s1, *p.s2, 3) - p.gap).norm() == 0.0);

    const auto same = make_pair(4, small_bump(3.0), small_bump(3.0));
    CHECK(same.gap.norm() == 0.0);

    auto other = sample_sigma(SigmaDescription::smooth_bump(3, 0.3), p.mesh);
    ForwardSolver s3(other, p.s1->q());
    CHECK_THROWS_AS(dtn_difference(*p.s1, s3), std::invalid_argument);
}

TEST_CASE("alessandrini pairing: interior and boundary forms") {
    const auto p = make_pair(7, PotentialDescription::zero(), small_bump(4.0));
    const auto& mesh = *p.mesh;
    // u1 = 1 + x0 - 2 x2 is discrete harmonic for sigma = 1.
    const GridField u1 = GridField::from_function(mesh.closure(), [](const Point& x) { return 1.0 + x[0] - 2.0 * x[2]; });
    const GridField g = GridField::from_function(mesh.boundary(), [](const Point& x) {
        return Complex(std::cos(3.0 * x[0]) + x[1], x[2] * x[2]);
    });
    const GridField u2 = p.s2->solve(GridField::zeros(mesh.primal()), g);
    const auto forms = alessandrini_pairing(*p.s1, *p.s2, p.gap, u1, u2);

    Complex direct = 0.0;
    const auto bump = small_bump(4.0);
    for (std::size_t i = 0; i < mesh.primal()->size(); ++i) {
        const Coord& c = mesh.primal()->node(i);
        const Point x = mesh.primal()->position(i);
        direct += bump.value(x) * u1.at(c) * u2.at(c);
    }
    direct *= std::pow(mesh.h(), 3);
    CHECK(std::abs(forms.interior - direct) <= 1e-12 * std::abs(direct));
    CHECK(forms.relative_gap() <= 1e-8);

    // 20 random instances with complex boundary data.
    oracle::Rng rng(21);
    for (int t = 0; t < 20; ++t) {
        const double c = 2.0 * std::abs(oracle::random_real(rng));
        const auto q = make_pair(7, PotentialDescription::constant(c),
                                 PotentialDescription{"mix", [c](const Point& x) {
                                                          return c + small_bump(6.0).value(x);
                                                      }});
        auto random_boundary = [&] {
            GridField b = GridField::zeros(q.mesh->boundary());
            for (auto& v : b.values()) v = oracle::random_complex(rng);
            return b;
        };
        const GridField v1 = q.s1->solve(GridField::zeros(q.mesh->primal()), random_boundary());
        const GridField v2 = q.s2->solve(GridField::zeros(q.mesh->primal()), random_boundary());
        CHECK(alessandrini_pairing(*q.s1, *q.s2, q.gap, v1, v2).relative_gap() <= 1e-8);
    }

    const auto eq = make_pair(5, small_bump(2.0), small_bump(2.0));
    const GridField w = eq.s1->solve(GridField::zeros(eq.mesh->primal()),
                                     GridField::constant(eq.mesh->boundary(), Complex(1.0, 1.0)));
    const auto zero = alessandrini_pairing(*eq.s1, *eq.s2, eq.gap, w, w);
    CHECK(zero.interior == Complex{});
    CHECK(zero.boundary == Complex{});

    GridField not_solution = u2;
    not_solution[*not_solution.support().find(mesh.primal()->node(7))] += 1.0;
    CHECK_THROWS_AS(alessandrini_pairing(*p.s1, *p.s2, p.gap, u1, not_solution), std::invalid_argument);
}

TEST_CASE("fourier estimate: oracle identities and trivial case") {
    const auto p = make_pair(7, PotentialDescription::zero(), small_bump(5.0));
    const auto ctx = context(p, 0.01);
    for (const Frequency& xi : {Frequency{0, 0, 0}, Frequency{1, 0, 0}, Frequency{0, 1, 1}}) {
        const auto e = fourier_estimate(ctx, xi, 5.0);
        CHECK(std::abs(e.reference - direct_dft(ctx.dq, xi)) < 1e-14);
        // u1 u2 = e^{-2 pi i xi.x}(1 + r1)(1 + r2) exactly.
        CHECK(std::abs(e.interior_pairing - e.reference - e.cross_term) < 1e-12);
        CHECK(std::abs(e.estimate - e.interior_pairing) <= 1e-8 * std::abs(e.interior_pairing));
        CHECK(e.inv_a == doctest::Approx(0.2));
        CHECK(e.a3h2 == doctest::Approx(125.0 / 64.0));
        CHECK(e.data_term == doctest::Approx(625.0 * std::exp(5.0) * 0.1));
    }
    CHECK_THROWS_AS(fourier_estimate(ctx, {2, 0, 0}, 5.0), std::invalid_argument);
    CHECK_THROWS_AS(fourier_estimate(ctx, {0, 0, 0}, 50.0), std::invalid_argument);

    const auto eq = make_pair(5, small_bump(1.0), small_bump(1.0));
    const auto e = fourier_estimate(context(eq), {1, 1, 0}, 6.0);
    CHECK(e.estimate == Complex{});
    CHECK(std::abs(e.reference) == 0.0);

    auto mctx = ctx;
    mctx.method = CgoMethod::Multiplier;
    const auto m = fourier_estimate(mctx, {0, 0, 0}, 5.0);
    CHECK(m.method == "multiplier");
    CHECK(std::abs(m.estimate - m.interior_pairing) <= 1e-8 * std::abs(m.interior_pairing));
}

TEST_CASE("fourier gap over a sweep in a") {
    const auto p = make_pair(9, PotentialDescription::zero(), small_bump(5.0));
    BoundaryGram gram(p.mesh);
    const RealMatrix zero = RealMatrix::Zero(p.gap.rows(), p.gap.cols());
    const double delta = dtn_gap_norm(p.gap, zero, *gamma_nodes(*p.mesh, ExperimentConfig{}.gamma), gram).value;
    auto ctx = context(p, delta);
    ctx.constants.c = 3.0;
    double C = 0.0, best_gap = 1e300, best_a = 0.0;
    for (double a = 4.0; a <= 12.0; a += 1.0) {
        const auto e = fourier_estimate(ctx, {0, 0, 0}, a);
        C = std::max(C, e.gap() / e.bound_shape());
        if (e.gap() < best_gap) best_gap = e.gap(), best_a = a;
    }
    CHECK(std::isfinite(C));
    CHECK(C > 0.0);
    MESSAGE("delta " << delta << ", fitted C " << C << ", smallest gap " << best_gap << " at a = " << best_a);
}

TEST_CASE("select_parameters branches") {
    ConstantsBox box;  // alpha3 = 1, c~ = 1
    REQUIRE(box.c_tilde() == 1.0);
    const double h = 1.0 / 400.0;  // mu~ = 1/20

    auto p = select_parameters(0.0, 0.0, 0.0, h, box);
    CHECK(p.branch == "exact");
    CHECK(p.mu_tilde == doctest::Approx(0.05));
    CHECK(p.a == doctest::Approx(20.0));
    CHECK(p.mu == p.mu_tilde);

    p = select_parameters(std::exp(-80.0), 0.0, 0.0, h, box);
    CHECK(p.branch == "log");
    CHECK(p.a == doctest::Approx(10.0));
    CHECK(p.mu == doctest::Approx(0.1));

    p = select_parameters(std::exp(-200.0), 0.0, 0.0, h, box);
    CHECK(p.branch == "small-delta");
    CHECK(p.a == doctest::Approx(20.0));
    CHECK(p.mu == doctest::Approx(0.05));

    p = select_parameters(1e-3, 0.0, 0.0, h, box);
    CHECK(p.branch == "large-delta");
    CHECK(p.a == box.a0);
    CHECK_FALSE(p.warning.empty());

    // h, eps -> 0 at fixed delta: mu saturates on the log term.
    for (double hh : {1e-6, 1e-10, 1e-14}) {
        const auto q = select_parameters(1e-12, hh, hh, hh, box);
        CHECK(q.mu == doctest::Approx(8.0 / std::abs(std::log(1e-12))));
    }
    CHECK(select_parameters(1e-4, 0.01, 0.2, 0.01, box).mu_tilde == doctest::Approx(0.2));
    CHECK(std::isinf(select_parameters(1.0, 0, 0, h, box).mu));
    CHECK_THROWS_AS(select_parameters(-1.0, 0, 0, h, box), std::invalid_argument);
}

TEST_CASE("truncation radius stays below 1/(pi mu) for mu < 1") {
    for (double r : {0.5, 1.0, 2.0})
        for (double mu = 1e-4; mu < 1.0; mu *= 1.7) CHECK(truncation_radius(mu, 3, r) < 1.0 / (kPi * mu));
    CHECK(truncation_radius(1.0, 3, 1.0) == doctest::Approx(1.0 / kPi));
    CHECK(truncation_radius(std::numeric_limits<double>::infinity(), 3, 1.0) == 0.0);
    CHECK_THROWS_AS(truncation_radius(0.0, 3, 1.0), std::invalid_argument);
    CHECK(stability_bound(0.0, 0.0, 0.1, 0.0, 0.2) == doctest::Approx(std::pow(0.1, 0.2)));
    CHECK(stability_bound(0.0, 0.0, 1e-30, 1e-3, 0.2) == doctest::Approx(std::pow(std::log(1e3), -0.4)));
    CHECK(stability_bound(0.3, 0.0, 1e-30, 0.0, 0.2) == doctest::Approx(std::pow(0.3, 0.4)));
    CHECK(std::isinf(stability_bound(0.0, 0.0, 0.1, 2.0, 0.2)));
}

TEST_CASE("low-pass reconstruction bookkeeping") {
    auto mesh = Mesh::build(build_grid(3, 6));
    oracle::Rng rng(4);
    GridField dq = GridField::zeros(mesh->primal());
    for (auto& v : dq.values()) v = oracle::random_real(rng);
    const SpectralField F = dft(dq, *mesh);
    const double factor = plancherel_factor(*mesh);

    std::vector<FourierEstimate> exact;
    for (std::size_t i = 0; i < F.size(); ++i) {
        FourierEstimate e;
        e.xi = F.frequency(i);
        e.estimate = F.coeffs[i];
        exact.push_back(e);
    }
    const double mu = 0.02;  // rho ~ 1.54
    const auto rec = reconstruct_lowpass(*mesh, dq, mu, 1.0, exact);
    std::size_t kept = 0;
    double tail = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) {
        const auto xi = F.frequency(i);
        const double n2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if (std::sqrt(n2) <= rec.rho_trunc) {
            ++kept;
            CHECK(rec.keep[i]);
        } else {
            tail += std::norm(direct_dft(dq, xi)) / (1.0 + n2);
        }
    }
    CHECK(rec.kept == kept);
    CHECK(kept == 7);  // 0, e_k, e_j + e_k
    CHECK(rec.err_lowpass == 0.0);
    CHECK(rec.err_tail == doctest::Approx(std::sqrt(factor * tail)).epsilon(1e-12));
    CHECK(rec.err_total == doctest::Approx(rec.err_tail).epsilon(1e-14));
    CHECK(rec.tail_bound >= rec.err_tail);

    // Perturbed estimates: Parseval split and the pointwise low-pass bound.
    auto noisy = exact;
    for (auto& e : noisy) e.estimate += 0.01 * oracle::random_complex(rng);
    const auto r2 = reconstruct_lowpass(*mesh, dq, mu, 1.0, noisy);
    CHECK(std::abs(r2.err_total * r2.err_total - r2.err_lowpass * r2.err_lowpass - r2.err_tail * r2.err_tail) <=
          1e-14 * r2.err_total * r2.err_total);
    CHECK(r2.lowpass_bound >= r2.err_lowpass);
    CHECK(std::isfinite(r2.err_field));

    const auto tiny = reconstruct_lowpass(*mesh, dq, 1e12, 1.0, exact);
    CHECK(tiny.kept == 1);
    CHECK(tiny.keep[0]);
    const GridField mean = tiny.q_hat;
    for (std::size_t i = 1; i < mean.size(); ++i) CHECK(std::abs(mean[i] - mean[0]) < 1e-14);

    std::vector<FourierEstimate> partial(exact.begin() + 2, exact.end());
    CHECK_THROWS_AS(reconstruct_lowpass(*mesh, dq, mu, 1.0, partial), std::invalid_argument);
}

TEST_CASE("config validation") {
    ExperimentConfig c = quick_config();
    auto mesh = Mesh::build(build_grid(3, 9));
    CHECK_NOTHROW(validate(c, *mesh));
    c.q2 = PotentialDescription::bump({0.5, 0.5, 0.5}, 0.45, 1.0);
    try {
        validate(c, *mesh);
        FAIL("expected a collar violation");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("O_h") != std::string::npos);
    }
    c = quick_config();
    c.r = 0.0;
    CHECK_THROWS_AS(validate(c, *mesh), std::invalid_argument);
    c = quick_config();
    c.gamma.sign = 0;
    CHECK_THROWS_AS(validate(c, *mesh), std::invalid_argument);
}

TEST_CASE("stability experiment") {
    ExperimentConfig c = quick_config();
    const auto reports = stability_experiment(c);
    REQUIRE(reports.size() == 4);
    for (const auto& r : reports) {
        CHECK(r.ok());
        CHECK(r.alpha == 0.2);
        CHECK(r.kept >= 1);
        CHECK(r.rho_trunc < 1.0 / (kPi * r.choice.mu));
        CHECK(std::abs(r.err_Hminus_r * r.err_Hminus_r - r.err_lowpass * r.err_lowpass - r.err_tail * r.err_tail) <=
              1e-12 * r.err_Hminus_r * r.err_Hminus_r);
        for (const auto& e : r.estimates) CHECK(e.a == r.choice.a);
    }
    // Error is non-increasing in |ln delta| along the synthetic sweep (10% jitter).
    for (std::size_t i = 2; i < reports.size(); ++i) {
        CHECK(reports[i].delta_gamma > reports[i - 1].delta_gamma);
        CHECK(reports[i].err_Hminus_r >= 0.9 * reports[i - 1].err_Hminus_r);
    }
    const double C = fit_bound_constant(reports);
    for (const auto& r : reports) CHECK(r.err_Hminus_r <= C * r.bound_value * (1 + 1e-12));

    std::ostringstream os;
    write_stability_csv(os, reports);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "N,h,eps_d,eps_a,delta_full,delta_gamma,mu,a,err_Hminus_r,bound_value,alpha");
    int rows = 0;
    while (std::getline(is, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == 10);
        ++rows;
    }
    CHECK(rows == 4);

    ExperimentConfig par = c;
    par.threads = 4;
    const auto again = stability_experiment(par);
    for (std::size_t i = 0; i < reports.size(); ++i) CHECK(again[i].err_Hminus_r == reports[i].err_Hminus_r);
}

TEST_CASE("stability experiment: equal potentials take the exact branch") {
    ExperimentConfig c;
    c.N_ladder = {5, 7};
    c.sigma = SigmaDescription::smooth_bump(3, 0.01);
    c.q1 = small_bump(2.0);
    c.q2 = small_bump(2.0);
    const auto reports = stability_experiment(c);
    for (const auto& r : reports) {
        INFO(r.error);
        REQUIRE(r.ok());
        CHECK(r.delta_gamma == 0.0);
        CHECK(r.choice.branch == "exact");
        CHECK(r.err_Hminus_r == 0.0);
        CHECK(r.eps_a > 0.0);
        CHECK(r.bound_value == doctest::Approx(stability_bound(r.eps_d, r.eps_a, r.h, 0.0, 0.2)));
    }
}

TEST_CASE("stability experiment records failures per point and continues") {
    ExperimentConfig c = quick_config();
    c.N_ladder = {0, 5};
    c.perturbation = {0.0};
    const auto reports = stability_experiment(c);
    REQUIRE(reports.size() == 2);
    CHECK_FALSE(reports[0].ok());
    CHECK(reports[0].error.rfind("mesh:", 0) == 0);
    CHECK(reports[1].ok());
    std::ostringstream os;
    write_stability_csv(os, reports);
    CHECK(os.str().find(",nan,") != std::string::npos);
}
