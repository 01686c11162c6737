#include <catch2/catch_amalgamated.hpp>
#include <random>
#include <sstream>

#include "kf/factor.hpp"
#include "kf/flow.hpp"

using namespace kf;
using Catch::Approx;

namespace {

CMapJet jet_of_map(const std::string& src, int n, int order) {
    auto prog = parse_field(src, n);
    std::vector<double> zero(n, 0.0);
    auto mj = field_jet(prog, std::span<const double>(zero.data(), zero.size()), order);
    return displacement_jet(mj, Vec::Zero(n));
}

Eigen::MatrixXcd one_by_one(cplx v) {
    Eigen::MatrixXcd m(1, 1);
    m(0, 0) = v;
    return m;
}

std::vector<cplx> sorted_by_parts(std::vector<cplx> v) {
    std::sort(v.begin(), v.end(), [](cplx a, cplx b) {
        if (std::abs(a.real() - b.real()) > 1e-11) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return v;
}

}  // namespace

TEST_CASE("homological spectrum, scalar case") {
    auto xs = make_spectrum({cplx(0.2, 0)});
    auto ys = make_spectrum({cplx(0.5, 0)});
    auto hs = homological_spectrum(2, xs, ys);
    REQUIRE(hs.size() == 1);
    REQUIRE(std::abs(hs[0] - cplx(0.05, 0)) < 1e-14);
}

TEST_CASE("homological spectrum contains zero exactly at resonance") {
    auto ys = make_spectrum({std::exp(-1.0), std::exp(-2.0)});
    auto xs = make_spectrum({std::exp(-2.0)});
    auto hs = homological_spectrum(2, xs, ys);
    double minmod = 1e300;
    for (auto v : hs) minmod = std::min(minmod, std::abs(v));
    REQUIRE(minmod < 1e-14);

    auto ys2 = make_spectrum({cplx(0.7, 0.1), cplx(0.3, -0.2)});
    cplx forced = ys2.values[0] * ys2.values[0] * ys2.values[0];
    auto hs2 = homological_spectrum(3, make_spectrum({forced}), ys2);
    minmod = 1e300;
    for (auto v : hs2) minmod = std::min(minmod, std::abs(v));
    REQUIRE(minmod < 1e-14);
}

TEST_CASE("dense homological matrix eigenvalues match the closed form") {
    std::mt19937 rng(2718);
    std::uniform_real_distribution<double> u(-0.45, 0.45);
    for (int trial = 0; trial < 24; ++trial) {
        int n = 1 + trial % 3, m = 1 + (trial / 3) % 3, deg = 2 + trial % 3;
        Eigen::MatrixXcd y(n, n), x(m, m);
        for (int i = 0; i < n * n; ++i) y(i / n, i % n) = cplx(u(rng), 0.3 * u(rng));
        for (int i = 0; i < m * m; ++i) x(i / m, i % m) = cplx(u(rng), 0.3 * u(rng));
        auto t = homological_matrix(deg, x, y);
        auto tspec = sorted_by_parts(compute_spectrum(t).values);
        auto pred = sorted_by_parts(homological_spectrum(deg, compute_spectrum(x), compute_spectrum(y)));
        REQUIRE(tspec.size() == pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i)
            REQUIRE(std::abs(tspec[i] - pred[i]) < 1e-9);
    }
}

TEST_CASE("scalar homological solve: P2 = 4") {
    // F = 0.5 x + x^2, eA = 0.5: 0.5 P2 - 0.25 P2 = 1 => P2 = 4
    HomogeneousPolyMap rhs = HomogeneousPolyMap::zero(2, 1, 1);
    rhs.coeffs(0, 0) = cplx(1.0, 0.0);
    Eigen::MatrixXcd f1 = one_by_one(0.5);
    auto sol = solve_order(2, rhs, one_by_one(0.5), f1);
    REQUIRE(sol.unique);
    REQUIRE(std::abs(sol.p.coeffs(0, 0) - cplx(4, 0)) < 1e-12);
}

TEST_CASE("zero rhs off resonance gives the zero solution") {
    HomogeneousPolyMap rhs = HomogeneousPolyMap::zero(3, 2, 1);
    Eigen::MatrixXcd f1(2, 2);
    f1 << 0.5, 0.0, 0.0, 0.4;
    auto sol = solve_order(3, rhs, one_by_one(0.3), f1);
    REQUIRE(sol.unique);
    REQUIRE(sol.p.coeffs.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("resonant with compatible rhs is DegenerateSolvable") {
    HomogeneousPolyMap rhs = HomogeneousPolyMap::zero(2, 2, 1);
    Eigen::MatrixXcd f1(2, 2);
    f1 << std::exp(-1.0), 0.0, 0.0, std::exp(-2.0);
    auto sol = solve_order(2, rhs, one_by_one(std::exp(-2.0)), f1);
    REQUIRE_FALSE(sol.unique);
    REQUIRE(sol.p.coeffs.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("resonant with incompatible rhs raises the obstruction") {
    HomogeneousPolyMap rhs = HomogeneousPolyMap::zero(2, 2, 1);
    // put weight exactly on the resonant monomial x1^2
    rhs.coeffs(0, 0) = cplx(1.0, 0.0);
    Eigen::MatrixXcd f1(2, 2);
    f1 << std::exp(-1.0), 0.0, 0.0, std::exp(-2.0);
    try {
        solve_order(2, rhs, one_by_one(std::exp(-2.0)), f1);
        FAIL("expected ResonantObstruction");
    } catch (const ResonantObstruction& e) {
        REQUIRE(e.degree() == 2);
        REQUIRE(e.witness() == std::vector<int>{2, 0});
    }
}

TEST_CASE("approximate factor of a linear map is the linear covector") {
    auto f = jet_of_map("[0.5*x1, 0.25*x2]", 2, 4);
    Eigen::MatrixXcd b(1, 2);
    b << 1, 0;
    auto p = approximate_factor(f, one_by_one(0.5), b, Vec::Zero(2));
    const auto& poly = p.polynomial();
    const auto& tab = poly[0].table();
    for (std::size_t r = tab.degree_offset(2); r < tab.size(); ++r)
        REQUIRE(std::abs(poly[0][r]) < 1e-13);
}

TEST_CASE("bernoulli time-one factor has unit quadratic coefficient") {
    auto h = FlowHandle(parse_field("[-x1 + x1^2]", 1), SystemKind::flow);
    auto mj = time_one_map_jet(h, Vec::Zero(1), 3);
    auto f = displacement_jet(mj, Vec::Zero(1));
    Eigen::MatrixXcd b(1, 1);
    b << 1;
    auto p = approximate_factor(f, one_by_one(std::exp(-1.0)), b, Vec::Zero(1));
    // exact linearizing map is x/(1-x) = x + x^2 + x^3 + ...
    REQUIRE(std::abs(p.polynomial()[0].coeff({2}) - cplx(1, 0)) < 1e-7);
    REQUIRE(std::abs(p.polynomial()[0].coeff({3}) - cplx(1, 0)) < 1e-6);
    REQUIRE(p.diagnostics().order_residuals.back() < 1e-10);
}

TEST_CASE("paper example 3.10: non-uniqueness flag at the resonant degree") {
    auto f = jet_of_map("[0.36787944117144233*x1, 0.1353352832366127*x2]", 2, 2);
    Eigen::MatrixXcd b(1, 2);
    b << 0, 1;
    auto p = approximate_factor(f, one_by_one(std::exp(-2.0)), b, Vec::Zero(2));
    REQUIRE(p.nonunique());
    REQUIRE(p.diagnostics().degenerate_degrees == std::vector<int>{2});
    // minimal-norm representative is P(x, y) = y
    REQUIRE(std::abs(p.polynomial()[0].coeff({0, 1}) - cplx(1, 0)) < 1e-12);
    REQUIRE(std::abs(p.polynomial()[0].coeff({2, 0})) < 1e-12);
}

TEST_CASE("sternberg recovers the inverse conjugation") {
    // F = H Lambda H^{-1} with H(x,y) = (x, y + x^2), Lambda = diag(0.5, 0.4)
    auto f = jet_of_map("[0.5*x1, 0.4*x2 - 0.15*x1^2]", 2, 3);
    auto p = sternberg_factor(f, Vec::Zero(2));
    // psi = H^{-1}: second component y - x^2
    REQUIRE(std::abs(p.polynomial()[0].coeff({1, 0}) - cplx(1, 0)) < 1e-12);
    REQUIRE(std::abs(p.polynomial()[1].coeff({0, 1}) - cplx(1, 0)) < 1e-12);
    REQUIRE(std::abs(p.polynomial()[1].coeff({2, 0}) - cplx(-1, 0)) < 1e-11);
    REQUIRE(std::abs(p.polynomial()[0].coeff({2, 0})) < 1e-12);
    REQUIRE(std::abs(p.polynomial()[0].coeff({1, 1})) < 1e-12);
}

TEST_CASE("sternberg of a linear map is the identity") {
    auto f = jet_of_map("[0.5*x1 + 0.1*x2, 0.4*x2]", 2, 3);
    auto p = sternberg_factor(f, Vec::Zero(2));
    for (int q = 0; q < 2; ++q) {
        const auto& tab = p.polynomial()[q].table();
        for (std::size_t r = tab.degree_offset(2); r < tab.size(); ++r)
            REQUIRE(std::abs(p.polynomial()[q][r]) < 1e-12);
    }
}

TEST_CASE("forced resonance obstructs the sternberg construction") {
    auto f = jet_of_map("[0.5*x1, 0.25*x2 + 0.3*x1^2]", 2, 2);
    try {
        sternberg_factor(f, Vec::Zero(2));
        FAIL("expected ResonantObstruction");
    } catch (const ResonantObstruction& e) {
        REQUIRE(e.degree() == 2);
        REQUIRE(e.witness() == std::vector<int>{2, 0});
    }
}

TEST_CASE("intertwining gate rejects mismatched B") {
    auto f = jet_of_map("[0.5*x1, 0.25*x2]", 2, 2);
    Eigen::MatrixXcd b(1, 2);
    b << 1, 0;  // left eigenvector for 0.5, but eA says 0.25
    REQUIRE_THROWS_AS(approximate_factor(f, one_by_one(0.25), b, Vec::Zero(2)), Error);
}

TEST_CASE("realness: real inputs give real coefficients") {
    auto f = jet_of_map("[0.5*x1 + 0.2*x2^2, 0.4*x2 + 0.1*x1^2]", 2, 4);
    auto p = sternberg_factor(f, Vec::Zero(2));
    for (int q = 0; q < 2; ++q)
        for (std::size_t r = 0; r < p.polynomial()[q].size(); ++r)
            REQUIRE(std::abs(p.polynomial()[q][r].imag()) < 1e-12);
}

TEST_CASE("conjugation symmetry of the construction") {
    auto f = jet_of_map("[0.5*x1 + 0.2*x2^2, 0.4*x2 + 0.1*x1^2]", 2, 3);
    Eigen::MatrixXcd b(1, 2);
    b << cplx(0.3, 0.4), cplx(1.0, -0.2);
    // make (eA, B) consistent: use eA equal to an eigenvalue and B the seed
    Eigen::MatrixXcd f1(2, 2);
    f1 << 0.5, 0, 0, 0.4;
    auto seed = seed_covector(f1, 0.4);
    Eigen::MatrixXcd bw = seed.w * cplx(0.7, 0.3);  // arbitrary complex scale
    auto p = approximate_factor(f, one_by_one(0.4), bw, Vec::Zero(2));
    Eigen::MatrixXcd bconj = bw.conjugate();
    auto pc = approximate_factor(f, one_by_one(0.4), bconj, Vec::Zero(2));
    for (std::size_t r = 0; r < p.polynomial()[0].size(); ++r)
        REQUIRE(std::abs(std::conj(p.polynomial()[0][r]) - pc.polynomial()[0][r]) < 1e-12);
}

TEST_CASE("uniqueness under variable permutation") {
    // permuting the variables and permuting back yields identical coefficients
    auto f = jet_of_map("[0.5*x1 + 0.2*x2^2, 0.4*x2 + 0.1*x1^2]", 2, 4);
    auto fp = jet_of_map("[0.4*x1 + 0.1*x2^2, 0.5*x2 + 0.2*x1^2]", 2, 4);  // swapped roles
    auto p = sternberg_factor(f, Vec::Zero(2));
    auto pp = sternberg_factor(fp, Vec::Zero(2));
    // coefficient of x^(a,b) in component q of p equals coefficient of
    // x^(b,a) in component 1-q of pp
    const auto& tab = p.polynomial()[0].table();
    for (int q = 0; q < 2; ++q) {
        for (std::size_t r = 1; r < tab.size(); ++r) {
            auto e = tab.exponents(r);
            std::vector<int> swapped{e[1], e[0]};
            cplx a = p.polynomial()[q][r];
            cplx bsw = pp.polynomial()[1 - q].coeff(
                std::span<const int>(swapped.data(), swapped.size()));
            REQUIRE(std::abs(a - bsw) < 1e-12);
        }
    }
}

TEST_CASE("degree gate: certified nonresonance implies nonsingular solves") {
    std::mt19937 rng(555);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXcd f1(2, 2);
        f1 << 0.5 + 0.1 * u(rng), u(rng) * 0.1, 0.0, 0.3 + 0.1 * u(rng);
        auto ys = compute_spectrum(f1);
        cplx mu = ys.values[0];
        auto rep = check_k_nonresonant(make_spectrum({mu}), ys, 4);
        if (!rep.nonresonant) continue;
        for (int deg = 2; deg <= 4; ++deg) {
            HomogeneousPolyMap rhs = HomogeneousPolyMap::zero(deg, 2, 1);
            rhs.coeffs.setConstant(cplx(0.1, 0.0));
            auto sol = solve_order(deg, rhs, one_by_one(mu), f1);
            REQUIRE(sol.unique);
        }
    }
}

TEST_CASE("factor serialization round trip is bit exact") {
    auto h = FlowHandle(parse_field("[-x1 + x1^2]", 1), SystemKind::flow);
    auto mj = time_one_map_jet(h, Vec::Zero(1), 5);
    auto f = displacement_jet(mj, Vec::Zero(1));
    Eigen::MatrixXcd b(1, 1);
    b << 1;
    FactorOptions opts;
    opts.mode = FactorMode::flow;
    Eigen::MatrixXcd a(1, 1);
    a << -1.0;
    opts.flow_a = a;
    auto p = approximate_factor(f, one_by_one(std::exp(-1.0)), b, Vec::Zero(1), opts);

    std::ostringstream os;
    write_factor(os, p);
    std::istringstream is(os.str());
    auto q = read_factor(is);
    REQUIRE(q.mode() == FactorMode::flow);
    REQUIRE(q.n() == p.n());
    REQUIRE(q.m() == p.m());
    REQUIRE(q.order() == p.order());
    for (std::size_t r = 0; r < p.polynomial()[0].size(); ++r) {
        REQUIRE(q.polynomial()[0][r].real() == p.polynomial()[0][r].real());
        REQUIRE(q.polynomial()[0][r].imag() == p.polynomial()[0][r].imag());
    }
    REQUIRE(q.a_matrix()(0, 0).real() == p.a_matrix()(0, 0).real());

    std::ostringstream os2;
    write_factor(os2, q);
    REQUIRE(os2.str() == os.str());
}

TEST_CASE("residual order check: slope near k+1 for the bernoulli factor") {
    auto h = FlowHandle(parse_field("[-x1 + x1^2]", 1), SystemKind::flow);
    auto mj = time_one_map_jet(h, Vec::Zero(1), 3);
    auto f = displacement_jet(mj, Vec::Zero(1));
    Eigen::MatrixXcd b(1, 1);
    b << 1;
    auto p = approximate_factor(f, one_by_one(std::exp(-1.0)), b, Vec::Zero(1));
    auto data = residual_order_check(p, [&](const Vec& x) { return Vec(flow_to(h, x, 1.0)); },
                                     {0.2, 0.1, 0.05, 0.025});
    REQUIRE_FALSE(data.exact);
    REQUIRE(data.slope == Approx(4.0).margin(0.2));
}

TEST_CASE("residual order check flags exact linear systems") {
    auto f = jet_of_map("[0.5*x1, 0.25*x2]", 2, 3);
    auto p = sternberg_factor(f, Vec::Zero(2));
    auto prog = parse_field("[0.5*x1, 0.25*x2]", 2);
    auto data = residual_order_check(
        p,
        [&](const Vec& x) {
            std::vector<double> xv(x.data(), x.data() + 2);
            auto fx = prog.eval(std::span<const double>(xv.data(), 2));
            return Vec(Eigen::Map<const Vec>(fx.data(), 2));
        },
        {0.2, 0.1, 0.05});
    REQUIRE(data.exact);
}
