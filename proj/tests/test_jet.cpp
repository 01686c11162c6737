#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "kf/jet.hpp"

using namespace kf;
using Catch::Approx;
using cplx = std::complex<double>;

TEST_CASE("product of two variables") {
    auto x = RJet::variable(2, 2, 0);
    auto y = RJet::variable(2, 2, 1);
    auto p = x * y;
    REQUIRE(p.coeff({1, 1}) == Approx(1.0));
    std::vector<int> m{1, 1};
    std::size_t rxy = p.table().rank(std::span<const int>(m.data(), m.size()));
    for (std::size_t r = 0; r < p.size(); ++r)
        if (r != rxy) REQUIRE(p[r] == 0.0);
}

TEST_CASE("exponential series coefficients") {
    auto x = RJet::variable(1, 3, 0);
    auto e = exp(x);
    REQUIRE(e.coeff({0}) == Approx(1.0));
    REQUIRE(e.coeff({1}) == Approx(1.0));
    REQUIRE(e.coeff({2}) == Approx(0.5));
    REQUIRE(e.coeff({3}) == Approx(1.0 / 6.0));
}

TEST_CASE("geometric series via division") {
    auto x = RJet::variable(1, 3, 0);
    auto one = RJet::constant(1, 3, 1.0);
    auto g = one / (one - x);
    for (int j = 0; j <= 3; ++j) {
        std::array<int, 1> m{j};
        REQUIRE(g.coeff(std::span<const int>(m.data(), 1)) == Approx(1.0));
    }
}

TEST_CASE("division by zero constant term is a domain error") {
    auto x = RJet::variable(1, 3, 0);  // constant term 0
    auto one = RJet::constant(1, 3, 1.0);
    REQUIRE_THROWS_AS(one / x, Error);
}

TEST_CASE("elementary functions match univariate Taylor expansions") {
    // compare against finite differences of the scalar function at base 0.3
    const double h = 1e-5;
    auto x = RJet::variable(1, 2, 0, 0.3);
    SECTION("sin") {
        auto s = sin(x);
        REQUIRE(s.coeff({0}) == Approx(std::sin(0.3)));
        REQUIRE(s.coeff({1}) == Approx(std::cos(0.3)));
        REQUIRE(s.coeff({2}) == Approx(-std::sin(0.3) / 2.0));
        (void)h;
    }
    SECTION("log") {
        auto l = log(x);
        REQUIRE(l.coeff({0}) == Approx(std::log(0.3)));
        REQUIRE(l.coeff({1}) == Approx(1.0 / 0.3));
        REQUIRE(l.coeff({2}) == Approx(-1.0 / (2 * 0.3 * 0.3)));
    }
    SECTION("sqrt") {
        auto s = sqrt(x);
        REQUIRE(s.coeff({0}) == Approx(std::sqrt(0.3)));
        REQUIRE(s.coeff({1}) == Approx(0.5 / std::sqrt(0.3)));
    }
    SECTION("tanh") {
        auto t = tanh(x);
        double u = std::tanh(0.3);
        REQUIRE(t.coeff({0}) == Approx(u));
        REQUIRE(t.coeff({1}) == Approx(1 - u * u));
        // second derivative of tanh is -2 t (1 - t^2)
        REQUIRE(t.coeff({2}) == Approx(-2 * u * (1 - u * u) / 2.0));
    }
}

TEST_CASE("multiplication commutes and associates within rounding") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto rand_jet = [&](int n, int k) {
        RJet j = RJet::constant(n, k, u(rng));
        for (std::size_t r = 1; r < j.size(); ++r) j[r] = u(rng);
        return j;
    };
    for (int trial = 0; trial < 20; ++trial) {
        auto a = rand_jet(2, 4), b = rand_jet(2, 4), c = rand_jet(2, 4);
        auto ab = a * b, ba = b * a;
        auto abc1 = (a * b) * c, abc2 = a * (b * c);
        double scale = std::max(1.0, abc1.max_abs());
        for (std::size_t r = 0; r < ab.size(); ++r) {
            REQUIRE(std::abs(ab[r] - ba[r]) <= 1e-13 * std::max(1.0, ab.max_abs()));
            REQUIRE(std::abs(abc1[r] - abc2[r]) <= 1e-13 * scale);
        }
    }
}

TEST_CASE("pow_int matches repeated product") {
    auto x = RJet::variable(2, 4, 0, 0.7);
    auto y = RJet::variable(2, 4, 1, -0.2);
    auto j = x + y * 2.0;
    auto p3 = pow_int(j, 3);
    auto m3 = j * j * j;
    for (std::size_t r = 0; r < p3.size(); ++r)
        REQUIRE(p3[r] == Approx(m3[r]).margin(1e-13));
}

TEST_CASE("compose substitutes jets for variables") {
    // poly(u, v) = u^2 + 3 v, args u = x + x^2, v = x (zero constant terms)
    auto u = CJet::variable(2, 3, 0);
    auto v = CJet::variable(2, 3, 1);
    auto poly = u * u + cplx(3.0, 0.0) * v;
    auto x = CJet::variable(1, 3, 0);
    std::vector<CJet> args = {x + x * x, x};
    auto r = compose(poly, args);
    // (x + x^2)^2 + 3x = 3x + x^2 + 2x^3 + O(x^4)
    REQUIRE(std::abs(r.coeff({1}) - cplx(3, 0)) < 1e-14);
    REQUIRE(std::abs(r.coeff({2}) - cplx(1, 0)) < 1e-14);
    REQUIRE(std::abs(r.coeff({3}) - cplx(2, 0)) < 1e-14);
}

TEST_CASE("truncation consistency for products") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        RJet a = RJet::constant(2, 5, u(rng));
        RJet b = RJet::constant(2, 5, u(rng));
        for (std::size_t r = 1; r < a.size(); ++r) a[r] = u(rng);
        for (std::size_t r = 1; r < b.size(); ++r) b[r] = u(rng);
        auto full = (a * b).truncated(3);
        auto low = a.truncated(3) * b.truncated(3);
        for (std::size_t r = 0; r < low.size(); ++r) REQUIRE(full[r] == low[r]);
    }
}
