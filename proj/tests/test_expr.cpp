#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "kf/expr.hpp"

using namespace kf;
using Catch::Approx;

static std::vector<double> ev(const FieldProgram& p, std::initializer_list<double> x) {
    std::vector<double> v(x);
    return p.eval(std::span<const double>(v.data(), v.size()));
}

TEST_CASE("stuart-landau cartesian form evaluates correctly") {
    auto p = parse_field("[x1*(1 - x1^2 - x2^2) - x2, x2*(1 - x1^2 - x2^2) + x1]", 2);
    auto f = ev(p, {1.0, 0.0});
    REQUIRE(f[0] == Approx(0.0).margin(1e-15));
    REQUIRE(f[1] == Approx(1.0));
}

TEST_CASE("zero field") {
    auto p = parse_field("[0, 0]", 2);
    auto f = ev(p, {3.7, -1.2});
    REQUIRE(f[0] == 0.0);
    REQUIRE(f[1] == 0.0);
}

TEST_CASE("syntax error carries position") {
    try {
        parse_field("[x1 +, x2]", 2);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        REQUIRE(e.line() == 1);
        REQUIRE(e.col() == 6);
    }
}

TEST_CASE("unknown identifier rejected") {
    REQUIRE_THROWS_AS(parse_field("[x1 + bogus]", 1), ParseError);
    REQUIRE_THROWS_AS(parse_field("[x3]", 2), ParseError);
}

TEST_CASE("component count must match dimension") {
    REQUIRE_THROWS_AS(parse_field("[x1, x2]", 3), Error);
}

TEST_CASE("linear and quadratic evaluation") {
    auto p1 = parse_field("[-x1]", 1);
    REQUIRE(ev(p1, {2.0})[0] == Approx(-2.0));
    auto p2 = parse_field("[-x1 + x1^2]", 1);
    REQUIRE(ev(p2, {0.5})[0] == Approx(-0.25));
}

TEST_CASE("parameters bind at parse time") {
    auto p = parse_field("[mu*(1 - x1^2)*x2 - x1, x2]", 2, {{"mu", 1.5}});
    auto f = ev(p, {0.5, 2.0});
    REQUIRE(f[0] == Approx(1.5 * 0.75 * 2.0 - 0.5));
}

TEST_CASE("precedence: power binds tighter than unary minus") {
    auto p = parse_field("[-x1^2]", 1);
    REQUIRE(ev(p, {3.0})[0] == Approx(-9.0));
    auto q = parse_field("[2*x1^3]", 1);
    REQUIRE(ev(q, {2.0})[0] == Approx(16.0));
}

TEST_CASE("power is right associative with integer exponents") {
    auto p = parse_field("[x1^2^3]", 1);  // x^(2^3) = x^8
    REQUIRE(ev(p, {2.0})[0] == Approx(256.0));
    REQUIRE_THROWS_AS(parse_field("[x1^0.5]", 1), ParseError);
    REQUIRE_THROWS_AS(parse_field("[x1^x1]", 1), ParseError);
}

TEST_CASE("domain errors carry the component index") {
    auto p = parse_field("[x1, log(x2)]", 2);
    try {
        ev(p, {1.0, -1.0});
        FAIL("expected a domain error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrKind::domain_error);
        REQUIRE(std::string(e.what()).find("component 2") != std::string::npos);
    }
}

TEST_CASE("parser round-trip: pretty-printed source evaluates bitwise equal") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const char* sources[] = {
        "[x1*(1 - x1^2 - x2^2) - x2, x2*(1 - x1^2 - x2^2) + x1]",
        "[sin(x1)*cos(x2) + exp(-x1), tanh(x1*x2) - 0.5*x2^3]",
        "[-x1 + 0.25*x2 - 1e-3*x1^2, x1/(2 + x2^2)]",
    };
    for (const char* src : sources) {
        auto p = parse_field(src, 2);
        auto printed = p.pretty_print();
        auto q = parse_field(printed, 2);
        for (int i = 0; i < 100; ++i) {
            std::vector<double> x{u(rng), u(rng)};
            auto a = p.eval(std::span<const double>(x.data(), x.size()));
            auto b = q.eval(std::span<const double>(x.data(), x.size()));
            REQUIRE(a[0] == b[0]);
            REQUIRE(a[1] == b[1]);
        }
    }
}

TEST_CASE("field_jet reads off polynomial coefficients") {
    auto p = parse_field("[-x1 + x1^2]", 1);
    std::vector<double> x0{0.0};
    auto mj = field_jet(p, std::span<const double>(x0.data(), 1), 2);
    REQUIRE(mj[0].coeff({0}) == Approx(0.0).margin(1e-15));
    REQUIRE(mj[0].coeff({1}) == Approx(-1.0));
    REQUIRE(mj[0].coeff({2}) == Approx(1.0));
}

TEST_CASE("field_jet jacobian of stuart-landau at (1,0)") {
    auto p = parse_field("[x1*(1 - x1^2 - x2^2) - x2, x2*(1 - x1^2 - x2^2) + x1]", 2);
    std::vector<double> x0{1.0, 0.0};
    auto mj = field_jet(p, std::span<const double>(x0.data(), 2), 1);
    REQUIRE(mj[0].coeff({1, 0}) == Approx(-2.0));
    REQUIRE(mj[0].coeff({0, 1}) == Approx(-1.0));
    REQUIRE(mj[1].coeff({1, 0}) == Approx(1.0));
    REQUIRE(mj[1].coeff({0, 1}) == Approx(0.0).margin(1e-15));
}

TEST_CASE("first-order jets match central differences on random polynomial fields") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto p = parse_field("[0.3*x1^2 - 0.7*x2 + x1*x2, -x1 + 0.5*x2^3]", 2);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x0{u(rng), u(rng)};
        auto mj = field_jet(p, std::span<const double>(x0.data(), 2), 1);
        for (int i = 0; i < 2; ++i) {
            for (int v = 0; v < 2; ++v) {
                std::vector<double> xp = x0, xm = x0;
                xp[v] += h;
                xm[v] -= h;
                double fd = (p.eval(std::span<const double>(xp.data(), 2))[i] -
                             p.eval(std::span<const double>(xm.data(), 2))[i]) /
                            (2 * h);
                std::vector<int> m{0, 0};
                m[v] = 1;
                double jc = mj[i].coeff(std::span<const int>(m.data(), 2));
                REQUIRE(jc == Approx(fd).epsilon(1e-6).margin(1e-8));
            }
        }
    }
}

TEST_CASE("field_jet truncation consistency is exact") {
    auto p = parse_field("[x1*(1 - x1^2 - x2^2) - x2, x2*(1 - x1^2 - x2^2) + x1]", 2);
    std::vector<double> x0{0.3, -0.4};
    auto hi = field_jet(p, std::span<const double>(x0.data(), 2), 5);
    auto lo = field_jet(p, std::span<const double>(x0.data(), 2), 3);
    for (int i = 0; i < 2; ++i) {
        auto t = hi[i].truncated(3);
        for (std::size_t r = 0; r < t.size(); ++r) REQUIRE(t[r] == lo[i][r]);
    }
}
