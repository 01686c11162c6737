#pragma once

#include <cmath>
#include <complex>
#include <cstdlib>
#include <span>
#include <utility>
#include <vector>

#include "kf/error.hpp"
#include "kf/multi_index.hpp"

namespace kf {

namespace detail {

inline double abs_measure(double v) { return std::abs(v); }
inline double abs_measure(const std::complex<double>& v) { return std::abs(v); }

inline bool is_zero_scalar(double v) { return v == 0.0; }
inline bool is_zero_scalar(const std::complex<double>& v) { return v == std::complex<double>(0.0, 0.0); }

}  // namespace detail

/// Truncated multivariate Taylor expansion: coefficients of (x - x0)^m for
/// all |m| <= order, stored densely in graded-lexicographic rank order.
/// The scalar type S is double, std::complex<double>, or another Jet
/// (towers are used for flow-time expansions).
template <typename S>
class Jet {
public:
    Jet() = default;

    Jet(std::shared_ptr<const MultiIndexTable> tab, S constant = S{})
        : tab_(std::move(tab)), c_(tab_->size(), S{}) {
        c_[0] = constant;
    }

    static Jet constant(int n, int order, S value) {
        return Jet(MultiIndexTable::get(n, order), value);
    }

    /// Seed jet base + (x - x0)_i.
    static Jet variable(int n, int order, int i, S base = S{}) {
        Jet j(MultiIndexTable::get(n, order), base);
        if (order >= 1) j.c_[1 + i] = S{1};
        return j;
    }

    bool empty() const { return !tab_; }
    int dim() const { return tab_->dim(); }
    int order() const { return tab_->order(); }
    std::size_t size() const { return c_.size(); }
    const MultiIndexTable& table() const { return *tab_; }
    std::shared_ptr<const MultiIndexTable> table_ptr() const { return tab_; }

    const S& operator[](std::size_t r) const { return c_[r]; }
    S& operator[](std::size_t r) { return c_[r]; }

    const S& coeff(std::span<const int> m) const { return c_[tab_->rank(m)]; }
    S& coeff(std::span<const int> m) { return c_[tab_->rank(m)]; }
    const S& coeff(std::initializer_list<int> m) const {
        return coeff(std::span<const int>(m.begin(), m.size()));
    }

    /// Constant term.
    const S& value() const { return c_[0]; }

    Jet truncated(int new_order) const {
        if (new_order >= order()) return *this;
        Jet out(MultiIndexTable::get(dim(), new_order));
        for (std::size_t r = 0; r < out.size(); ++r) out.c_[r] = c_[r];
        return out;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& v : c_) m = std::max(m, jet_abs(v));
        return m;
    }

    Jet& operator+=(const Jet& o) {
        check_compatible(o);
        for (std::size_t r = 0; r < c_.size(); ++r) c_[r] += o.c_[r];
        return *this;
    }
    Jet& operator-=(const Jet& o) {
        check_compatible(o);
        for (std::size_t r = 0; r < c_.size(); ++r) c_[r] -= o.c_[r];
        return *this;
    }
    Jet& operator+=(const S& s) { c_[0] += s; return *this; }
    Jet& operator-=(const S& s) { c_[0] -= s; return *this; }
    Jet& operator*=(const S& s) {
        for (auto& v : c_) v *= s;
        return *this;
    }

    /// In-place this += a * o with a plain double weight (integrator hot path).
    void add_scaled(const Jet& o, double a) {
        check_compatible(o);
        for (std::size_t r = 0; r < c_.size(); ++r) c_[r] += o.c_[r] * a;
    }

    friend Jet operator+(Jet a, const Jet& b) { a += b; return a; }
    friend Jet operator-(Jet a, const Jet& b) { a -= b; return a; }
    friend Jet operator+(Jet a, const S& s) { a += s; return a; }
    friend Jet operator+(const S& s, Jet a) { a += s; return a; }
    friend Jet operator-(Jet a, const S& s) { a -= s; return a; }
    friend Jet operator-(const S& s, Jet a) {
        for (auto& v : a.c_) v = -v;
        a.c_[0] += s;
        return a;
    }
    friend Jet operator*(Jet a, const S& s) { a *= s; return a; }
    friend Jet operator*(const S& s, Jet a) { a *= s; return a; }
    friend Jet operator-(Jet a) {
        for (auto& v : a.c_) v = -v;
        return a;
    }

    friend Jet operator*(const Jet& a, const Jet& b) {
        if (a.order() != b.order()) {
            int k = std::min(a.order(), b.order());
            return a.truncated(k) * b.truncated(k);
        }
        a.check_compatible(b);
        const auto& tab = *a.tab_;
        const int order = tab.order();
        Jet out(a.tab_);
        for (std::size_t ra = 0; ra < a.c_.size(); ++ra) {
            int da = tab.degree_of(ra);
            if (detail_zero(a.c_[ra])) continue;
            std::size_t bmax = tab.degree_offset(order - da + 1);
            for (std::size_t rb = 0; rb < bmax; ++rb) {
                if (detail_zero(b.c_[rb])) continue;
                out.c_[tab.rank_of_sum(ra, rb)] += a.c_[ra] * b.c_[rb];
            }
        }
        return out;
    }

    friend Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
    friend Jet operator/(Jet a, const S& s) {
        for (auto& v : a.c_) v /= s;
        return a;
    }
    friend Jet operator/(const S& s, const Jet& b) { return s * reciprocal(b); }

    /// Nonconstant part (constant coefficient zeroed).
    Jet nonconstant() const {
        Jet out(*this);
        out.c_[0] = S{};
        return out;
    }

    /// Evaluate the truncated polynomial at displacement dx (length n).
    template <typename T>
    auto eval(std::span<const T> dx) const {
        using R = decltype(std::declval<S>() * std::declval<T>());
        std::vector<R> mono(c_.size());
        mono[0] = R{1};
        R acc = R(c_[0]);
        for (std::size_t r = 1; r < c_.size(); ++r) {
            mono[r] = mono[tab_->parent(r)] * dx[tab_->parent_var(r)];
            acc += c_[r] * mono[r];
        }
        return acc;
    }

private:
    static bool detail_zero(const S& v) {
        if constexpr (std::is_same_v<S, double> ||
                      std::is_same_v<S, std::complex<double>>) {
            return detail::is_zero_scalar(v);
        } else {
            (void)v;
            return false;
        }
    }

    static double jet_abs(const S& v) {
        if constexpr (std::is_same_v<S, double> ||
                      std::is_same_v<S, std::complex<double>>) {
            return detail::abs_measure(v);
        } else {
            return v.max_abs();
        }
    }

    void check_compatible(const Jet& o) const {
        if (tab_.get() != o.tab_.get() &&
            (dim() != o.dim() || order() != o.order()))
            throw Error(ErrKind::invalid_input, "jet operands have mismatched shape");
    }

    std::shared_ptr<const MultiIndexTable> tab_;
    std::vector<S> c_;
};

using RJet = Jet<double>;
using CJet = Jet<std::complex<double>>;

/// Horner evaluation of sum_j a[j] * w^j where w has zero constant term, so
/// the result is exact through the truncation order.
template <typename S>
Jet<S> compose_series(const Jet<S>& w, std::span<const S> a) {
    Jet<S> acc = Jet<S>(w.table_ptr(), a.empty() ? S{} : a[a.size() - 1]);
    for (std::size_t j = a.size() - 1; j-- > 0;) {
        acc = acc * w;
        acc += a[j];
    }
    return acc;
}

namespace detail {

template <typename S>
Jet<S> lift_elementary(const Jet<S>& u, std::vector<S> derivs_over_fact) {
    return compose_series(u.nonconstant(),
                          std::span<const S>(derivs_over_fact.data(), derivs_over_fact.size()));
}

inline void require_positive_constant(double c, const char* fn) {
    if (!(c > 0.0))
        throw Error(ErrKind::domain_error,
                    std::string(fn) + " of jet with nonpositive constant term");
}
inline void require_positive_constant(const std::complex<double>& c, const char* fn) {
    if (c == std::complex<double>(0.0, 0.0))
        throw Error(ErrKind::domain_error, std::string(fn) + " of jet with zero constant term");
}
template <typename T>
void require_positive_constant(const T& c, const char* fn) {
    require_positive_constant(c.value(), fn);
}

template <typename S>
void require_nonzero_constant(const S& c, const char* fn) {
    if constexpr (std::is_same_v<S, double> || std::is_same_v<S, std::complex<double>>) {
        if (is_zero_scalar(c))
            throw Error(ErrKind::domain_error,
                        std::string(fn) + " by jet with zero constant term");
    } else {
        require_nonzero_constant(c.value(), fn);
    }
}

}  // namespace detail

template <typename S>
Jet<S> reciprocal(const Jet<S>& u) {
    detail::require_nonzero_constant(u.value(), "division");
    const int k = u.order();
    const S c = u.value();
    std::vector<S> a(k + 1);
    // 1/(c+w) = (1/c) sum_j (-w/c)^j
    S p = S{1} / c;
    for (int j = 0; j <= k; ++j) {
        a[j] = p;
        p *= S{-1} / c;
    }
    return detail::lift_elementary(u, std::move(a));
}

template <typename S>
Jet<S> exp(const Jet<S>& u) {
    using std::exp;
    const int k = u.order();
    std::vector<S> a(k + 1);
    a[0] = exp(u.value());
    for (int j = 1; j <= k; ++j) a[j] = a[j - 1] / S(static_cast<double>(j));
    return detail::lift_elementary(u, std::move(a));
}

template <typename S>
Jet<S> log(const Jet<S>& u) {
    using std::log;
    detail::require_positive_constant(u.value(), "log");
    const int k = u.order();
    const S c = u.value();
    std::vector<S> a(k + 1);
    a[0] = log(c);
    // d^j/dc^j log = (-1)^{j-1} (j-1)! / c^j  =>  a_j = (-1)^{j-1} / (j c^j)
    S cp = S{1};
    double sgn = 1.0;
    for (int j = 1; j <= k; ++j) {
        cp *= c;
        a[j] = S{sgn} / (S(static_cast<double>(j)) * cp);
        sgn = -sgn;
    }
    return detail::lift_elementary(u, std::move(a));
}

template <typename S>
Jet<S> sqrt(const Jet<S>& u) {
    using std::sqrt;
    detail::require_positive_constant(u.value(), "sqrt");
    const int k = u.order();
    const S c = u.value();
    std::vector<S> a(k + 1);
    a[0] = sqrt(c);
    // a_j = binom(1/2, j) c^{1/2 - j}
    S coef = a[0];
    for (int j = 1; j <= k; ++j) {
        coef *= S{(0.5 - (j - 1)) / static_cast<double>(j)} / c;
        a[j] = coef;
    }
    return detail::lift_elementary(u, std::move(a));
}

template <typename S>
Jet<S> sin(const Jet<S>& u) {
    using std::cos;
    using std::sin;
    const int k = u.order();
    const S s = sin(u.value()), c = cos(u.value());
    std::vector<S> a(k + 1);
    double fact = 1.0;
    for (int j = 0; j <= k; ++j) {
        if (j > 0) fact *= j;
        switch (j % 4) {
            case 0: a[j] = s; break;
            case 1: a[j] = c; break;
            case 2: a[j] = -s; break;
            case 3: a[j] = -c; break;
        }
        a[j] = a[j] / S{fact};
    }
    return detail::lift_elementary(u, std::move(a));
}

template <typename S>
Jet<S> cos(const Jet<S>& u) {
    using std::cos;
    using std::sin;
    const int k = u.order();
    const S s = sin(u.value()), c = cos(u.value());
    std::vector<S> a(k + 1);
    double fact = 1.0;
    for (int j = 0; j <= k; ++j) {
        if (j > 0) fact *= j;
        switch (j % 4) {
            case 0: a[j] = c; break;
            case 1: a[j] = -s; break;
            case 2: a[j] = -c; break;
            case 3: a[j] = s; break;
        }
        a[j] = a[j] / S{fact};
    }
    return detail::lift_elementary(u, std::move(a));
}

template <typename S>
Jet<S> tanh(const Jet<S>& u) {
    using std::tanh;
    const int k = u.order();
    std::vector<S> b(k + 1);
    b[0] = tanh(u.value());
    // T' = 1 - T^2 gives (j+1) b_{j+1} = [1 - T^2]_j
    for (int j = 0; j < k; ++j) {
        S conv{};
        for (int i = 0; i <= j; ++i) conv += b[i] * b[j - i];
        S rhs = (j == 0 ? S{1} : S{}) - conv;
        b[j + 1] = rhs / S(static_cast<double>(j + 1));
    }
    return detail::lift_elementary(u, std::move(b));
}

template <typename S>
Jet<S> pow_int(const Jet<S>& u, long e) {
    if (e == 0) return Jet<S>(u.table_ptr(), S{1});
    if (e < 0) return reciprocal(pow_int(u, -e));
    Jet<S> base = u;
    Jet<S> acc;
    bool has = false;
    long n = e;
    while (n > 0) {
        if (n & 1) {
            acc = has ? acc * base : base;
            has = true;
        }
        n >>= 1;
        if (n) base = base * base;
    }
    return acc;
}

/// Tuple of jets sharing dimension and order — a truncated Taylor expansion
/// of a vector-valued map.
template <typename S>
class MapJet {
public:
    MapJet() = default;
    explicit MapJet(std::vector<Jet<S>> comps) : comps_(std::move(comps)) {
        for (std::size_t i = 1; i < comps_.size(); ++i)
            if (comps_[i].dim() != comps_[0].dim() || comps_[i].order() != comps_[0].order())
                throw Error(ErrKind::invalid_input, "map jet components have mismatched shape");
    }

    static MapJet identity(int n, int order, std::span<const S> base = {}) {
        std::vector<Jet<S>> c;
        c.reserve(n);
        for (int i = 0; i < n; ++i)
            c.push_back(Jet<S>::variable(n, order, i, base.empty() ? S{} : base[i]));
        return MapJet(std::move(c));
    }

    int outputs() const { return static_cast<int>(comps_.size()); }
    int dim() const { return comps_.at(0).dim(); }
    int order() const { return comps_.at(0).order(); }

    const Jet<S>& operator[](int i) const { return comps_[i]; }
    Jet<S>& operator[](int i) { return comps_[i]; }
    const std::vector<Jet<S>>& components() const { return comps_; }

    MapJet truncated(int k) const {
        std::vector<Jet<S>> c;
        c.reserve(comps_.size());
        for (const auto& j : comps_) c.push_back(j.truncated(k));
        return MapJet(std::move(c));
    }

private:
    std::vector<Jet<S>> comps_;
};

using RMapJet = MapJet<double>;
using CMapJet = MapJet<std::complex<double>>;

inline CJet to_complex(const RJet& j) {
    CJet out(MultiIndexTable::get(j.dim(), j.order()));
    for (std::size_t r = 0; r < j.size(); ++r) out[r] = std::complex<double>(j[r], 0.0);
    return out;
}

inline CMapJet to_complex(const RMapJet& m) {
    std::vector<CJet> c;
    c.reserve(m.outputs());
    for (int i = 0; i < m.outputs(); ++i) c.push_back(to_complex(m[i]));
    return CMapJet(std::move(c));
}

/// Substitute jets for the variables of `poly`: result = poly(args...), all
/// truncations consistent.  Every arg must have zero constant term so that
/// the truncated composition is exact order by order.
template <typename S>
Jet<S> compose(const Jet<S>& poly, const std::vector<Jet<S>>& args) {
    if (static_cast<int>(args.size()) != poly.dim())
        throw Error(ErrKind::invalid_input, "compose: arity mismatch");
    for (const auto& a : args)
        if (!detail::is_zero_scalar(a.value()))
            throw Error(ErrKind::invalid_input, "compose: argument jets must vanish at the base point");
    const auto& tab = poly.table();
    const int k = args.empty() ? poly.order() : args[0].order();
    auto out_tab = args.empty() ? poly.table_ptr() : args[0].table_ptr();
    // powers[v][p-1] = args[v]^p, computed lazily up to the needed degree
    std::vector<std::vector<Jet<S>>> powers(args.size());
    Jet<S> acc(out_tab, poly[0]);
    for (std::size_t r = 1; r < poly.size(); ++r) {
        if (tab.degree_of(r) > k) break;  // higher degrees cannot contribute
        const S& c = poly[r];
        if (detail::is_zero_scalar(c)) continue;
        auto e = tab.exponents(r);
        Jet<S> term;
        bool has = false;
        for (int v = 0; v < poly.dim(); ++v) {
            if (e[v] == 0) continue;
            auto& pw = powers[v];
            if (pw.empty()) pw.push_back(args[v]);
            while (static_cast<int>(pw.size()) < e[v]) pw.push_back(pw.back() * args[v]);
            const Jet<S>& f = pw[e[v] - 1];
            term = has ? term * f : f;
            has = true;
        }
        if (!has) continue;
        term *= c;
        acc += term;
    }
    return acc;
}

template <typename S>
MapJet<S> compose(const MapJet<S>& poly, const std::vector<Jet<S>>& args) {
    std::vector<Jet<S>> out;
    out.reserve(poly.outputs());
    for (int i = 0; i < poly.outputs(); ++i) out.push_back(compose(poly[i], args));
    return MapJet<S>(std::move(out));
}

}  // namespace kf
