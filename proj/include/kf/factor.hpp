#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kf/jet.hpp"
#include "kf/linalg.hpp"
#include "kf/log.hpp"
#include "kf/spectral.hpp"
#include "kf/types.hpp"

namespace kf {

/// Complexified displacement jet of a time-one map about its fixed point:
/// constant terms are checked against the base point and zeroed.
inline CMapJet displacement_jet(const MapJet<double>& abs_jet, const Vec& x0,
                                double tol = 1e-7) {
    CMapJet out = to_complex(abs_jet);
    for (int i = 0; i < out.outputs(); ++i) {
        if (std::abs(out[i].value().real() - x0[i]) > tol)
            throw Error(ErrKind::invalid_input,
                        "displacement_jet: constant term does not match the fixed point");
        out[i][0] = cplx(0.0, 0.0);
    }
    return out;
}

/// Degree-i homogeneous polynomial map R^n -> C^m in the monomial basis:
/// coefficient matrix is m x C(n+i-1, i), columns indexed by the degree-i
/// slice of the graded-lexicographic order.
struct HomogeneousPolyMap {
    int degree = 0;
    int n = 0;   // inputs
    int m = 0;   // outputs
    Eigen::MatrixXcd coeffs;

    static HomogeneousPolyMap zero(int degree, int n, int m) {
        HomogeneousPolyMap h;
        h.degree = degree;
        h.n = n;
        h.m = m;
        auto tab = MultiIndexTable::get(n, degree);
        h.coeffs = Eigen::MatrixXcd::Zero(m, static_cast<long>(tab->degree_count(degree)));
        return h;
    }
};

/// Degree-i slice of a map jet as a HomogeneousPolyMap.
inline HomogeneousPolyMap slice_of(const CMapJet& p, int degree) {
    HomogeneousPolyMap h;
    h.degree = degree;
    h.n = p.dim();
    h.m = p.outputs();
    const auto& tab = p[0].table();
    std::size_t off = tab.degree_offset(degree);
    std::size_t cnt = tab.degree_count(degree);
    h.coeffs.resize(h.m, static_cast<long>(cnt));
    for (int q = 0; q < h.m; ++q)
        for (std::size_t j = 0; j < cnt; ++j) h.coeffs(q, static_cast<long>(j)) = p[q][off + j];
    return h;
}

inline void set_slice(CMapJet& p, const HomogeneousPolyMap& h) {
    const auto& tab = p[0].table();
    std::size_t off = tab.degree_offset(h.degree);
    std::size_t cnt = tab.degree_count(h.degree);
    for (int q = 0; q < h.m; ++q)
        for (std::size_t j = 0; j < cnt; ++j) p[q][off + j] = h.coeffs(q, static_cast<long>(j));
}

/// Spectrum of the degree-i homological operator T_i(P) = P Y^{\otimes i} - X P
/// on symmetric tensor maps: all values lambda^m - mu_p over multi-indices
/// |m| = i and targets mu_p.
inline std::vector<cplx> homological_spectrum(int degree, const Spectrum& x_spec,
                                              const Spectrum& y_spec) {
    if (degree < 1) throw Error(ErrKind::invalid_input, "homological degree must be >= 1");
    std::vector<cplx> out;
    for_each_multi_index(y_spec.source_dim, degree, degree, [&](std::span<const int> m) {
        cplx lam(1.0, 0.0);
        for (int i = 0; i < y_spec.source_dim; ++i)
            for (int p = 0; p < m[i]; ++p) lam *= y_spec.values[i];
        for (const cplx& mu : x_spec.values) out.push_back(lam - mu);
    });
    return out;
}

namespace detail {

/// Matrix of p -> p(Y x) on scalar homogeneous degree-i polynomials in the
/// monomial basis: column m' holds the coefficients of (Y x)^{m'}.
inline Eigen::MatrixXcd composition_matrix(int degree, const Eigen::MatrixXcd& y) {
    const int n = static_cast<int>(y.rows());
    auto tab = MultiIndexTable::get(n, degree);
    const std::size_t off = tab->degree_offset(degree);
    const std::size_t cnt = tab->degree_count(degree);
    Eigen::MatrixXcd c(static_cast<long>(cnt), static_cast<long>(cnt));
    // linear forms ell_v = sum_l y(v,l) x_l as jets
    std::vector<CJet> forms;
    forms.reserve(n);
    for (int v = 0; v < n; ++v) {
        CJet f(tab);
        for (int l = 0; l < n; ++l) f[1 + l] = y(v, l);
        forms.push_back(std::move(f));
    }
    std::vector<int> m(n);
    for (std::size_t j = 0; j < cnt; ++j) {
        auto e = tab->exponents(off + j);
        CJet prod(tab, cplx(1.0, 0.0));
        bool any = false;
        for (int v = 0; v < n; ++v)
            for (int p = 0; p < e[v]; ++p) {
                prod = any ? prod * forms[v] : forms[v];
                any = true;
            }
        for (std::size_t r = 0; r < cnt; ++r) c(static_cast<long>(r), static_cast<long>(j)) = prod[off + r];
    }
    return c;
}

}  // namespace detail

/// Dense matrix of the paper-sign homological operator T_i(P) = P(Y x) - X P
/// in the flattened monomial basis (row/col index = p * N_i + slice rank).
inline Eigen::MatrixXcd homological_matrix(int degree, const Eigen::MatrixXcd& x,
                                           const Eigen::MatrixXcd& y) {
    const int n = static_cast<int>(y.rows());
    const int m = static_cast<int>(x.rows());
    auto tab = MultiIndexTable::get(n, degree);
    const long cnt = static_cast<long>(tab->degree_count(degree));
    Eigen::MatrixXcd comp = detail::composition_matrix(degree, y);
    Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(m * cnt, m * cnt);
    for (int p = 0; p < m; ++p) {
        t.block(p * cnt, p * cnt, cnt, cnt) = comp.transpose();
        for (int q = 0; q < m; ++q)
            for (long r = 0; r < cnt; ++r) t(p * cnt + r, q * cnt + r) -= x(p, q);
    }
    return t;
}

struct SolveOrderResult {
    HomogeneousPolyMap p;
    bool unique = true;            // false for the DegenerateSolvable outcome
    double smallest_singular = 0.0;
    double solve_residual = 0.0;
};

/// Solve the degree-i homological equation
///   eA P_i - P_i (F1 x)^{(i)} = rhs
/// as a dense linear system in the monomial basis.  Singular-but-compatible
/// systems return the minimal-norm solution with the non-uniqueness flag.
inline SolveOrderResult solve_order(int degree, const HomogeneousPolyMap& rhs,
                                    const Eigen::MatrixXcd& ea, const Eigen::MatrixXcd& f1,
                                    double singular_rel_tol = 1e-10) {
    if (degree < 2) throw Error(ErrKind::invalid_input, "solve_order handles degrees >= 2");
    if (rhs.degree != degree)
        throw Error(ErrKind::invalid_input, "solve_order: rhs degree mismatch");
    const int n = rhs.n, m = rhs.m;
    const long cnt = rhs.coeffs.cols();

    // system matrix of -T_i (so that A_sys u = rhs_flat)
    Eigen::MatrixXcd a_sys = -homological_matrix(degree, ea, f1);
    Eigen::VectorXcd rhs_flat(m * cnt);
    for (int p = 0; p < m; ++p)
        for (long j = 0; j < cnt; ++j) rhs_flat[p * cnt + j] = rhs.coeffs(p, j);

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a_sys, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv(0) : 0.0;
    double smin = sv.size() ? sv(sv.size() - 1) : 0.0;

    SolveOrderResult out;
    out.smallest_singular = smin;
    out.p = HomogeneousPolyMap::zero(degree, n, m);

    bool singular = smin < singular_rel_tol * std::max(smax, 1e-300);
    Eigen::VectorXcd u;
    if (!singular) {
        u = svd.solve(rhs_flat);
        out.unique = true;
    } else {
        // minimal-norm solution through the truncated pseudoinverse
        double cut = singular_rel_tol * smax;
        Eigen::VectorXcd z = svd.matrixU().adjoint() * rhs_flat;
        for (int i = 0; i < sv.size(); ++i) z[i] = sv(i) > cut ? z[i] / sv(i) : cplx(0.0, 0.0);
        u = svd.matrixV() * z;
        out.unique = false;
    }
    out.solve_residual = (a_sys * u - rhs_flat).norm();
    if (singular && out.solve_residual > 1e-8 * std::max(1.0, rhs_flat.norm())) {
        // rhs outside the range: find the nearest-resonance witness
        Spectrum xs = compute_spectrum(ea);
        Spectrum ys = compute_spectrum(f1);
        double best = std::numeric_limits<double>::infinity();
        std::vector<int> wit(n, 0);
        int wtarget = 0;
        for_each_multi_index(n, degree, degree, [&](std::span<const int> mm) {
            cplx lam(1.0, 0.0);
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < mm[i]; ++p) lam *= ys.values[i];
            for (int p = 0; p < xs.source_dim; ++p) {
                double d = std::abs(lam - xs.values[p]);
                if (d < best) {
                    best = d;
                    wit.assign(mm.begin(), mm.end());
                    wtarget = p;
                }
            }
        });
        std::ostringstream msg;
        msg << "resonant obstruction at degree " << degree << ": T_" << degree
            << " singular and rhs outside its range (witness defect " << best << ")";
        throw ResonantObstruction(degree, wit, wtarget, msg.str());
    }
    for (int p = 0; p < m; ++p)
        for (long j = 0; j < cnt; ++j) out.p.coeffs(p, j) = u[p * cnt + j];
    return out;
}

enum class FactorMode { map, flow };

struct FactorDiagnostics {
    std::vector<double> order_residuals;  // coefficient residual per degree 2..k
    double min_homological_eigenvalue = std::numeric_limits<double>::infinity();
    std::vector<int> degenerate_degrees;  // degrees solved with the minimal-norm rule
    double max_imag_enforced = 0.0;       // realness conjugation-averaging residual
};

/// Degree-k approximate linearizing factor P with D0 P = B and
/// P(F(x)) = eA P(x) + O(|x|^{k+1}).
class PolynomialFactor {
public:
    PolynomialFactor() = default;
    PolynomialFactor(Vec base_point, CMapJet poly, Eigen::MatrixXcd b, FactorMode mode,
                     Eigen::MatrixXcd a_or_ea, FactorDiagnostics diag = {})
        : base_(std::move(base_point)), poly_(std::move(poly)), b_(std::move(b)), mode_(mode),
          a_(std::move(a_or_ea)), diag_(std::move(diag)) {}

    int n() const { return poly_.dim(); }
    int m() const { return poly_.outputs(); }
    int order() const { return poly_.order(); }
    const Vec& base_point() const { return base_; }
    const Eigen::MatrixXcd& b_matrix() const { return b_; }
    FactorMode mode() const { return mode_; }
    /// A for flows, e^A for maps (exactly as stored).
    const Eigen::MatrixXcd& a_matrix() const { return a_; }
    const CMapJet& polynomial() const { return poly_; }
    const FactorDiagnostics& diagnostics() const { return diag_; }
    bool nonunique() const { return !diag_.degenerate_degrees.empty(); }

    /// e^A of the time-one map regardless of mode.
    Eigen::MatrixXcd ea_matrix() const {
        if (mode_ == FactorMode::map) return a_;
        return MatrixExponential(a_).at(1.0);
    }

    /// P(x) evaluated at an absolute point (displacement from the base point).
    Eigen::VectorXcd eval(const Vec& x) const {
        std::vector<cplx> dx(n());
        for (int i = 0; i < n(); ++i) dx[i] = cplx(x[i] - base_[i], 0.0);
        Eigen::VectorXcd out(m());
        for (int p = 0; p < m(); ++p)
            out[p] = poly_[p].eval(std::span<const cplx>(dx.data(), dx.size()));
        return out;
    }

    Eigen::VectorXcd eval(const Eigen::VectorXcd& x) const {
        std::vector<cplx> dx(n());
        for (int i = 0; i < n(); ++i) dx[i] = x[i] - cplx(base_[i], 0.0);
        Eigen::VectorXcd out(m());
        for (int p = 0; p < m(); ++p)
            out[p] = poly_[p].eval(std::span<const cplx>(dx.data(), dx.size()));
        return out;
    }

private:
    Vec base_;
    CMapJet poly_;
    Eigen::MatrixXcd b_;
    FactorMode mode_ = FactorMode::map;
    Eigen::MatrixXcd a_;
    FactorDiagnostics diag_;
};

struct FactorOptions {
    double intertwining_tol = 1e-7;
    double singular_rel_tol = 1e-10;
    double realness_tol = 1e-6;
    FactorMode mode = FactorMode::map;
    std::optional<Eigen::MatrixXcd> flow_a;  // stored when mode == flow
};

namespace detail {

inline bool nearly_real(const Eigen::MatrixXcd& m, double tol = 1e-12) {
    return m.imag().cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Build the unique degree-k approximate linearizing factor order by order:
/// for i = 2..k move the degree-i coefficients of (P_{<i} o F) to the right
/// hand side and solve the homological equation.  F must be the displacement
/// jet of the time-one map about the fixed point (constant terms vanish).
inline PolynomialFactor approximate_factor(const CMapJet& f_disp, const Eigen::MatrixXcd& ea,
                                           const Eigen::MatrixXcd& b, const Vec& base_point,
                                           const FactorOptions& opts = {}) {
    const int n = f_disp.dim();
    const int m = static_cast<int>(b.rows());
    const int k = f_disp.order();
    if (f_disp.outputs() != n)
        throw Error(ErrKind::invalid_input, "approximate_factor: F must be a self-map jet");
    if (b.cols() != n || ea.rows() != ea.cols() || ea.rows() != m)
        throw Error(ErrKind::invalid_input, "approximate_factor: B/eA shape mismatch");
    for (int i = 0; i < n; ++i)
        if (std::abs(f_disp[i].value()) > 1e-8)
            throw Error(ErrKind::invalid_input,
                        "approximate_factor: F jet has nonvanishing constant term");

    // first-order block of F
    Eigen::MatrixXcd f1(n, n);
    for (int p = 0; p < n; ++p)
        for (int v = 0; v < n; ++v) f1(p, v) = f_disp[p][1 + v];

    double gate = intertwining_residual(b, f1, ea);
    if (gate > opts.intertwining_tol)
        throw Error(ErrKind::hypothesis_violation,
                    "intertwining gate failed: ||B F1 - eA B|| = " + std::to_string(gate));

    const bool want_real = detail::nearly_real(ea) && detail::nearly_real(b) &&
                           [&] {
                               for (int i = 0; i < n; ++i)
                                   for (std::size_t r = 0; r < f_disp[i].size(); ++r)
                                       if (std::abs(f_disp[i][r].imag()) > 1e-13) return false;
                               return true;
                           }();

    // zeroed-constant copies of F components for composition
    std::vector<CJet> f_args;
    f_args.reserve(n);
    for (int i = 0; i < n; ++i) {
        CJet j = f_disp[i];
        j[0] = cplx(0.0, 0.0);
        f_args.push_back(std::move(j));
    }

    auto tab = MultiIndexTable::get(n, k);
    std::vector<CJet> pcomp;
    for (int p = 0; p < m; ++p) {
        CJet j(tab);
        for (int v = 0; v < n; ++v) j[1 + v] = b(p, v);
        pcomp.push_back(std::move(j));
    }
    CMapJet pk(std::move(pcomp));

    FactorDiagnostics diag;
    Spectrum xs = compute_spectrum(ea), ys = compute_spectrum(f1);
    for (int i = 2; i <= k; ++i) {
        auto hs = homological_spectrum(i, xs, ys);
        for (const auto& v : hs)
            diag.min_homological_eigenvalue =
                std::min(diag.min_homological_eigenvalue, std::abs(v));
        CMapJet comp = compose(pk, f_args);
        HomogeneousPolyMap rhs = slice_of(comp, i);
        SolveOrderResult sol = solve_order(i, rhs, ea, f1, opts.singular_rel_tol);
        if (!sol.unique) {
            diag.degenerate_degrees.push_back(i);
            log_info("approximate_factor: degree " + std::to_string(i) +
                     " resonant but compatible; minimal-norm solution taken");
        }
        if (want_real) {
            double im = sol.p.coeffs.imag().cwiseAbs().maxCoeff();
            diag.max_imag_enforced = std::max(diag.max_imag_enforced, im);
            if (im > opts.realness_tol)
                throw Error(ErrKind::solver_failure,
                            "realness enforcement failed at degree " + std::to_string(i));
            sol.p.coeffs = sol.p.coeffs.real().cast<cplx>();
        }
        set_slice(pk, sol.p);
    }

    // order-by-order residual of the full construction
    {
        CMapJet comp = compose(pk, f_args);
        for (int i = 2; i <= k; ++i) {
            HomogeneousPolyMap lhs = slice_of(comp, i);
            HomogeneousPolyMap pi = slice_of(pk, i);
            Eigen::MatrixXcd resid = lhs.coeffs - ea * pi.coeffs;
            // subtract P_i(F1 x): composition of the slice with the linear part
            Eigen::MatrixXcd cm = detail::composition_matrix(i, f1);
            resid -= pi.coeffs * cm;
            diag.order_residuals.push_back(resid.cwiseAbs().maxCoeff());
        }
    }

    FactorMode mode = opts.mode;
    Eigen::MatrixXcd a_store = ea;
    if (mode == FactorMode::flow) {
        if (!opts.flow_a)
            throw Error(ErrKind::invalid_input, "flow-mode factor needs the generator matrix A");
        a_store = *opts.flow_a;
    }
    return PolynomialFactor(base_point, std::move(pk), b, mode, std::move(a_store),
                            std::move(diag));
}

/// Sternberg normalization: eA = F1, B = identity, D0 psi = id.
inline PolynomialFactor sternberg_factor(const CMapJet& f_disp, const Vec& base_point,
                                         FactorOptions opts = {}) {
    const int n = f_disp.dim();
    Eigen::MatrixXcd f1(n, n);
    for (int p = 0; p < n; ++p)
        for (int v = 0; v < n; ++v) f1(p, v) = f_disp[p][1 + v];
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Identity(n, n);
    return approximate_factor(f_disp, f1, b, base_point, opts);
}

struct ResidualOrderData {
    std::vector<double> radii;
    std::vector<double> max_residuals;
    double slope = 0.0;
    bool exact = false;  // residuals at rounding level; slope not meaningful
};

/// Sample max ||P(F(x)) - eA P(x)|| on spheres of the given radii and return
/// the log-log slope (expected close to k+1 when R is flat to order k).
template <typename MapEval>
ResidualOrderData residual_order_check(const PolynomialFactor& p, MapEval&& f_eval,
                                       const std::vector<double>& radii,
                                       int samples_per_sphere = 32, unsigned seed = 12345) {
    ResidualOrderData out;
    out.radii = radii;
    const int n = p.n();
    Eigen::MatrixXcd ea = p.ea_matrix();
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double r : radii) {
        double worst = 0.0;
        int count = n == 1 ? 2 : samples_per_sphere;
        for (int s = 0; s < count; ++s) {
            Vec u(n);
            if (n == 1) {
                u[0] = s == 0 ? 1.0 : -1.0;
            } else {
                for (int i = 0; i < n; ++i) u[i] = gauss(rng);
                u.normalize();
            }
            Vec x = p.base_point() + r * u;
            Vec fx = f_eval(x);
            Eigen::VectorXcd lhs = p.eval(fx);
            Eigen::VectorXcd rhs = ea * p.eval(x);
            worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
        }
        out.max_residuals.push_back(worst);
    }
    double top = *std::max_element(out.max_residuals.begin(), out.max_residuals.end());
    if (top < 1e-13) {
        out.exact = true;
        return out;
    }
    // least-squares slope of log(resid) vs log(radius)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int nn = static_cast<int>(radii.size());
    for (int i = 0; i < nn; ++i) {
        double lx = std::log(radii[i]);
        double ly = std::log(std::max(out.max_residuals[i], 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    out.slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    return out;
}

namespace detail {

inline void write_num(std::ostream& os, double v) {
    os << std::setprecision(17) << v;
}

}  // namespace detail

/// Line-oriented factor serialization; 17 significant digits keep the
/// round trip bit-exact for IEEE doubles.
inline void write_factor(std::ostream& os, const PolynomialFactor& p) {
    os << std::setprecision(17);
    os << "kf-factor 1\n";
    os << "mode " << (p.mode() == FactorMode::flow ? "flow" : "map") << "\n";
    os << "dims " << p.n() << " " << p.m() << " " << p.order() << "\n";
    os << "base";
    for (int i = 0; i < p.n(); ++i) os << " " << p.base_point()[i];
    os << "\n";
    os << "amatrix";
    for (int r = 0; r < p.m(); ++r)
        for (int c = 0; c < p.m(); ++c)
            os << " " << p.a_matrix()(r, c).real() << " " << p.a_matrix()(r, c).imag();
    os << "\n";
    const auto& tab = p.polynomial()[0].table();
    for (int q = 0; q < p.m(); ++q) {
        for (std::size_t r = 1; r < tab.size(); ++r) {
            cplx v = p.polynomial()[q][r];
            os << "c " << q;
            auto e = tab.exponents(r);
            for (int i = 0; i < p.n(); ++i) os << " " << e[i];
            os << " " << v.real() << " " << v.imag() << "\n";
        }
    }
    os << "end\n";
}

inline PolynomialFactor read_factor(std::istream& is) {
    std::string tag;
    int version;
    is >> tag >> version;
    if (tag != "kf-factor" || version != 1)
        throw Error(ErrKind::invalid_input, "not a kf-factor file");
    std::string key, mode_s;
    is >> key >> mode_s;
    if (key != "mode") throw Error(ErrKind::invalid_input, "factor file: expected mode");
    int n, m, k;
    is >> key >> n >> m >> k;
    if (key != "dims") throw Error(ErrKind::invalid_input, "factor file: expected dims");
    Vec base(n);
    is >> key;
    for (int i = 0; i < n; ++i) is >> base[i];
    Eigen::MatrixXcd a(m, m);
    is >> key;
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) {
            double re, im;
            is >> re >> im;
            a(r, c) = cplx(re, im);
        }
    auto tab = MultiIndexTable::get(n, k);
    std::vector<CJet> comps;
    for (int q = 0; q < m; ++q) comps.emplace_back(tab);
    std::vector<int> mi(n);
    while (is >> key) {
        if (key == "end") break;
        if (key != "c") throw Error(ErrKind::invalid_input, "factor file: bad record '" + key + "'");
        int q;
        is >> q;
        for (int i = 0; i < n; ++i) is >> mi[i];
        double re, im;
        is >> re >> im;
        comps.at(q).coeff(std::span<const int>(mi.data(), mi.size())) = cplx(re, im);
    }
    CMapJet poly(std::move(comps));
    Eigen::MatrixXcd b(m, n);
    for (int q = 0; q < m; ++q)
        for (int v = 0; v < n; ++v) b(q, v) = poly[q][1 + v];
    return PolynomialFactor(base, std::move(poly), std::move(b),
                            mode_s == "flow" ? FactorMode::flow : FactorMode::map, std::move(a));
}

inline void write_factor_file(const std::string& path, const PolynomialFactor& p) {
    std::ofstream os(path);
    if (!os) throw Error(ErrKind::invalid_input, "cannot open factor file for writing: " + path);
    write_factor(os, p);
}

inline PolynomialFactor read_factor_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrKind::invalid_input, "cannot open factor file: " + path);
    return read_factor(is);
}

}  // namespace kf
