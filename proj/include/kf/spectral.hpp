#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "kf/multi_index.hpp"
#include "kf/types.hpp"

namespace kf {

/// Eigenvalues of a linearization, repeated with algebraic multiplicity.
struct Spectrum {
    std::vector<cplx> values;
    int source_dim = 0;

    double spectral_radius() const {
        double r = 0.0;
        for (const auto& v : values) r = std::max(r, std::abs(v));
        return r;
    }
    double min_modulus() const {
        double r = std::numeric_limits<double>::infinity();
        for (const auto& v : values) r = std::min(r, std::abs(v));
        return r;
    }
};

inline Spectrum make_spectrum(std::vector<cplx> values) {
    Spectrum s;
    s.source_dim = static_cast<int>(values.size());
    s.values = std::move(values);
    return s;
}

/// Dense eigensolve returning all eigenvalues with multiplicity.
inline Spectrum compute_spectrum(const Eigen::MatrixXcd& m) {
    if (m.rows() != m.cols())
        throw Error(ErrKind::invalid_input, "compute_spectrum: matrix is not square");
    if (!m.allFinite())
        throw Error(ErrKind::invalid_input, "compute_spectrum: non-finite entries");
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m, false);
    if (es.info() != Eigen::Success)
        throw Error(ErrKind::solver_failure, "compute_spectrum: eigensolver did not converge");
    Spectrum s;
    s.source_dim = static_cast<int>(m.rows());
    s.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + m.rows());
    return s;
}

inline Spectrum compute_spectrum(const Eigen::MatrixXd& m) {
    return compute_spectrum(Eigen::MatrixXcd(m.cast<cplx>()));
}

/// Group eigenvalues into clusters of relative distance <= rel_tol and
/// report (representative, multiplicity).  Exact arithmetic would make
/// multiplicities unambiguous; floating point needs the cluster radius.
inline std::vector<std::pair<cplx, int>> cluster_multiplicities(const Spectrum& s,
                                                                double rel_tol = 1e-8) {
    std::vector<std::pair<cplx, int>> out;
    std::vector<char> used(s.values.size(), 0);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (used[i]) continue;
        cplx rep = s.values[i];
        int count = 1;
        used[i] = 1;
        for (std::size_t j = i + 1; j < s.values.size(); ++j) {
            if (used[j]) continue;
            if (std::abs(s.values[j] - rep) <= rel_tol * std::max(1.0, std::abs(rep))) {
                used[j] = 1;
                ++count;
            }
        }
        out.emplace_back(rep, count);
    }
    return out;
}

constexpr int kInfinityOrder = -1;  ///< pass as k to request infinity-nonresonance

struct ResonanceWitness {
    int target_index = 0;        // i: which mu
    std::vector<int> m;          // multi-index over Y's eigenvalues
    double defect = 0.0;         // |mu_i - lambda^m|
};

struct ResonanceReport {
    int requested_k = 0;              // kInfinityOrder for the infinity check
    int effective_k = 0;              // enumeration bound actually used
    bool nonresonant = false;
    int nonresonant_up_to = 0;        // == requested k when certified
    std::vector<ResonanceWitness> witnesses;
    double tolerance = 0.0;
};

inline double default_resonance_tol(const Spectrum& x) {
    double m = 1.0;
    for (const auto& v : x.values) m = std::max(m, std::abs(v));
    return 1e-9 * m;
}

/// Enumerate every multi-index 2 <= |m| <= k (or the finite effective bound
/// for the infinity flag) against every target eigenvalue, reporting all
/// pairs with |mu_i - lambda^m| <= tol.
inline ResonanceReport check_k_nonresonant(const Spectrum& x_spec, const Spectrum& y_spec, int k,
                                           double tol = -1.0) {
    if (tol < 0) tol = default_resonance_tol(x_spec);
    if (tol <= 0) throw Error(ErrKind::invalid_input, "resonance tolerance must be positive");
    if (k != kInfinityOrder && k < 1)
        throw Error(ErrKind::invalid_input, "nonresonance order must be >= 1 or the infinity flag");

    ResonanceReport rep;
    rep.requested_k = k;
    rep.tolerance = tol;

    int bound = k;
    if (k == kInfinityOrder) {
        double rho = y_spec.spectral_radius();
        if (rho >= 1.0)
            throw Error(ErrKind::invalid_input,
                        "infinity-nonresonance needs spectral radius < 1 for termination");
        double mu_min = x_spec.min_modulus();
        if (mu_min <= tol)
            throw Error(ErrKind::invalid_input,
                        "infinity-nonresonance cannot terminate: a target eigenvalue has modulus <= tol");
        // beyond this bound |lambda^m| < min|mu_i| - tol strictly
        double b = std::log(mu_min) / std::log(rho);
        bound = static_cast<int>(std::ceil(b)) + 1;
        while (std::pow(rho, bound) >= mu_min - tol && bound < 500) ++bound;
        bound = std::max(bound, 2);
    }
    rep.effective_k = bound;

    const int n = y_spec.source_dim;
    if (bound >= 2) {
        for_each_multi_index(n, 2, bound, [&](std::span<const int> m) {
            cplx lam_m(1.0, 0.0);
            for (int i = 0; i < n; ++i)
                for (int p = 0; p < m[i]; ++p) lam_m *= y_spec.values[i];
            for (int i = 0; i < x_spec.source_dim; ++i) {
                double defect = std::abs(x_spec.values[i] - lam_m);
                if (defect <= tol) {
                    ResonanceWitness w;
                    w.target_index = i;
                    w.m.assign(m.begin(), m.end());
                    w.defect = defect;
                    rep.witnesses.push_back(std::move(w));
                }
            }
        });
    }
    rep.nonresonant = rep.witnesses.empty();
    if (rep.nonresonant) {
        rep.nonresonant_up_to = k;
    } else {
        int worst = std::numeric_limits<int>::max();
        for (const auto& w : rep.witnesses) {
            int deg = 0;
            for (int v : w.m) deg += v;
            worst = std::min(worst, deg);
        }
        rep.nonresonant_up_to = worst - 1;
    }
    return rep;
}

struct SpreadResult {
    double value = 0.0;
    int mu_index = 0;
    int lambda_index = 0;
};

/// Spectral spread: max over eigenvalue pairs of ln|mu| / ln|lambda|.
inline SpreadResult spectral_spread(const Spectrum& x_spec, const Spectrum& y_spec) {
    if (y_spec.spectral_radius() >= 1.0)
        throw Error(ErrKind::invalid_input, "spectral spread requires rho(Y) < 1");
    SpreadResult out;
    out.value = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < x_spec.source_dim; ++i) {
        double am = std::abs(x_spec.values[i]);
        if (am == 0.0)
            throw Error(ErrKind::invalid_input, "spectral spread undefined for zero eigenvalue");
        for (int j = 0; j < y_spec.source_dim; ++j) {
            double al = std::abs(y_spec.values[j]);
            double v = std::log(am) / std::log(al);
            if (v > out.value) {
                out.value = v;
                out.mu_index = i;
                out.lambda_index = j;
            }
        }
    }
    return out;
}

struct SeedCovector {
    Eigen::RowVectorXcd w;   // unit-norm left eigenvector
    cplx eigenvalue{};       // eigenvalue actually used (nearest to the target)
    double residual = 0.0;   // ||w Y - eigenvalue w|| / ||w||
};

/// Left eigenvector of Y for the eigenvalue nearest `target`, with a
/// deterministic representative: unit 2-norm, largest-modulus entry real
/// and positive (ties broken by lowest index).
inline SeedCovector seed_covector(const Eigen::MatrixXcd& y, cplx target, double tol = 1e-8) {
    if (y.rows() != y.cols())
        throw Error(ErrKind::invalid_input, "seed_covector: matrix is not square");
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(y.transpose());
    if (es.info() != Eigen::Success)
        throw Error(ErrKind::solver_failure, "seed_covector: eigensolver did not converge");
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int i = 0; i < y.rows(); ++i) {
        double d = std::abs(es.eigenvalues()[i] - target);
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    if (best < 0 || bd > tol * std::max(1.0, std::abs(target)))
        throw Error(ErrKind::invalid_input,
                    "seed_covector: target is not an eigenvalue of Y within tolerance");
    Eigen::VectorXcd v = es.eigenvectors().col(best);
    v.normalize();
    int imax = 0;
    for (int i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[imax]) + 1e-15) imax = i;
    cplx phase = v[imax] / std::abs(v[imax]);
    v /= phase;

    SeedCovector out;
    out.w = v.transpose();
    out.eigenvalue = es.eigenvalues()[best];
    out.residual = (out.w * y - out.eigenvalue * out.w).norm() / out.w.norm();
    if (out.residual > tol * std::max(1.0, y.norm()))
        throw Error(ErrKind::solver_failure,
                    "seed_covector: eigenvector residual too large (defective eigenvalue?)");
    return out;
}

inline SeedCovector seed_covector(const Eigen::MatrixXd& y, cplx target, double tol = 1e-8) {
    return seed_covector(Eigen::MatrixXcd(y.cast<cplx>()), target, tol);
}

/// Max-abs entry norm of B Y - eA B, the gate checked before any factor
/// construction.
inline double intertwining_residual(const Eigen::MatrixXcd& b, const Eigen::MatrixXcd& y,
                                    const Eigen::MatrixXcd& ea) {
    if (b.cols() != y.rows() || y.rows() != y.cols() || ea.rows() != ea.cols() ||
        ea.cols() != b.rows())
        throw Error(ErrKind::invalid_input, "intertwining_residual: incompatible shapes");
    return (b * y - ea * b).cwiseAbs().maxCoeff();
}

}  // namespace kf
