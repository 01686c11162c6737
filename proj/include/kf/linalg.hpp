#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <complex>
#include <unsupported/Eigen/MatrixFunctions>

#include "kf/error.hpp"

namespace kf {

/// e^{tA} for a small square matrix: eigendecomposition when the
/// eigenvector basis is well conditioned, scaled-and-squared matrix
/// exponential otherwise.
class MatrixExponential {
public:
    explicit MatrixExponential(Eigen::MatrixXcd a) : a_(std::move(a)) {
        if (a_.rows() != a_.cols())
            throw Error(ErrKind::invalid_input, "matrix exponential needs a square matrix");
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(a_);
        if (es.info() == Eigen::Success) {
            Eigen::MatrixXcd v = es.eigenvectors();
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(v);
            double cond = svd.singularValues()(0) /
                          svd.singularValues()(svd.singularValues().size() - 1);
            if (std::isfinite(cond) && cond < 1e8) {
                diag_ = true;
                vecs_ = v;
                vecs_inv_ = v.inverse();
                vals_ = es.eigenvalues();
            }
        }
    }

    Eigen::MatrixXcd at(double t) const {
        if (diag_) {
            Eigen::VectorXcd e(vals_.size());
            for (int i = 0; i < vals_.size(); ++i) e[i] = std::exp(t * vals_[i]);
            return vecs_ * e.asDiagonal() * vecs_inv_;
        }
        Eigen::MatrixXcd m = t * a_;
        return m.exp();
    }

    const Eigen::MatrixXcd& matrix() const { return a_; }

private:
    Eigen::MatrixXcd a_;
    bool diag_ = false;
    Eigen::MatrixXcd vecs_, vecs_inv_;
    Eigen::VectorXcd vals_;
};

/// Principal matrix logarithm via diagonalization (small well-separated
/// spectra only; callers guard the defective case).
inline Eigen::MatrixXcd matrix_log_principal(const Eigen::MatrixXcd& m) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m);
    if (es.info() != Eigen::Success)
        throw Error(ErrKind::solver_failure, "matrix log: eigensolver failed");
    Eigen::MatrixXcd v = es.eigenvectors();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(v);
    double cond = svd.singularValues()(0) /
                  svd.singularValues()(svd.singularValues().size() - 1);
    if (!std::isfinite(cond) || cond > 1e10)
        throw Error(ErrKind::solver_failure,
                    "matrix log: eigenvector basis ill conditioned (defective matrix?)");
    Eigen::VectorXcd logs(es.eigenvalues().size());
    for (int i = 0; i < logs.size(); ++i) {
        if (es.eigenvalues()[i] == std::complex<double>(0.0, 0.0))
            throw Error(ErrKind::invalid_input, "matrix log of singular matrix");
        logs[i] = std::log(es.eigenvalues()[i]);
    }
    return v * logs.asDiagonal() * v.inverse();
}

}  // namespace kf
