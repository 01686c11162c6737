#pragma once

#include <Eigen/Dense>
#include <complex>

namespace kf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

}  // namespace kf
