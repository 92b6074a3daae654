#pragma once

#include <complex>
#include <cstddef>

#include <Eigen/Dense>

namespace mfrate {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

inline constexpr cplx kI{0.0, 1.0};

}  // namespace mfrate
