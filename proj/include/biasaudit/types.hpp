#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace biasaudit {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

} // namespace biasaudit
