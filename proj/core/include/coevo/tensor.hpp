#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace coevo {

/// Thrown for malformed datasets, bad configs and failed invariants.
/// Messages name the offending file/record where applicable.
class Error : public std::runtime_error {
public:
	explicit Error(const std::string& what) : std::runtime_error(what) {}
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using SpMat = Eigen::SparseMatrix<S>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

} // namespace coevo
