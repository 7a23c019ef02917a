#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace pllm {

// Row-major so tensor serialization order matches the in-memory layout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

using i64 = std::int64_t;
using u64 = std::uint64_t;

}  // namespace pllm
