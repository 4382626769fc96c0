#pragma once

#include <vector>

#include <Eigen/Core>

namespace mvlab::measures {

using CostMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Assignment {
  std::vector<int> row_to_col;
  long double total_cost = 0.0L;
};

/// Minimum-cost perfect matching on a square cost matrix by shortest
/// augmenting paths with dual potentials (Hungarian / Jonker-Volgenant
/// style), O(n^3) time, O(n) scratch.
Assignment solve_assignment(const CostMatrix& cost);

}  // namespace mvlab::measures
