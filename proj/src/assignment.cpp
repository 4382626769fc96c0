#include "mvlab/assignment.hpp"

#include <limits>

#include "mvlab/types.hpp"

namespace mvlab::measures {

Assignment solve_assignment(const CostMatrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw DimensionError("assignment: cost matrix must be square");
  Assignment result;
  if (n == 0) return result;

  constexpr long double kInf = std::numeric_limits<long double>::infinity();
  // 1-based arrays; column 0 is the virtual source of each augmentation.
  std::vector<long double> u(n + 1, 0.0L), v(n + 1, 0.0L), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      long double delta = kInf;
      int j1 = 0;
      const long double ui0 = u[i0];
      const long double* row = cost.data() + static_cast<std::ptrdiff_t>(i0 - 1) * n;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const long double cur = row[j - 1] - ui0 - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  result.row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j) result.row_to_col[match[j] - 1] = j - 1;
  // Sum the realised cost directly rather than trusting the duals.
  long double total = 0.0L;
  for (int i = 0; i < n; ++i) total += cost(i, result.row_to_col[i]);
  result.total_cost = total;
  return result;
}

}  // namespace mvlab::measures
