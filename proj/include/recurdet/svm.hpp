#pragma once

#include <span>
#include <vector>

namespace recurdet {

/// Linear decision sign(<f, w> - b).
struct Separator {
  std::vector<double> w;
  double b = 0.0;

  double score(std::span<const double> f) const;
  bool positive(std::span<const double> f) const { return score(f) - b > 0.0; }
};

struct SvmOptions {
  double c = 10.0;
  int max_iterations = 100000;
  double tolerance = 1e-6;  // KKT violation gap
};

/// 1/2 |w|^2 + C sum max(0, 1 - y (<w, f> - b)); labels are +1 / -1.
double svm_objective(const Separator& s, const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                     double c);

/// Soft-margin linear SVM solved in the dual by sequential minimal
/// optimization with second-order working-set selection. Deterministic.
Separator train_soft_svm(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                         const SvmOptions& opts = {});

}  // namespace recurdet
