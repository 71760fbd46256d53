#include "recurdet/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "recurdet/error.hpp"

namespace recurdet {

double Separator::score(std::span<const double> f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size() && i < f.size(); ++i) s += w[i] * f[i];
  return s;
}

double svm_objective(const Separator& s, const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                     double c) {
  double reg = 0.0;
  for (double v : s.w) reg += v * v;
  double hinge = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    hinge += std::max(0.0, 1.0 - labels[k] * (s.score(points[k]) - s.b));
  }
  return 0.5 * reg + c * hinge;
}

Separator train_soft_svm(const std::vector<std::vector<double>>& points, const std::vector<int>& labels,
                         const SvmOptions& opts) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw Error(ErrorCode::kDimensionMismatch, "one label per point required");
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), -1) != labels.end();
  if (!has_pos || !has_neg) throw Error(ErrorCode::kSingleClass, "training set needs both labels");
  for (int y : labels) {
    if (y != 1 && y != -1) throw Error(ErrorCode::kInvalidConfig, "labels must be +1 or -1");
  }
  const std::size_t dim = points.front().size();
  const double c = opts.c;

  std::vector<double> kernel(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double d = 0.0;
      for (std::size_t f = 0; f < dim; ++f) d += points[i][f] * points[j][f];
      kernel[i * n + j] = kernel[j * n + i] = d;
    }
  }
  const auto k_at = [&](std::size_t i, std::size_t j) { return kernel[i * n + j]; };
  const auto y = [&](std::size_t i) { return static_cast<double>(labels[i]); };

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // gradient of 1/2 a'Qa - e'a
  const auto in_up = [&](std::size_t t) { return (labels[t] == 1 && alpha[t] < c) || (labels[t] == -1 && alpha[t] > 0); };
  const auto in_low = [&](std::size_t t) { return (labels[t] == -1 && alpha[t] < c) || (labels[t] == 1 && alpha[t] > 0); };
  constexpr double kTau = 1e-12;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(t) && -y(t) * grad[t] > gmax) {
        gmax = -y(t) * grad[t];
        i = t;
      }
    }
    if (i == n) break;
    double gmin = std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double v = -y(t) * grad[t];
      gmin = std::min(gmin, v);
      const double diff = gmax - v;
      if (diff > 0) {
        double a = k_at(i, i) + k_at(t, t) - 2.0 * k_at(i, t);
        if (a <= 0) a = kTau;
        const double obj = -(diff * diff) / a;
        if (obj < best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    if (j == n || gmax - gmin < opts.tolerance) break;

    // Two-variable subproblem, clipped to the box (libsvm's update rule).
    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    double quad = k_at(i, i) + k_at(j, j) - 2.0 * k_at(i, j);
    if (quad <= 0) quad = kTau;
    if (labels[i] != labels[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > 0) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
      } else {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = c + diff; }
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > c) {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }
    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += y(t) * (y(i) * k_at(t, i) * dai + y(j) * k_at(t, j) * daj);
    }
  }

  Separator sep;
  sep.w.assign(dim, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] == 0.0) continue;
    for (std::size_t f = 0; f < dim; ++f) sep.w[f] += alpha[t] * y(t) * points[t][f];
  }

  // Offset from the free vectors; otherwise the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y(t) * grad[t];
    if (alpha[t] >= c) {
      if (labels[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (labels[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  sep.b = free_count > 0 ? free_sum / free_count : (ub + lb) / 2.0;
  return sep;
}

}  // namespace recurdet
