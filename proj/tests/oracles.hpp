#pragma once

// Reference implementations used to check the library. They favour plain
// loops and long double over speed, and share no code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

/// rank_i = 1 + #{x_j < x_i} + (#{x_j == x_i} - 1) / 2
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double v : x) {
      if (v < x[i]) ++less;
      if (v == x[i]) ++equal;
    }
    r[i] = 1.0 + static_cast<double>(less) + (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return r;
}

inline std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

/// Centered-Gram HSIC written out as double sums.
inline long double hsic(const Mat& x, const Mat& y) {
  const Eigen::Index n = x.rows();
  auto gram = [n](const Mat& a) {
    std::vector<long double> k(n * n, 0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        long double s = 0;
        for (Eigen::Index c = 0; c < a.cols(); ++c) s += static_cast<long double>(a(i, c)) * a(j, c);
        k[i * n + j] = s;
      }
    std::vector<long double> row(n, 0);
    long double all = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) row[i] += k[i * n + j];
      all += row[i];
      row[i] /= n;
    }
    all /= static_cast<long double>(n) * n;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) k[i * n + j] = k[i * n + j] - row[i] - row[j] + all;
    return k;
  };
  const auto k = gram(x), l = gram(y);
  long double s = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) s += k[i * n + j] * l[i * n + j];
  return s;
}

inline double cka(const Mat& x, const Mat& y) {
  return static_cast<double>(hsic(x, y) / std::sqrt(hsic(x, x) * hsic(y, y)));
}

inline Mat gaussian(int rows, int cols, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = nd(gen);
  return m;
}

/// Modified Gram-Schmidt on a Gaussian matrix.
inline Mat random_orthogonal(int d, std::mt19937_64& gen) {
  Mat q = gaussian(d, d, gen);
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < j; ++k) q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
    q.col(j).normalize();
  }
  return q;
}

/// 1-based position of gt after a stable descending sort by value.
inline std::size_t cls_rank(const std::vector<double>& logits, std::size_t gt) {
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  return static_cast<std::size_t>(std::find(idx.begin(), idx.end(), gt) - idx.begin()) + 1;
}

/// Pixel enumeration; 255 is ignored in either mask.
inline double miou(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b, int classes) {
  double total = 0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    int inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) {
        if (a[i][j] == 255 || b[i][j] == 255) continue;
        const bool pa = a[i][j] == c, pb = b[i][j] == c;
        inter += pa && pb;
        uni += pa || pb;
      }
    if (uni > 0) {
      total += static_cast<double>(inter) / uni;
      ++present;
    }
  }
  return present ? total / present : 1.0;
}

inline double rmse(const Mat& a, const Mat& b, const Eigen::Matrix<bool, -1, -1>& va,
                   const Eigen::Matrix<bool, -1, -1>& vb) {
  long double s = 0;
  long n = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (va(i, j) && vb(i, j)) {
        const long double d = static_cast<long double>(a(i, j)) - b(i, j);
        s += d * d;
        ++n;
      }
  return static_cast<double>(std::sqrt(s / n));
}

}  // namespace oracle
