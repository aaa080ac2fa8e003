#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace varda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// (A + A^T)/2.
inline Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Relative Frobenius distance, guarded for small references.
inline double rel_error(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

inline double rel_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Neumaier-compensated accumulator; used where sums over enumerated path
/// spaces must hold 1e-12 identities.
class StableSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace varda
