#pragma once

#include <cmath>
#include <stdexcept>

#include "unilite/core/tensor.hpp"

namespace unilite::net {

// Running per-dimension mean/variance (parallel Welford merge), applied as
// clip((x - mean) / sqrt(var + eps), -clip, clip).
struct Normalizer {
  double count = 0;
  VecD mean;
  VecD var;
  bool frozen = false;
  double eps = 1e-8;
  double clip = 10.0;

  Normalizer() = default;
  explicit Normalizer(Eigen::Index dim)
      : mean(VecD::Zero(dim)), var(VecD::Ones(dim)) {}

  Eigen::Index dim() const { return mean.size(); }

  template <class T>
  void update(const Mat<T>& batch) {
    if (frozen || batch.rows() == 0) return;
    check(batch.cols());
    const double n = static_cast<double>(batch.rows());
    const MatD b = batch.template cast<double>();
    const VecD bmean = b.colwise().mean().transpose();
    const VecD bvar =
        (b.rowwise() - bmean.transpose()).array().square().colwise().sum().transpose() /
        n;
    if (count == 0) {
      mean = bmean;
      var = bvar;
      count = n;
      return;
    }
    const double total = count + n;
    const VecD delta = bmean - mean;
    const VecD m2 = var * count + bvar * n +
                    delta.cwiseAbs2() * (count * n / total);
    mean += delta * (n / total);
    var = m2 / total;
    count = total;
  }

  template <class T>
  Mat<T> apply(const Mat<T>& batch) const {
    check(batch.cols());
    const VecD inv = (var.array() + eps).rsqrt();
    MatD out = batch.template cast<double>();
    out = ((out.rowwise() - mean.transpose()).array().rowwise() *
           inv.transpose().array())
              .cwiseMax(-clip)
              .cwiseMin(clip)
              .matrix();
    return out.cast<T>();
  }

  // Inverse of apply for values inside the clip range.
  template <class T>
  Mat<T> unapply(const Mat<T>& batch) const {
    check(batch.cols());
    const VecD sd = (var.array() + eps).sqrt();
    MatD out = batch.template cast<double>();
    out = (out.array().rowwise() * sd.transpose().array()).matrix();
    out.rowwise() += mean.transpose();
    return out.cast<T>();
  }

  template <class T>
  Mat<T> update_apply(const Mat<T>& batch) {
    update(batch);
    return apply(batch);
  }

 private:
  void check(Eigen::Index cols) const {
    if (cols != mean.size()) {
      throw std::invalid_argument("normalizer dimension mismatch");
    }
  }
};

}  // namespace unilite::net
