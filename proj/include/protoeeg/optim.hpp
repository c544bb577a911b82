#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace protoeeg {

// Adaptive moment estimation over a flat parameter block; state is sized on first use.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(double* params, const double* grad, Eigen::Index n) {
    if (m_.size() != n) {
      m_ = Eigen::ArrayXd::Zero(n);
      v_ = Eigen::ArrayXd::Zero(n);
      t_ = 0;
    }
    ++t_;
    Eigen::Map<Eigen::ArrayXd> p(params, n);
    const Eigen::Map<const Eigen::ArrayXd> g(grad, n);
    m_ = b1_ * m_ + (1.0 - b1_) * g;
    v_ = b2_ * v_ + (1.0 - b2_) * g.square();
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    p -= lr_ * (m_ / c1) / ((v_ / c2).sqrt() + eps_);
  }

  template <typename Derived>
  void step(Eigen::PlainObjectBase<Derived>& params, const Eigen::PlainObjectBase<Derived>& grad) {
    step(params.data(), grad.data(), params.size());
  }

  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::ArrayXd m_, v_;
  long t_ = 0;
};

}  // namespace protoeeg
