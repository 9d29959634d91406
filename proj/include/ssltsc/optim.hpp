#pragma once

#include <cmath>
#include <vector>

#include "ssltsc/core/autograd.hpp"
#include "ssltsc/errors.hpp"

namespace ssltsc::optim {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Moment buffers follow the order of the
/// parameter list given at construction.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<nn::Parameter<T>*> params, AdamWOptions opts) : params_(std::move(params)), opts_(opts) {
    for (auto* p : params_) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const double lr = opts_.learning_rate;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i]->value();
      const auto& g = params_[i]->grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = static_cast<T>(opts_.beta1 * m[j] + (1.0 - opts_.beta1) * gj);
        v[j] = static_cast<T>(opts_.beta2 * v[j] + (1.0 - opts_.beta2) * gj * gj);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        double wj = static_cast<double>(w[j]);
        wj -= lr * opts_.weight_decay * wj;
        wj -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
        w[j] = static_cast<T>(wj);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  long long steps() const { return t_; }
  const AdamWOptions& options() const { return opts_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  std::vector<nn::Parameter<T>*> params_;
  AdamWOptions opts_;
  std::vector<Tensor<T>> m_, v_;
  long long t_ = 0;
};

}  // namespace ssltsc::optim
