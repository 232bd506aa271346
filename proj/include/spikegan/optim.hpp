#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spikegan/tensor.hpp"

namespace spikegan {

struct RMSPropConfig {
    double lr = 5e-5;
    double alpha = 0.99;
    double eps = 1e-8;
};

// s <- alpha*s + (1-alpha)*g^2;  p <- p - lr * g / (sqrt(s) + eps)
template <typename T>
class RMSProp {
  public:
    RMSProp(std::vector<Parameter<T>*> params, RMSPropConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        for (Parameter<T>* p : params_) sq_.emplace_back(p->value.shape());
    }

    void step() {
        const T alpha = T(cfg_.alpha), lr = T(cfg_.lr), eps = T(cfg_.eps);
        for (size_t k = 0; k < params_.size(); ++k) {
            Parameter<T>& p = *params_[k];
            Tensor<T>& s = sq_[k];
            for (int64_t i = 0; i < p.value.size(); ++i) {
                const T g = p.grad[i];
                s[i] = alpha * s[i] + (T(1) - alpha) * g * g;
                p.value[i] -= lr * g / (std::sqrt(s[i]) + eps);
            }
        }
        ++steps_;
    }

    void zero_grad() {
        for (Parameter<T>* p : params_) p->zero_grad();
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t step_count() const { return steps_; }
    void set_step_count(int64_t n) { steps_ = n; }

    const std::vector<Parameter<T>*>& params() const { return params_; }
    std::vector<Tensor<T>>& square_avg() { return sq_; }
    const std::vector<Tensor<T>>& square_avg() const { return sq_; }

  private:
    std::vector<Parameter<T>*> params_;
    RMSPropConfig cfg_;
    std::vector<Tensor<T>> sq_;
    int64_t steps_ = 0;
};

// Constant for the first half of training, then a half-cosine decay to ~0.
inline double cosine_anneal_lr(double lr0, int64_t epoch, int64_t total_epochs) {
    if (epoch < 0 || epoch >= total_epochs) throw ConfigError("cosine_anneal_lr: epoch out of range");
    const int64_t half = total_epochs / 2;
    if (half == 0 || epoch < half) return lr0;
    const double u = static_cast<double>(epoch - half) / static_cast<double>(half);
    return lr0 * (1.0 + std::cos(M_PI * u)) / 2.0;
}

// Sum of per-parameter gradient L2 norms (one scalar per model).
template <typename T>
double grad_norm_sum(const std::vector<Parameter<T>*>& params) {
    double total = 0.0;
    for (const Parameter<T>* p : params) total += l2_norm(p->grad);
    return total;
}

// Optional weight clipping (compatibility mode only; off by default).
template <typename T>
void clip_params(const std::vector<Parameter<T>*>& params, T bound) {
    for (Parameter<T>* p : params)
        for (int64_t i = 0; i < p->value.size(); ++i)
            p->value[i] = std::min(std::max(p->value[i], -bound), bound);
}

}  // namespace spikegan
