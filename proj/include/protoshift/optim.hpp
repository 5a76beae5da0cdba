#pragma once

#include <cstdint>
#include <vector>

#include "protoshift/tensor.hpp"

namespace protoshift {

/// v = momentum*v + g; p -= lr*v. A parameter without a populated gradient
/// contributes g = 0 for that step.
class SgdMomentum {
public:
    SgdMomentum(std::vector<Tensor> params, double lr, double momentum = 0.9);

    void step();
    void set_lr(double lr);
    double lr() const { return lr_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> velocity_;
    double lr_;
    double momentum_;
};

/// Adam with bias correction:
///   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
class Adam {
public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8);

    void step();
    void set_lr(double lr);
    double lr() const { return lr_; }
    std::uint64_t steps_taken() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

/// lr(t) = base * factor^floor(t / every) for 0-based iteration t.
struct LrSchedule {
    double base = 0.0;
    std::size_t every = 1;
    double factor = 1.0;

    double at(std::size_t iter) const;
    void validate() const; // base > 0, every > 0, factor in (0,1]
};

/// Clears the gradient buffers of every parameter.
void zero_grads(const std::vector<Tensor>& params);

} // namespace protoshift
