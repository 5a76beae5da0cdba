#include "protoshift/optim.hpp"

#include <cmath>

namespace protoshift {

namespace {

void require_positive_lr(double lr) {
    if (!(lr > 0.0)) throw ValueError("learning rate must be positive");
}

} // namespace

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    require_positive_lr(lr);
    if (momentum < 0.0 || momentum >= 1.0)
        throw ValueError("momentum must be in [0,1)");
    velocity_.reserve(params_.size());
    for (const Tensor& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void SgdMomentum::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        std::vector<double>& v = velocity_[i];
        const bool has_grad = p.has_grad();
        const std::vector<double>* g = has_grad ? &p.grad() : nullptr;
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = momentum_ * v[j] + (has_grad ? (*g)[j] : 0.0);
            p.values()[j] -= lr_ * v[j];
        }
    }
}

void SgdMomentum::set_lr(double lr) {
    require_positive_lr(lr);
    lr_ = lr;
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    require_positive_lr(lr);
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ValueError("Adam betas must be in [0,1)");
    if (!(eps > 0.0)) throw ValueError("Adam eps must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        const bool has_grad = p.has_grad();
        const std::vector<double>* grads = has_grad ? &p.grad() : nullptr;
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double g = has_grad ? (*grads)[j] : 0.0;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.values()[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::set_lr(double lr) {
    require_positive_lr(lr);
    lr_ = lr;
}

double LrSchedule::at(std::size_t iter) const {
    return base * std::pow(factor, static_cast<double>(iter / every));
}

void LrSchedule::validate() const {
    if (!(base > 0.0)) throw ValueError("schedule base rate must be positive");
    if (every == 0) throw ValueError("schedule step must be positive");
    if (!(factor > 0.0 && factor <= 1.0)) throw ValueError("schedule factor must be in (0,1]");
}

void zero_grads(const std::vector<Tensor>& params) {
    for (const Tensor& p : params) {
        Tensor mut = p;
        mut.zero_grad();
    }
}

} // namespace protoshift
