#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "protoshift/errors.hpp"

namespace protoshift {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until backward reaches this tensor
    bool requires_grad = false;
};

} // namespace detail

/// Dense 64-bit real array in row-major order. Copying a Tensor copies the
/// handle, not the storage: ops record shared references on the tape, and the
/// optimizer updates parameters through the same storage the graph saw.
/// Extents are strictly positive; a scalar has rank 0 and one element.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {
        impl_->values.assign(1, 0.0);
    }
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    /// 1-D tensor.
    static Tensor vector(std::vector<double> values, bool requires_grad = false);
    /// 2-D tensor from nested initializer data (rows must be equal length).
    static Tensor matrix(const std::vector<std::vector<double>>& rows,
                         bool requires_grad = false);

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t size() const { return impl_->values.size(); }
    /// Extent of 2-D dimension 0 (1 for lower ranks).
    std::size_t rows() const { return rank() >= 1 ? impl_->shape[0] : 1; }
    /// Extent of the last dimension (1 for scalars).
    std::size_t cols() const { return rank() >= 2 ? impl_->shape[1] : (rank() == 1 ? impl_->shape[0] : 1); }

    const std::vector<double>& values() const { return impl_->values; }
    std::vector<double>& values() { return impl_->values; }
    double item() const;
    double at(std::size_t i) const { return impl_->values[i]; }
    double at(std::size_t i, std::size_t j) const { return impl_->values[i * impl_->shape[1] + j]; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad() { impl_->grad.clear(); }

    /// Deep copy with fresh storage (used for checkpoint snapshots).
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend class Tape;
};

/// Reverse-mode tape over the fixed op set the model needs.
///
/// Every op validates shapes, computes the forward value with a fixed
/// left-to-right row-major summation order (forward results are bitwise
/// deterministic), and, when some input requires gradients, records a
/// backward rule. backward(loss) seeds d(loss)=1 and replays the rules in
/// reverse recording order, visiting each exactly once; leaf tensors with
/// requires_grad end up with their grad populated. A tape is consumed by
/// backward and must be reset() before it can run another backward pass.
///
/// Tapes and the tensors recorded on them are confined to one thread;
/// parallelism happens at the episode level with one tape per worker.
/// Input values must not be mutated between forward and backward.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// C[m x n] = A[m x k] * B[k x n].  dA += dC*B^T, dB += A^T*dC.
    Tensor matmul(const Tensor& a, const Tensor& b);

    /// Elementwise max(x, slope*x), slope in [0,1]. Backward passes 1 where
    /// x > 0 and slope elsewhere. Slope 1 is the identity.
    Tensor leaky_relu(const Tensor& x, double slope);

    /// Mean over the rows of x[m x d] -> [d]. Backward distributes 1/m.
    Tensor row_mean(const Tensor& x);

    /// out(i,n) = sum_j (q(i,j) - p(n,j))^2 for q[Q x d], p[N x d].
    Tensor pairwise_sq_dist(const Tensor& q, const Tensor& p);

    /// Mean over queries of -log softmax(logits)[label], max-stabilized.
    /// Backward produces (softmax - onehot)/Q.
    Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

    /// a*x + b*y elementwise; shapes must match exactly.
    Tensor axpby(double a, const Tensor& x, double b, const Tensor& y);

    /// a*x elementwise.
    Tensor scale(const Tensor& x, double a);

    /// x[m x d] + row-broadcast bias[d].
    Tensor add_row_vector(const Tensor& x, const Tensor& bias);

    /// Stack N same-length 1-D tensors into [N x d].
    Tensor stack_rows(const std::vector<Tensor>& rows);

    /// Elementwise product; shapes must match exactly.
    Tensor mul(const Tensor& a, const Tensor& b);

    /// Sum of all entries -> scalar.
    Tensor sum(const Tensor& x);

    /// Elementwise sqrt; entries must be >= 0. d/dx is 0.5/sqrt(x), with the
    /// subgradient 0 taken at x = 0.
    Tensor sqrt_elem(const Tensor& x);

    /// Reverse pass from a scalar loss. Rejected if the tape was already
    /// consumed or the loss is not a scalar.
    void backward(const Tensor& loss);

    /// Drop all recorded ops and re-arm the tape.
    void reset();

    std::size_t op_count() const { return records_.size(); }
    bool consumed() const { return consumed_; }

private:
    Tensor make_output(Shape shape, std::vector<double> values, bool requires_grad);
    void record(std::function<void()> backprop);

    std::vector<std::function<void()>> records_;
    bool consumed_ = false;
};

/// Max relative error between the analytic gradient of f at x and central
/// finite differences with the given step:
///   max_i |analytic_i - numeric_i| / max(1e-8, |analytic_i| + |numeric_i|).
/// f must be scalar-valued; it is re-evaluated 2*size(x) times on fresh tapes.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step);

} // namespace protoshift
