#include "protoshift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace protoshift {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::size_t checked_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

void ensure_grad(detail::TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2)
        throw ShapeError(std::string(what) + " must be 2-D, got " + shape_str(t.shape()));
}

} // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
    std::size_t n = checked_size(shape);
    if (n != values.size())
        throw ShapeError("shape " + shape_str(shape) + " wants " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = checked_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = checked_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
    if (rows.empty()) throw ShapeError("matrix() needs at least one row");
    std::size_t cols = rows[0].size();
    std::vector<double> flat;
    flat.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw ShapeError("matrix() rows have unequal lengths");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(flat), requires_grad);
}

double Tensor::item() const {
    if (size() != 1)
        throw ShapeError("item() needs a scalar, got shape " + shape_str(shape()));
    return impl_->values[0];
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty())
        throw ValueError("tensor has no gradient; run backward() first");
    return impl_->grad;
}

Tensor Tensor::clone() const {
    Tensor out(impl_->shape, impl_->values, impl_->requires_grad);
    return out;
}

Tensor Tape::make_output(Shape shape, std::vector<double> values, bool requires_grad) {
    Tensor out(std::move(shape), std::move(values), requires_grad);
    return out;
}

void Tape::record(std::function<void()> backprop) {
    records_.push_back(std::move(backprop));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul lhs");
    require_matrix(b, "matmul rhs");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += av[i * k + kk] * bv[kk * n + j];
            out[i * n + j] = acc;
        }
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor c = make_output({m, n}, std::move(out), rg);
    if (rg) {
        auto ai = a.impl(), bi = b.impl(), ci = c.impl();
        record([ai, bi, ci, m, k, n] {
            if (ci->grad.empty()) return;
            const double* dc = ci->grad.data();
            if (ai->requires_grad) {
                ensure_grad(*ai);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            acc += dc[i * n + j] * bi->values[kk * n + j];
                        ai->grad[i * k + kk] += acc;
                    }
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                for (std::size_t kk = 0; kk < k; ++kk)
                    for (std::size_t j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            acc += ai->values[i * k + kk] * dc[i * n + j];
                        bi->grad[kk * n + j] += acc;
                    }
            }
        });
    }
    return c;
}

Tensor Tape::leaky_relu(const Tensor& x, double slope) {
    if (slope < 0.0 || slope > 1.0)
        throw ValueError("leaky_relu slope must be in [0,1], got " + std::to_string(slope));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x.values()[i];
        out[i] = v > 0.0 ? v : slope * v;
    }
    bool rg = x.requires_grad();
    Tensor y = make_output(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        record([xi, yi, slope] {
            if (yi->grad.empty()) return;
            ensure_grad(*xi);
            for (std::size_t i = 0; i < xi->values.size(); ++i)
                xi->grad[i] += yi->grad[i] * (xi->values[i] > 0.0 ? 1.0 : slope);
        });
    }
    return y;
}

Tensor Tape::row_mean(const Tensor& x) {
    require_matrix(x, "row_mean input");
    const std::size_t m = x.shape()[0], d = x.shape()[1];
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) out[j] += x.at(i, j);
    for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(m);
    bool rg = x.requires_grad();
    Tensor y = make_output({d}, std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        record([xi, yi, m, d] {
            if (yi->grad.empty()) return;
            ensure_grad(*xi);
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < d; ++j) xi->grad[i * d + j] += yi->grad[j] * inv;
        });
    }
    return y;
}

Tensor Tape::pairwise_sq_dist(const Tensor& q, const Tensor& p) {
    require_matrix(q, "pairwise_sq_dist queries");
    require_matrix(p, "pairwise_sq_dist prototypes");
    const std::size_t Q = q.shape()[0], d = q.shape()[1];
    const std::size_t N = p.shape()[0];
    if (p.shape()[1] != d)
        throw ShapeError("pairwise_sq_dist feature dims disagree: " + shape_str(q.shape()) +
                         " vs " + shape_str(p.shape()));
    std::vector<double> out(Q * N, 0.0);
    for (std::size_t i = 0; i < Q; ++i)
        for (std::size_t n = 0; n < N; ++n) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = q.at(i, j) - p.at(n, j);
                acc += diff * diff;
            }
            out[i * N + n] = acc;
        }
    bool rg = q.requires_grad() || p.requires_grad();
    Tensor y = make_output({Q, N}, std::move(out), rg);
    if (rg) {
        auto qi = q.impl(), pi = p.impl(), yi = y.impl();
        record([qi, pi, yi, Q, N, d] {
            if (yi->grad.empty()) return;
            const double* dy = yi->grad.data();
            if (qi->requires_grad) ensure_grad(*qi);
            if (pi->requires_grad) ensure_grad(*pi);
            for (std::size_t i = 0; i < Q; ++i)
                for (std::size_t n = 0; n < N; ++n) {
                    double g = dy[i * N + n];
                    if (g == 0.0) continue;
                    for (std::size_t j = 0; j < d; ++j) {
                        double diff = qi->values[i * d + j] - pi->values[n * d + j];
                        if (qi->requires_grad) qi->grad[i * d + j] += g * 2.0 * diff;
                        if (pi->requires_grad) pi->grad[n * d + j] -= g * 2.0 * diff;
                    }
                }
        });
    }
    return y;
}

Tensor Tape::softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_matrix(logits, "softmax_cross_entropy logits");
    const std::size_t Q = logits.shape()[0], N = logits.shape()[1];
    if (labels.size() != Q)
        throw ShapeError("softmax_cross_entropy got " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(Q) + " rows");
    for (int lab : labels)
        if (lab < 0 || static_cast<std::size_t>(lab) >= N)
            throw ValueError("label " + std::to_string(lab) + " out of range [0," +
                             std::to_string(N) + ")");
    // Row-stabilized softmax saved for the backward rule.
    std::vector<double> probs(Q * N);
    double loss = 0.0;
    for (std::size_t i = 0; i < Q; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t n = 1; n < N; ++n) mx = std::max(mx, logits.at(i, n));
        double denom = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            double e = std::exp(logits.at(i, n) - mx);
            probs[i * N + n] = e;
            denom += e;
        }
        for (std::size_t n = 0; n < N; ++n) probs[i * N + n] /= denom;
        loss += std::log(denom) - (logits.at(i, static_cast<std::size_t>(labels[i])) - mx);
    }
    loss /= static_cast<double>(Q);
    bool rg = logits.requires_grad();
    Tensor y = make_output({}, {loss}, rg);
    if (rg) {
        auto li = logits.impl(), yi = y.impl();
        record([li, yi, probs = std::move(probs), labels, Q, N] {
            if (yi->grad.empty()) return;
            ensure_grad(*li);
            const double g = yi->grad[0] / static_cast<double>(Q);
            for (std::size_t i = 0; i < Q; ++i)
                for (std::size_t n = 0; n < N; ++n) {
                    double onehot = (static_cast<std::size_t>(labels[i]) == n) ? 1.0 : 0.0;
                    li->grad[i * N + n] += g * (probs[i * N + n] - onehot);
                }
        });
    }
    return y;
}

Tensor Tape::axpby(double a, const Tensor& x, double b, const Tensor& y) {
    if (x.shape() != y.shape())
        throw ShapeError("axpby shapes disagree: " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x.values()[i] + b * y.values()[i];
    bool rg = x.requires_grad() || y.requires_grad();
    Tensor z = make_output(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl(), zi = z.impl();
        record([xi, yi, zi, a, b] {
            if (zi->grad.empty()) return;
            if (xi->requires_grad) {
                ensure_grad(*xi);
                for (std::size_t i = 0; i < zi->grad.size(); ++i) xi->grad[i] += a * zi->grad[i];
            }
            if (yi->requires_grad) {
                ensure_grad(*yi);
                for (std::size_t i = 0; i < zi->grad.size(); ++i) yi->grad[i] += b * zi->grad[i];
            }
        });
    }
    return z;
}

Tensor Tape::scale(const Tensor& x, double a) { return axpby(a, x, 0.0, x); }

Tensor Tape::add_row_vector(const Tensor& x, const Tensor& bias) {
    require_matrix(x, "add_row_vector input");
    if (bias.rank() != 1)
        throw ShapeError("add_row_vector bias must be 1-D, got " + shape_str(bias.shape()));
    const std::size_t m = x.shape()[0], d = x.shape()[1];
    if (bias.shape()[0] != d)
        throw ShapeError("add_row_vector bias length " + shape_str(bias.shape()) +
                         " does not match " + shape_str(x.shape()));
    std::vector<double> out(m * d);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.at(i, j) + bias.at(j);
    bool rg = x.requires_grad() || bias.requires_grad();
    Tensor y = make_output({m, d}, std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), bi = bias.impl(), yi = y.impl();
        record([xi, bi, yi, m, d] {
            if (yi->grad.empty()) return;
            if (xi->requires_grad) {
                ensure_grad(*xi);
                for (std::size_t i = 0; i < m * d; ++i) xi->grad[i] += yi->grad[i];
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < d; ++j) bi->grad[j] += yi->grad[i * d + j];
            }
        });
    }
    return y;
}

Tensor Tape::stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows needs at least one row");
    const std::size_t d = rows[0].size();
    bool rg = false;
    for (const Tensor& r : rows) {
        if (r.rank() != 1)
            throw ShapeError("stack_rows inputs must be 1-D, got " + shape_str(r.shape()));
        if (r.size() != d) throw ShapeError("stack_rows inputs have unequal lengths");
        rg = rg || r.requires_grad();
    }
    std::vector<double> out;
    out.reserve(rows.size() * d);
    for (const Tensor& r : rows) out.insert(out.end(), r.values().begin(), r.values().end());
    Tensor y = make_output({rows.size(), d}, std::move(out), rg);
    if (rg) {
        std::vector<std::shared_ptr<detail::TensorImpl>> imps;
        imps.reserve(rows.size());
        for (const Tensor& r : rows) imps.push_back(r.impl());
        auto yi = y.impl();
        record([imps = std::move(imps), yi, d] {
            if (yi->grad.empty()) return;
            for (std::size_t i = 0; i < imps.size(); ++i) {
                if (!imps[i]->requires_grad) continue;
                ensure_grad(*imps[i]);
                for (std::size_t j = 0; j < d; ++j) imps[i]->grad[j] += yi->grad[i * d + j];
            }
        });
    }
    return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    bool rg = a.requires_grad() || b.requires_grad();
    Tensor y = make_output(a.shape(), std::move(out), rg);
    if (rg) {
        auto ai = a.impl(), bi = b.impl(), yi = y.impl();
        record([ai, bi, yi] {
            if (yi->grad.empty()) return;
            if (ai->requires_grad) {
                ensure_grad(*ai);
                for (std::size_t i = 0; i < yi->grad.size(); ++i)
                    ai->grad[i] += yi->grad[i] * bi->values[i];
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                for (std::size_t i = 0; i < yi->grad.size(); ++i)
                    bi->grad[i] += yi->grad[i] * ai->values[i];
            }
        });
    }
    return y;
}

Tensor Tape::sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    bool rg = x.requires_grad();
    Tensor y = make_output({}, {acc}, rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        record([xi, yi] {
            if (yi->grad.empty()) return;
            ensure_grad(*xi);
            for (double& g : xi->grad) g += yi->grad[0];
        });
    }
    return y;
}

Tensor Tape::sqrt_elem(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x.values()[i];
        if (v < 0.0) throw ValueError("sqrt_elem input has a negative entry");
        out[i] = std::sqrt(v);
    }
    bool rg = x.requires_grad();
    Tensor y = make_output(x.shape(), std::move(out), rg);
    if (rg) {
        auto xi = x.impl(), yi = y.impl();
        record([xi, yi] {
            if (yi->grad.empty()) return;
            ensure_grad(*xi);
            for (std::size_t i = 0; i < yi->grad.size(); ++i)
                if (yi->values[i] > 0.0) xi->grad[i] += yi->grad[i] * 0.5 / yi->values[i];
        });
    }
    return y;
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
    if (consumed_)
        throw ValueError("tape already consumed by backward(); call reset() first");
    consumed_ = true;
    auto li = loss.impl();
    li->grad.assign(1, 1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

void Tape::reset() {
    records_.clear();
    consumed_ = false;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double step) {
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    Tape tape;
    Tensor y = f(tape, probe);
    if (y.size() != 1)
        throw ShapeError("grad_check needs a scalar-valued function, got shape " +
                         shape_str(y.shape()));
    tape.backward(y);
    std::vector<double> analytic(probe.size(), 0.0);
    if (probe.has_grad()) analytic = probe.grad();

    auto eval = [&](const std::vector<double>& vals) {
        Tensor t(x.shape(), vals, false);
        Tape local;
        return f(local, t).item();
    };

    double worst = 0.0;
    std::vector<double> vals = x.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double orig = vals[i];
        vals[i] = orig + step;
        double up = eval(vals);
        vals[i] = orig - step;
        double down = eval(vals);
        vals[i] = orig;
        double numeric = (up - down) / (2.0 * step);
        double err = std::abs(analytic[i] - numeric) /
                     std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace protoshift
