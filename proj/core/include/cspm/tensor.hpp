#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cspm/errors.hpp"
#include "cspm/rng.hpp"

namespace cspm {

#ifdef CSPM_SINGLE_PRECISION
using real_t = float;
#else
using real_t = double;
#endif

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<real_t> data;
    std::vector<real_t> grad;  // empty until backward touches this tensor
    bool requires_grad = false;
};
}  // namespace detail

/// Dense tensor with optional reverse-mode gradient tracking.
///
/// Tensor is a value type with shared ownership of its storage: copies alias
/// the same data, as in the usual autograd idiom. Gradients are tracked only
/// while a ComputationGraph is active (see GraphScope); outside a graph all
/// operations are plain forward evaluation.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, real_t value);
    static Tensor from(Shape shape, std::vector<real_t> data);
    static Tensor scalar(real_t value);
    /// Uniform values in [lo, hi).
    static Tensor uniform(Shape shape, real_t lo, real_t hi, Rng& rng);
    static Tensor randn(Shape shape, Rng& rng);

    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
    int64_t dim(int axis) const { return impl_->shape.at(static_cast<size_t>(axis)); }

    std::span<const real_t> data() const { return impl_->data; }
    /// Direct mutable access to storage; used by the optimizer and test
    /// harnesses. Never mutate a tensor that is part of a live graph.
    std::vector<real_t>& mutable_data() { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const real_t> grad() const;
    std::vector<real_t>& mutable_grad() { return impl_->grad; }
    /// Allocates (if needed) and clears the gradient buffer.
    void zero_grad();

    /// Value of a single-element tensor.
    real_t value() const;
    real_t at(std::initializer_list<int64_t> idx) const;

    bool all_finite() const;
    /// Throws NumericError mentioning `name` if any entry is NaN/Inf.
    void check_finite(const std::string& name) const;

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Tape of executed operations. Ops append their backward step as they run;
/// backward() replays the tape in exact reverse execution order.
/// One graph per training step; graphs must not be shared across threads.
class ComputationGraph {
public:
    ComputationGraph() = default;
    ComputationGraph(const ComputationGraph&) = delete;
    ComputationGraph& operator=(const ComputationGraph&) = delete;

    void record(std::function<void()> backward_step) { nodes_.push_back(std::move(backward_step)); }

    /// Seeds d(loss)/d(loss) = 1 and propagates. The loss must be a scalar
    /// produced while this graph was active. A second call without a fresh
    /// graph is a StateError.
    void backward(const Tensor& loss);

    size_t node_count() const { return nodes_.size(); }
    static ComputationGraph* current() { return current_; }

private:
    friend class GraphScope;
    inline static thread_local ComputationGraph* current_ = nullptr;
    std::vector<std::function<void()>> nodes_;
    bool backward_done_ = false;
};

/// Makes a graph the recording target for the current thread (define-by-run).
class GraphScope {
public:
    explicit GraphScope(ComputationGraph& g) : prev_(ComputationGraph::current_) {
        ComputationGraph::current_ = &g;
    }
    ~GraphScope() { ComputationGraph::current_ = prev_; }
    GraphScope(const GraphScope&) = delete;
    GraphScope& operator=(const GraphScope&) = delete;

private:
    ComputationGraph* prev_;
};

// ---- operations ------------------------------------------------------------
// Binary elementwise ops broadcast right-aligned: shapes are padded with
// leading 1s and a dimension of 1 stretches. Gradients reduce back over the
// stretched dimensions.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);

Tensor scale(const Tensor& a, real_t c);
Tensor add_scalar(const Tensor& a, real_t c);

/// Matrix product. 2-D x 2-D per the usual [m x k][k x n] rule; a rank-1
/// operand is treated as [1 x k] (lhs) or [k x 1] (rhs) and the unit
/// dimension is dropped from the result, so vec.mat, mat.vec and vec.vec
/// (dot product, scalar result) all work.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Softmax along `axis` (negative axes count from the end). Row max is
/// subtracted before exponentiation.
Tensor softmax(const Tensor& a, int axis = -1);
/// Rank-1 softmax over the unmasked positions only; masked outputs are
/// exactly 0 and receive no gradient. An all-masked input yields all zeros.
Tensor masked_softmax(const Tensor& a, const std::vector<bool>& mask);

Tensor concat(std::span<const Tensor> tensors, int axis);
inline Tensor concat(const std::vector<Tensor>& tensors, int axis) {
    return concat(std::span<const Tensor>(tensors), axis);
}

/// Same data, new shape; element counts must agree.
Tensor reshape(const Tensor& a, Shape new_shape);

/// Cosine similarity of two same-shape tensors viewed as flat vectors.
/// Throws NumericError if either norm is <= 1e-12.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Gathers rows of a [V x d] table; backward scatters into the visited rows.
Tensor gather_rows(const Tensor& table, std::span<const int64_t> ids);

/// Mean binary cross entropy over sigmoid(logits), evaluated in the stable
/// logit form max(z,0) - z*y + log1p(exp(-|z|)).
Tensor bce_with_logits(const Tensor& logits, std::span<const real_t> labels);

}  // namespace cspm
