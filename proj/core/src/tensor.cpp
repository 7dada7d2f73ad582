#include "cspm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cspm {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

namespace {

using detail::TensorImpl;

void ensure_grad(TensorImpl& t) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), real_t(0));
}

ComputationGraph* tracking_graph(bool any_requires_grad) {
    if (!any_requires_grad) return nullptr;
    return ComputationGraph::current();
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<real_t>(static_cast<size_t>(n), real_t(0)));
}

Tensor Tensor::full(Shape shape, real_t value) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<real_t>(static_cast<size_t>(n), value));
}

Tensor Tensor::from(Shape shape, std::vector<real_t> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("Tensor::from: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(real_t value) { return from({}, {value}); }

Tensor Tensor::uniform(Shape shape, real_t lo, real_t hi, Rng& rng) {
    auto n = static_cast<size_t>(shape_numel(shape));
    std::vector<real_t> data(n);
    std::uniform_real_distribution<real_t> dist(lo, hi);
    for (auto& v : data) v = dist(rng);
    return from(std::move(shape), std::move(data));
}

Tensor Tensor::randn(Shape shape, Rng& rng) {
    auto n = static_cast<size_t>(shape_numel(shape));
    std::vector<real_t> data(n);
    std::normal_distribution<real_t> dist(real_t(0), real_t(1));
    for (auto& v : data) v = dist(rng);
    return from(std::move(shape), std::move(data));
}

std::span<const real_t> Tensor::grad() const {
    if (impl_->grad.empty())
        throw StateError("Tensor::grad: gradient not populated; run backward() first");
    return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), real_t(0)); }

real_t Tensor::value() const {
    if (numel() != 1)
        throw ShapeError("Tensor::value: expected a single-element tensor, got shape " +
                         shape_str(impl_->shape));
    return impl_->data[0];
}

real_t Tensor::at(std::initializer_list<int64_t> idx) const {
    if (idx.size() != impl_->shape.size())
        throw ShapeError("Tensor::at: rank mismatch for shape " + shape_str(impl_->shape));
    int64_t off = 0;
    size_t d = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= impl_->shape[d])
            throw ShapeError("Tensor::at: index out of range for shape " + shape_str(impl_->shape));
        off = off * impl_->shape[d] + i;
        ++d;
    }
    return impl_->data[static_cast<size_t>(off)];
}

bool Tensor::all_finite() const {
    for (real_t v : impl_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::check_finite(const std::string& name) const {
    for (size_t i = 0; i < impl_->data.size(); ++i)
        if (!std::isfinite(impl_->data[i]))
            throw NumericError(name + ": non-finite value at flat index " + std::to_string(i));
}

// ---- ComputationGraph ------------------------------------------------------

void ComputationGraph::backward(const Tensor& loss) {
    if (backward_done_)
        throw StateError("ComputationGraph::backward: already called; build a fresh graph");
    if (loss.numel() != 1)
        throw ShapeError("ComputationGraph::backward: loss must be a scalar, got shape " +
                         shape_str(loss.shape()));
    backward_done_ = true;
    loss.impl()->grad.assign(1, real_t(1));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---- broadcasting ----------------------------------------------------------

namespace {

struct BroadcastPlan {
    Shape out_shape;
    // Per-output-dimension strides into each operand; 0 where that operand is
    // stretched along the dimension.
    std::vector<int64_t> a_stride, b_stride;
    int64_t n = 0;
    bool same_shape = false;
};

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
    BroadcastPlan p;
    if (a == b) {
        p.out_shape = a;
        p.n = shape_numel(a);
        p.same_shape = true;
        return p;
    }
    size_t rank = std::max(a.size(), b.size());
    p.out_shape.resize(rank);
    Shape ap(rank, 1), bp(rank, 1);
    std::copy(a.begin(), a.end(), ap.begin() + static_cast<int64_t>(rank - a.size()));
    std::copy(b.begin(), b.end(), bp.begin() + static_cast<int64_t>(rank - b.size()));
    for (size_t d = 0; d < rank; ++d) {
        if (ap[d] == bp[d]) {
            p.out_shape[d] = ap[d];
        } else if (ap[d] == 1) {
            p.out_shape[d] = bp[d];
        } else if (bp[d] == 1) {
            p.out_shape[d] = ap[d];
        } else {
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        }
    }
    p.a_stride.resize(rank);
    p.b_stride.resize(rank);
    int64_t as = 1, bs = 1;
    for (size_t d = rank; d-- > 0;) {
        p.a_stride[d] = (ap[d] == 1) ? 0 : as;
        p.b_stride[d] = (bp[d] == 1) ? 0 : bs;
        as *= ap[d];
        bs *= bp[d];
    }
    p.n = shape_numel(p.out_shape);
    return p;
}

// Calls fn(out_index, a_offset, b_offset) for every output element.
template <typename Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
    if (p.same_shape) {
        for (int64_t i = 0; i < p.n; ++i) fn(i, i, i);
        return;
    }
    size_t rank = p.out_shape.size();
    std::vector<int64_t> idx(rank, 0);
    int64_t ao = 0, bo = 0;
    for (int64_t i = 0; i < p.n; ++i) {
        fn(i, ao, bo);
        for (size_t d = rank; d-- > 0;) {
            ++idx[d];
            ao += p.a_stride[d];
            bo += p.b_stride[d];
            if (idx[d] < p.out_shape[d]) break;
            ao -= p.a_stride[d] * p.out_shape[d];
            bo -= p.b_stride[d] * p.out_shape[d];
            idx[d] = 0;
        }
    }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
    auto plan = broadcast_plan(a.shape(), b.shape(), name);
    std::vector<real_t> out(static_cast<size_t>(plan.n));
    const auto& ad = a.impl()->data;
    const auto& bd = b.impl()->data;
    switch (op) {
        case BinOp::Add:
            for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) { out[static_cast<size_t>(i)] = ad[static_cast<size_t>(ao)] + bd[static_cast<size_t>(bo)]; });
            break;
        case BinOp::Sub:
            for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) { out[static_cast<size_t>(i)] = ad[static_cast<size_t>(ao)] - bd[static_cast<size_t>(bo)]; });
            break;
        case BinOp::Mul:
            for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) { out[static_cast<size_t>(i)] = ad[static_cast<size_t>(ao)] * bd[static_cast<size_t>(bo)]; });
            break;
    }
    Tensor result = Tensor::from(plan.out_shape, std::move(out));
    auto* g = tracking_graph(a.requires_grad() || b.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = result.impl();
        g->record([ai, bi, oi, plan, op]() {
            if (oi->grad.empty()) return;
            const auto& og = oi->grad;
            if (ai->requires_grad) {
                ensure_grad(*ai);
                auto& ag = ai->grad;
                const auto& bd2 = bi->data;
                switch (op) {
                    case BinOp::Add:
                    case BinOp::Sub:
                        for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t) { ag[static_cast<size_t>(ao)] += og[static_cast<size_t>(i)]; });
                        break;
                    case BinOp::Mul:
                        for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) { ag[static_cast<size_t>(ao)] += og[static_cast<size_t>(i)] * bd2[static_cast<size_t>(bo)]; });
                        break;
                }
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                auto& bg = bi->grad;
                const auto& ad2 = ai->data;
                switch (op) {
                    case BinOp::Add:
                        for_each_broadcast(plan, [&](int64_t i, int64_t, int64_t bo) { bg[static_cast<size_t>(bo)] += og[static_cast<size_t>(i)]; });
                        break;
                    case BinOp::Sub:
                        for_each_broadcast(plan, [&](int64_t i, int64_t, int64_t bo) { bg[static_cast<size_t>(bo)] -= og[static_cast<size_t>(i)]; });
                        break;
                    case BinOp::Mul:
                        for_each_broadcast(plan, [&](int64_t i, int64_t ao, int64_t bo) { bg[static_cast<size_t>(bo)] += og[static_cast<size_t>(i)] * ad2[static_cast<size_t>(ao)]; });
                        break;
                }
            }
        });
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinOp::Mul, "mul"); }

// ---- unary elementwise -----------------------------------------------------

namespace {

real_t stable_sigmoid(real_t x) {
    if (x >= real_t(0)) {
        return real_t(1) / (real_t(1) + std::exp(-x));
    }
    real_t e = std::exp(x);
    return e / (real_t(1) + e);
}

}  // namespace

Tensor relu(const Tensor& a) {
    std::vector<real_t> out(a.impl()->data.size());
    const auto& ad = a.impl()->data;
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > real_t(0) ? ad[i] : real_t(0);
    Tensor result = Tensor::from(a.shape(), std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i)
                if (ai->data[i] > real_t(0)) ai->grad[i] += oi->grad[i];
        });
    }
    return result;
}

Tensor sigmoid(const Tensor& a) {
    std::vector<real_t> out(a.impl()->data.size());
    const auto& ad = a.impl()->data;
    for (size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(ad[i]);
    Tensor result = Tensor::from(a.shape(), std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) {
                real_t y = oi->data[i];
                ai->grad[i] += oi->grad[i] * y * (real_t(1) - y);
            }
        });
    }
    return result;
}

Tensor tanh_op(const Tensor& a) {
    std::vector<real_t> out(a.impl()->data.size());
    const auto& ad = a.impl()->data;
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ad[i]);
    Tensor result = Tensor::from(a.shape(), std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) {
                real_t y = oi->data[i];
                ai->grad[i] += oi->grad[i] * (real_t(1) - y * y);
            }
        });
    }
    return result;
}

Tensor scale(const Tensor& a, real_t c) {
    std::vector<real_t> out(a.impl()->data.size());
    const auto& ad = a.impl()->data;
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * c;
    Tensor result = Tensor::from(a.shape(), std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi, c]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * c;
        });
    }
    return result;
}

Tensor add_scalar(const Tensor& a, real_t c) {
    std::vector<real_t> out(a.impl()->data.size());
    const auto& ad = a.impl()->data;
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + c;
    Tensor result = Tensor::from(a.shape(), std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
        });
    }
    return result;
}

// ---- matmul / transpose ----------------------------------------------------

namespace {

struct MatView {
    int64_t rows, cols;
    bool was_vector;
};

void gemm_acc(const real_t* A, const real_t* B, real_t* C, int64_t m, int64_t k, int64_t n) {
    // C[m x n] += A[m x k] * B[k x n], ikj order.
    for (int64_t i = 0; i < m; ++i) {
        real_t* crow = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
            real_t av = A[i * k + p];
            const real_t* brow = B + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m x k] += dC[m x n] * B^T, reading B row-major.
void gemm_acc_nt(const real_t* dC, const real_t* B, real_t* dA, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const real_t* crow = dC + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const real_t* brow = B + p * n;
            real_t acc = 0;
            for (int64_t j = 0; j < n; ++j) acc += crow[j] * brow[j];
            dA[i * k + p] += acc;
        }
    }
}

// dB[k x n] += A^T * dC, reading A row-major.
void gemm_acc_tn(const real_t* A, const real_t* dC, real_t* dB, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const real_t* arow = A + i * k;
        const real_t* crow = dC + i * n;
        for (int64_t p = 0; p < k; ++p) {
            real_t av = arow[p];
            real_t* brow = dB + p * n;
            for (int64_t j = 0; j < n; ++j) brow[j] += av * crow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 1 || as.size() > 2 || bs.size() < 1 || bs.size() > 2)
        throw ShapeError("matmul: expects rank-1 or rank-2 operands, got " + shape_str(as) +
                         " and " + shape_str(bs));
    MatView av{as.size() == 1 ? 1 : as[0], as.size() == 1 ? as[0] : as[1], as.size() == 1};
    MatView bv{bs.size() == 1 ? bs[0] : bs[0], bs.size() == 1 ? 1 : bs[1], bs.size() == 1};
    if (av.cols != bv.rows)
        throw ShapeError("matmul: inner dimensions differ for " + shape_str(as) + " and " +
                         shape_str(bs));
    int64_t m = av.rows, k = av.cols, n = bv.cols;
    std::vector<real_t> out(static_cast<size_t>(m * n), real_t(0));
    gemm_acc(a.impl()->data.data(), b.impl()->data.data(), out.data(), m, k, n);

    Shape out_shape;
    if (!av.was_vector) out_shape.push_back(m);
    if (!bv.was_vector) out_shape.push_back(n);
    Tensor result = Tensor::from(std::move(out_shape), std::move(out));

    auto* g = tracking_graph(a.requires_grad() || b.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = result.impl();
        g->record([ai, bi, oi, m, k, n]() {
            if (oi->grad.empty()) return;
            if (ai->requires_grad) {
                ensure_grad(*ai);
                gemm_acc_nt(oi->grad.data(), bi->data.data(), ai->grad.data(), m, k, n);
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                gemm_acc_tn(ai->data.data(), oi->grad.data(), bi->grad.data(), m, k, n);
            }
        });
    }
    return result;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2)
        throw ShapeError("transpose: expects a rank-2 tensor, got " + shape_str(a.shape()));
    int64_t m = a.dim(0), n = a.dim(1);
    std::vector<real_t> out(static_cast<size_t>(m * n));
    const auto& ad = a.impl()->data;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = ad[static_cast<size_t>(i * n + j)];
    Tensor result = Tensor::from({n, m}, std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi, m, n]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j)
                    ai->grad[static_cast<size_t>(i * n + j)] += oi->grad[static_cast<size_t>(j * m + i)];
        });
    }
    return result;
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(new_shape));
    Tensor result = Tensor::from(std::move(new_shape), a.impl()->data);
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (size_t k = 0; k < oi->grad.size(); ++k) ai->grad[k] += oi->grad[k];
        });
    }
    return result;
}

// ---- softmax ---------------------------------------------------------------

namespace {

int normalize_axis(int axis, int rank, const char* op) {
    int ax = axis < 0 ? axis + rank : axis;
    if (ax < 0 || ax >= rank)
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
    return ax;
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
    if (a.rank() == 0) throw ShapeError("softmax: scalar input has no axis");
    int ax = normalize_axis(axis, a.rank(), "softmax");
    const Shape& s = a.shape();
    int64_t outer = 1, inner = 1, n = s[static_cast<size_t>(ax)];
    for (int d = 0; d < ax; ++d) outer *= s[static_cast<size_t>(d)];
    for (int d = ax + 1; d < a.rank(); ++d) inner *= s[static_cast<size_t>(d)];

    const auto& ad = a.impl()->data;
    std::vector<real_t> out(ad.size());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * n * inner + in;
            real_t mx = ad[static_cast<size_t>(base)];
            for (int64_t i = 1; i < n; ++i) mx = std::max(mx, ad[static_cast<size_t>(base + i * inner)]);
            real_t denom = 0;
            for (int64_t i = 0; i < n; ++i) {
                real_t e = std::exp(ad[static_cast<size_t>(base + i * inner)] - mx);
                out[static_cast<size_t>(base + i * inner)] = e;
                denom += e;
            }
            for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(base + i * inner)] /= denom;
        }
    }
    Tensor result = Tensor::from(a.shape(), std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi, outer, inner, n]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    int64_t base = o * n * inner + in;
                    real_t dot = 0;
                    for (int64_t i = 0; i < n; ++i) {
                        size_t off = static_cast<size_t>(base + i * inner);
                        dot += oi->grad[off] * oi->data[off];
                    }
                    for (int64_t i = 0; i < n; ++i) {
                        size_t off = static_cast<size_t>(base + i * inner);
                        ai->grad[off] += oi->data[off] * (oi->grad[off] - dot);
                    }
                }
            }
        });
    }
    return result;
}

Tensor masked_softmax(const Tensor& a, const std::vector<bool>& mask) {
    if (a.rank() != 1)
        throw ShapeError("masked_softmax: expects a rank-1 tensor, got " + shape_str(a.shape()));
    if (static_cast<int64_t>(mask.size()) != a.numel())
        throw ShapeError("masked_softmax: mask length " + std::to_string(mask.size()) +
                         " does not match tensor shape " + shape_str(a.shape()));
    const auto& ad = a.impl()->data;
    int64_t n = a.numel();
    std::vector<int64_t> live;
    live.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        if (mask[static_cast<size_t>(i)]) live.push_back(i);

    std::vector<real_t> out(static_cast<size_t>(n), real_t(0));
    if (live.empty()) return Tensor::from(a.shape(), std::move(out));  // all-masked: zeros

    real_t mx = ad[static_cast<size_t>(live[0])];
    for (int64_t i : live) mx = std::max(mx, ad[static_cast<size_t>(i)]);
    real_t denom = 0;
    for (int64_t i : live) {
        real_t e = std::exp(ad[static_cast<size_t>(i)] - mx);
        out[static_cast<size_t>(i)] = e;
        denom += e;
    }
    for (int64_t i : live) out[static_cast<size_t>(i)] /= denom;

    Tensor result = Tensor::from(a.shape(), std::move(out));
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi, live]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            real_t dot = 0;
            for (int64_t i : live) {
                size_t off = static_cast<size_t>(i);
                dot += oi->grad[off] * oi->data[off];
            }
            for (int64_t i : live) {
                size_t off = static_cast<size_t>(i);
                ai->grad[off] += oi->data[off] * (oi->grad[off] - dot);
            }
        });
    }
    return result;
}

// ---- concat ----------------------------------------------------------------

Tensor concat(std::span<const Tensor> tensors, int axis) {
    if (tensors.empty()) throw ShapeError("concat: needs at least one tensor");
    int rank = tensors[0].rank();
    if (rank == 0) throw ShapeError("concat: cannot concatenate scalars; use rank-1 tensors");
    int ax = normalize_axis(axis, rank, "concat");
    Shape out_shape = tensors[0].shape();
    int64_t axis_total = 0;
    for (const Tensor& t : tensors) {
        if (t.rank() != rank)
            throw ShapeError("concat: rank mismatch between " + shape_str(tensors[0].shape()) +
                             " and " + shape_str(t.shape()));
        for (int d = 0; d < rank; ++d) {
            if (d == ax) continue;
            if (t.shape()[static_cast<size_t>(d)] != out_shape[static_cast<size_t>(d)])
                throw ShapeError("concat: incompatible shapes " + shape_str(tensors[0].shape()) +
                                 " and " + shape_str(t.shape()) + " along non-concat axis " +
                                 std::to_string(d));
        }
        axis_total += t.shape()[static_cast<size_t>(ax)];
    }
    out_shape[static_cast<size_t>(ax)] = axis_total;

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < ax; ++d) outer *= out_shape[static_cast<size_t>(d)];
    for (int d = ax + 1; d < rank; ++d) inner *= out_shape[static_cast<size_t>(d)];

    std::vector<real_t> out(static_cast<size_t>(shape_numel(out_shape)));
    int64_t axis_off = 0;
    bool any_grad = false;
    for (const Tensor& t : tensors) {
        int64_t tn = t.shape()[static_cast<size_t>(ax)];
        const auto& td = t.impl()->data;
        for (int64_t o = 0; o < outer; ++o) {
            const real_t* src = td.data() + o * tn * inner;
            real_t* dst = out.data() + (o * axis_total + axis_off) * inner;
            std::copy(src, src + tn * inner, dst);
        }
        axis_off += tn;
        any_grad = any_grad || t.requires_grad();
    }
    Tensor result = Tensor::from(std::move(out_shape), std::move(out));
    auto* g = tracking_graph(any_grad);
    if (g) {
        result.set_requires_grad(true);
        std::vector<std::shared_ptr<detail::TensorImpl>> parts;
        parts.reserve(tensors.size());
        for (const Tensor& t : tensors) parts.push_back(t.impl());
        auto oi = result.impl();
        g->record([parts, oi, outer, inner, axis_total]() {
            if (oi->grad.empty()) return;
            int64_t axis_off2 = 0;
            for (const auto& part : parts) {
                int64_t tn = static_cast<int64_t>(part->data.size()) / std::max<int64_t>(outer * inner, 1);
                if (part->requires_grad) {
                    ensure_grad(*part);
                    for (int64_t o = 0; o < outer; ++o) {
                        const real_t* src = oi->grad.data() + (o * axis_total + axis_off2) * inner;
                        real_t* dst = part->grad.data() + o * tn * inner;
                        for (int64_t i = 0; i < tn * inner; ++i) dst[i] += src[i];
                    }
                }
                axis_off2 += tn;
            }
        });
    }
    return result;
}

// ---- cosine similarity -----------------------------------------------------

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("cosine_similarity: shapes differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const auto& ad = a.impl()->data;
    const auto& bd = b.impl()->data;
    real_t dot = 0, na2 = 0, nb2 = 0;
    for (size_t i = 0; i < ad.size(); ++i) {
        dot += ad[i] * bd[i];
        na2 += ad[i] * ad[i];
        nb2 += bd[i] * bd[i];
    }
    real_t na = std::sqrt(na2), nb = std::sqrt(nb2);
    constexpr real_t kNormEps = real_t(1e-12);
    if (na <= kNormEps || nb <= kNormEps)
        throw NumericError("cosine_similarity: degenerate vector with near-zero norm");
    real_t cosv = dot / (na * nb);
    cosv = std::clamp(cosv, real_t(-1), real_t(1));
    Tensor result = Tensor::scalar(cosv);
    auto* g = tracking_graph(a.requires_grad() || b.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = result.impl();
        g->record([ai, bi, oi, dot, na, nb]() {
            if (oi->grad.empty()) return;
            real_t go = oi->grad[0];
            real_t inv = real_t(1) / (na * nb);
            if (ai->requires_grad) {
                ensure_grad(*ai);
                real_t aa = dot / (na * na);
                for (size_t i = 0; i < ai->data.size(); ++i)
                    ai->grad[i] += go * inv * (bi->data[i] - aa * ai->data[i]);
            }
            if (bi->requires_grad) {
                ensure_grad(*bi);
                real_t bb = dot / (nb * nb);
                for (size_t i = 0; i < bi->data.size(); ++i)
                    bi->grad[i] += go * inv * (ai->data[i] - bb * bi->data[i]);
            }
        });
    }
    return result;
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
    real_t acc = 0;
    for (real_t v : a.impl()->data) acc += v;
    Tensor result = Tensor::scalar(acc);
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            real_t go = oi->grad[0];
            for (auto& v : ai->grad) v += go;
        });
    }
    return result;
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean: empty tensor");
    real_t acc = 0;
    for (real_t v : a.impl()->data) acc += v;
    real_t inv = real_t(1) / static_cast<real_t>(a.numel());
    Tensor result = Tensor::scalar(acc * inv);
    auto* g = tracking_graph(a.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ai = a.impl(), oi = result.impl();
        g->record([ai, oi, inv]() {
            if (oi->grad.empty() || !ai->requires_grad) return;
            ensure_grad(*ai);
            real_t go = oi->grad[0] * inv;
            for (auto& v : ai->grad) v += go;
        });
    }
    return result;
}

// ---- gather ----------------------------------------------------------------

Tensor gather_rows(const Tensor& table, std::span<const int64_t> ids) {
    if (table.rank() != 2)
        throw ShapeError("gather_rows: table must be rank-2, got " + shape_str(table.shape()));
    int64_t v = table.dim(0), d = table.dim(1);
    for (int64_t id : ids)
        if (id < 0 || id >= v)
            throw ShapeError("gather_rows: row " + std::to_string(id) + " out of range [0, " +
                             std::to_string(v) + ")");
    int64_t n = static_cast<int64_t>(ids.size());
    std::vector<real_t> out(static_cast<size_t>(n * d));
    const auto& td = table.impl()->data;
    for (int64_t r = 0; r < n; ++r)
        std::copy(td.begin() + ids[static_cast<size_t>(r)] * d, td.begin() + (ids[static_cast<size_t>(r)] + 1) * d,
                  out.begin() + r * d);
    Tensor result = Tensor::from({n, d}, std::move(out));
    auto* g = tracking_graph(table.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto ti = table.impl(), oi = result.impl();
        std::vector<int64_t> idv(ids.begin(), ids.end());
        g->record([ti, oi, idv, d]() {
            if (oi->grad.empty() || !ti->requires_grad) return;
            ensure_grad(*ti);
            for (size_t r = 0; r < idv.size(); ++r) {
                const real_t* src = oi->grad.data() + static_cast<int64_t>(r) * d;
                real_t* dst = ti->grad.data() + idv[r] * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return result;
}

// ---- losses ----------------------------------------------------------------

Tensor bce_with_logits(const Tensor& logits, std::span<const real_t> labels) {
    if (static_cast<size_t>(logits.numel()) != labels.size())
        throw ShapeError("bce_with_logits: " + std::to_string(logits.numel()) + " logits vs " +
                         std::to_string(labels.size()) + " labels");
    if (logits.numel() == 0) throw ShapeError("bce_with_logits: empty batch");
    const auto& zd = logits.impl()->data;
    real_t acc = 0;
    for (size_t i = 0; i < zd.size(); ++i) {
        real_t z = zd[i], y = labels[i];
        acc += std::max(z, real_t(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    real_t inv = real_t(1) / static_cast<real_t>(zd.size());
    Tensor result = Tensor::scalar(acc * inv);
    auto* g = tracking_graph(logits.requires_grad());
    if (g) {
        result.set_requires_grad(true);
        auto zi = logits.impl(), oi = result.impl();
        std::vector<real_t> y(labels.begin(), labels.end());
        g->record([zi, oi, y, inv]() {
            if (oi->grad.empty() || !zi->requires_grad) return;
            ensure_grad(*zi);
            real_t go = oi->grad[0] * inv;
            for (size_t i = 0; i < zi->data.size(); ++i)
                zi->grad[i] += go * (stable_sigmoid(zi->data[i]) - y[i]);
        });
    }
    return result;
}

}  // namespace cspm
