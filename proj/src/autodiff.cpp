#include "autodiff.hpp"

#include <cmath>
#include <unordered_map>
#include <utility>

namespace mnif::ad {

namespace {

Var make_node(Op op, std::vector<Var> inputs, Tensor value) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->inputs = std::move(inputs);
    n->value = std::move(value);
    for (const auto& in : n->inputs)
        if (in->requires_grad) {
            n->requires_grad = true;
            break;
        }
    return n;
}

bool scalar_like(const Tensor& t) { return t.numel() == 1; }

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 operand, got " + t.shape_string());
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
    Tensor out(a.shape());
    const float* src = a.data().data();
    float* dst = out.data().data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] = f(src[i]);
    return out;
}

enum class Bin { kAdd, kSub, kMul };

Tensor binary_value(Bin which, const Tensor& a, const Tensor& b, const char* name) {
    auto apply = [which](float x, float y) {
        switch (which) {
            case Bin::kAdd: return x + y;
            case Bin::kSub: return x - y;
            default: return x * y;
        }
    };
    if (a.same_shape(b)) {
        Tensor out(a.shape());
        const int64_t n = a.numel();
        for (int64_t i = 0; i < n; ++i) out[i] = apply(a[i], b[i]);
        return out;
    }
    if (scalar_like(b)) {
        const float y = b[0];
        return map_unary(a, [&](float x) { return apply(x, y); });
    }
    if (scalar_like(a)) {
        const float x = a[0];
        Tensor out(b.shape());
        const int64_t n = b.numel();
        for (int64_t i = 0; i < n; ++i) out[i] = apply(x, b[i]);
        return out;
    }
    throw ShapeError(std::string(name) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string() +
                     " (only scalar broadcast is supported)");
}

Var step(const Var& a) {
    auto n = make_node(Op::kStep, {a}, map_unary(a->value, [](float x) { return x > 0.0f ? 1.0f : 0.0f; }));
    n->requires_grad = false;
    return n;
}

Var elu_grad(const Var& a) {
    return make_node(Op::kEluGrad, {a},
                     map_unary(a->value, [](float x) { return x > 0.0f ? 1.0f : std::exp(x); }));
}

Var elu_curv(const Var& a) {
    return make_node(Op::kEluCurv, {a},
                     map_unary(a->value, [](float x) { return x > 0.0f ? 0.0f : std::exp(x); }));
}

Var pad_flat(const Var& a, int64_t offset, Shape target) {
    Tensor out(target);
    const int64_t len = a->value.numel();
    if (offset < 0 || offset + len > out.numel())
        throw ShapeError("pad_flat: segment [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                         ") exceeds " + shape_str(target));
    for (int64_t i = 0; i < len; ++i) out[offset + i] = a->value[i];
    auto n = make_node(Op::kPadFlat, {a}, std::move(out));
    n->attr_i0 = offset;
    n->attr_shape = std::move(target);
    return n;
}

Var pad_cols(const Var& a, int64_t c0, int64_t total_cols) {
    require_rank2(a->value, "pad_cols");
    const int64_t rows = a->value.rows(), w = a->value.cols();
    if (c0 < 0 || c0 + w > total_cols) throw ShapeError("pad_cols: column window out of range");
    Tensor out({rows, total_cols});
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < w; ++j) out.at2(i, c0 + j) = a->value.at2(i, j);
    auto n = make_node(Op::kPadCols, {a}, std::move(out));
    n->attr_i0 = c0;
    n->attr_i1 = total_cols;
    return n;
}

Var bcast_rows(const Var& v, int64_t n_rows) {
    if (v->value.rank() != 1) throw ShapeError("bcast_rows: expected rank-1 operand, got " + v->value.shape_string());
    const int64_t k = v->value.numel();
    Tensor out({n_rows, k});
    for (int64_t i = 0; i < n_rows; ++i)
        for (int64_t j = 0; j < k; ++j) out.at2(i, j) = v->value[j];
    auto n = make_node(Op::kBcastRows, {v}, std::move(out));
    n->attr_i0 = n_rows;
    return n;
}

Var bcast_cols(const Var& u, int64_t n_cols) {
    if (u->value.rank() != 1) throw ShapeError("bcast_cols: expected rank-1 operand, got " + u->value.shape_string());
    const int64_t m = u->value.numel();
    Tensor out({m, n_cols});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n_cols; ++j) out.at2(i, j) = u->value[i];
    auto n = make_node(Op::kBcastCols, {u}, std::move(out));
    n->attr_i0 = n_cols;
    return n;
}

}  // namespace

Var leaf(Tensor v) {
    auto n = make_node(Op::kLeaf, {}, std::move(v));
    n->requires_grad = true;
    return n;
}

Var constant(Tensor v) { return make_node(Op::kConst, {}, std::move(v)); }

Var detach(const Var& v) { return constant(v->value); }

Var add(const Var& a, const Var& b) { return make_node(Op::kAdd, {a, b}, binary_value(Bin::kAdd, a->value, b->value, "add")); }
Var sub(const Var& a, const Var& b) { return make_node(Op::kSub, {a, b}, binary_value(Bin::kSub, a->value, b->value, "sub")); }
Var mul(const Var& a, const Var& b) { return make_node(Op::kMul, {a, b}, binary_value(Bin::kMul, a->value, b->value, "mul")); }

Var neg(const Var& a) { return make_node(Op::kNeg, {a}, map_unary(a->value, [](float x) { return -x; })); }

Var scale(const Var& a, float c) {
    auto n = make_node(Op::kScale, {a}, map_unary(a->value, [c](float x) { return x * c; }));
    n->attr_f = c;
    return n;
}

Var add_scalar(const Var& a, float c) {
    auto n = make_node(Op::kAddC, {a}, map_unary(a->value, [c](float x) { return x + c; }));
    n->attr_f = c;
    return n;
}

Var sin(const Var& a) { return make_node(Op::kSin, {a}, map_unary(a->value, [](float x) { return std::sin(x); })); }
Var cos(const Var& a) { return make_node(Op::kCos, {a}, map_unary(a->value, [](float x) { return std::cos(x); })); }
Var exp(const Var& a) { return make_node(Op::kExp, {a}, map_unary(a->value, [](float x) { return std::exp(x); })); }

Var sigmoid(const Var& a) {
    return make_node(Op::kSigmoid, {a}, map_unary(a->value, [](float x) { return 1.0f / (1.0f + std::exp(-x)); }));
}

Var relu(const Var& a) { return make_node(Op::kRelu, {a}, map_unary(a->value, [](float x) { return x > 0.0f ? x : 0.0f; })); }

Var elu(const Var& a) {
    return make_node(Op::kElu, {a}, map_unary(a->value, [](float x) { return x > 0.0f ? x : std::exp(x) - 1.0f; }));
}

Var matmul(const Var& a, const Var& b) { return make_node(Op::kMatmul, {a, b}, mnif::matmul(a->value, b->value)); }

Var transpose(const Var& a) { return make_node(Op::kTranspose, {a}, mnif::transpose(a->value)); }

Var reshape(const Var& a, Shape shape) {
    if (shape_numel(shape) != a->value.numel())
        throw ShapeError("reshape: cannot view " + a->value.shape_string() + " as " + shape_str(shape));
    auto n = make_node(Op::kReshape, {a}, Tensor(shape, a->value.data()));
    n->attr_shape = std::move(shape);
    return n;
}

Var slice_flat(const Var& a, int64_t offset, int64_t len) {
    if (offset < 0 || len < 0 || offset + len > a->value.numel())
        throw ShapeError("slice_flat: segment [" + std::to_string(offset) + "," + std::to_string(offset + len) +
                         ") exceeds " + a->value.shape_string());
    Tensor out({len});
    for (int64_t i = 0; i < len; ++i) out[i] = a->value[offset + i];
    auto n = make_node(Op::kSliceFlat, {a}, std::move(out));
    n->attr_i0 = offset;
    n->attr_i1 = len;
    return n;
}

Var slice_cols(const Var& a, int64_t c0, int64_t c1) {
    require_rank2(a->value, "slice_cols");
    const int64_t rows = a->value.rows(), k = a->value.cols();
    if (c0 < 0 || c1 < c0 || c1 > k)
        throw ShapeError("slice_cols: window [" + std::to_string(c0) + "," + std::to_string(c1) + ") exceeds " +
                         a->value.shape_string());
    Tensor out({rows, c1 - c0});
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = c0; j < c1; ++j) out.at2(i, j - c0) = a->value.at2(i, j);
    auto n = make_node(Op::kSliceCols, {a}, std::move(out));
    n->attr_i0 = c0;
    n->attr_i1 = c1;
    return n;
}

Var concat_cols(const Var& a, const Var& b) {
    require_rank2(a->value, "concat_cols");
    require_rank2(b->value, "concat_cols");
    if (a->value.rows() != b->value.rows())
        throw ShapeError("concat_cols: row mismatch " + a->value.shape_string() + " vs " + b->value.shape_string());
    const int64_t m = a->value.rows(), p = a->value.cols(), q = b->value.cols();
    Tensor out({m, p + q});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < p; ++j) out.at2(i, j) = a->value.at2(i, j);
        for (int64_t j = 0; j < q; ++j) out.at2(i, p + j) = b->value.at2(i, j);
    }
    return make_node(Op::kConcatCols, {a, b}, std::move(out));
}

Var add_rowvec(const Var& a, const Var& v) {
    require_rank2(a->value, "add_rowvec");
    if (v->value.rank() != 1 || v->value.numel() != a->value.cols())
        throw ShapeError("add_rowvec: vector " + v->value.shape_string() + " does not match " + a->value.shape_string());
    const int64_t m = a->value.rows(), k = a->value.cols();
    Tensor out({m, k});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < k; ++j) out.at2(i, j) = a->value.at2(i, j) + v->value[j];
    return make_node(Op::kAddRow, {a, v}, std::move(out));
}

Var mul_colvec(const Var& a, const Var& u) {
    require_rank2(a->value, "mul_colvec");
    if (u->value.numel() != a->value.rows())
        throw ShapeError("mul_colvec: vector " + u->value.shape_string() + " does not match " + a->value.shape_string());
    const int64_t m = a->value.rows(), k = a->value.cols();
    Tensor out({m, k});
    for (int64_t i = 0; i < m; ++i) {
        const float ui = u->value[i];
        for (int64_t j = 0; j < k; ++j) out.at2(i, j) = a->value.at2(i, j) * ui;
    }
    return make_node(Op::kMulCol, {a, u}, std::move(out));
}

Var col_sums(const Var& a) {
    require_rank2(a->value, "col_sums");
    const int64_t m = a->value.rows(), k = a->value.cols();
    std::vector<double> acc(static_cast<size_t>(k), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < k; ++j) acc[static_cast<size_t>(j)] += a->value.at2(i, j);
    Tensor out({k});
    for (int64_t j = 0; j < k; ++j) out[j] = static_cast<float>(acc[static_cast<size_t>(j)]);
    return make_node(Op::kColSums, {a}, std::move(out));
}

Var row_sums(const Var& a) {
    require_rank2(a->value, "row_sums");
    const int64_t m = a->value.rows(), k = a->value.cols();
    Tensor out({m});
    for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < k; ++j) acc += a->value.at2(i, j);
        out[i] = static_cast<float>(acc);
    }
    return make_node(Op::kRowSums, {a}, std::move(out));
}

Var sum(const Var& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    return make_node(Op::kSum, {a}, Tensor::scalar(static_cast<float>(acc)));
}

Var mean(const Var& a) {
    const int64_t n = a->value.numel();
    if (n == 0) throw ContractError("mean of an empty tensor");
    return scale(sum(a), 1.0f / static_cast<float>(n));
}

Var bcast_to(const Var& s, Shape shape) {
    if (s->value.numel() != 1) throw ShapeError("bcast_to: source must be scalar, got " + s->value.shape_string());
    auto n = make_node(Op::kBcastTo, {s}, Tensor::full(shape, s->value[0]));
    n->attr_shape = std::move(shape);
    return n;
}

Var mse(const Var& pred, const Var& target) {
    check_same_shape(pred->value, target->value, "mse");
    auto d = sub(pred, target);
    return mean(mul(d, d));
}

namespace {

// Adjoint of a scalar-broadcast binary operand: reduce to [1] when the
// operand was scalar but the output was not.
Var reduce_if_scalar(const Var& g, const Tensor& operand, const Tensor& out) {
    if (operand.numel() == 1 && out.numel() != 1) return sum(g);
    return g;
}

struct Frame {
    const Var* node;
    size_t next_input;
};

}  // namespace

std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt) {
    if (!loss) throw ContractError("grad: null loss");
    if (loss->value.numel() != 1)
        throw ContractError("grad: loss must be scalar, got " + loss->value.shape_string());

    // Reverse topological order over the differentiable subgraph.
    std::vector<Var> topo;
    std::unordered_map<const Node*, bool> visited;
    std::vector<Frame> stack;
    if (loss->requires_grad) stack.push_back({&loss, 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        const Var& n = *f.node;
        if (f.next_input == 0) {
            auto [it, inserted] = visited.emplace(n.get(), false);
            if (!inserted) {
                stack.pop_back();
                continue;
            }
        }
        bool descended = false;
        while (f.next_input < n->inputs.size()) {
            const Var& in = n->inputs[f.next_input++];
            if (in->requires_grad && !visited.count(in.get())) {
                stack.push_back({&in, 0});
                descended = true;
                break;
            }
        }
        if (!descended && f.next_input >= n->inputs.size()) {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    std::unordered_map<const Node*, Var> adj;
    adj.reserve(topo.size());
    if (loss->requires_grad) adj[loss.get()] = constant(Tensor::full(loss->value.shape(), 1.0f));

    auto accumulate = [&adj](const Var& node, const Var& contribution) {
        auto it = adj.find(node.get());
        if (it == adj.end())
            adj.emplace(node.get(), contribution);
        else
            it->second = add(it->second, contribution);
    };

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const Var& n = *it;
        auto git = adj.find(n.get());
        if (git == adj.end()) continue;
        const Var& g = git->second;
        auto in = [&n](size_t i) -> const Var& { return n->inputs[i]; };
        auto want = [&n](size_t i) { return n->inputs[i]->requires_grad; };
        switch (n->op) {
            case Op::kLeaf:
            case Op::kConst:
            case Op::kStep:
                break;
            case Op::kAdd:
                if (want(0)) accumulate(in(0), reduce_if_scalar(g, in(0)->value, n->value));
                if (want(1)) accumulate(in(1), reduce_if_scalar(g, in(1)->value, n->value));
                break;
            case Op::kSub:
                if (want(0)) accumulate(in(0), reduce_if_scalar(g, in(0)->value, n->value));
                if (want(1)) accumulate(in(1), neg(reduce_if_scalar(g, in(1)->value, n->value)));
                break;
            case Op::kMul:
                if (want(0)) accumulate(in(0), reduce_if_scalar(mul(g, in(1)), in(0)->value, n->value));
                if (want(1)) accumulate(in(1), reduce_if_scalar(mul(g, in(0)), in(1)->value, n->value));
                break;
            case Op::kNeg:
                if (want(0)) accumulate(in(0), neg(g));
                break;
            case Op::kScale:
                if (want(0)) accumulate(in(0), scale(g, n->attr_f));
                break;
            case Op::kAddC:
                if (want(0)) accumulate(in(0), g);
                break;
            case Op::kSin:
                if (want(0)) accumulate(in(0), mul(g, cos(in(0))));
                break;
            case Op::kCos:
                if (want(0)) accumulate(in(0), neg(mul(g, sin(in(0)))));
                break;
            case Op::kExp:
                if (want(0)) accumulate(in(0), mul(g, n));
                break;
            case Op::kSigmoid:
                if (want(0)) accumulate(in(0), mul(g, mul(n, add_scalar(neg(n), 1.0f))));
                break;
            case Op::kRelu:
                if (want(0)) accumulate(in(0), mul(g, step(in(0))));
                break;
            case Op::kElu:
                if (want(0)) accumulate(in(0), mul(g, elu_grad(in(0))));
                break;
            case Op::kEluGrad:
                if (want(0)) accumulate(in(0), mul(g, elu_curv(in(0))));
                break;
            case Op::kEluCurv:
                if (want(0)) accumulate(in(0), mul(g, n));
                break;
            case Op::kMatmul:
                if (want(0)) accumulate(in(0), matmul(g, transpose(in(1))));
                if (want(1)) accumulate(in(1), matmul(transpose(in(0)), g));
                break;
            case Op::kTranspose:
                if (want(0)) accumulate(in(0), transpose(g));
                break;
            case Op::kReshape:
                if (want(0)) accumulate(in(0), reshape(g, in(0)->value.shape()));
                break;
            case Op::kSliceFlat:
                if (want(0)) accumulate(in(0), pad_flat(g, n->attr_i0, in(0)->value.shape()));
                break;
            case Op::kPadFlat:
                if (want(0)) {
                    Var seg = slice_flat(g, n->attr_i0, in(0)->value.numel());
                    accumulate(in(0), reshape(seg, in(0)->value.shape()));
                }
                break;
            case Op::kSliceCols:
                if (want(0)) accumulate(in(0), pad_cols(g, n->attr_i0, in(0)->value.cols()));
                break;
            case Op::kPadCols:
                if (want(0)) accumulate(in(0), slice_cols(g, n->attr_i0, n->attr_i0 + in(0)->value.cols()));
                break;
            case Op::kAddRow:
                if (want(0)) accumulate(in(0), g);
                if (want(1)) accumulate(in(1), col_sums(g));
                break;
            case Op::kColSums:
                if (want(0)) accumulate(in(0), bcast_rows(g, in(0)->value.rows()));
                break;
            case Op::kBcastRows:
                if (want(0)) accumulate(in(0), col_sums(g));
                break;
            case Op::kMulCol:
                if (want(0)) accumulate(in(0), mul_colvec(g, in(1)));
                if (want(1)) accumulate(in(1), row_sums(mul(g, in(0))));
                break;
            case Op::kRowSums:
                if (want(0)) accumulate(in(0), bcast_cols(g, in(0)->value.cols()));
                break;
            case Op::kBcastCols:
                if (want(0)) accumulate(in(0), row_sums(g));
                break;
            case Op::kSum:
                if (want(0)) accumulate(in(0), bcast_to(g, in(0)->value.shape()));
                break;
            case Op::kBcastTo:
                if (want(0)) accumulate(in(0), sum(g));
                break;
            case Op::kConcatCols: {
                const int64_t p = in(0)->value.cols();
                if (want(0)) accumulate(in(0), slice_cols(g, 0, p));
                if (want(1)) accumulate(in(1), slice_cols(g, p, n->value.cols()));
                break;
            }
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        if (!w || !w->requires_grad)
            throw ContractError("grad: wrt tensor does not require gradients");
        auto it = adj.find(w.get());
        if (it == adj.end())
            throw ContractError("grad: wrt tensor with shape " + w->value.shape_string() +
                                " does not participate in the loss graph");
        out.push_back(it->second);
    }
    return out;
}

void release(Var root) {
    std::vector<Var> stack;
    stack.push_back(std::move(root));
    while (!stack.empty()) {
        Var n = std::move(stack.back());
        stack.pop_back();
        if (!n) continue;
        if (n.use_count() == 1) {
            for (auto& in : n->inputs) stack.push_back(std::move(in));
            n->inputs.clear();
        }
    }
}

}  // namespace mnif::ad
