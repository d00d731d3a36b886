#pragma once

#include <memory>
#include <vector>

#include "tensor.hpp"

namespace mnif::ad {

// Reverse-mode graph engine. Values are computed eagerly at node
// construction; grad() builds the adjoints out of the same differentiable
// ops, so gradients can themselves be differentiated. That is what carries
// second-order information through unrolled inner-loop updates.

enum class Op : uint8_t {
    kLeaf,
    kConst,
    kAdd,
    kSub,
    kMul,
    kNeg,
    kScale,     // x * c
    kAddC,      // x + c
    kSin,
    kCos,
    kExp,
    kSigmoid,
    kRelu,
    kStep,      // 1 where x > 0 else 0; not differentiable
    kElu,
    kEluGrad,   // elu'(x): 1 where x > 0 else e^x
    kEluCurv,   // elu''(x): 0 where x > 0 else e^x
    kMatmul,
    kTranspose,
    kReshape,
    kSliceFlat,
    kPadFlat,
    kSliceCols,
    kPadCols,
    kAddRow,    // matrix + row vector
    kColSums,
    kBcastRows,
    kMulCol,    // matrix * column vector, row-wise
    kRowSums,
    kBcastCols,
    kSum,       // full reduction -> [1]
    kBcastTo,   // [1] -> shape
    kConcatCols,
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Op op = Op::kConst;
    std::vector<Var> inputs;
    Tensor value;
    bool requires_grad = false;
    // Op attributes (slice offsets, scale constants, broadcast targets).
    float attr_f = 0.0f;
    int64_t attr_i0 = 0;
    int64_t attr_i1 = 0;
    Shape attr_shape;
};

Var leaf(Tensor v);
Var constant(Tensor v);
inline Var constant_scalar(float v) { return constant(Tensor::scalar(v)); }
Var detach(const Var& v);
inline const Tensor& value(const Var& v) { return v->value; }

// Elementwise. add/sub/mul accept equal shapes or one operand of numel 1,
// which broadcasts as a scalar.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, float c);
Var add_scalar(const Var& a, float c);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var elu(const Var& a);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
Var slice_flat(const Var& a, int64_t offset, int64_t len);
Var slice_cols(const Var& a, int64_t c0, int64_t c1);
Var concat_cols(const Var& a, const Var& b);
Var add_rowvec(const Var& a, const Var& v);
Var mul_colvec(const Var& a, const Var& u);
Var col_sums(const Var& a);
Var row_sums(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var bcast_to(const Var& s, Shape shape);

// Mean squared error over all elements; shapes must match.
Var mse(const Var& pred, const Var& target);

// d loss / d wrt[i] for a scalar loss. Every returned adjoint is itself a
// differentiable graph over the same leaves. Throws ContractError when the
// loss is not scalar or a wrt node is not reachable from it.
std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt);

// Breaks a graph apart iteratively; shared_ptr teardown alone can recurse
// as deep as the longest op chain.
void release(Var root);

}  // namespace mnif::ad
