#pragma once

#include <cstddef>
#include <span>

#include "resmatch/nn/tape.hpp"
#include "resmatch/nn/tensor.hpp"

// Differentiable ops over Tensor. Each op allocates its output and, when a tape
// is supplied, records a closure that accumulates input and parameter gradients.

namespace resmatch::nn {

/// Cross-correlation. `input` is [C,H,W] or [N,C,H,W]; weights are [Co,C,k,k]
/// and bias [Co]. Output extent is H + 2*padding - k + 1 per spatial axis.
TensorPtr conv2d(Tape* tape, const TensorPtr& input, const Param& weights, const Param& bias, int padding);

/// out = weights * input + bias, for input [n] or a batch [N,n]; weights are [m,n].
TensorPtr fully_connected(Tape* tape, const TensorPtr& input, const Param& weights, const Param& bias);

TensorPtr relu(Tape* tape, const TensorPtr& input);
TensorPtr tanh(Tape* tape, const TensorPtr& input);
TensorPtr sigmoid(Tape* tape, const TensorPtr& input);

/// Log-softmax over the last dimension.
TensorPtr log_softmax(Tape* tape, const TensorPtr& input);

/// Constant highway shortcut: f_out + lambda * skip, lambda a learned scalar.
TensorPtr highway_add(Tape* tape, const TensorPtr& f_out, const TensorPtr& skip, const Param& lambda);

/// Unweighted elementwise sum.
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);

/// wa * a + wb * b for tensors of identical shape.
TensorPtr weighted_sum(Tape* tape, const TensorPtr& a, double wa, const TensorPtr& b, double wb);

TensorPtr reshape(Tape* tape, const TensorPtr& input, Shape shape);

/// Rows [begin, begin + count) of a tensor whose first axis is the batch axis.
TensorPtr slice_rows(Tape* tape, const TensorPtr& input, std::size_t begin, std::size_t count);

/// [N,F] and [N,G] -> [N,F+G].
TensorPtr concat_cols(Tape* tape, const TensorPtr& a, const TensorPtr& b);

/// Per-row dot product of two [N,F] tensors -> [N].
TensorPtr row_dot(Tape* tape, const TensorPtr& a, const TensorPtr& b);

/// Each row of [N,F] divided by sqrt(|row|^2 + 1e-12); a zero row stays zero.
TensorPtr l2_normalize_rows(Tape* tape, const TensorPtr& input);

/// Sum of all elements -> scalar [1].
TensorPtr sum(Tape* tape, const TensorPtr& input);

/// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid_scalar(double x);

}  // namespace resmatch::nn
