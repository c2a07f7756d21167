// Neural layers on top of the tape: linear projection, activations,
// sinusoidal positional encoding and multi-head self-attention.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sa/autodiff.hpp"
#include "sa/rng.hpp"
#include "sa/tensor.hpp"

namespace sa::nn {

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// y = x W + b for x [..., in], W [in, out], b [out]
Var linear_forward(Tape& t, Var x, Tensor& weight, Tensor& bias);

enum class Activation { Relu, Sigmoid, Softmax };
Var activation(Tape& t, Activation kind, Var x, int axis = -1);

// Fixed sinusoidal table [seq_len, model_dim]; model_dim must be even.
Tensor positional_encoding(int64_t seq_len, int64_t model_dim);

// Xavier-uniform weight init, zero bias.
Tensor xavier_init(int64_t in_dim, int64_t out_dim, Rng& rng);

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionParams init(int64_t model_dim, Rng& rng);
  NamedParams named(const std::string& prefix);
};

struct AttentionResult {
  Var out;         // [b, l, d]
  Tensor weights;  // [b, heads, l, l], detached copy of the softmax output
};

// Scaled dot-product self-attention over x [b, l, d]; d must be divisible by
// heads. Dropout is the caller's concern (applied to the block output).
AttentionResult multi_head_self_attention(Tape& t, Var x, AttentionParams& p, int heads);

}  // namespace sa::nn
