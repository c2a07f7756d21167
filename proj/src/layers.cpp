#include "sa/layers.hpp"

#include <cmath>

namespace sa::nn {

Var linear_forward(Tape& t, Var x, Tensor& weight, Tensor& bias) {
  return t.add_bias(t.matmul(x, t.param(weight)), t.param(bias));
}

Var activation(Tape& t, Activation kind, Var x, int axis) {
  switch (kind) {
    case Activation::Relu: return t.relu(x);
    case Activation::Sigmoid: return t.sigmoid(x);
    case Activation::Softmax: return t.softmax(x, axis);
  }
  throw std::logic_error("unknown activation");
}

Tensor positional_encoding(int64_t seq_len, int64_t model_dim) {
  if (model_dim % 2 != 0)
    throw std::invalid_argument("positional_encoding: model_dim must be even, got " + std::to_string(model_dim));
  Tensor pe({seq_len, model_dim});
  for (int64_t pos = 0; pos < seq_len; ++pos)
    for (int64_t i = 0; i < model_dim / 2; ++i) {
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(model_dim));
      const double angle = static_cast<double>(pos) * rate;
      pe.at({pos, 2 * i}) = std::sin(angle);
      pe.at({pos, 2 * i + 1}) = std::cos(angle);
    }
  return pe;
}

Tensor xavier_init(int64_t in_dim, int64_t out_dim, Rng& rng) {
  Tensor w({in_dim, out_dim});
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (double& x : w.data) x = rng.uniform(-bound, bound);
  w.requires_grad = true;
  return w;
}

AttentionParams AttentionParams::init(int64_t d, Rng& rng) {
  AttentionParams p;
  p.wq = xavier_init(d, d, rng);
  p.wk = xavier_init(d, d, rng);
  p.wv = xavier_init(d, d, rng);
  p.wo = xavier_init(d, d, rng);
  for (Tensor* b : {&p.bq, &p.bk, &p.bv, &p.bo}) {
    *b = Tensor({d});
    b->requires_grad = true;
  }
  return p;
}

NamedParams AttentionParams::named(const std::string& prefix) {
  return {{prefix + ".wq", &wq}, {prefix + ".bq", &bq}, {prefix + ".wk", &wk}, {prefix + ".bk", &bk},
          {prefix + ".wv", &wv}, {prefix + ".bv", &bv}, {prefix + ".wo", &wo}, {prefix + ".bo", &bo}};
}

AttentionResult multi_head_self_attention(Tape& t, Var x, AttentionParams& p, int heads) {
  const Tensor& tx = t.val(x);
  if (tx.ndim() != 3)
    throw std::invalid_argument("attention expects [batch, seq, dim], got " + shape_str(tx.shape));
  const int64_t b = tx.shape[0];
  const int64_t l = tx.shape[1];
  const int64_t d = tx.shape[2];
  if (heads <= 0 || d % heads != 0)
    throw std::invalid_argument("attention: model dim " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  const int64_t dk = d / heads;

  auto split = [&](Var proj) {
    return t.transpose(t.reshape(proj, {b, l, heads, dk}), {0, 2, 1, 3});  // [b,h,l,dk]
  };
  Var q = split(linear_forward(t, x, p.wq, p.bq));
  Var k = split(linear_forward(t, x, p.wk, p.bk));
  Var v = split(linear_forward(t, x, p.wv, p.bv));

  Var scores = t.scale(t.matmul(q, t.transpose(k, {0, 1, 3, 2})), 1.0 / std::sqrt(static_cast<double>(dk)));
  Var attn = t.softmax(scores, -1);  // [b,h,l,l]
  Var ctx = t.matmul(attn, v);       // [b,h,l,dk]
  Var merged = t.reshape(t.transpose(ctx, {0, 2, 1, 3}), {b, l, d});
  Var out = linear_forward(t, merged, p.wo, p.bo);
  return {out, t.val(attn)};
}

}  // namespace sa::nn
