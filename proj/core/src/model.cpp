// Copyright 2026 The kprompt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kprompt/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "kprompt/error.hpp"
#include "rng.hpp"
#include "tsv.hpp"

namespace kprompt {

using json = nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kConfig, "model." + msg);
  };
  if (layers_enc < 1) fail("layers_enc must be >= 1");
  if (layers_dec < 1) fail("layers_dec must be >= 1");
  if (d_model < 1 || heads < 1) fail("d_model and heads must be >= 1");
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (vocab_size < static_cast<int>(special::kCount)) {
    fail("vocab_size must cover the reserved special tokens");
  }
  if (max_len < 1) fail("max_len must be >= 1");
  if (max_target_len < 1) fail("max_target_len must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

json ModelConfig::to_json() const {
  return {{"layers_enc", layers_enc}, {"layers_dec", layers_dec},
          {"d_model", d_model},       {"heads", heads},
          {"d_ff", d_ff},             {"vocab_size", vocab_size},
          {"max_len", max_len},       {"max_target_len", max_target_len},
          {"dropout", dropout},       {"seed", seed},
          {"positions", positions},   {"mask_cross", mask_cross}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.layers_enc = j.value("layers_enc", c.layers_enc);
  c.layers_dec = j.value("layers_dec", c.layers_dec);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_len = j.value("max_len", c.max_len);
  c.max_target_len = j.value("max_target_len", c.max_target_len);
  c.dropout = j.value("dropout", c.dropout);
  c.seed = j.value("seed", c.seed);
  c.positions = j.value("positions", c.positions);
  c.mask_cross = j.value("mask_cross", c.mask_cross);
  return c;
}

void OptimConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kConfig, "optim." + msg);
  };
  if (!(peak_lr > 0)) fail("peak_lr must be > 0");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    fail("beta1 and beta2 must be in [0, 1)");
  }
  if (grad_clip < 0) fail("grad_clip must be >= 0");
}

json OptimConfig::to_json() const {
  return {{"peak_lr", peak_lr},     {"warmup_steps", warmup_steps},
          {"weight_decay", weight_decay}, {"batch_size", batch_size},
          {"epochs", epochs},       {"beta1", beta1},
          {"beta2", beta2},         {"epsilon", epsilon},
          {"grad_clip", grad_clip}};
}

OptimConfig OptimConfig::from_json(const json& j) {
  OptimConfig c;
  c.peak_lr = j.value("peak_lr", c.peak_lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  return c;
}

std::size_t Batch::encoder_tokens() const {
  std::size_t n = 0;
  for (const auto& s : items) n += s.encoder.size();
  return n;
}

std::size_t Batch::decoder_tokens() const {
  std::size_t n = 0;
  for (const auto& s : items) n += s.decoder_input.size();
  return n;
}

namespace {

using detail::Rng;

struct LnIdx {
  std::size_t g, b;
};
struct AttnIdx {
  std::size_t wq, wk, wv, wo;
};
struct FfnIdx {
  std::size_t w1, b1, w2, b2;
};
struct EncLayerIdx {
  LnIdx ln1;
  AttnIdx attn;
  LnIdx ln2;
  FfnIdx ffn;
};
struct DecLayerIdx {
  LnIdx ln1;
  AttnIdx self;
  LnIdx ln2;
  AttnIdx cross;
  LnIdx ln3;
  FfnIdx ffn;
};

enum class Init { kUniform, kOne, kZero };

struct ParamSpec {
  std::string name;
  int rows, cols;
  Init init;
  double scale;
  bool decay;
};

struct Layout {
  std::size_t tok_emb, enc_pos, dec_pos;
  std::vector<EncLayerIdx> enc;
  LnIdx enc_ln;
  std::vector<DecLayerIdx> dec;
  LnIdx dec_ln;
  std::size_t out_w, out_b;
  std::vector<ParamSpec> specs;

  explicit Layout(const ModelConfig& c) {
    const int d = c.d_model;
    const double wscale = 1.0 / std::sqrt(static_cast<double>(d));
    const double fscale = 1.0 / std::sqrt(static_cast<double>(c.d_ff));
    auto add = [&](std::string name, int rows, int cols, Init init,
                   double scale, bool decay) {
      specs.push_back({std::move(name), rows, cols, init, scale, decay});
      return specs.size() - 1;
    };
    auto ln = [&](const std::string& p) {
      return LnIdx{add(p + ".g", 1, d, Init::kOne, 0, false),
                   add(p + ".b", 1, d, Init::kZero, 0, false)};
    };
    auto attn = [&](const std::string& p) {
      return AttnIdx{add(p + ".wq", d, d, Init::kUniform, wscale, true),
                     add(p + ".wk", d, d, Init::kUniform, wscale, true),
                     add(p + ".wv", d, d, Init::kUniform, wscale, true),
                     add(p + ".wo", d, d, Init::kUniform, wscale, true)};
    };
    auto ffn = [&](const std::string& p) {
      return FfnIdx{add(p + ".w1", d, c.d_ff, Init::kUniform, wscale, true),
                    add(p + ".b1", 1, c.d_ff, Init::kZero, 0, false),
                    add(p + ".w2", c.d_ff, d, Init::kUniform, fscale, true),
                    add(p + ".b2", 1, d, Init::kZero, 0, false)};
    };
    tok_emb = add("tok_emb", c.vocab_size, d, Init::kUniform, 0.5, true);
    enc_pos = add("enc_pos", c.max_len, d, Init::kUniform, 0.1, false);
    dec_pos = add("dec_pos", c.max_target_len, d, Init::kUniform, 0.1, false);
    for (int l = 0; l < c.layers_enc; ++l) {
      std::string p = "enc." + std::to_string(l);
      EncLayerIdx e;
      e.ln1 = ln(p + ".ln1");
      e.attn = attn(p + ".attn");
      e.ln2 = ln(p + ".ln2");
      e.ffn = ffn(p + ".ffn");
      enc.push_back(e);
    }
    enc_ln = ln("enc.ln_f");
    for (int l = 0; l < c.layers_dec; ++l) {
      std::string p = "dec." + std::to_string(l);
      DecLayerIdx e;
      e.ln1 = ln(p + ".ln1");
      e.self = attn(p + ".self");
      e.ln2 = ln(p + ".ln2");
      e.cross = attn(p + ".cross");
      e.ln3 = ln(p + ".ln3");
      e.ffn = ffn(p + ".ffn");
      dec.push_back(e);
    }
    dec_ln = ln("dec.ln_f");
    out_w = add("lm_head.w", d, c.vocab_size, Init::kUniform, wscale, true);
    out_b = add("lm_head.b", 1, c.vocab_size, Init::kZero, 0, false);
  }
};

template <class T>
ModelState<T> make_state(const ModelConfig& config, bool zero) {
  config.validate();
  ModelState<T> s;
  s.config = config;
  Layout layout(config);
  Rng rng(config.seed);
  for (const auto& spec : layout.specs) {
    Parameter<T> p{spec.name, Matrix<T>::Zero(spec.rows, spec.cols),
                   Matrix<T>::Zero(spec.rows, spec.cols), spec.decay};
    if (!zero) {
      if (spec.init == Init::kOne) {
        p.value.setOnes();
      } else if (spec.init == Init::kUniform) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
          p.value.data()[i] =
              static_cast<T>((2.0 * rng.uniform() - 1.0) * spec.scale);
        }
      }
    }
    s.moment1.push_back(Matrix<T>::Zero(spec.rows, spec.cols));
    s.moment2.push_back(Matrix<T>::Zero(spec.rows, spec.cols));
    s.params.push_back(std::move(p));
  }
  return s;
}

// ---------------------------------------------------------------- layers

template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <class T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

constexpr double kLnEps = 1e-5;

template <class T>
struct LnCache {
  Matrix<T> xhat;
  ColVec<T> rstd;
};

template <class T>
Matrix<T> ln_forward(const Matrix<T>& x, const Parameter<T>& g,
                     const Parameter<T>& b, LnCache<T>* cache) {
  const auto d = static_cast<T>(x.cols());
  ColVec<T> mean = x.rowwise().sum() / d;
  Matrix<T> centered = x.colwise() - mean;
  ColVec<T> var = centered.array().square().rowwise().sum() / d;
  ColVec<T> rstd = (var.array() + static_cast<T>(kLnEps)).rsqrt();
  Matrix<T> xhat = centered.array().colwise() * rstd.array();
  Matrix<T> y = (xhat.array().rowwise() * g.value.row(0).array()).rowwise() +
                b.value.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <class T>
Matrix<T> ln_backward(const Matrix<T>& dy, Parameter<T>& g, Parameter<T>& b,
                      const LnCache<T>& c) {
  g.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  b.grad.row(0) += dy.colwise().sum();
  const auto d = static_cast<T>(dy.cols());
  Matrix<T> dxhat = dy.array().rowwise() * g.value.row(0).array();
  ColVec<T> mean_dxhat = dxhat.rowwise().sum() / d;
  ColVec<T> mean_dxhat_xhat =
      (dxhat.array() * c.xhat.array()).rowwise().sum() / d;
  Matrix<T> dx = dxhat.colwise() - mean_dxhat;
  dx -= (c.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  return dx.array().colwise() * c.rstd.array();
}

template <class T>
T gelu(T x) {
  constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  return static_cast<T>(0.5) * x *
         (1 + std::tanh(k * (x + static_cast<T>(0.044715) * x * x * x)));
}

template <class T>
T gelu_grad(T x) {
  constexpr T k = static_cast<T>(0.7978845608028654);
  const T inner = k * (x + static_cast<T>(0.044715) * x * x * x);
  const T t = std::tanh(inner);
  return static_cast<T>(0.5) * (1 + t) +
         static_cast<T>(0.5) * x * (1 - t * t) * k *
             (1 + static_cast<T>(3 * 0.044715) * x * x);
}

template <class T>
void softmax_rows(Matrix<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const T mx = row.maxCoeff();
    // Vectorised exp clamps its argument, so masked entries are zeroed
    // explicitly instead of relying on underflow.
    const T cut = static_cast<T>(kMaskSentinel / 2);
    row = (row.array() < cut).select(T(0), (row.array() - mx).exp());
    row /= row.sum();
  }
}

// One attention problem inside a packed batch: queries [q_off, q_off+q_len)
// attend keys [k_off, k_off+k_len) under an additive mask.
template <class T>
struct Segment {
  Eigen::Index q_off, q_len, k_off, k_len;
  const Matrix<T>* additive;
};

template <class T>
struct AttnCache {
  Matrix<T> q_in, kv_in;
  Matrix<T> q, k, v, o;
  std::vector<Matrix<T>> probs;  // [segment * heads + head]
};

template <class T>
void attend_heads(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                  std::span<const Segment<T>> segments, int heads,
                  Matrix<T>& o, std::vector<Matrix<T>>* probs) {
  const Eigen::Index dk = q.cols() / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  for (const auto& seg : segments) {
    for (int h = 0; h < heads; ++h) {
      Matrix<T> s = (q.block(seg.q_off, h * dk, seg.q_len, dk) *
                     k.block(seg.k_off, h * dk, seg.k_len, dk).transpose()) *
                    scale;
      if (seg.additive) s += *seg.additive;
      softmax_rows(s);
      o.block(seg.q_off, h * dk, seg.q_len, dk).noalias() =
          s * v.block(seg.k_off, h * dk, seg.k_len, dk);
      if (probs) probs->push_back(std::move(s));
    }
  }
}

template <class T>
Matrix<T> mha_forward(const Matrix<T>& q_in, const Matrix<T>& kv_in,
                      const ModelState<T>& st, const AttnIdx& idx,
                      std::span<const Segment<T>> segments, AttnCache<T>* cache) {
  const auto& P = st.params;
  Matrix<T> q = q_in * P[idx.wq].value;
  Matrix<T> k = kv_in * P[idx.wk].value;
  Matrix<T> v = kv_in * P[idx.wv].value;
  Matrix<T> o(q.rows(), q.cols());
  o.setZero();
  attend_heads(q, k, v, segments, st.config.heads, o,
               cache ? &cache->probs : nullptr);
  Matrix<T> out = o * P[idx.wo].value;
  if (cache) {
    cache->q_in = q_in;
    cache->kv_in = kv_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
  }
  return out;
}

// Returns (d q_in, d kv_in).
template <class T>
std::pair<Matrix<T>, Matrix<T>> mha_backward(
    const Matrix<T>& dout, ModelState<T>& st, const AttnIdx& idx,
    std::span<const Segment<T>> segments, const AttnCache<T>& c) {
  auto& P = st.params;
  const int heads = st.config.heads;
  P[idx.wo].grad.noalias() += c.o.transpose() * dout;
  Matrix<T> d_o = dout * P[idx.wo].value.transpose();
  Matrix<T> dq = Matrix<T>::Zero(c.q.rows(), c.q.cols());
  Matrix<T> dk = Matrix<T>::Zero(c.k.rows(), c.k.cols());
  Matrix<T> dv = Matrix<T>::Zero(c.v.rows(), c.v.cols());
  const Eigen::Index hd = c.q.cols() / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
  std::size_t pi = 0;
  for (const auto& seg : segments) {
    for (int h = 0; h < heads; ++h, ++pi) {
      const Matrix<T>& p = c.probs[pi];
      auto d_ob = d_o.block(seg.q_off, h * hd, seg.q_len, hd);
      Matrix<T> dp = d_ob * c.v.block(seg.k_off, h * hd, seg.k_len, hd).transpose();
      dv.block(seg.k_off, h * hd, seg.k_len, hd).noalias() += p.transpose() * d_ob;
      ColVec<T> rowdot = (dp.array() * p.array()).rowwise().sum();
      Matrix<T> ds = p.array() * (dp.colwise() - rowdot).array();
      dq.block(seg.q_off, h * hd, seg.q_len, hd).noalias() +=
          (ds * c.k.block(seg.k_off, h * hd, seg.k_len, hd)) * scale;
      dk.block(seg.k_off, h * hd, seg.k_len, hd).noalias() +=
          (ds.transpose() * c.q.block(seg.q_off, h * hd, seg.q_len, hd)) * scale;
    }
  }
  P[idx.wq].grad.noalias() += c.q_in.transpose() * dq;
  P[idx.wk].grad.noalias() += c.kv_in.transpose() * dk;
  P[idx.wv].grad.noalias() += c.kv_in.transpose() * dv;
  Matrix<T> dq_in = dq * P[idx.wq].value.transpose();
  Matrix<T> dkv_in = dk * P[idx.wk].value.transpose();
  dkv_in.noalias() += dv * P[idx.wv].value.transpose();
  return {std::move(dq_in), std::move(dkv_in)};
}

template <class T>
struct FfnCache {
  Matrix<T> x, pre, act;
};

template <class T>
Matrix<T> ffn_forward(const Matrix<T>& x, const ModelState<T>& st,
                      const FfnIdx& idx, FfnCache<T>* cache) {
  const auto& P = st.params;
  Matrix<T> pre = (x * P[idx.w1].value).rowwise() + P[idx.b1].value.row(0);
  Matrix<T> act = pre.unaryExpr([](T z) { return gelu(z); });
  Matrix<T> out = (act * P[idx.w2].value).rowwise() + P[idx.b2].value.row(0);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

template <class T>
Matrix<T> ffn_backward(const Matrix<T>& dout, ModelState<T>& st,
                       const FfnIdx& idx, const FfnCache<T>& c) {
  auto& P = st.params;
  P[idx.w2].grad.noalias() += c.act.transpose() * dout;
  P[idx.b2].grad.row(0) += dout.colwise().sum();
  Matrix<T> dact = dout * P[idx.w2].value.transpose();
  Matrix<T> dpre =
      dact.array() * c.pre.unaryExpr([](T z) { return gelu_grad(z); }).array();
  P[idx.w1].grad.noalias() += c.x.transpose() * dpre;
  P[idx.b1].grad.row(0) += dpre.colwise().sum();
  return dpre * P[idx.w1].value.transpose();
}

template <class T>
Matrix<T> additive_from(const MaskMatrix* mask, std::size_t len) {
  Matrix<T> a = Matrix<T>::Zero(static_cast<Eigen::Index>(len),
                                static_cast<Eigen::Index>(len));
  if (!mask) return a;
  if (mask->size() != len) {
    throw Error(ErrorCode::kInvalidArgument,
                "mask size " + std::to_string(mask->size()) +
                    " does not match sequence length " + std::to_string(len));
  }
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      if (!mask->visible(i, j)) {
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            static_cast<T>(kMaskSentinel);
      }
    }
  }
  return a;
}

template <class T>
Matrix<T> causal_additive(std::size_t len) {
  Matrix<T> a = Matrix<T>::Zero(static_cast<Eigen::Index>(len),
                                static_cast<Eigen::Index>(len));
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = i + 1; j < len; ++j) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<T>(kMaskSentinel);
    }
  }
  return a;
}

std::vector<std::uint8_t> cross_visibility(const Sequence& seq, bool mask_cross) {
  std::vector<std::uint8_t> vis(seq.encoder.size(), 1);
  if (mask_cross && seq.mask) {
    for (std::size_t j = 0; j < vis.size(); ++j) {
      vis[j] = seq.mask->visible(seq.mask_position, j) ? 1 : 0;
    }
  }
  return vis;
}

template <class T>
Matrix<T> cross_additive(std::span<const std::uint8_t> visible, std::size_t q_len) {
  Matrix<T> a = Matrix<T>::Zero(static_cast<Eigen::Index>(q_len),
                                static_cast<Eigen::Index>(visible.size()));
  for (std::size_t j = 0; j < visible.size(); ++j) {
    if (!visible[j]) a.col(static_cast<Eigen::Index>(j)).setConstant(static_cast<T>(kMaskSentinel));
  }
  return a;
}

void check_tokens(std::span<const TokenId> ids, int vocab) {
  for (auto id : ids) {
    if (id < 0 || id >= vocab) {
      throw Error(ErrorCode::kInvalidArgument,
                  "token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(vocab));
    }
  }
}

template <class T>
Matrix<T> embed(const ModelState<T>& st, std::size_t emb, std::size_t pos,
                std::span<const TokenId> ids, std::size_t max_positions) {
  const int d = st.config.d_model;
  check_tokens(ids, st.config.vocab_size);
  if (st.config.positions && ids.size() > max_positions) {
    throw Error(ErrorCode::kInvalidArgument,
                "sequence of " + std::to_string(ids.size()) +
                    " tokens exceeds positional table of " +
                    std::to_string(max_positions));
  }
  Matrix<T> x(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    x.row(r) = st.params[emb].value.row(ids[i]);
    if (st.config.positions) x.row(r) += st.params[pos].value.row(r);
  }
  return x;
}

// ------------------------------------------------------- full batch pass

template <class T>
class Pass {
 public:
  Pass(const ModelState<T>& st, const Batch& batch, bool training,
       std::uint64_t dropout_seed)
      : st_(st),
        batch_(batch),
        layout_(st.config),
        dropout_(training ? st.config.dropout : 0.0),
        rng_(st.config.seed ^ 0x9e3779b97f4a7c15ULL, dropout_seed) {}

  T forward(Matrix<T>* logits_out, std::size_t* target_count);
  void backward(ModelState<T>& st);

 private:
  struct EncCache {
    LnCache<T> ln1, ln2;
    AttnCache<T> attn;
    FfnCache<T> ffn;
    Matrix<T> drop_attn, drop_ffn;
  };
  struct DecCache {
    LnCache<T> ln1, ln2, ln3;
    AttnCache<T> self, cross;
    FfnCache<T> ffn;
    Matrix<T> drop_self, drop_cross, drop_ffn;
  };

  void dropout(Matrix<T>& x, Matrix<T>& keep) {
    if (dropout_ <= 0.0) return;
    keep.resize(x.rows(), x.cols());
    const T scale = static_cast<T>(1.0 / (1.0 - dropout_));
    for (Eigen::Index i = 0; i < keep.size(); ++i) {
      keep.data()[i] = rng_.uniform() < dropout_ ? T(0) : scale;
    }
    x.array() *= keep.array();
  }
  void dropout_backward(Matrix<T>& dx, const Matrix<T>& keep) const {
    if (dropout_ > 0.0) dx.array() *= keep.array();
  }

  const ModelState<T>& st_;
  const Batch& batch_;
  Layout layout_;
  double dropout_;
  Rng rng_;

  std::vector<Matrix<T>> enc_masks_, dec_masks_, cross_masks_;
  std::vector<Segment<T>> enc_segs_, dec_segs_, cross_segs_;
  std::vector<EncCache> enc_;
  std::vector<DecCache> dec_;
  LnCache<T> enc_ln_, dec_ln_;
  Matrix<T> memory_, dec_final_, dlogits_;
};

template <class T>
T Pass<T>::forward(Matrix<T>* logits_out, std::size_t* target_count) {
  const auto& cfg = st_.config;
  const auto& P = st_.params;
  const std::size_t n_enc = batch_.encoder_tokens();
  const std::size_t n_dec = batch_.decoder_tokens();
  if (batch_.items.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty batch");
  }

  enc_masks_.reserve(batch_.items.size());
  dec_masks_.reserve(batch_.items.size());
  cross_masks_.reserve(batch_.items.size());
  Matrix<T> x(static_cast<Eigen::Index>(n_enc), cfg.d_model);
  Matrix<T> y(static_cast<Eigen::Index>(n_dec), cfg.d_model);
  Eigen::Index eoff = 0, doff = 0;
  for (const auto& s : batch_.items) {
    if (s.decoder_input.size() != s.target.size() || s.decoder_input.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "decoder input and target must be non-empty and equal length");
    }
    const auto el = static_cast<Eigen::Index>(s.encoder.size());
    const auto dl = static_cast<Eigen::Index>(s.decoder_input.size());
    x.middleRows(eoff, el) = embed(st_, layout_.tok_emb, layout_.enc_pos,
                                   std::span<const TokenId>(s.encoder),
                                   static_cast<std::size_t>(cfg.max_len));
    y.middleRows(doff, dl) = embed(st_, layout_.tok_emb, layout_.dec_pos,
                                   std::span<const TokenId>(s.decoder_input),
                                   static_cast<std::size_t>(cfg.max_target_len));
    enc_masks_.push_back(additive_from<T>(s.mask, s.encoder.size()));
    dec_masks_.push_back(causal_additive<T>(s.decoder_input.size()));
    auto vis = cross_visibility(s, cfg.mask_cross);
    cross_masks_.push_back(cross_additive<T>(vis, s.decoder_input.size()));
    enc_segs_.push_back({eoff, el, eoff, el, &enc_masks_.back()});
    dec_segs_.push_back({doff, dl, doff, dl, &dec_masks_.back()});
    cross_segs_.push_back({doff, dl, eoff, el, &cross_masks_.back()});
    eoff += el;
    doff += dl;
  }

  enc_.resize(layout_.enc.size());
  for (std::size_t l = 0; l < layout_.enc.size(); ++l) {
    const auto& L = layout_.enc[l];
    auto& c = enc_[l];
    Matrix<T> h = ln_forward(x, P[L.ln1.g], P[L.ln1.b], &c.ln1);
    Matrix<T> a = mha_forward<T>(h, h, st_, L.attn, enc_segs_, &c.attn);
    dropout(a, c.drop_attn);
    x += a;
    Matrix<T> h2 = ln_forward(x, P[L.ln2.g], P[L.ln2.b], &c.ln2);
    Matrix<T> f = ffn_forward(h2, st_, L.ffn, &c.ffn);
    dropout(f, c.drop_ffn);
    x += f;
  }
  memory_ = ln_forward(x, P[layout_.enc_ln.g], P[layout_.enc_ln.b], &enc_ln_);

  dec_.resize(layout_.dec.size());
  for (std::size_t l = 0; l < layout_.dec.size(); ++l) {
    const auto& L = layout_.dec[l];
    auto& c = dec_[l];
    Matrix<T> h = ln_forward(y, P[L.ln1.g], P[L.ln1.b], &c.ln1);
    Matrix<T> a = mha_forward<T>(h, h, st_, L.self, dec_segs_, &c.self);
    dropout(a, c.drop_self);
    y += a;
    Matrix<T> h2 = ln_forward(y, P[L.ln2.g], P[L.ln2.b], &c.ln2);
    Matrix<T> xa = mha_forward<T>(h2, memory_, st_, L.cross, cross_segs_, &c.cross);
    dropout(xa, c.drop_cross);
    y += xa;
    Matrix<T> h3 = ln_forward(y, P[L.ln3.g], P[L.ln3.b], &c.ln3);
    Matrix<T> f = ffn_forward(h3, st_, L.ffn, &c.ffn);
    dropout(f, c.drop_ffn);
    y += f;
  }
  dec_final_ = ln_forward(y, P[layout_.dec_ln.g], P[layout_.dec_ln.b], &dec_ln_);
  Matrix<T> logits = (dec_final_ * P[layout_.out_w].value).rowwise() +
                     P[layout_.out_b].value.row(0);

  // Cross-entropy over non-pad targets.
  std::vector<TokenId> targets;
  targets.reserve(n_dec);
  for (const auto& s : batch_.items) {
    check_tokens(s.target, cfg.vocab_size);
    targets.insert(targets.end(), s.target.begin(), s.target.end());
  }
  std::size_t count = 0;
  for (auto t : targets) count += t != special::kPadId ? 1 : 0;
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "batch has no targets");
  double loss = 0;
  dlogits_ = Matrix<T>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const TokenId t = targets[static_cast<std::size_t>(r)];
    if (t == special::kPadId) continue;
    auto row = logits.row(r);
    const T mx = row.maxCoeff();
    RowVec<T> e = (row.array() - mx).exp();
    const T sum = e.sum();
    loss += static_cast<double>(mx + std::log(sum) - row(t));
    dlogits_.row(r) = e / sum;
    dlogits_(r, t) -= 1;
  }
  dlogits_ /= static_cast<T>(count);
  if (logits_out) *logits_out = std::move(logits);
  if (target_count) *target_count = count;
  return static_cast<T>(loss / static_cast<double>(count));
}

template <class T>
void Pass<T>::backward(ModelState<T>& st) {
  auto& P = st.params;
  P[layout_.out_w].grad.noalias() += dec_final_.transpose() * dlogits_;
  P[layout_.out_b].grad.row(0) += dlogits_.colwise().sum();
  Matrix<T> dy = dlogits_ * P[layout_.out_w].value.transpose();
  dy = ln_backward(dy, P[layout_.dec_ln.g], P[layout_.dec_ln.b], dec_ln_);

  Matrix<T> dmemory = Matrix<T>::Zero(memory_.rows(), memory_.cols());
  for (std::size_t l = layout_.dec.size(); l-- > 0;) {
    const auto& L = layout_.dec[l];
    auto& c = dec_[l];
    Matrix<T> df = dy;
    dropout_backward(df, c.drop_ffn);
    dy += ln_backward(ffn_backward(df, st, L.ffn, c.ffn), P[L.ln3.g],
                      P[L.ln3.b], c.ln3);
    Matrix<T> dxa = dy;
    dropout_backward(dxa, c.drop_cross);
    auto [dq, dkv] = mha_backward<T>(dxa, st, L.cross, cross_segs_, c.cross);
    dmemory += dkv;
    dy += ln_backward(dq, P[L.ln2.g], P[L.ln2.b], c.ln2);
    Matrix<T> da = dy;
    dropout_backward(da, c.drop_self);
    auto [dsq, dskv] = mha_backward<T>(da, st, L.self, dec_segs_, c.self);
    dsq += dskv;
    dy += ln_backward(dsq, P[L.ln1.g], P[L.ln1.b], c.ln1);
  }

  Matrix<T> dx =
      ln_backward(dmemory, P[layout_.enc_ln.g], P[layout_.enc_ln.b], enc_ln_);
  for (std::size_t l = layout_.enc.size(); l-- > 0;) {
    const auto& L = layout_.enc[l];
    auto& c = enc_[l];
    Matrix<T> df = dx;
    dropout_backward(df, c.drop_ffn);
    dx += ln_backward(ffn_backward(df, st, L.ffn, c.ffn), P[L.ln2.g],
                      P[L.ln2.b], c.ln2);
    Matrix<T> da = dx;
    dropout_backward(da, c.drop_attn);
    auto [dq, dkv] = mha_backward<T>(da, st, L.attn, enc_segs_, c.attn);
    dq += dkv;
    dx += ln_backward(dq, P[L.ln1.g], P[L.ln1.b], c.ln1);
  }

  // Embedding gradients.
  const bool positions = st.config.positions;
  Eigen::Index eoff = 0, doff = 0;
  for (const auto& s : batch_.items) {
    for (std::size_t i = 0; i < s.encoder.size(); ++i) {
      auto r = eoff + static_cast<Eigen::Index>(i);
      P[layout_.tok_emb].grad.row(s.encoder[i]) += dx.row(r);
      if (positions) P[layout_.enc_pos].grad.row(static_cast<Eigen::Index>(i)) += dx.row(r);
    }
    for (std::size_t i = 0; i < s.decoder_input.size(); ++i) {
      auto r = doff + static_cast<Eigen::Index>(i);
      P[layout_.tok_emb].grad.row(s.decoder_input[i]) += dy.row(r);
      if (positions) P[layout_.dec_pos].grad.row(static_cast<Eigen::Index>(i)) += dy.row(r);
    }
    eoff += static_cast<Eigen::Index>(s.encoder.size());
    doff += static_cast<Eigen::Index>(s.decoder_input.size());
  }
}

}  // namespace

template <class T>
ModelState<T> ModelState<T>::init(const ModelConfig& config) {
  return make_state<T>(config, false);
}

template <class T>
ModelState<T> ModelState<T>::zeros(const ModelConfig& config) {
  return make_state<T>(config, true);
}

template <class T>
Parameter<T>& ModelState<T>::param(std::string_view name) {
  for (auto& p : params) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "no parameter named '" + std::string(name) + "'");
}

template <class T>
const Parameter<T>& ModelState<T>::param(std::string_view name) const {
  return const_cast<ModelState<T>*>(this)->param(name);
}

template <class T>
std::size_t ModelState<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <class T>
void ModelState<T>::zero_grad() {
  for (auto& p : params) p.grad.setZero();
}

template <class T>
bool ModelState<T>::all_finite() const {
  for (const auto& p : params) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

template <class T>
Matrix<T> attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                    const Matrix<T>& additive, Matrix<T>* weights) {
  if (q.cols() != k.cols() || k.rows() != v.rows() ||
      additive.rows() != q.rows() || additive.cols() != k.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "attention: shape mismatch");
  }
  Matrix<T> o(q.rows(), v.cols());
  std::vector<Matrix<T>> probs;
  // Single head over the full width; value width may differ from key width.
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols())));
  Matrix<T> s = (q * k.transpose()) * scale + additive;
  softmax_rows(s);
  o.noalias() = s * v;
  if (weights) *weights = std::move(s);
  return o;
}

template <class T>
LossResult<T> forward_loss(const ModelState<T>& state, const Batch& batch) {
  Pass<T> pass(state, batch, false, 0);
  LossResult<T> out;
  out.loss = pass.forward(&out.logits, &out.targets);
  if (!std::isfinite(static_cast<double>(out.loss))) {
    throw Error(ErrorCode::kNumeric, "non-finite loss");
  }
  return out;
}

template <class T>
T forward_backward(ModelState<T>& state, const Batch& batch, bool training,
                   std::uint64_t dropout_seed) {
  Pass<T> pass(state, batch, training, dropout_seed);
  T loss = pass.forward(nullptr, nullptr);
  pass.backward(state);
  return loss;
}

template <class T>
Encoded<T> encode(const ModelState<T>& st, const Sequence& seq) {
  const Layout layout(st.config);
  const auto& P = st.params;
  Matrix<T> x = embed(st, layout.tok_emb, layout.enc_pos,
                      std::span<const TokenId>(seq.encoder),
                      static_cast<std::size_t>(st.config.max_len));
  const auto len = static_cast<Eigen::Index>(seq.encoder.size());
  Matrix<T> mask = additive_from<T>(seq.mask, seq.encoder.size());
  const Segment<T> seg{0, len, 0, len, &mask};
  for (const auto& L : layout.enc) {
    Matrix<T> h = ln_forward<T>(x, P[L.ln1.g], P[L.ln1.b], nullptr);
    x += mha_forward<T>(h, h, st, L.attn, std::span(&seg, 1), nullptr);
    Matrix<T> h2 = ln_forward<T>(x, P[L.ln2.g], P[L.ln2.b], nullptr);
    x += ffn_forward<T>(h2, st, L.ffn, nullptr);
  }
  Encoded<T> out;
  out.memory = ln_forward<T>(x, P[layout.enc_ln.g], P[layout.enc_ln.b], nullptr);
  for (const auto& L : layout.dec) {
    out.cross_k.push_back(out.memory * P[L.cross.wk].value);
    out.cross_v.push_back(out.memory * P[L.cross.wv].value);
  }
  out.cross_visible = cross_visibility(seq, st.config.mask_cross);
  return out;
}

template <class T>
Eigen::Matrix<T, 1, Eigen::Dynamic> next_token_logits(
    const ModelState<T>& st, const Encoded<T>& enc,
    std::span<const TokenId> prefix) {
  if (prefix.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "decoder prefix is empty");
  }
  const Layout layout(st.config);
  const auto& P = st.params;
  const int heads = st.config.heads;
  Matrix<T> y = embed(st, layout.tok_emb, layout.dec_pos, prefix,
                      static_cast<std::size_t>(st.config.max_target_len));
  const auto len = static_cast<Eigen::Index>(prefix.size());
  const auto mem_len = enc.memory.rows();
  Matrix<T> causal = causal_additive<T>(prefix.size());
  Matrix<T> cross = cross_additive<T>(enc.cross_visible, prefix.size());
  const Segment<T> self_seg{0, len, 0, len, &causal};
  const Segment<T> cross_seg{0, len, 0, mem_len, &cross};
  for (std::size_t l = 0; l < layout.dec.size(); ++l) {
    const auto& L = layout.dec[l];
    Matrix<T> h = ln_forward<T>(y, P[L.ln1.g], P[L.ln1.b], nullptr);
    y += mha_forward<T>(h, h, st, L.self, std::span(&self_seg, 1), nullptr);
    Matrix<T> h2 = ln_forward<T>(y, P[L.ln2.g], P[L.ln2.b], nullptr);
    Matrix<T> q = h2 * P[L.cross.wq].value;
    Matrix<T> o = Matrix<T>::Zero(q.rows(), q.cols());
    attend_heads<T>(q, enc.cross_k[l], enc.cross_v[l], std::span(&cross_seg, 1),
                    heads, o, nullptr);
    y += o * P[L.cross.wo].value;
    Matrix<T> h3 = ln_forward<T>(y, P[L.ln3.g], P[L.ln3.b], nullptr);
    y += ffn_forward<T>(h3, st, L.ffn, nullptr);
  }
  Matrix<T> last = y.bottomRows(1);
  Matrix<T> z = ln_forward<T>(last, P[layout.dec_ln.g], P[layout.dec_ln.b], nullptr);
  return (z * P[layout.out_w].value + P[layout.out_b].value).row(0);
}

double learning_rate(const OptimConfig& cfg, std::int64_t step) {
  if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.peak_lr;
  return cfg.peak_lr * static_cast<double>(step) /
         static_cast<double>(cfg.warmup_steps);
}

template <class T>
void adamw_step(ModelState<T>& st, const OptimConfig& cfg) {
  if (cfg.grad_clip > 0) {
    double sq = 0;
    for (const auto& p : st.params) sq += static_cast<double>(p.grad.squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      const T s = static_cast<T>(cfg.grad_clip / norm);
      for (auto& p : st.params) p.grad *= s;
    }
  }
  ++st.step;
  const double lr = learning_rate(cfg, st.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.epsilon);
  const T decay = static_cast<T>(lr * cfg.weight_decay);
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    auto& p = st.params[i];
    auto& m = st.moment1[i];
    auto& v = st.moment2[i];
    m = b1 * m + (1 - b1) * p.grad;
    v = b2 * v + (1 - b2) * p.grad.cwiseAbs2();
    if (p.decay && cfg.weight_decay > 0) p.value -= decay * p.value;
    p.value.array() -=
        step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  }
}

std::vector<EpochStat> train(ModelState<float>& state,
                             std::span<const Sequence> data,
                             const TrainOptions& options) {
  const auto& opt = options.optim;
  opt.validate();
  std::vector<EpochStat> curve;
  if (opt.epochs == 0) return curve;
  if (data.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  }
  const std::size_t bs = static_cast<std::size_t>(opt.batch_size);
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    const ModelState<float> last_good = state;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(state.config.seed, static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    double loss_sum = 0;
    std::size_t target_sum = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      Batch batch;
      std::size_t targets = 0;
      for (std::size_t k = b; k < std::min(order.size(), b + bs); ++k) {
        batch.items.push_back(data[order[k]]);
        for (auto t : data[order[k]].target) targets += t != special::kPadId ? 1 : 0;
      }
      state.zero_grad();
      const float loss = forward_backward(
          state, batch, true, static_cast<std::uint64_t>(state.step));
      if (!std::isfinite(loss)) {
        const auto step = state.step;
        state = last_good;
        throw Error(ErrorCode::kNumeric,
                    "loss diverged at epoch " + std::to_string(epoch) +
                        ", step " + std::to_string(step + 1) + " (batch " +
                        std::to_string(b / bs) +
                        "); state restored to the start of the epoch");
      }
      adamw_step(state, opt);
      loss_sum += static_cast<double>(loss) * static_cast<double>(targets);
      target_sum += targets;
    }
    if (!state.all_finite()) {
      state = last_good;
      throw Error(ErrorCode::kNumeric,
                  "non-finite parameters after epoch " + std::to_string(epoch) +
                      "; state restored to the start of the epoch");
    }
    EpochStat stat{epoch, state.step, loss_sum / static_cast<double>(target_sum),
                   learning_rate(opt, state.step)};
    curve.push_back(stat);
    if (options.checkpoint_dir) {
      save_checkpoint(*options.checkpoint_dir /
                          (options.keep_all_checkpoints
                               ? "epoch_" + std::to_string(epoch) + ".ckpt"
                               : std::string("last.ckpt")),
                      state);
    }
    if (options.on_epoch) options.on_epoch(stat);
  }
  return curve;
}

void write_loss_curve(const std::filesystem::path& path,
                      std::span<const EpochStat> curve) {
  auto out = detail::open_output(path);
  out << "epoch,step,loss,lr\n";
  out.precision(17);
  for (const auto& e : curve) {
    out << e.epoch << ',' << e.step << ',' << e.loss << ',' << e.lr << '\n';
  }
}

double finite_difference_error(const std::function<double()>& loss,
                               double& parameter, double analytic,
                               double epsilon) {
  const double saved = parameter;
  parameter = saved + epsilon;
  const double up = loss();
  parameter = saved - epsilon;
  const double down = loss();
  parameter = saved;
  const double numeric = (up - down) / (2 * epsilon);
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const ModelState<double>& state, const Batch& batch,
                  double epsilon, int samples, std::uint64_t seed) {
  ModelState<double> work = state;
  work.config.dropout = 0.0;
  work.zero_grad();
  forward_backward(work, batch, false, 0);
  Rng rng(seed);
  double worst = 0;
  for (int s = 0; s < samples; ++s) {
    auto& p = work.params[rng.below(work.params.size())];
    const auto k = static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(p.value.size())));
    const double analytic = p.grad.data()[k];
    auto loss = [&] { return forward_loss(work, batch).loss; };
    worst = std::max(worst, finite_difference_error(loss, p.value.data()[k],
                                                    analytic, epsilon));
  }
  return worst;
}

#define KPROMPT_INSTANTIATE(T)                                                 \
  template struct ModelState<T>;                                               \
  template Matrix<T> attention<T>(const Matrix<T>&, const Matrix<T>&,          \
                                  const Matrix<T>&, const Matrix<T>&,          \
                                  Matrix<T>*);                                 \
  template LossResult<T> forward_loss<T>(const ModelState<T>&, const Batch&);  \
  template T forward_backward<T>(ModelState<T>&, const Batch&, bool,           \
                                 std::uint64_t);                               \
  template Encoded<T> encode<T>(const ModelState<T>&, const Sequence&);        \
  template Eigen::Matrix<T, 1, Eigen::Dynamic> next_token_logits<T>(           \
      const ModelState<T>&, const Encoded<T>&, std::span<const TokenId>);      \
  template void adamw_step<T>(ModelState<T>&, const OptimConfig&);

KPROMPT_INSTANTIATE(float)
KPROMPT_INSTANTIATE(double)

#undef KPROMPT_INSTANTIATE

}  // namespace kprompt
