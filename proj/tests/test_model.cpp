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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "kprompt/error.hpp"
#include "kprompt/model.hpp"

namespace kprompt {
namespace {

using testing::TempDir;
using testing::tiny_config;

constexpr int kVocab = 24;

template <class T>
Matrix<T> naive_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                          const MaskMatrix& mask) {
  Matrix<T> out = Matrix<T>::Zero(q.rows(), v.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> w;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double s = 0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) s += double(q(i, c)) * double(k(j, c));
      w.push_back(mask.visible(i, j) ? std::exp(s * scale) : 0.0);
    }
    const double z = std::accumulate(w.begin(), w.end(), 0.0);
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      out.row(i) += static_cast<T>(w[j] / z) * v.row(j);
    }
  }
  return out;
}

Matrix<double> additive_of(const MaskMatrix& m) {
  Matrix<double> a(m.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) a(i, j) = m.additive(i, j);
  return a;
}

TEST(Attention, MatchesNaiveLoopsWithMask) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix<double> q(5, 4), k(5, 4), v(5, 3);
  for (auto* m : {&q, &k, &v})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
  MaskMatrix mask(5);
  for (std::size_t i = 0; i < 5; ++i) {
    mask.set(i, i, true);
    mask.set(i, (i + 2) % 5, true);
  }
  Matrix<double> weights;
  auto out = attention<double>(q, k, v, additive_of(mask), &weights);
  EXPECT_LT((out - naive_attention(q, k, v, mask)).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(weights.row(i).sum(), 1.0, 1e-12);
    for (std::size_t j = 0; j < 5; ++j) {
      if (!mask.visible(i, j)) EXPECT_EQ(weights(i, j), 0.0);
    }
  }
}

TEST(Attention, UniformWhenScoresEqual) {
  Matrix<double> q = Matrix<double>::Zero(2, 2);
  Matrix<double> k = Matrix<double>::Ones(3, 2);
  Matrix<double> v(3, 1);
  v << 1, 2, 6;
  Matrix<double> add = Matrix<double>::Zero(2, 3);
  add(1, 2) = kMaskSentinel;
  auto out = attention<double>(q, k, v, add);
  EXPECT_NEAR(out(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(out(1, 0), 1.5, 1e-12);
}

Batch random_batch(std::mt19937_64& rng, std::vector<MaskMatrix>& masks, std::size_t n,
                   std::size_t len) {
  masks.resize(n);
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.items.push_back(testing::random_sequence(rng, kVocab, len + i, masks[i],
                                               static_cast<TokenId>(special::kCount + i)));
    b.items.back().mask_position = i % (len + i);
  }
  return b;
}

TEST(Model, ZeroModelLossIsLogVocab) {
  auto st = ModelState<double>::zeros(tiny_config(kVocab));
  std::mt19937_64 rng(1);
  std::vector<MaskMatrix> masks;
  auto b = random_batch(rng, masks, 2, 6);
  auto r = forward_loss(st, b);
  EXPECT_EQ(r.targets, 4u);
  EXPECT_NEAR(r.loss, std::log(double(kVocab)), 1e-12);
}

TEST(Model, ConfigValidation) {
  auto c = tiny_config(kVocab);
  c.heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_config(0);
  EXPECT_THROW(c.validate(), Error);
  c = tiny_config(kVocab);
  EXPECT_EQ(ModelConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Model, GradientsMatchFiniteDifferences) {
  for (bool mask_cross : {false, true}) {
    auto c = tiny_config(kVocab, 11);
    c.mask_cross = mask_cross;
    auto st = ModelState<double>::init(c);
    std::mt19937_64 rng(5);
    std::vector<MaskMatrix> masks;
    auto b = random_batch(rng, masks, 2, 7);
    EXPECT_LT(grad_check(st, b, 1e-5, 60, 9), 1e-4) << "mask_cross " << mask_cross;
  }
}

TEST(Model, FiniteDifferenceHelper) {
  double x = 1.5;
  auto f = [&] { return x * x * x; };
  EXPECT_LT(finite_difference_error(f, x, 3 * 1.5 * 1.5, 1e-4), 1e-7);
  EXPECT_EQ(x, 1.5);
  EXPECT_GT(finite_difference_error(f, x, 1.0, 1e-4), 0.5);
}

TEST(Model, EveryParameterReceivesGradient) {
  auto st = ModelState<double>::init(tiny_config(kVocab));
  std::mt19937_64 rng(2);
  std::vector<MaskMatrix> masks;
  auto b = random_batch(rng, masks, 2, 6);
  st.zero_grad();
  forward_backward(st, b);
  for (const auto& p : st.params) EXPECT_GT(p.grad.norm(), 0.0) << p.name;
}

// A token that only sees itself and is hidden from [mask] cannot influence
// the loss when cross-attention is restricted.
TEST(Model, IsolatedTokenHasNoInfluenceUnderMaskCross) {
  auto c = tiny_config(kVocab);
  c.mask_cross = true;
  auto st = ModelState<double>::init(c);
  std::mt19937_64 rng(4);
  MaskMatrix mask;
  auto seq = testing::random_sequence(rng, kVocab, 8, mask, 7);
  const std::size_t hidden = 5;
  for (std::size_t j = 0; j < 8; ++j) {
    mask.set(hidden, j, j == hidden);
    mask.set(j, hidden, j == hidden);
  }
  const TokenId lonely = kVocab - 1;
  for (auto& t : seq.encoder) {
    if (t == lonely) t = special::kCount;
  }
  seq.encoder[hidden] = lonely;
  Batch b{{seq}};
  const double base = forward_loss(st, b).loss;
  st.zero_grad();
  forward_backward(st, b);
  EXPECT_EQ(st.param("tok_emb").grad.row(lonely).norm(), 0.0);

  b.items[0].encoder[hidden] = kVocab - 2;
  EXPECT_EQ(forward_loss(st, b).loss, base);

  c.mask_cross = false;
  st.config = c;
  EXPECT_NE(forward_loss(st, b).loss, base);
}

TEST(Model, PermutationInvariantWithoutPositions) {
  auto c = tiny_config(kVocab);
  c.positions = false;
  auto st = ModelState<double>::init(c);
  std::mt19937_64 rng(8);
  MaskMatrix mask;
  auto seq = testing::random_sequence(rng, kVocab, 9, mask, 6);
  seq.mask_position = 2;
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  // Token at new position i came from perm[i].
  MaskMatrix pmask(9);
  Sequence pseq = seq;
  for (std::size_t i = 0; i < 9; ++i) {
    pseq.encoder[i] = seq.encoder[perm[i]];
    if (perm[i] == seq.mask_position) pseq.mask_position = i;
    for (std::size_t j = 0; j < 9; ++j) pmask.set(i, j, mask.visible(perm[i], perm[j]));
  }
  pseq.mask = &pmask;
  for (bool mc : {false, true}) {
    st.config.mask_cross = mc;
    const double a = forward_loss(st, Batch{{seq}}).loss;
    const double p = forward_loss(st, Batch{{pseq}}).loss;
    EXPECT_NEAR(a, p, 1e-12) << mc;
  }
}

TEST(Model, IncrementalDecodingMatchesTeacherForcing) {
  auto st = ModelState<float>::init(tiny_config(kVocab));
  std::mt19937_64 rng(6);
  MaskMatrix mask;
  auto seq = testing::random_sequence(rng, kVocab, 10, mask, 9);
  auto full = forward_loss(st, Batch{{seq}});
  auto enc = encode(st, seq);
  for (std::size_t t = 1; t <= seq.decoder_input.size(); ++t) {
    auto row = next_token_logits(st, enc, std::span(seq.decoder_input).first(t));
    EXPECT_LT((row - full.logits.row(t - 1)).cwiseAbs().maxCoeff(), 1e-5f);
  }
}

TEST(Model, PackedBatchEqualsSeparateSequences) {
  auto st = ModelState<double>::init(tiny_config(kVocab));
  std::mt19937_64 rng(12);
  std::vector<MaskMatrix> masks;
  auto b = random_batch(rng, masks, 3, 5);
  const double joint = forward_loss(st, b).loss;
  double sum = 0;
  for (const auto& s : b.items) sum += forward_loss(st, Batch{{s}}).loss;
  EXPECT_NEAR(joint, sum / 3, 1e-12);
}

TEST(Optim, WarmupThenConstant) {
  OptimConfig o;
  o.peak_lr = 1e-3;
  o.warmup_steps = 4;
  EXPECT_DOUBLE_EQ(learning_rate(o, 1), 2.5e-4);
  EXPECT_DOUBLE_EQ(learning_rate(o, 4), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate(o, 1000), 1e-3);
  o.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(learning_rate(o, 1), 1e-3);
}

TEST(Optim, DecoupledDecaySkipsGainsAndBiases) {
  auto st = ModelState<double>::init(tiny_config(kVocab));
  st.zero_grad();
  OptimConfig o;
  o.peak_lr = 0.1;
  o.warmup_steps = 0;
  o.weight_decay = 0.5;
  auto before = st;
  adamw_step(st, o);
  EXPECT_EQ(st.step, 1);
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    const auto& p = st.params[i];
    const double f = p.decay ? 1 - 0.1 * 0.5 : 1.0;
    EXPECT_LT((p.value - f * before.params[i].value).cwiseAbs().maxCoeff(), 1e-15) << p.name;
  }
  EXPECT_FALSE(st.param("enc.0.ln1.g").decay);
  EXPECT_TRUE(st.param("enc.0.attn.wq").decay);
}

TEST(Optim, AdamFirstStepMovesByLearningRate) {
  auto st = ModelState<double>::zeros(tiny_config(kVocab));
  OptimConfig o;
  o.peak_lr = 0.01;
  o.warmup_steps = 0;
  o.weight_decay = 0;
  o.grad_clip = 0;
  o.epsilon = 0;
  st.param("lm_head.b").grad(0, 3) = -7.0;
  st.param("lm_head.b").grad(0, 4) = 0.25;
  adamw_step(st, o);
  EXPECT_NEAR(st.param("lm_head.b").value(0, 3), 0.01, 1e-15);
  EXPECT_NEAR(st.param("lm_head.b").value(0, 4), -0.01, 1e-15);
}

std::vector<Sequence> memorise_set(std::vector<MaskMatrix>& masks) {
  std::mt19937_64 rng(21);
  masks.resize(6);
  std::vector<Sequence> data;
  for (std::size_t i = 0; i < 6; ++i) {
    data.push_back(testing::random_sequence(rng, kVocab, 6, masks[i],
                                            static_cast<TokenId>(special::kCount + i)));
  }
  return data;
}

OptimConfig fast_optim(int epochs) {
  OptimConfig o;
  o.peak_lr = 3e-3;
  o.warmup_steps = 2;
  o.batch_size = 2;
  o.epochs = epochs;
  return o;
}

TEST(Train, LossFallsOnTinySet) {
  std::vector<MaskMatrix> masks;
  auto data = memorise_set(masks);
  auto st = ModelState<float>::init(tiny_config(kVocab));
  TrainOptions opt{fast_optim(60)};
  auto curve = train(st, data, opt);
  ASSERT_EQ(curve.size(), 60u);
  EXPECT_EQ(curve.back().step, 180);
  EXPECT_LT(curve.back().loss, 0.5 * curve.front().loss);
}

TEST(Train, ToyConfigMemorises200Samples) {
  constexpr int vocab = 80;
  std::mt19937_64 rng(33);
  std::vector<MaskMatrix> masks(200);
  std::vector<Sequence> data;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto target = static_cast<TokenId>(special::kCount + rng() % (vocab - special::kCount));
    data.push_back(testing::random_sequence(rng, vocab, 8 + i % 8, masks[i], target));
  }
  ModelConfig c;  // toy defaults
  c.vocab_size = vocab;
  c.max_len = 16;
  auto st = ModelState<float>::init(c);
  TrainOptions opt;  // 50 epochs at the default learning rate
  auto curve = train(st, data, opt);
  ASSERT_EQ(curve.size(), 50u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(curve[e].loss, curve[e - 1].loss) << e;
  // The curve carries dropout noise; memorisation is judged without it.
  EXPECT_LT(forward_loss(st, Batch{data}).loss, 0.1);
}

TEST(Train, DeterministicAndZeroEpochIsNoop) {
  std::vector<MaskMatrix> masks;
  auto data = memorise_set(masks);
  auto a = ModelState<float>::init(tiny_config(kVocab));
  auto b = a;
  auto c = a;
  auto cfg = fast_optim(3);
  cfg.batch_size = 4;
  TrainOptions opt{cfg};
  opt.optim.epochs = 3;
  train(a, data, opt);
  train(b, data, opt);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params[i].value, b.params[i].value) << a.params[i].name;
  }
  opt.optim.epochs = 0;
  EXPECT_TRUE(train(c, data, opt).empty());
  EXPECT_EQ(c.step, 0);
  EXPECT_EQ(c.params[0].value, ModelState<float>::init(tiny_config(kVocab)).params[0].value);
}

TEST(Train, NonFiniteLossIsReported) {
  std::vector<MaskMatrix> masks;
  auto data = memorise_set(masks);
  auto st = ModelState<float>::init(tiny_config(kVocab));
  st.param("lm_head.b").value(0, 4) = std::numeric_limits<float>::quiet_NaN();
  try {
    train(st, data, TrainOptions{fast_optim(1)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
}

TEST(Train, WritesEpochCheckpointsAndCurve) {
  TempDir dir("train");
  std::vector<MaskMatrix> masks;
  auto data = memorise_set(masks);
  auto st = ModelState<float>::init(tiny_config(kVocab));
  TrainOptions opt{fast_optim(2)};
  opt.checkpoint_dir = dir.path();
  int calls = 0;
  opt.on_epoch = [&](const EpochStat&) { ++calls; };
  auto curve = train(st, data, opt);
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_1.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_2.ckpt"));
  write_loss_curve(dir / "loss.csv", curve);
  auto text = testing::read_file(dir / "loss.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,step,loss,lr");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(Checkpoint, ReloadIsBitExact) {
  TempDir dir("ckpt");
  std::vector<MaskMatrix> masks;
  auto data = memorise_set(masks);
  auto st = ModelState<float>::init(tiny_config(kVocab));
  train(st, data, TrainOptions{fast_optim(1)});
  save_checkpoint(dir / "m.ckpt", st);
  auto back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.step, st.step);
  EXPECT_EQ(back.config.to_json(), st.config.to_json());
  ASSERT_EQ(back.params.size(), st.params.size());
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    EXPECT_EQ(back.params[i].name, st.params[i].name);
    EXPECT_EQ(back.params[i].value, st.params[i].value);
    EXPECT_EQ(back.moment1[i], st.moment1[i]);
    EXPECT_EQ(back.moment2[i], st.moment2[i]);
  }
  Batch b{{data[0], data[1]}};
  EXPECT_EQ(forward_loss(back, b).loss, forward_loss(st, b).loss);
}

TEST(Checkpoint, MissingAndCorruptFiles) {
  TempDir dir("ckpt");
  try {
    load_checkpoint(dir / "none.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingArtifact);
  }
  testing::write_file(dir / "bad.ckpt", "NOPE");
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), Error);
}

}  // namespace
}  // namespace kprompt
