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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "kprompt/maskgen.hpp"
#include "kprompt/prompts.hpp"

namespace kprompt {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int layers_enc = 2;
  int layers_dec = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int vocab_size = 0;
  int max_len = 512;
  int max_target_len = 2;
  double dropout = 0.1;
  std::uint64_t seed = 42;
  // Learned absolute positions; off for permutation-invariance checks.
  bool positions = true;
  // Restrict decoder cross-attention to encoder tokens visible from [mask].
  bool mask_cross = false;

  int head_dim() const { return d_model / heads; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool decay = true;
};

template <class T>
struct ModelState {
  ModelConfig config;
  std::vector<Parameter<T>> params;
  // AdamW first and second moments, parallel to params.
  std::vector<Matrix<T>> moment1;
  std::vector<Matrix<T>> moment2;
  std::int64_t step = 0;

  // Small random weights, unit layer-norm gains, seeded by config.seed.
  static ModelState init(const ModelConfig& config);
  // Every parameter zero, gains included.
  static ModelState zeros(const ModelConfig& config);

  Parameter<T>& param(std::string_view name);
  const Parameter<T>& param(std::string_view name) const;
  std::size_t parameter_count() const;
  void zero_grad();
  bool all_finite() const;

  template <class U>
  ModelState<U> cast() const {
    ModelState<U> out;
    out.config = config;
    out.step = step;
    for (const auto& p : params) {
      out.params.push_back({p.name, p.value.template cast<U>(),
                            p.grad.template cast<U>(), p.decay});
    }
    for (const auto& m : moment1) out.moment1.push_back(m.template cast<U>());
    for (const auto& m : moment2) out.moment2.push_back(m.template cast<U>());
    return out;
  }
};

// One encoder-decoder example. `mask` null means every encoder token sees
// every other one.
struct Sequence {
  std::vector<TokenId> encoder;
  const MaskMatrix* mask = nullptr;
  std::size_t mask_position = 0;
  std::vector<TokenId> decoder_input;
  std::vector<TokenId> target;
};

// Packed variable-length batch: sequences are concatenated row-wise and
// attention runs per sequence, so no pad token ever enters attention.
struct Batch {
  std::vector<Sequence> items;

  std::size_t encoder_tokens() const;
  std::size_t decoder_tokens() const;
};

// softmax(Q K^T / sqrt(d_k) + M) V for one head. `additive` is 0 or
// kMaskSentinel per (query, key); `weights`, when given, receives the
// attention matrix.
template <class T>
Matrix<T> attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                    const Matrix<T>& additive, Matrix<T>* weights = nullptr);

template <class T>
struct LossResult {
  T loss = 0;
  std::size_t targets = 0;
  Matrix<T> logits;  // [decoder tokens x vocab]
};

// Mean negative log-likelihood over non-pad targets. Does not touch grads.
template <class T>
LossResult<T> forward_loss(const ModelState<T>& state, const Batch& batch);

// Forward plus backward; gradients are added to state.params[*].grad.
// Dropout is active when `training` and config.dropout > 0.
template <class T>
T forward_backward(ModelState<T>& state, const Batch& batch,
                   bool training = false, std::uint64_t dropout_seed = 0);

// Encoder output cached for incremental decoding.
template <class T>
struct Encoded {
  Matrix<T> memory;  // final encoder states [len x d]
  std::vector<Matrix<T>> cross_k;  // per decoder layer
  std::vector<Matrix<T>> cross_v;
  std::vector<std::uint8_t> cross_visible;  // per encoder token
};

template <class T>
Encoded<T> encode(const ModelState<T>& state, const Sequence& seq);

// Logits for the last position of `prefix`.
template <class T>
Eigen::Matrix<T, 1, Eigen::Dynamic> next_token_logits(
    const ModelState<T>& state, const Encoded<T>& encoded,
    std::span<const TokenId> prefix);

struct OptimConfig {
  double peak_lr = 3e-4;
  int warmup_steps = 100;
  double weight_decay = 0.01;
  int batch_size = 16;
  int epochs = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global-norm clip, 0 disables.
  double grad_clip = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimConfig from_json(const nlohmann::json& j);
};

double learning_rate(const OptimConfig& cfg, std::int64_t step);

template <class T>
void adamw_step(ModelState<T>& state, const OptimConfig& cfg);

struct EpochStat {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0;
  double lr = 0;
};

struct TrainOptions {
  OptimConfig optim;
  // Each epoch writes epoch_<n>.ckpt there, or overwrites last.ckpt when
  // keep_all_checkpoints is false.
  std::optional<std::filesystem::path> checkpoint_dir;
  bool keep_all_checkpoints = true;
  std::function<void(const EpochStat&)> on_epoch;
};

// Deterministic given config.seed: the batch order of epoch e is a
// permutation seeded by (seed, e). Throws kNumeric on a non-finite loss after
// restoring the state from the start of the failing epoch.
std::vector<EpochStat> train(ModelState<float>& state,
                             std::span<const Sequence> data,
                             const TrainOptions& options);

void write_loss_curve(const std::filesystem::path& path,
                      std::span<const EpochStat> curve);

// Central finite differences on `samples` random parameter entries of a
// float64 model. Returns the largest |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8).
double grad_check(const ModelState<double>& state, const Batch& batch,
                  double epsilon, int samples, std::uint64_t seed = 0);

// Relative-error helper shared with grad_check for arbitrary scalar losses.
double finite_difference_error(const std::function<double()>& loss,
                               double& parameter, double analytic,
                               double epsilon);

void save_checkpoint(const std::filesystem::path& path,
                     const ModelState<float>& state);
ModelState<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace kprompt
