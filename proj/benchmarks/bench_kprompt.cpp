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

#include <benchmark/benchmark.h>

#include <random>

#include "kprompt/generate.hpp"
#include "kprompt/ktree.hpp"
#include "kprompt/maskgen.hpp"
#include "kprompt/model.hpp"
#include "kprompt/synth.hpp"

namespace {

using namespace kprompt;

const MppTemplate kTemplate{
    1, "User {user} has previously watched {history}, and is going to watch {mask} next.", ", "};

struct ChainPrompt {
  SynthData data;
  Vocabulary vocab;
  std::vector<ItemId> history{"1", "2", "3", "4", "5"};

  ChainPrompt() {
    SynthConfig c;
    c.rule = SynthRule::kAttrChain2Hop;
    data = generate(c);
    for (int i = 1; i <= c.n_items; ++i) vocab.add(item_token(std::to_string(i)));
    vocab.add(user_token("u"));
    for (auto text : {std::string_view(kTemplate.pattern), std::string_view("has attribute belongs to")}) {
      for (const auto& w : split_words(text)) vocab.add(w.word);
    }
    for (const auto& [e, name] : data.kg.names()) vocab.add(name);
  }

  CompiledPrompt compile(int hops) const {
    return build_tree(render_mpp(kTemplate, "u", history), data.kg, history, hops, 4, vocab, 512);
  }
};

void BM_BuildTree(benchmark::State& state) {
  ChainPrompt p;
  const int hops = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(p.compile(hops));
}
BENCHMARK(BM_BuildTree)->Arg(0)->Arg(1)->Arg(2);

void BM_BuildMask(benchmark::State& state) {
  ChainPrompt p;
  const auto c = p.compile(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_mask(c.tree, c.fused.size()));
  state.counters["tokens"] = static_cast<double>(c.fused.size());
}
BENCHMARK(BM_BuildMask)->Arg(0)->Arg(1)->Arg(2);

struct ToyBatch {
  std::vector<MaskMatrix> masks;
  Batch batch;

  ToyBatch(int vocab, std::size_t n, std::size_t len) {
    std::mt19937_64 rng(1);
    masks.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sequence s;
      for (std::size_t t = 0; t < len; ++t) {
        s.encoder.push_back(static_cast<TokenId>(special::kCount + rng() % (vocab - special::kCount)));
      }
      masks[i] = MaskMatrix(len);
      for (std::size_t a = 0; a < len; ++a)
        for (std::size_t b = 0; b < len; ++b) masks[i].set(a, b, (a + b) % 3 != 0 || a == b);
      s.mask = &masks[i];
      const auto target = static_cast<TokenId>(special::kCount + i);
      s.decoder_input = {special::kBosId, target};
      s.target = {target, special::kEosId};
      batch.items.push_back(std::move(s));
    }
  }
};

ModelConfig toy(int vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.max_len = 128;
  return c;
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  ToyBatch b(600, 16, len);
  auto st = ModelState<float>::init(toy(600));
  for (auto _ : state) {
    st.zero_grad();
    benchmark::DoNotOptimize(forward_backward(st, b.batch));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  Vocabulary vocab;
  std::vector<ItemId> items;
  for (int i = 1; i <= 200; ++i) {
    items.push_back(std::to_string(i));
    vocab.add(item_token(items.back()));
  }
  const auto catalog = ItemCatalog::from_vocabulary(vocab, items);
  ToyBatch b(static_cast<int>(vocab.size()), 1, 48);
  const auto st = ModelState<float>::init(toy(static_cast<int>(vocab.size())));
  BeamConfig cfg;
  cfg.beam_width = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(beam_search(st, b.batch.items[0], catalog, cfg));
}
BENCHMARK(BM_BeamSearch)->Arg(10)->Arg(20)->Arg(50)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
