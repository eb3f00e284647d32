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

#include <bit>
#include <cstring>
#include <fstream>

#include "kprompt/error.hpp"
#include "kprompt/model.hpp"
#include "tsv.hpp"

namespace kprompt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'K', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

template <class V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class V>
V get(std::istream& in, const std::string& path) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw Error(ErrorCode::kIo, "truncated checkpoint " + path);
  }
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Matrix<float>& m) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, kDtypeF32);
  put<std::uint32_t>(out, 2);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(float)));
}

Matrix<float> get_tensor(std::istream& in, const std::string& expected,
                         const Matrix<float>& like, const std::string& path) {
  const auto len = get<std::uint32_t>(in, path);
  std::string name(len, '\0');
  if (!in.read(name.data(), len)) throw Error(ErrorCode::kIo, "truncated checkpoint " + path);
  if (name != expected) {
    throw Error(ErrorCode::kIo, "checkpoint " + path + ": expected tensor '" +
                                    expected + "', found '" + name + "'");
  }
  if (get<std::uint8_t>(in, path) != kDtypeF32 || get<std::uint32_t>(in, path) != 2) {
    throw Error(ErrorCode::kIo, "checkpoint " + path + ": unsupported dtype or rank for " + name);
  }
  const auto rows = get<std::uint64_t>(in, path);
  const auto cols = get<std::uint64_t>(in, path);
  if (rows != static_cast<std::uint64_t>(like.rows()) ||
      cols != static_cast<std::uint64_t>(like.cols())) {
    throw Error(ErrorCode::kIo, "checkpoint " + path + ": shape mismatch for " + name);
  }
  Matrix<float> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (!in.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(m.size() * sizeof(float)))) {
    throw Error(ErrorCode::kIo, "truncated checkpoint " + path);
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const ModelState<float>& state) {
  auto out = detail::open_output(path);
  const std::string header =
      nlohmann::json{{"config", state.config.to_json()}, {"step", state.step}}.dump();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.params.size() * 3));
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    const auto& p = state.params[i];
    put_tensor(out, p.name, p.value);
    put_tensor(out, "adam.m/" + p.name, state.moment1[i]);
    put_tensor(out, "adam.v/" + p.name, state.moment2[i]);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing checkpoint " + path.string());
}

ModelState<float> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingArtifact,
                "missing checkpoint " + path.string() + " (run `kprompt train` first)");
  }
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::kIo, p + " is not a kprompt checkpoint");
  }
  const auto version = get<std::uint32_t>(in, p);
  if (version != kVersion) {
    throw Error(ErrorCode::kIo, p + ": unsupported checkpoint version " +
                                    std::to_string(version));
  }
  const auto hlen = get<std::uint64_t>(in, p);
  std::string header(hlen, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(hlen))) {
    throw Error(ErrorCode::kIo, "truncated checkpoint " + p);
  }
  const auto j = nlohmann::json::parse(header);
  auto state = ModelState<float>::zeros(ModelConfig::from_json(j.at("config")));
  state.step = j.at("step").get<std::int64_t>();
  const auto count = get<std::uint32_t>(in, p);
  if (count != state.params.size() * 3) {
    throw Error(ErrorCode::kIo, p + ": tensor count does not match its config");
  }
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    auto& prm = state.params[i];
    prm.value = get_tensor(in, prm.name, prm.value, p);
    state.moment1[i] = get_tensor(in, "adam.m/" + prm.name, prm.value, p);
    state.moment2[i] = get_tensor(in, "adam.v/" + prm.name, prm.value, p);
  }
  return state;
}

}  // namespace kprompt
