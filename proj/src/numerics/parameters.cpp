/*
 * Copyright 2026 The DMKCM Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dmkcm/numerics/parameters.hpp"

#include <bit>
#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dmkcm {

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ContractError("Rng::below(0)");
  return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
}

Tensor& ParameterSet::add(const std::string& name, Shape shape, Init init, Rng& rng) {
  const auto n = shape_numel(shape);
  std::vector<Scalar> values(n);
  for (auto& v : values) {
    switch (init) {
      case Init::kUniform: v = static_cast<Scalar>(rng.uniform(-kInitRange, kInitRange)); break;
      case Init::kZeros: v = 0; break;
      case Init::kOnes: v = 1; break;
    }
  }
  return add(name, Tensor::from(std::move(shape), std::move(values), true));
}

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
  if (name.empty()) throw ContractError("parameter name must be non-empty");
  if (params_.count(name)) throw ContractError("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  return params_.emplace(name, std::move(value)).first->second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& [name, t] : params_) out.add(name, t.detach());
  return out;
}

namespace {

template <typename T>
void put(std::string& buf, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

  bool done() const { return pos_ == data_.size(); }

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) throw CheckpointError(origin_ + ": truncated checkpoint");
  }

  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_tensors(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors) {
  std::string buf(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(buf, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(buf, d);
    for (Scalar v : t.data()) put<double>(buf, static_cast<double>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

std::map<std::string, Tensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}), path.string());
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) {
    throw CheckpointError(path.string() + ": bad magic, not a DMKC checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  }
  std::map<std::string, Tensor> out;
  while (!r.done()) {
    const auto name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > 2) throw CheckpointError(path.string() + ": tensor " + name + " has rank > 2");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<Scalar> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<Scalar>(r.get<double>());
    if (!out.emplace(name, Tensor::from(shape, std::move(values))).second) {
      throw CheckpointError(path.string() + ": duplicate tensor " + name);
    }
  }
  return out;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& params) {
  save_tensors(path, params.items());
}

void load_parameters(const std::filesystem::path& path, ParameterSet& params) {
  auto loaded = load_tensors(path);
  if (loaded.size() != params.size()) {
    throw CheckpointError(path.string() + ": holds " + std::to_string(loaded.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& [name, target] : params.items()) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw CheckpointError(path.string() + ": missing tensor " + name);
    if (it->second.shape() != target.shape()) {
      throw CheckpointError(path.string() + ": tensor " + name + " has shape " +
                            shape_to_string(it->second.shape()) + ", model expects " +
                            shape_to_string(target.shape()));
    }
  }
  for (auto& [name, _] : params.items()) {
    auto src = loaded.at(name).data();
    auto dst = params.get(name).mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace dmkcm
