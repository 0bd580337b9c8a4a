// SPDX-License-Identifier: Apache-2.0
#include "gazessl/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace gazessl::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const ParamList& params, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
      put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      put<std::uint8_t>(os, 0);
      const Tensor& t = p.var.value();
      put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) put<std::uint64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  const auto count = get<std::uint32_t>(is);
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("checkpoint: truncated name");
    if (get<std::uint8_t>(is) != 0) throw std::runtime_error("checkpoint: unknown dtype for " + name);
    const auto rank = get<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    std::vector<float> data(numel(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)))) {
      throw std::runtime_error("checkpoint: truncated payload for " + name);
    }
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void load_checkpoint(ParamList& params, const std::filesystem::path& path) {
  std::map<std::string, Tensor> byname;
  for (auto& [n, t] : read_checkpoint(path)) byname.emplace(n, std::move(t));
  for (auto& p : params) {
    auto it = byname.find(p.name);
    if (it == byname.end()) throw std::runtime_error("checkpoint: missing parameter " + p.name);
    if (it->second.shape() != p.var.shape()) throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    p.var.mutable_value() = it->second;
  }
}

}  // namespace gazessl::nn
