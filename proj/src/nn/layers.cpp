#include "advgen/nn/layers.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace advgen::nn {

using json = nlohmann::json;

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, float stddev,
               bool bias)
    : stride(stride_), pad(pad_), has_bias(bias) {
  if (stddev < 0) stddev = std::sqrt(2.0f / (float(cin) * k * k));
  w = Tensor::randn(Shape{cout, cin, k, k}, rng, stddev, true);
  if (has_bias) b = Tensor::zeros(Shape{cout, 1, 1, 1}, true);
}

Tensor Conv2d::operator()(const Tensor& x) const {
  return conv2d(x, w, has_bias ? b : Tensor(), stride, pad);
}

void Conv2d::zero_weights() {
  std::fill(w.values().begin(), w.values().end(), 0.0f);
  if (has_bias) std::fill(b.values().begin(), b.values().end(), 0.0f);
}

void Conv2d::collect(NamedParams& out, const std::string& prefix) const {
  out.push_back({prefix + ".w", w});
  if (has_bias) out.push_back({prefix + ".b", b});
}

InstanceNorm2d::InstanceNorm2d(int c) {
  gamma = Tensor::full(Shape{c, 1, 1, 1}, 1.0f, true);
  beta = Tensor::zeros(Shape{c, 1, 1, 1}, true);
}

void InstanceNorm2d::collect(NamedParams& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Linear::Linear(int cin, int cout, Rng& rng, float stddev) {
  if (stddev < 0) stddev = std::sqrt(2.0f / float(cin));
  w = Tensor::randn(Shape{cout, cin, 1, 1}, rng, stddev, true);
  b = Tensor::zeros(Shape{cout, 1, 1, 1}, true);
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

void set_requires_grad(NamedParams& params, bool rg) {
  for (auto& [name, t] : params) t.set_requires_grad(rg);
}

void zero_grads(NamedParams& params) {
  for (auto& [name, t] : params) t.zero_grad();
}

uint64_t params_hash(const NamedParams& params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params) {
    h = fnv1a64(name, h);
    h = fnv1a64(t.data(), t.numel() * sizeof(float), h);
  }
  return h;
}

static const char kMagic[] = "ADVGEN-CKPT-1\n";

void save_checkpoint(const std::string& path, const std::string& arch,
                     const NamedParams& params, const std::string& meta_json) {
  json header;
  header["arch"] = arch;
  header["meta"] = json::parse(meta_json);
  json dir = json::array();
  for (const auto& [name, t] : params) {
    Shape s = t.shape();
    dir.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  header["params"] = dir;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic) - 1);
  uint64_t len = hs.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, t] : params)
    f.write(reinterpret_cast<const char*>(t.data()),
            std::streamsize(t.numel() * sizeof(float)));
  if (!f) throw DataError("short write on checkpoint: " + path);
}

std::string load_checkpoint(const std::string& path, const std::string& arch,
                            NamedParams& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw IntegrityError("not a checkpoint file: " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!f || len > (1ull << 30)) throw IntegrityError("corrupt checkpoint header: " + path);
  std::string hs(len, '\0');
  f.read(hs.data(), std::streamsize(len));
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded()) throw IntegrityError("corrupt checkpoint header: " + path);

  std::string file_arch = header.at("arch").get<std::string>();
  if (file_arch != arch)
    throw IntegrityError("checkpoint arch mismatch: file has '" + file_arch +
                         "', expected '" + arch + "' (" + path + ")");

  const json& dir = header.at("params");
  if (dir.size() != params.size())
    throw IntegrityError("checkpoint parameter count mismatch: " + path);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    const json& e = dir[i];
    if (e.at("name").get<std::string>() != name)
      throw IntegrityError("checkpoint parameter order mismatch at '" + name + "': " + path);
    auto sv = e.at("shape").get<std::vector<int>>();
    Shape s{sv[0], sv[1], sv[2], sv[3]};
    if (s != t.shape())
      throw IntegrityError("checkpoint shape mismatch for '" + name + "': " + path);
    f.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * sizeof(float)));
    if (!f) throw IntegrityError("checkpoint truncated at '" + name + "': " + path);
  }
  return header.at("meta").dump();
}

std::pair<std::string, std::string> peek_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw IntegrityError("not a checkpoint file: " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!f || len > (1ull << 30)) throw IntegrityError("corrupt checkpoint header: " + path);
  std::string hs(len, '\0');
  f.read(hs.data(), std::streamsize(len));
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded() || !f) throw IntegrityError("corrupt checkpoint header: " + path);
  return {header.at("arch").get<std::string>(), header.at("meta").dump()};
}

}  // namespace advgen::nn
