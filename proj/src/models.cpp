#include "advgen/models.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "advgen/nn/optim.hpp"

namespace advgen {

using nn::Tensor;
using json = nlohmann::json;

namespace {

constexpr float kSlope = 0.2f;
constexpr int kMaxChannels = 256;
constexpr float kGanInit = 0.02f;

std::string size_tag(int s) { return "s" + std::to_string(s); }

Tensor input_tensor(const ImageTensor& img) { return to_tensor(to_symmetric(img)); }

void snapshot_params(nn::NamedParams& params, std::vector<std::vector<float>>& out) {
  out.clear();
  for (auto& [name, t] : params) out.push_back(t.values());
}

void restore_params(nn::NamedParams& params, const std::vector<std::vector<float>>& snap) {
  for (size_t i = 0; i < params.size(); ++i)
    std::memcpy(params[i].second.data(), snap[i].data(), snap[i].size() * sizeof(float));
}

void write_fit_log(const std::string& path, const FitHistory& h, const char* metric_name) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write training log: " + path);
  f << "epoch,train_loss," << metric_name << "\n";
  char buf[96];
  for (size_t e = 0; e < h.train_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e + 1, h.train_loss[e], h.val_metric[e]);
    f << buf;
  }
  if (!f) throw DataError("short write on training log: " + path);
}

int label_of(const ManifestEntry& e) { return e.liveness == Liveness::live ? 0 : 1; }

// Checkpoint headers from other model families miss keys or hold the wrong
// types; surface that as an integrity failure, not a json error.
template <typename F>
auto read_meta(F&& f, const char* what, const std::string& path) {
  try {
    return f();
  } catch (const json::exception&) {
    throw IntegrityError(std::string("checkpoint metadata does not describe a ") + what + ": " +
                         path);
  }
}

}  // namespace

int trunk_downs_for(int image_size) {
  int d = 0;
  while ((image_size >> d) > 8 && d < 3) ++d;
  return std::max(1, d);
}

ConvTrunk::ConvTrunk(int base, int downs, Rng& rng) {
  convs.emplace_back(3, base, 3, 1, 1, rng);
  norms.emplace_back(base);
  int c = base;
  for (int i = 0; i < downs; ++i) {
    int next = std::min(c * 2, kMaxChannels);
    convs.emplace_back(c, next, 3, 2, 1, rng);
    norms.emplace_back(next);
    c = next;
  }
  out_channels = c;
}

Tensor ConvTrunk::operator()(Tensor x) const {
  for (size_t i = 0; i < convs.size(); ++i)
    x = nn::leaky_relu(norms[i](convs[i](x)), kSlope);
  return x;
}

void ConvTrunk::collect(nn::NamedParams& out, const std::string& prefix) const {
  for (size_t i = 0; i < convs.size(); ++i) {
    convs[i].collect(out, prefix + ".conv" + std::to_string(i));
    norms[i].collect(out, prefix + ".norm" + std::to_string(i));
  }
}

// ---------------------------------------------------------------------------

PadModel::PadModel(const PadConfig& cfg, Rng rng) : cfg_(cfg) {
  if (cfg.variant != "cnn_small" && cfg.variant != "cnn_wide")
    throw ParamError("unknown detector variant: " + cfg.variant);
  if (cfg.image_size < 16) throw ParamError("detector image_size too small");
  int base = cfg.variant == "cnn_wide" ? 32 : 16;
  trunk_ = ConvTrunk(base, trunk_downs_for(cfg.image_size), rng);
  head_ = nn::Linear(trunk_.out_channels, 2, rng);
}

Tensor PadModel::forward(const Tensor& x) const {
  return head_(nn::global_avg_pool(trunk_(x)));
}

int PadModel::classify(const ImageTensor& img) const {
  nn::NoGradGuard ng;
  Tensor logits = forward(input_tensor(img));
  return logits.data()[0] >= logits.data()[1] ? 0 : 1;
}

LogitsFn PadModel::logits_fn() const {
  // layer structs copy cheaply and share the live weight storage
  ConvTrunk trunk = trunk_;
  nn::Linear head = head_;
  return [trunk, head](const Tensor& x) { return head(nn::global_avg_pool(trunk(x))); };
}

Classifier PadModel::classifier() const {
  LogitsFn f = logits_fn();
  return [f](const ImageTensor& img) {
    nn::NoGradGuard ng;
    Tensor logits = f(input_tensor(img));
    return logits.data()[0] >= logits.data()[1] ? 0 : 1;
  };
}

nn::NamedParams PadModel::params() {
  nn::NamedParams out;
  trunk_.collect(out, "trunk");
  head_.collect(out, "head");
  return out;
}

std::string PadModel::arch() const {
  return "pad:" + cfg_.variant + ":" + size_tag(cfg_.image_size);
}

uint64_t PadModel::weights_hash() { return nn::params_hash(params()); }

void PadModel::save(const std::string& path) {
  json meta = {{"variant", cfg_.variant}, {"image_size", cfg_.image_size}};
  nn::NamedParams p = params();
  nn::save_checkpoint(path, arch(), p, meta.dump());
}

PadModel PadModel::load(const std::string& path) {
  auto [arch, meta_str] = nn::peek_checkpoint(path);
  PadConfig cfg = read_meta(
      [&] {
        json meta = json::parse(meta_str);
        PadConfig c;
        c.variant = meta.at("variant").get<std::string>();
        c.image_size = meta.at("image_size").get<int>();
        return c;
      },
      "detector", path);
  PadModel m(cfg, Rng(0));
  nn::NamedParams p = m.params();
  nn::load_checkpoint(path, m.arch(), p);
  return m;
}

// ---------------------------------------------------------------------------

Embedder::Embedder(const EmbedderConfig& cfg, Rng rng) : cfg_(cfg) {
  if (cfg.variant != "cnn_small" && cfg.variant != "cnn_wide")
    throw ParamError("unknown embedder variant: " + cfg.variant);
  if (cfg.dim < 2) throw ParamError("embedding dim too small");
  int base = cfg.variant == "cnn_wide" ? 32 : 16;
  trunk_ = ConvTrunk(base, trunk_downs_for(cfg.image_size), rng);
  proj_ = nn::Linear(trunk_.out_channels, cfg.dim, rng);
}

Tensor Embedder::forward(const Tensor& x) const {
  return nn::l2_normalize(proj_(nn::global_avg_pool(trunk_(x))));
}

std::vector<float> Embedder::embed(const ImageTensor& img) const {
  nn::NoGradGuard ng;
  return forward(input_tensor(img)).values();
}

EmbedFn Embedder::embed_fn() const {
  ConvTrunk trunk = trunk_;
  nn::Linear proj = proj_;
  return [trunk, proj](const ImageTensor& img) {
    nn::NoGradGuard ng;
    return nn::l2_normalize(proj(nn::global_avg_pool(trunk(input_tensor(img))))).values();
  };
}

nn::NamedParams Embedder::params() {
  nn::NamedParams out;
  trunk_.collect(out, "trunk");
  proj_.collect(out, "proj");
  return out;
}

std::string Embedder::arch() const {
  return "embedder:" + cfg_.variant + ":" + size_tag(cfg_.image_size) + ":d" +
         std::to_string(cfg_.dim);
}

uint64_t Embedder::weights_hash() { return nn::params_hash(params()); }

void Embedder::save(const std::string& path) {
  json meta = {{"variant", cfg_.variant}, {"image_size", cfg_.image_size}, {"dim", cfg_.dim}};
  nn::NamedParams p = params();
  nn::save_checkpoint(path, arch(), p, meta.dump());
}

Embedder Embedder::load(const std::string& path) {
  auto [arch, meta_str] = nn::peek_checkpoint(path);
  EmbedderConfig cfg = read_meta(
      [&] {
        json meta = json::parse(meta_str);
        EmbedderConfig c;
        c.variant = meta.at("variant").get<std::string>();
        c.image_size = meta.at("image_size").get<int>();
        c.dim = meta.at("dim").get<int>();
        return c;
      },
      "face embedder", path);
  Embedder m(cfg, Rng(0));
  nn::NamedParams p = m.params();
  nn::load_checkpoint(path, m.arch(), p);
  return m;
}

// ---------------------------------------------------------------------------

namespace {
int unet_downs_for(int image_size) { return image_size >= 64 ? 2 : 1; }
}  // namespace

Generator::Generator(const GeneratorConfig& cfg, Rng rng) : cfg_(cfg) {
  if (cfg.base < 2) throw ParamError("generator base width too small");
  if (cfg.image_size < 16) throw ParamError("generator image_size too small");
  if (cfg.residual_cap <= 0) throw ParamError("residual cap must be positive");
  int B = cfg.base;
  int D = unet_downs_for(cfg.image_size);

  down_convs_.emplace_back(3, B, 3, 1, 1, rng, kGanInit);  // stem
  down_norms_.emplace_back(B);
  int c = B;
  for (int i = 0; i < D; ++i) {
    down_convs_.emplace_back(c, c * 2, 3, 2, 1, rng, kGanInit);
    down_norms_.emplace_back(c * 2);
    c *= 2;
  }
  mid_ = nn::Conv2d(c, c, 3, 1, 1, rng, kGanInit);
  mid_norm_ = nn::InstanceNorm2d(c);
  for (int i = 0; i < D; ++i) {
    // upsample -> concat skip (c/2 channels) -> conv to c/2
    up_convs_.emplace_back(c + c / 2, c / 2, 3, 1, 1, rng, kGanInit);
    up_norms_.emplace_back(c / 2);
    c /= 2;
  }
  head_ = nn::Conv2d(B, 3, 3, 1, 1, rng, kGanInit);
  head_.zero_weights();  // exact identity (translation) / exact zero (perturbation) at init
}

Tensor Generator::forward(const Tensor& x) const {
  std::vector<Tensor> feats;
  Tensor h = x;
  for (size_t i = 0; i < down_convs_.size(); ++i) {
    h = nn::leaky_relu(down_norms_[i](down_convs_[i](h)), kSlope);
    feats.push_back(h);
  }
  h = nn::leaky_relu(mid_norm_(mid_(h)), kSlope);
  for (size_t j = 0; j < up_convs_.size(); ++j) {
    h = nn::upsample_nearest2(h);
    h = nn::concat_c(h, feats[feats.size() - 2 - j]);
    h = nn::leaky_relu(up_norms_[j](up_convs_[j](h)), kSlope);
  }
  Tensor r = head_(h);
  if (cfg_.kind == GeneratorKind::translation)
    return nn::clamp_t(nn::add(x, nn::tanh_t(r)), -1.0f, 1.0f);
  return nn::mul_scalar(nn::tanh_t(r), cfg_.residual_cap);
}

ImageTensor Generator::apply(const ImageTensor& img) const {
  nn::NoGradGuard ng;
  Tensor x = input_tensor(img);
  Tensor y = cfg_.kind == GeneratorKind::translation
                 ? forward(x)
                 : nn::clamp_t(nn::add(x, forward(x)), -1.0f, 1.0f);
  ImageTensor out = from_tensor(y, ValueRange::symmetric);
  return img.range == ValueRange::symmetric ? out : to_unit(out);
}

nn::NamedParams Generator::params() {
  nn::NamedParams out;
  for (size_t i = 0; i < down_convs_.size(); ++i) {
    down_convs_[i].collect(out, "down" + std::to_string(i));
    down_norms_[i].collect(out, "dnorm" + std::to_string(i));
  }
  mid_.collect(out, "mid");
  mid_norm_.collect(out, "mnorm");
  for (size_t i = 0; i < up_convs_.size(); ++i) {
    up_convs_[i].collect(out, "up" + std::to_string(i));
    up_norms_[i].collect(out, "unorm" + std::to_string(i));
  }
  head_.collect(out, "head");
  return out;
}

std::string Generator::arch() const {
  const char* kind = cfg_.kind == GeneratorKind::translation ? "translation" : "perturbation";
  return std::string("generator:") + kind + ":" + size_tag(cfg_.image_size) + ":b" +
         std::to_string(cfg_.base) + ":d" + std::to_string(unet_downs_for(cfg_.image_size));
}

uint64_t Generator::weights_hash() { return nn::params_hash(params()); }

void Generator::save(const std::string& path) {
  json meta = {{"kind", cfg_.kind == GeneratorKind::translation ? "translation" : "perturbation"},
               {"image_size", cfg_.image_size},
               {"base", cfg_.base},
               {"residual_cap", cfg_.residual_cap}};
  nn::NamedParams p = params();
  nn::save_checkpoint(path, arch(), p, meta.dump());
}

Generator Generator::load(const std::string& path) {
  auto [arch, meta_str] = nn::peek_checkpoint(path);
  GeneratorConfig cfg = read_meta(
      [&] {
        json meta = json::parse(meta_str);
        GeneratorConfig c;
        c.kind = meta.at("kind").get<std::string>() == "translation"
                     ? GeneratorKind::translation
                     : GeneratorKind::perturbation;
        c.image_size = meta.at("image_size").get<int>();
        c.base = meta.at("base").get<int>();
        c.residual_cap = meta.at("residual_cap").get<float>();
        return c;
      },
      "generator", path);
  Generator m(cfg, Rng(0));
  nn::NamedParams p = m.params();
  nn::load_checkpoint(path, m.arch(), p);
  return m;
}

// ---------------------------------------------------------------------------

namespace {
std::vector<int> disc_strides(int image_size) {
  if (image_size >= 64) return {2, 2, 2, 1, 1};
  if (image_size >= 32) return {2, 2, 1, 1};
  return {2, 2, 1};
}
}  // namespace

PatchDiscriminator::PatchDiscriminator(const DiscConfig& cfg, Rng rng) : cfg_(cfg) {
  if (cfg.base < 2) throw ParamError("discriminator base width too small");
  auto strides = disc_strides(cfg.image_size);
  int n = int(strides.size());
  int c = 3;
  for (int i = 0; i < n; ++i) {
    bool last = i == n - 1;
    int next = last ? 1 : (i == 0 ? cfg.base : std::min(c * 2, kMaxChannels));
    convs_.emplace_back(c, next, 4, strides[size_t(i)], 1, rng, kGanInit);
    if (!last && i > 0) norms_.emplace_back(next);
    c = next;
  }
}

Tensor PatchDiscriminator::forward(const Tensor& x) const {
  Tensor h = x;
  size_t norm_i = 0;
  for (size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    if (i + 1 == convs_.size()) break;  // raw patch logits
    if (i > 0) h = norms_[norm_i++](h);
    h = nn::leaky_relu(h, kSlope);
  }
  return h;
}

int PatchDiscriminator::map_size(int image_size) {
  int s = image_size;
  for (int stride : disc_strides(image_size)) s = (s + 2 - 4) / stride + 1;
  return s;
}

nn::NamedParams PatchDiscriminator::params() {
  nn::NamedParams out;
  size_t norm_i = 0;
  for (size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(out, "conv" + std::to_string(i));
    if (i + 1 < convs_.size() && i > 0)
      norms_[norm_i++].collect(out, "norm" + std::to_string(i));
  }
  return out;
}

std::string PatchDiscriminator::arch() const {
  return "patchdisc:" + size_tag(cfg_.image_size) + ":b" + std::to_string(cfg_.base) + ":d" +
         std::to_string(disc_strides(cfg_.image_size).size());
}

uint64_t PatchDiscriminator::weights_hash() { return nn::params_hash(params()); }

void PatchDiscriminator::save(const std::string& path) {
  json meta = {{"image_size", cfg_.image_size}, {"base", cfg_.base}};
  nn::NamedParams p = params();
  nn::save_checkpoint(path, arch(), p, meta.dump());
}

PatchDiscriminator PatchDiscriminator::load(const std::string& path) {
  auto [arch, meta_str] = nn::peek_checkpoint(path);
  DiscConfig cfg = read_meta(
      [&] {
        json meta = json::parse(meta_str);
        DiscConfig c;
        c.image_size = meta.at("image_size").get<int>();
        c.base = meta.at("base").get<int>();
        return c;
      },
      "patch discriminator", path);
  PatchDiscriminator m(cfg, Rng(0));
  nn::NamedParams p = m.params();
  nn::load_checkpoint(path, m.arch(), p);
  return m;
}

// ---------------------------------------------------------------------------

namespace {
GeneratorConfig decomposer_net_config(GeneratorConfig cfg) {
  cfg.kind = GeneratorKind::perturbation;
  cfg.residual_cap = 1.0f;  // the trace spans the full symmetric range
  return cfg;
}
}  // namespace

Decomposer::Decomposer(const GeneratorConfig& cfg, Rng rng)
    : net_(decomposer_net_config(cfg), rng) {}

std::pair<Tensor, Tensor> Decomposer::decompose(const Tensor& x) const {
  Tensor n = net_.forward(x);
  Tensor live = nn::clamp_t(nn::sub(x, n), -1.0f, 1.0f);
  return {live, n};
}

std::pair<ImageTensor, ImageTensor> Decomposer::decompose(const ImageTensor& img) const {
  nn::NoGradGuard ng;
  auto [live, n] = decompose(input_tensor(img));
  ImageTensor live_img = from_tensor(live, ValueRange::symmetric);
  ImageTensor n_img = from_tensor(n, ValueRange::symmetric);
  if (img.range != ValueRange::symmetric) live_img = to_unit(live_img);
  return {live_img, n_img};
}

nn::NamedParams Decomposer::params() { return net_.params(); }

std::string Decomposer::arch() const {
  const GeneratorConfig& c = net_.config();
  return "decomposer:" + size_tag(c.image_size) + ":b" + std::to_string(c.base) + ":d" +
         std::to_string(unet_downs_for(c.image_size));
}

uint64_t Decomposer::weights_hash() { return nn::params_hash(params()); }

void Decomposer::save(const std::string& path) {
  const GeneratorConfig& c = net_.config();
  json meta = {{"image_size", c.image_size}, {"base", c.base}};
  nn::NamedParams p = params();
  nn::save_checkpoint(path, arch(), p, meta.dump());
}

Decomposer Decomposer::load(const std::string& path) {
  auto [arch, meta_str] = nn::peek_checkpoint(path);
  GeneratorConfig cfg = read_meta(
      [&] {
        json meta = json::parse(meta_str);
        GeneratorConfig c;
        c.image_size = meta.at("image_size").get<int>();
        c.base = meta.at("base").get<int>();
        return c;
      },
      "trace decomposer", path);
  Decomposer m(cfg, Rng(0));
  nn::NamedParams p = m.params();
  nn::load_checkpoint(path, m.arch(), p);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

void check_fit_config(const FitConfig& cfg) {
  if (cfg.epochs < 1) throw ParamError("training needs epochs >= 1");
  if (cfg.lr <= 0) throw ParamError("learning rate must be positive");
}

TransformDistribution pad_augmentation() {
  TransformDistribution d = TransformDistribution::disabled();
  d.rotation = {true, -15.0, 15.0};
  d.translation = {true, -0.03, 0.03};
  return d;
}

TransformDistribution embedder_augmentation() {
  TransformDistribution d = TransformDistribution::disabled();
  d.brightness = {true, -0.15, 0.15};
  d.contrast = {true, 0.9, 1.1};
  d.translation = {true, -0.02, 0.02};
  return d;
}

Tensor noise_like(const Tensor& x, float sigma, Rng& rng) {
  std::vector<float> v(x.numel());
  for (float& e : v) e = sigma * float(rng.normal());
  return Tensor::from_vector(x.shape(), std::move(v));
}

std::vector<Tensor> preload_inputs(const DatasetManifest& m) {
  std::vector<Tensor> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(input_tensor(load_entry(m, e)));
  return out;
}

}  // namespace

FitHistory train_pad(PadModel& model, const DatasetManifest& train_split,
                     const DatasetManifest& val_split, const FitConfig& cfg, Rng rng) {
  check_fit_config(cfg);
  if (train_split.entries.empty() || val_split.entries.empty())
    throw DataError("detector training needs nonempty train and val splits");
  {
    auto a = train_split.identities(), b = val_split.identities();
    std::vector<int> overlap;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(overlap));
    if (!overlap.empty())
      throw DataError("train/val splits share identity " + std::to_string(overlap.front()));
  }

  std::vector<Tensor> train_x = preload_inputs(train_split);
  std::vector<Tensor> val_x = preload_inputs(val_split);
  TransformDistribution aug = pad_augmentation();

  nn::NamedParams params = model.params();
  nn::Adam opt(params, float(cfg.lr), float(cfg.beta1), float(cfg.beta2));

  FitHistory hist;
  std::vector<std::vector<float>> best_snap;
  std::vector<size_t> order(train_x.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = rng.split("epoch").split(uint64_t(epoch));
    er.shuffle(order);
    double loss_sum = 0.0;
    for (size_t i : order) {
      Tensor x = train_x[i];
      if (cfg.augment && er.uniform() < 0.5) {
        TransformList t = sample_transform(aug, er);
        nn::NoGradGuard ng;
        x = apply_transform(t, x);
      }
      Tensor loss = nn::cross_entropy_logits(model.forward(x), {label_of(train_split.entries[i])});
      loss_sum += loss.item();
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    hist.train_loss.push_back(loss_sum / double(train_x.size()));

    int correct = 0;
    {
      nn::NoGradGuard ng;
      for (size_t i = 0; i < val_x.size(); ++i) {
        Tensor logits = model.forward(val_x[i]);
        int pred = logits.data()[0] >= logits.data()[1] ? 0 : 1;
        if (pred == label_of(val_split.entries[i])) ++correct;
      }
    }
    double acc = double(correct) / double(val_x.size());
    hist.val_metric.push_back(acc);
    if (hist.best_epoch < 0 || acc > hist.best) {
      hist.best = acc;
      hist.best_epoch = epoch;
      snapshot_params(params, best_snap);
    }
  }
  restore_params(params, best_snap);
  write_fit_log(cfg.log_csv, hist, "val_acc");
  return hist;
}

FitHistory train_embedder(Embedder& model, const DatasetManifest& train_split,
                          const FitConfig& cfg, Rng rng) {
  check_fit_config(cfg);
  std::vector<int> ids = train_split.identities();
  if (ids.size() < 2) throw DataError("embedder training needs at least 2 identities");
  std::map<int, int> class_of;
  for (size_t i = 0; i < ids.size(); ++i) class_of[ids[i]] = int(i);

  std::vector<Tensor> xs = preload_inputs(train_split);
  std::vector<int> ys;
  ys.reserve(xs.size());
  for (const auto& e : train_split.entries) ys.push_back(class_of.at(e.identity));
  TransformDistribution aug = embedder_augmentation();

  // margin-softmax class weights: training-time auxiliary, not checkpointed
  Rng wrng = rng.split("margin_head");
  Tensor W = Tensor::randn(nn::Shape{int(ids.size()), model.config().dim, 1, 1}, wrng, 0.1f, true);
  nn::NamedParams params = model.params();
  params.emplace_back("margin.w", W);
  nn::Adam opt(params, float(cfg.lr), float(cfg.beta1), float(cfg.beta2));

  FitHistory hist;
  std::vector<std::vector<float>> best_snap;
  std::vector<size_t> order(xs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = rng.split("epoch").split(uint64_t(epoch));
    er.shuffle(order);
    double loss_sum = 0.0;
    int correct = 0;
    for (size_t i : order) {
      Tensor x = xs[i];
      if (cfg.augment) {
        nn::NoGradGuard ng;
        TransformList t = sample_transform(aug, er);
        x = apply_transform(t, x);
        x = nn::clamp_t(nn::add(x, noise_like(x, 0.02f, er)), -1.0f, 1.0f);
      }
      Tensor emb = model.forward(x);
      Tensor logits = nn::cosine_margin_logits(emb, W, 16.0f, 0.2f, ys[i]);
      {
        const float* z = logits.data();
        int K = logits.shape().c;
        int arg = 0;
        for (int k = 1; k < K; ++k)
          if (z[k] > z[arg]) arg = k;
        if (arg == ys[i]) ++correct;
      }
      Tensor loss = nn::cross_entropy_logits(logits, {ys[i]});
      loss_sum += loss.item();
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    hist.train_loss.push_back(loss_sum / double(xs.size()));
    double acc = double(correct) / double(xs.size());
    hist.val_metric.push_back(acc);
    if (hist.best_epoch < 0 || acc > hist.best) {
      hist.best = acc;
      hist.best_epoch = epoch;
      snapshot_params(params, best_snap);
    }
  }
  restore_params(params, best_snap);
  write_fit_log(cfg.log_csv, hist, "train_acc");
  return hist;
}

FitHistory train_decomposer(Decomposer& model, const DatasetManifest& train_split,
                            const FitConfig& cfg, Rng rng) {
  check_fit_config(cfg);
  auto pairs = paired_entries(train_split);
  if (pairs.empty()) throw DataError("decomposer training needs paired live/spoof data");

  std::vector<Tensor> lives, spoofs;
  for (const auto& [live_e, spoof_e] : pairs) {
    lives.push_back(input_tensor(load_entry(train_split, live_e)));
    spoofs.push_back(input_tensor(load_entry(train_split, spoof_e)));
  }

  nn::NamedParams params = model.params();
  nn::Adam opt(params, float(cfg.lr), float(cfg.beta1), float(cfg.beta2));

  FitHistory hist;
  std::vector<std::vector<float>> best_snap;
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = rng.split("epoch").split(uint64_t(epoch));
    er.shuffle(order);
    double loss_sum = 0.0;
    for (size_t i : order) {
      Tensor n = model.decompose(spoofs[i]).second;
      // un-clamped reconstruction keeps gradients alive at the range edge
      Tensor recon = nn::sub(spoofs[i], n);
      Tensor loss = nn::mean_t(nn::abs_t(nn::sub(recon, lives[i])));
      loss_sum += loss.item();
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    double mean_loss = loss_sum / double(pairs.size());
    hist.train_loss.push_back(mean_loss);
    hist.val_metric.push_back(-mean_loss);
    if (hist.best_epoch < 0 || -mean_loss > hist.best) {
      hist.best = -mean_loss;
      hist.best_epoch = epoch;
      snapshot_params(params, best_snap);
    }
  }
  restore_params(params, best_snap);
  write_fit_log(cfg.log_csv, hist, "neg_recon_l1");
  return hist;
}

}  // namespace advgen
