#pragma once

#include <string>
#include <utility>
#include <vector>

#include "advgen/dataset.hpp"
#include "advgen/image.hpp"
#include "advgen/metrics.hpp"
#include "advgen/nn/layers.hpp"
#include "advgen/transforms.hpp"

namespace advgen {

// Shared conv trunk: 3x3 stem + stride-2 downsampling blocks, channels
// doubling from `base`, instance norm + leaky relu throughout. Depth follows
// the input size (64 -> 3 downs, 32 -> 2, 16 -> 1).
int trunk_downs_for(int image_size);

struct ConvTrunk {
  std::vector<nn::Conv2d> convs;
  std::vector<nn::InstanceNorm2d> norms;
  int out_channels = 0;

  ConvTrunk() = default;
  ConvTrunk(int base, int downs, Rng& rng);
  nn::Tensor operator()(nn::Tensor x) const;
  void collect(nn::NamedParams& out, const std::string& prefix) const;
};

// ---------------------------------------------------------------------------
// Spoof detector: trunk -> global average pool -> 2-way logits (0 = live).

struct PadConfig {
  std::string variant = "cnn_small";  // cnn_small | cnn_wide
  int image_size = 64;
};

class PadModel {
 public:
  PadModel(const PadConfig& cfg, Rng rng);

  nn::Tensor forward(const nn::Tensor& x) const;  // (1,3,H,W) symmetric -> (1,2)
  int classify(const ImageTensor& img) const;
  LogitsFn logits_fn() const;      // shares the live weights
  Classifier classifier() const;   // ditto

  nn::NamedParams params();
  const PadConfig& config() const { return cfg_; }
  std::string arch() const;
  uint64_t weights_hash();

  void save(const std::string& path);
  static PadModel load(const std::string& path);

 private:
  PadConfig cfg_;
  ConvTrunk trunk_;
  nn::Linear head_;
};

// ---------------------------------------------------------------------------
// Identity embedder: trunk -> pool -> linear -> unit-norm d-vector.

struct EmbedderConfig {
  std::string variant = "cnn_small";
  int image_size = 64;
  int dim = 64;
};

class Embedder {
 public:
  Embedder(const EmbedderConfig& cfg, Rng rng);

  nn::Tensor forward(const nn::Tensor& x) const;  // (1, dim) unit norm
  std::vector<float> embed(const ImageTensor& img) const;
  EmbedFn embed_fn() const;

  nn::NamedParams params();
  const EmbedderConfig& config() const { return cfg_; }
  std::string arch() const;
  uint64_t weights_hash();

  void save(const std::string& path);
  static Embedder load(const std::string& path);

 private:
  EmbedderConfig cfg_;
  ConvTrunk trunk_;
  nn::Linear proj_;
};

// ---------------------------------------------------------------------------
// U-Net image generators. `translation` maps image -> image through a
// zero-initialized residual head (exact identity at init); `perturbation`
// emits a bounded additive residual cap*tanh(r) instead.

enum class GeneratorKind { translation, perturbation };

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::translation;
  int image_size = 64;
  int base = 8;
  float residual_cap = 0.3f;  // perturbation output bound
};

class Generator {
 public:
  Generator(const GeneratorConfig& cfg, Rng rng);

  // translation: clamp(x + tanh(r)); perturbation: the residual itself.
  nn::Tensor forward(const nn::Tensor& x) const;
  // image-space convenience: translation returns G(x); perturbation returns
  // clamp(x + G(x)).
  ImageTensor apply(const ImageTensor& img) const;

  nn::NamedParams params();
  const GeneratorConfig& config() const { return cfg_; }
  std::string arch() const;
  uint64_t weights_hash();

  void save(const std::string& path);
  static Generator load(const std::string& path);

 private:
  GeneratorConfig cfg_;
  std::vector<nn::Conv2d> down_convs_;
  std::vector<nn::InstanceNorm2d> down_norms_;
  nn::Conv2d mid_;
  nn::InstanceNorm2d mid_norm_;
  std::vector<nn::Conv2d> up_convs_;
  std::vector<nn::InstanceNorm2d> up_norms_;
  nn::Conv2d head_;
};

// ---------------------------------------------------------------------------
// PatchGAN discriminator: stacked 4x4 convs, patch logit map output (6x6 for
// 64x64 inputs).

struct DiscConfig {
  int image_size = 64;
  int base = 16;
};

class PatchDiscriminator {
 public:
  PatchDiscriminator(const DiscConfig& cfg, Rng rng);

  nn::Tensor forward(const nn::Tensor& x) const;  // (1,1,h',w') patch logits
  static int map_size(int image_size);

  nn::NamedParams params();
  const DiscConfig& config() const { return cfg_; }
  std::string arch() const;
  uint64_t weights_hash();

  void save(const std::string& path);
  static PatchDiscriminator load(const std::string& path);

 private:
  DiscConfig cfg_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::InstanceNorm2d> norms_;
};

// ---------------------------------------------------------------------------
// Spoof-trace decomposer: predicts the additive trace n so that x - n
// estimates the live face. Zero-initialized head, so decomposition starts at
// (x, 0).

class Decomposer {
 public:
  Decomposer(const GeneratorConfig& cfg, Rng rng);  // kind is forced to perturbation

  // returns (live estimate, trace)
  std::pair<nn::Tensor, nn::Tensor> decompose(const nn::Tensor& x) const;
  std::pair<ImageTensor, ImageTensor> decompose(const ImageTensor& img) const;

  nn::NamedParams params();
  const GeneratorConfig& config() const { return net_.config(); }
  std::string arch() const;
  uint64_t weights_hash();

  void save(const std::string& path);
  static Decomposer load(const std::string& path);

 private:
  explicit Decomposer(Generator net) : net_(std::move(net)) {}
  Generator net_;
};

// ---------------------------------------------------------------------------
// Training loops (batch size 1, Adam).

struct FitConfig {
  int epochs = 100;
  double lr = 2e-4;
  double beta1 = 0.5, beta2 = 0.9;
  bool augment = true;
  std::string log_csv;  // optional per-epoch log; empty disables
};

struct FitHistory {
  std::vector<double> train_loss;  // per-epoch mean
  std::vector<double> val_metric;  // accuracy (pad/embedder) or -recon (decomposer)
  double best = 0.0;
  int best_epoch = -1;
};

// Cross-entropy on live/spoof labels with mild geometric augmentation.
// Refuses train/val splits that share identities. Restores the best-val
// weights before returning.
FitHistory train_pad(PadModel& model, const DatasetManifest& train_split,
                     const DatasetManifest& val_split, const FitConfig& cfg, Rng rng);

// Margin-softmax identity classification over the live images with
// photometric augmentation; the class-weight head is train-time only.
FitHistory train_embedder(Embedder& model, const DatasetManifest& train_split,
                          const FitConfig& cfg, Rng rng);

// L1 reconstruction of the live pair from the spoof through the predicted
// trace.
FitHistory train_decomposer(Decomposer& model, const DatasetManifest& train_split,
                            const FitConfig& cfg, Rng rng);

}  // namespace advgen
