#pragma once

#include <functional>
#include <string>

#include "advgen/dataset.hpp"
#include "advgen/models.hpp"
#include "advgen/transforms.hpp"

namespace advgen {

// Adversarial objective flavor. `log` is the classic cross-entropy form on
// sigmoid outputs; `least_squares` regresses raw patch logits to 0/1 targets
// (the default, and the more stable of the two on small data).
enum class GanLossMode { log, least_squares };

const char* gan_mode_name(GanLossMode m);
GanLossMode gan_mode_from_name(const std::string& s);

// Patch-map building blocks shared by both GAN stages. `real_map`/`fake_map`
// are discriminator outputs: raw logits. In log mode the discriminator loss is
// -E[log s(real)] - E[log(1 - s(fake))] and the generator loss is the
// non-saturating -E[log s(fake)]; in least-squares mode the targets are 1 for
// real and 0 for fake, and the generator pulls fakes toward 1.
nn::Tensor gan_disc_loss(const nn::Tensor& real_map, const nn::Tensor& fake_map, GanLossMode mode);
nn::Tensor gan_gen_loss(const nn::Tensor& fake_map, GanLossMode mode);

// Differentiable embedding hook; tests may stub it, training wraps Embedder.
using TensorEmbedFn = std::function<nn::Tensor(const nn::Tensor&)>;

struct IdganConfig {
  int image_size = 64;
  int gen_base = 8;
  int disc_base = 16;
  double lambda_cycle = 10.0;
  double lambda_id = 1.0;
  GanLossMode gan_mode = GanLossMode::least_squares;
  bool one_way_id = false;  // regularize one-way translations instead of round trips
  int epochs = 100;
  int batch = 1;  // accepted for config completeness; the trainer is single-image
  double lr = 2e-4;
  double beta1 = 0.5, beta2 = 0.9;
  bool augment = true;
  TransformDistribution aug;  // geometric jitter on training batches
  int checkpoint_every = 0;   // in epochs; 0 disables periodic checkpoints
  std::string checkpoint_dir;
  std::string log_csv;

  IdganConfig();
};

// Geometric-only jitter used by default during simulator training.
TransformDistribution idgan_default_augmentation();

// Two translation generators (live->spoof, spoof->live) with a patch
// discriminator per realm. Generator heads start slightly off identity so the
// cycle term has something to pull back in.
struct IdganBundle {
  Generator g_rs, g_sr;         // live->spoof, spoof->live
  PatchDiscriminator d_r, d_s;  // judge the live realm, the spoof realm
  double lambda_cycle = 10.0;
  double lambda_id = 1.0;
  GanLossMode gan_mode = GanLossMode::least_squares;
  bool one_way_id = false;
  bool trained = false;

  IdganBundle(const IdganConfig& cfg, Rng rng);
  IdganBundle(Generator rs, Generator sr, PatchDiscriminator dr, PatchDiscriminator ds);

  // four checkpoints plus a bundle.json in `dir`
  void save(const std::string& dir);
  static IdganBundle load(const std::string& dir);
};

// Mean (1 - cos) between the embeddings of each image and its round-trip
// reconstruction, both directions summed. With `one_way_id` the one-way
// translations are regularized instead.
nn::Tensor identity_regularizer(const IdganBundle& b, const nn::Tensor& x_r,
                                const nn::Tensor& x_s, const TensorEmbedFn& embed);

struct GanLossPair {
  nn::Tensor gen, disc;
};

// Both translation directions judged by their realm discriminators; returns
// the generator-side and discriminator-side objectives.
GanLossPair gan_adversarial_loss(const IdganBundle& b, const nn::Tensor& x_r,
                                 const nn::Tensor& x_s, GanLossMode mode);

// Mean L1 between each image and its round-trip reconstruction, both
// directions summed.
nn::Tensor cycle_loss(const IdganBundle& b, const nn::Tensor& x_r, const nn::Tensor& x_s);

// Alternating one-disc-step/one-gen-step optimization of
//   adversarial + lambda_cycle * cycle + lambda_id * identity.
// `live`/`spoof` must be single-liveness manifests. Per-epoch means of the
// generator-side components go to cfg.log_csv as
// `epoch,loss_adv,loss_cycle,loss_id,total`, where total is exactly
// adv + lambda_cycle*cycle + lambda_id*id of the logged values.
IdganBundle train_idgan(const DatasetManifest& live, const DatasetManifest& spoof,
                        const Embedder& embedder, const IdganConfig& cfg, Rng rng);

// Spoof-source sampler for the attack stage: g_rs applied to a geometrically
// jittered live image. An empty/disabled distribution reproduces g_rs(x)
// exactly. Requires a trained bundle.
nn::Tensor simulate_spoof(const IdganBundle& b, const nn::Tensor& x_live,
                          const TransformDistribution& dist, Rng& rng);
ImageTensor simulate_spoof(const IdganBundle& b, const ImageTensor& x_live,
                           const TransformDistribution& dist, Rng& rng);

}  // namespace advgen
