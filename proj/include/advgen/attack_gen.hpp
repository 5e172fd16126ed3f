#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "advgen/idgan.hpp"

namespace advgen {

// Hinge flavor for the physical/geometric penalties. `floor` is
// max(eps, ||v||_2): constant (zero gradient) below eps, the norm itself
// above. `conventional` is max(0, ||v||_2 - eps).
enum class HingeForm { floor, conventional };

const char* hinge_form_name(HingeForm f);
HingeForm hinge_form_from_name(const std::string& s);

// Hinge of an L2 norm over the whole tensor.
nn::Tensor hinge_norm(const nn::Tensor& v, double eps, HingeForm form = HingeForm::floor);

// Hinge of the decomposer's spoof-trace estimate on x. Gradient flows into
// whatever produced x (an untrained decomposer emits a zero trace, so the
// floor form returns exactly eps).
nn::Tensor physical_hinge(const Decomposer& dec, const nn::Tensor& x, double eps,
                          HingeForm form = HingeForm::floor);

// Hinge of the residual t(x) - x a sampled geometric/photometric composite
// leaves behind. The identity composite gives exactly eps under the floor
// form.
nn::Tensor geometric_hinge(const TransformList& t, const nn::Tensor& x, double eps,
                           HingeForm form = HingeForm::floor, double fill = 0.0);

// Mean (1 - cos) between the embeddings of the clean and perturbed images.
nn::Tensor identity_loss(const TensorEmbedFn& embed, const nn::Tensor& x,
                         const nn::Tensor& x_adv);

// The perturbation-stage GAN objective: disc judges x real and x_adv fake.
// Both returned terms are minimization losses; in log mode the
// discriminator term is the negated patch-average log-likelihood
// -E[log s(D(x))] - E[log(1 - s(D(x_adv)))] and the generator term is the
// non-saturating -E[log s(D(x_adv))].
GanLossPair advgen_gan_loss(const PatchDiscriminator& d, const nn::Tensor& x,
                            const nn::Tensor& x_adv, GanLossMode mode);

// Norm-ball budget shared by the attack implementations.
struct PerturbationBudget {
  int p = kInfNorm;      // 1, 2, or kInfNorm
  double epsilon = 0.1;  // ball radius
  double lambda = 0.0;   // regularization weight where a soft penalty is used
  void validate() const;
};

struct AdvgenConfig {
  int image_size = 64;
  int gen_base = 8;
  int disc_base = 16;
  float residual_cap = 0.3f;  // bound on the generator's additive output

  double eps1 = 0.1;  // physical hinge bound
  double eps2 = 0.5;  // geometric hinge bound
  double lambda_phy = 1.0, lambda_geom = 1.0, lambda_identity = 1.0, lambda_gan = 1.0;
  // Weight of the classifier-steering term. Without it nothing in the
  // objective makes the perturbation adversarial; attack_term=false trains
  // on the four weighted penalties alone for comparison runs.
  double lambda_attack = 1.0;
  bool attack_term = true;

  HingeForm hinge_form = HingeForm::floor;
  GanLossMode gan_mode = GanLossMode::log;
  int eot_samples = 4;       // transform draws per step
  TransformDistribution eot;  // sampled for the geometric hinge + attack term
  int target_class = 0;       // drive the detector toward "live"

  int epochs = 100;
  double lr = 2e-4;
  double beta1 = 0.5, beta2 = 0.9;
  bool augment = true;  // geometric jitter on the simulator inputs
  std::string log_csv;  // optional per-step component log

  AdvgenConfig();
};

// Perturbation generator + patch discriminator with the loss weights they
// were trained under. Serializes to gen.ckpt/disc.ckpt plus bundle.json.
struct AdvgenBundle {
  Generator gen;
  PatchDiscriminator disc;
  double eps1 = 0.1, eps2 = 0.5;
  double lambda_phy = 1.0, lambda_geom = 1.0, lambda_identity = 1.0, lambda_gan = 1.0;
  double lambda_attack = 1.0;
  bool attack_term = true;
  HingeForm hinge_form = HingeForm::floor;
  GanLossMode gan_mode = GanLossMode::log;
  int target_class = 0;
  bool trained = false;

  AdvgenBundle(const AdvgenConfig& cfg, Rng rng);
  AdvgenBundle(Generator g, PatchDiscriminator d);

  void save(const std::string& dir);
  static AdvgenBundle load(const std::string& dir);
};

// The models the perturbation stage builds on. They are frozen for the
// whole of train_advgen: only hashed, never stepped. (Non-const because
// parameter access is non-const by design; the hash check enforces the
// contract.)
struct AdvgenDeps {
  PadModel& pad;
  Embedder& embedder;
  Decomposer& decomposer;
  IdganBundle& simulator;
};

using FrozenHashes = std::vector<std::pair<std::string, uint64_t>>;

FrozenHashes frozen_hashes(const AdvgenDeps& deps);
// Throws IntegrityError naming the first model whose hash changed.
void verify_frozen(const AdvgenDeps& deps, const FrozenHashes& before);

// One objective evaluation on a single (simulated) spoof image. All members
// are graph tensors; `total` is the weighted sum of the generator-side
// terms: lambda_phy*phy + lambda_geom*geom + lambda_identity*identity +
// lambda_gan*gan_gen, plus lambda_attack*attack when the bundle enables the
// attack term. gan_disc is the discriminator's own loss and is not part of
// total. The geometric hinge and the attack term average over the same
// `n_samples` transform draws (stream: rng.split("eot")).
struct AdvgenLoss {
  nn::Tensor phy, geom, identity, gan_gen, gan_disc, attack, total;
};

AdvgenLoss advgen_total_loss(const AdvgenBundle& b, const AdvgenDeps& deps,
                             const nn::Tensor& x_spoof, const TransformDistribution& eot,
                             int n_samples, Rng rng);

// Alternating disc/gen optimization of advgen_total_loss over simulated
// spoofs of the (all-live) training manifest. Writes per-step components to
// cfg.log_csv as `step,loss_phy,loss_geom,loss_identity,loss_gan,loss_attack,total`
// where loss_gan is the generator-side term and total is exactly the
// weighted sum of the logged values. Verifies the frozen dependencies'
// hashes before returning.
AdvgenBundle train_advgen(const DatasetManifest& live_train, const AdvgenDeps& deps,
                          const AdvgenConfig& cfg, Rng rng);

// Inference: start from clamp(x + G(x)) and refine with `iters` sign-descent
// steps of size fgsm_eps/iters against the detector's loss toward
// target_class, staying inside the fgsm_eps inf-ball around the start and
// the valid value range. iters = 0 returns clamp(x + G(x)) exactly.
nn::Tensor attack(const AdvgenBundle& b, const nn::Tensor& x_spoof, double fgsm_eps, int iters,
                  const LogitsFn& pad, int target_class = 0);
ImageTensor attack(const AdvgenBundle& b, const ImageTensor& x_spoof, double fgsm_eps, int iters,
                   const LogitsFn& pad, int target_class = 0);

}  // namespace advgen
