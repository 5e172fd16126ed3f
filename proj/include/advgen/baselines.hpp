#pragma once

#include <string>

#include "advgen/models.hpp"
#include "advgen/nn/tensor.hpp"
#include "advgen/transforms.hpp"

namespace advgen {

// The four reference digital attacks plus the generator-based one, as named
// on the command line.
enum class AttackMethod { fgsm, bim, pgd, cw, advgen };

const char* attack_method_name(AttackMethod m);
AttackMethod attack_method_from_name(const std::string& s);

// All methods take logits over classes from `pad`, work on symmetric-range
// tensors, and descend the cross-entropy toward `target` (targeted attack).
// Outputs are clamped to the valid value range.

// Single sign step: clamp(x - eps * sign(grad CE(pad(x), target))).
nn::Tensor fgsm(const LogitsFn& pad, const nn::Tensor& x, int target, double eps);

// Iterated sign steps, re-projected onto the eps inf-ball around x after
// every step. steps=1 with step_size=eps reproduces fgsm exactly.
nn::Tensor bim(const LogitsFn& pad, const nn::Tensor& x, int target, double eps, int steps,
               double step_size);

// bim from a uniform random start inside the start_radius inf-ball
// (start_radius < 0 uses eps). start_radius=0 with steps=1, step_size=eps
// reproduces fgsm exactly.
nn::Tensor pgd(const LogitsFn& pad, const nn::Tensor& x, int target, double eps, int steps,
               double step_size, Rng rng, double start_radius = -1.0);

struct CwConfig {
  double kappa = 0.0;          // confidence margin
  double c_init = 1.0;         // initial attack-term weight
  int binary_search_steps = 5;  // c refinements
  int iters = 100;             // Adam steps per c
  double lr = 0.01;
  void validate() const;
};

struct CwResult {
  nn::Tensor adv;        // best successful adversarial, or x when none found
  bool success = false;  // whether any c round produced a target classification
  double l2 = 0.0;       // ||adv - x||_2 of the returned image
  double c_used = 0.0;   // c that produced it (0 when unsuccessful)
};

// L2 attack through a tanh change of variables (output always in range),
// minimizing ||adv - x||_2^2 + c * max(Z_other - Z_target, -kappa) with c
// binary-searched. Deterministic: no randomness anywhere.
CwResult cw(const LogitsFn& pad, const nn::Tensor& x, int target, const CwConfig& cfg);

// Hyperparameters for a single named attack run.
struct BaselineConfig {
  AttackMethod method = AttackMethod::fgsm;
  double eps = 0.1;
  int steps = 10;
  double step_size = -1.0;  // < 0: eps / 4
  CwConfig cw;
  void validate() const;
};

// Dispatch over the four digital methods (the generator-based method needs
// its bundle and is dispatched by the caller).
nn::Tensor run_baseline(const BaselineConfig& cfg, const LogitsFn& pad, const nn::Tensor& x,
                        int target, Rng rng);

}  // namespace advgen
