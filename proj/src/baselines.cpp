#include "advgen/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advgen/nn/optim.hpp"

namespace advgen {

using nn::Tensor;

const char* attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::bim: return "bim";
    case AttackMethod::pgd: return "pgd";
    case AttackMethod::cw: return "cw";
    case AttackMethod::advgen: return "advgen";
  }
  throw ParamError("unknown attack method");
}

AttackMethod attack_method_from_name(const std::string& s) {
  if (s == "fgsm") return AttackMethod::fgsm;
  if (s == "bim") return AttackMethod::bim;
  if (s == "pgd") return AttackMethod::pgd;
  if (s == "cw") return AttackMethod::cw;
  if (s == "advgen") return AttackMethod::advgen;
  throw ParamError("unknown attack method: " + s);
}

namespace {

std::vector<float> ce_input_grad(const LogitsFn& pad, const nn::Shape& shape,
                                 const std::vector<float>& values, int target) {
  Tensor probe = Tensor::from_vector(shape, values, true);
  Tensor loss = nn::cross_entropy_logits(pad(probe), {target});
  loss.backward();
  return probe.grad();
}

// One targeted sign-descent step, then projection onto the eps inf-ball
// around `anchor`, then the value-range clamp. The clamp order is safe: for
// an in-range anchor, clamping to the range never leaves the ball.
std::vector<float> sign_step(const std::vector<float>& cur, const std::vector<float>& g,
                             const std::vector<float>& anchor, double step, double eps) {
  std::vector<float> out(cur.size());
  for (size_t i = 0; i < cur.size(); ++i) {
    float s = g[i] > 0.0f ? 1.0f : (g[i] < 0.0f ? -1.0f : 0.0f);
    float v = cur[i] - float(step) * s;
    v = std::min(std::max(v, anchor[i] - float(eps)), anchor[i] + float(eps));
    out[i] = std::min(std::max(v, -1.0f), 1.0f);
  }
  return out;
}

int argmax2(const std::vector<float>& logits) {
  int best = 0;
  for (size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[size_t(best)]) best = int(i);
  return best;
}

}  // namespace

Tensor fgsm(const LogitsFn& pad, const Tensor& x, int target, double eps) {
  if (eps < 0) throw ParamError("attack budget must be nonnegative");
  std::vector<float> x0 = x.values();
  std::vector<float> g = ce_input_grad(pad, x.shape(), x0, target);
  return Tensor::from_vector(x.shape(), sign_step(x0, g, x0, eps, eps));
}

Tensor bim(const LogitsFn& pad, const Tensor& x, int target, double eps, int steps,
           double step_size) {
  if (eps < 0) throw ParamError("attack budget must be nonnegative");
  if (steps < 1) throw ParamError("bim needs steps >= 1");
  if (step_size <= 0) throw ParamError("bim needs a positive step size");
  std::vector<float> anchor = x.values();
  std::vector<float> cur = anchor;
  for (int i = 0; i < steps; ++i) {
    std::vector<float> g = ce_input_grad(pad, x.shape(), cur, target);
    cur = sign_step(cur, g, anchor, step_size, eps);
  }
  return Tensor::from_vector(x.shape(), cur);
}

Tensor pgd(const LogitsFn& pad, const Tensor& x, int target, double eps, int steps,
           double step_size, Rng rng, double start_radius) {
  if (eps < 0) throw ParamError("attack budget must be nonnegative");
  if (steps < 1) throw ParamError("pgd needs steps >= 1");
  if (step_size <= 0) throw ParamError("pgd needs a positive step size");
  double r = start_radius < 0 ? eps : start_radius;
  std::vector<float> anchor = x.values();
  std::vector<float> cur(anchor.size());
  for (size_t i = 0; i < cur.size(); ++i) {
    float v = anchor[i] + rng.uniform_f(float(-r), float(r));
    v = std::min(std::max(v, anchor[i] - float(eps)), anchor[i] + float(eps));
    cur[i] = std::min(std::max(v, -1.0f), 1.0f);
  }
  for (int i = 0; i < steps; ++i) {
    std::vector<float> g = ce_input_grad(pad, x.shape(), cur, target);
    cur = sign_step(cur, g, anchor, step_size, eps);
  }
  return Tensor::from_vector(x.shape(), cur);
}

void CwConfig::validate() const {
  if (kappa < 0) throw ParamError("cw confidence must be nonnegative");
  if (c_init <= 0) throw ParamError("cw initial c must be positive");
  if (binary_search_steps < 1 || iters < 1) throw ParamError("cw needs >= 1 step");
  if (lr <= 0) throw ParamError("cw needs a positive learning rate");
}

CwResult cw(const LogitsFn& pad, const Tensor& x, int target, const CwConfig& cfg) {
  cfg.validate();
  std::vector<float> x0 = x.values();
  int n_classes;
  {
    nn::NoGradGuard ng;
    n_classes = int(pad(x).values().size());
  }
  if (n_classes != 2) throw ParamError("cw is implemented for 2-class detectors");
  if (target < 0 || target >= n_classes) throw ParamError("cw target class out of range");

  // tanh change of variables keeps every iterate strictly inside the range
  const float lim = 1.0f - 1e-5f;
  std::vector<float> w0(x0.size());
  for (size_t i = 0; i < x0.size(); ++i)
    w0[i] = std::atanh(std::min(std::max(x0[i], -lim), lim));

  std::vector<float> onehot_t(2, 0.0f), onehot_o(2, 0.0f);
  onehot_t[size_t(target)] = 1.0f;
  onehot_o[size_t(1 - target)] = 1.0f;
  Tensor mask_t = Tensor::from_vector(nn::Shape{1, 2}, onehot_t);
  Tensor mask_o = Tensor::from_vector(nn::Shape{1, 2}, onehot_o);
  const float big = std::numeric_limits<float>::max();

  CwResult best;
  best.adv = x;
  best.l2 = std::numeric_limits<double>::infinity();

  double lo = 0.0, hi = -1.0, c = cfg.c_init;
  for (int round = 0; round < cfg.binary_search_steps; ++round) {
    Tensor w = Tensor::from_vector(x.shape(), w0, true);
    nn::Adam opt({{"w", w}}, float(cfg.lr), 0.9f, 0.999f);
    bool round_ok = false;

    for (int it = 0; it < cfg.iters; ++it) {
      opt.zero_grad();
      Tensor adv = nn::tanh_t(w);
      Tensor dist = nn::sum_t(nn::square(nn::sub(adv, x)));
      Tensor logits = pad(adv);
      Tensor z_t = nn::sum_t(nn::mul(logits, mask_t));
      Tensor z_o = nn::sum_t(nn::mul(logits, mask_o));
      Tensor attack_term = nn::clamp_t(nn::sub(z_o, z_t), float(-cfg.kappa), big);
      Tensor obj = nn::add(dist, nn::mul_scalar(attack_term, float(c)));
      obj.backward();
      opt.step();

      nn::NoGradGuard ng;
      std::vector<float> wv = w.values();
      std::vector<float> av(wv.size());
      for (size_t i = 0; i < wv.size(); ++i) av[i] = std::tanh(wv[i]);
      Tensor cand = Tensor::from_vector(x.shape(), av);
      if (argmax2(pad(cand).values()) == target) {
        round_ok = true;
        double l2 = 0.0;
        for (size_t i = 0; i < av.size(); ++i) {
          double d = double(av[i]) - double(x0[i]);
          l2 += d * d;
        }
        l2 = std::sqrt(l2);
        if (l2 < best.l2) {
          best.adv = cand;
          best.success = true;
          best.l2 = l2;
          best.c_used = c;
        }
      }
    }

    if (round_ok)
      hi = c;
    else
      lo = c;
    c = hi > 0 ? (lo + hi) / 2 : c * 10;
  }

  if (!best.success) {
    best.adv = x;
    best.l2 = 0.0;
    best.c_used = 0.0;
  }
  return best;
}

void BaselineConfig::validate() const {
  if (eps < 0) throw ParamError("attack budget must be nonnegative");
  if (steps < 1) throw ParamError("attacks need steps >= 1");
  if (step_size == 0) throw ParamError("step size must be nonzero (or < 0 for eps/4)");
  cw.validate();
}

Tensor run_baseline(const BaselineConfig& cfg, const LogitsFn& pad, const Tensor& x, int target,
                    Rng rng) {
  cfg.validate();
  double ss = cfg.step_size < 0 ? cfg.eps / 4 : cfg.step_size;
  switch (cfg.method) {
    case AttackMethod::fgsm: return fgsm(pad, x, target, cfg.eps);
    case AttackMethod::bim: return bim(pad, x, target, cfg.eps, cfg.steps, ss);
    case AttackMethod::pgd: return pgd(pad, x, target, cfg.eps, cfg.steps, ss, rng);
    case AttackMethod::cw: return cw(pad, x, target, cfg.cw).adv;
    case AttackMethod::advgen: break;
  }
  throw ParamError("generator-based attacks are dispatched by the caller");
}

}  // namespace advgen
