#include "advgen/attack_gen.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "advgen/baselines.hpp"
#include "advgen/nn/optim.hpp"

namespace advgen {

using nn::Tensor;
using json = nlohmann::json;

const char* hinge_form_name(HingeForm f) {
  return f == HingeForm::floor ? "floor" : "conventional";
}

HingeForm hinge_form_from_name(const std::string& s) {
  if (s == "floor") return HingeForm::floor;
  if (s == "conventional") return HingeForm::conventional;
  throw ParamError("unknown hinge form: " + s);
}

Tensor hinge_norm(const Tensor& v, double eps, HingeForm form) {
  if (eps <= 0) throw ParamError("hinge bound must be positive");
  if (form == HingeForm::floor) return nn::hinge_l2(v, float(eps));
  return nn::relu(nn::add_scalar(nn::norm_lp(v, 2), float(-eps)));
}

Tensor physical_hinge(const Decomposer& dec, const Tensor& x, double eps, HingeForm form) {
  return hinge_norm(dec.decompose(x).second, eps, form);
}

Tensor geometric_hinge(const TransformList& t, const Tensor& x, double eps, HingeForm form,
                       double fill) {
  return hinge_norm(geometric_residual(t, x, fill), eps, form);
}

Tensor identity_loss(const TensorEmbedFn& embed, const Tensor& x, const Tensor& x_adv) {
  Tensor cos = nn::dot(nn::l2_normalize(embed(x)), nn::l2_normalize(embed(x_adv)));
  return nn::add_scalar(nn::neg(cos), 1.0f);
}

GanLossPair advgen_gan_loss(const PatchDiscriminator& d, const Tensor& x, const Tensor& x_adv,
                            GanLossMode mode) {
  Tensor fake_map = d.forward(x_adv);
  return {gan_gen_loss(fake_map, mode), gan_disc_loss(d.forward(x), fake_map, mode)};
}

void PerturbationBudget::validate() const {
  if (p != 1 && p != 2 && p != kInfNorm) throw ParamError("budget norm order must be 1, 2, or inf");
  if (epsilon <= 0) throw ParamError("budget epsilon must be positive");
  if (lambda < 0) throw ParamError("budget lambda must be nonnegative");
}

AdvgenConfig::AdvgenConfig() : eot(TransformDistribution::defaults()) {}

namespace {

void validate_weights(const AdvgenBundle& b) {
  if (b.eps1 <= 0 || b.eps2 <= 0) throw ParamError("hinge bounds must be positive");
  if (b.lambda_phy < 0 || b.lambda_geom < 0 || b.lambda_identity < 0 || b.lambda_gan < 0 ||
      b.lambda_attack < 0)
    throw ParamError("loss weights must be nonnegative");
  if (b.target_class != 0 && b.target_class != 1)
    throw ParamError("target class must be 0 (live) or 1 (spoof)");
}

GeneratorConfig perturbation_net_config(const AdvgenConfig& cfg) {
  GeneratorConfig g;
  g.kind = GeneratorKind::perturbation;
  g.image_size = cfg.image_size;
  g.base = cfg.gen_base;
  g.residual_cap = cfg.residual_cap;
  return g;
}

}  // namespace

AdvgenBundle::AdvgenBundle(const AdvgenConfig& cfg, Rng rng)
    : gen(perturbation_net_config(cfg), rng.split("gen")),
      disc(DiscConfig{cfg.image_size, cfg.disc_base}, rng.split("disc")),
      eps1(cfg.eps1),
      eps2(cfg.eps2),
      lambda_phy(cfg.lambda_phy),
      lambda_geom(cfg.lambda_geom),
      lambda_identity(cfg.lambda_identity),
      lambda_gan(cfg.lambda_gan),
      lambda_attack(cfg.lambda_attack),
      attack_term(cfg.attack_term),
      hinge_form(cfg.hinge_form),
      gan_mode(cfg.gan_mode),
      target_class(cfg.target_class) {
  validate_weights(*this);
}

AdvgenBundle::AdvgenBundle(Generator g, PatchDiscriminator d)
    : gen(std::move(g)), disc(std::move(d)) {}

void AdvgenBundle::save(const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::filesystem::path root(dir);
  gen.save((root / "gen.ckpt").string());
  disc.save((root / "disc.ckpt").string());
  json j = {{"eps1", eps1},
            {"eps2", eps2},
            {"lambda_phy", lambda_phy},
            {"lambda_geom", lambda_geom},
            {"lambda_identity", lambda_identity},
            {"lambda_gan", lambda_gan},
            {"lambda_attack", lambda_attack},
            {"attack_term", attack_term},
            {"hinge_form", hinge_form_name(hinge_form)},
            {"gan_mode", gan_mode_name(gan_mode)},
            {"target_class", target_class},
            {"trained", trained}};
  std::ofstream f(root / "bundle.json", std::ios::binary);
  if (!f) throw DataError("cannot write bundle metadata: " + dir);
  f << j.dump(2) << "\n";
  if (!f) throw DataError("short write on bundle metadata: " + dir);
}

AdvgenBundle AdvgenBundle::load(const std::string& dir) {
  std::filesystem::path root(dir);
  std::ifstream f(root / "bundle.json", std::ios::binary);
  if (!f) throw DataError("missing bundle metadata: " + dir);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw IntegrityError("corrupt bundle metadata: " + dir);
  try {
    AdvgenBundle b(Generator::load((root / "gen.ckpt").string()),
                   PatchDiscriminator::load((root / "disc.ckpt").string()));
    b.eps1 = j.at("eps1").get<double>();
    b.eps2 = j.at("eps2").get<double>();
    b.lambda_phy = j.at("lambda_phy").get<double>();
    b.lambda_geom = j.at("lambda_geom").get<double>();
    b.lambda_identity = j.at("lambda_identity").get<double>();
    b.lambda_gan = j.at("lambda_gan").get<double>();
    b.lambda_attack = j.at("lambda_attack").get<double>();
    b.attack_term = j.at("attack_term").get<bool>();
    b.hinge_form = hinge_form_from_name(j.at("hinge_form").get<std::string>());
    b.gan_mode = gan_mode_from_name(j.at("gan_mode").get<std::string>());
    b.target_class = j.at("target_class").get<int>();
    b.trained = j.at("trained").get<bool>();
    validate_weights(b);
    return b;
  } catch (const json::exception&) {
    throw IntegrityError("bundle metadata is missing fields: " + dir);
  }
}

FrozenHashes frozen_hashes(const AdvgenDeps& deps) {
  return {{"pad", deps.pad.weights_hash()},
          {"embedder", deps.embedder.weights_hash()},
          {"decomposer", deps.decomposer.weights_hash()},
          {"simulator.g_rs", deps.simulator.g_rs.weights_hash()},
          {"simulator.g_sr", deps.simulator.g_sr.weights_hash()},
          {"simulator.d_r", deps.simulator.d_r.weights_hash()},
          {"simulator.d_s", deps.simulator.d_s.weights_hash()}};
}

void verify_frozen(const AdvgenDeps& deps, const FrozenHashes& before) {
  FrozenHashes now = frozen_hashes(deps);
  if (now.size() != before.size())
    throw IntegrityError("frozen dependency set changed during training");
  for (size_t i = 0; i < now.size(); ++i) {
    if (now[i].first != before[i].first || now[i].second != before[i].second)
      throw IntegrityError("frozen dependency mutated during training: " + before[i].first);
  }
}

AdvgenLoss advgen_total_loss(const AdvgenBundle& b, const AdvgenDeps& deps, const Tensor& x_spoof,
                             const TransformDistribution& eot, int n_samples, Rng rng) {
  if (n_samples < 1) throw ParamError("needs at least one transform sample");
  validate_weights(b);

  Tensor adv = nn::clamp_t(nn::add(x_spoof, b.gen.forward(x_spoof)), -1.0f, 1.0f);

  AdvgenLoss out;
  out.phy = physical_hinge(deps.decomposer, adv, b.eps1, b.hinge_form);

  TensorEmbedFn embed = [&deps](const Tensor& t) { return deps.embedder.forward(t); };
  out.identity = identity_loss(embed, x_spoof, adv);

  GanLossPair gan = advgen_gan_loss(b.disc, x_spoof, adv, b.gan_mode);
  out.gan_gen = gan.gen;
  out.gan_disc = gan.disc;

  // The geometric hinge and the steering term share one set of transform
  // draws (and the warped images themselves).
  Rng er = rng.split("eot");
  float fill = float(eot.fill_value);
  LogitsFn pad = [&deps](const Tensor& t) { return deps.pad.forward(t); };
  Tensor geom_sum, attack_sum;
  for (int k = 0; k < n_samples; ++k) {
    TransformList t = sample_transform(eot, er);
    Tensor warped = apply_transform(t, adv, fill);
    Tensor g = hinge_norm(nn::sub(warped, adv), b.eps2, b.hinge_form);
    geom_sum = k == 0 ? g : nn::add(geom_sum, g);
    if (b.attack_term) {
      Tensor ce = nn::cross_entropy_logits(pad(warped), {b.target_class});
      attack_sum = k == 0 ? ce : nn::add(attack_sum, ce);
    }
  }
  out.geom = nn::mul_scalar(geom_sum, 1.0f / float(n_samples));
  out.attack = b.attack_term ? nn::mul_scalar(attack_sum, 1.0f / float(n_samples))
                             : Tensor::full(nn::Shape{1}, 0.0f);

  out.total = nn::add(
      nn::add(nn::mul_scalar(out.phy, float(b.lambda_phy)),
              nn::mul_scalar(out.geom, float(b.lambda_geom))),
      nn::add(nn::mul_scalar(out.identity, float(b.lambda_identity)),
              nn::mul_scalar(out.gan_gen, float(b.lambda_gan))));
  if (b.attack_term)
    out.total = nn::add(out.total, nn::mul_scalar(out.attack, float(b.lambda_attack)));
  return out;
}

AdvgenBundle train_advgen(const DatasetManifest& live_train, const AdvgenDeps& deps,
                          const AdvgenConfig& cfg, Rng rng) {
  if (cfg.epochs < 1) throw ParamError("training needs epochs >= 1");
  if (cfg.lr <= 0) throw ParamError("learning rate must be positive");
  if (cfg.eot_samples < 1) throw ParamError("needs at least one transform sample per step");
  if (live_train.entries.empty()) throw DataError("empty training manifest");
  for (const auto& e : live_train.entries)
    if (e.liveness != Liveness::live)
      throw DataError("spoof-perturbation training expects an all-live manifest");
  if (!deps.simulator.trained)
    throw DependencyError("spoof simulator is untrained; train it first");

  FrozenHashes before = frozen_hashes(deps);

  Rng init = rng.split("init");
  AdvgenBundle bundle(cfg, init);

  std::vector<Tensor> live_x;
  for (const auto& e : live_train.entries)
    live_x.push_back(to_tensor(to_symmetric(load_entry(live_train, e))));

  nn::Adam opt_g(bundle.gen.params(), float(cfg.lr), float(cfg.beta1), float(cfg.beta2));
  nn::Adam opt_d(bundle.disc.params(), float(cfg.lr), float(cfg.beta1), float(cfg.beta2));

  std::ofstream log;
  if (!cfg.log_csv.empty()) {
    log.open(cfg.log_csv, std::ios::binary);
    if (!log) throw DataError("cannot write training log: " + cfg.log_csv);
    log << "step,loss_phy,loss_geom,loss_identity,loss_gan,loss_attack,total\n";
    log.flush();
  }

  TransformDistribution jitter =
      cfg.augment ? idgan_default_augmentation() : TransformDistribution::disabled();
  std::vector<size_t> order(live_x.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = rng.split("epoch").split(uint64_t(epoch));
    er.shuffle(order);

    for (size_t k = 0; k < order.size(); ++k) {
      Tensor x_s;
      {
        nn::NoGradGuard ng;
        x_s = simulate_spoof(deps.simulator, live_x[order[k]], jitter, er);
      }
      Rng step_rng = er.split(uint64_t(k));

      // discriminator step on a frozen perturbation
      {
        Tensor adv;
        {
          nn::NoGradGuard ng;
          adv = nn::clamp_t(nn::add(x_s, bundle.gen.forward(x_s)), -1.0f, 1.0f);
        }
        Tensor d_loss = gan_disc_loss(bundle.disc.forward(x_s), bundle.disc.forward(adv),
                                      cfg.gan_mode);
        opt_d.zero_grad();
        d_loss.backward();
        opt_d.step();
      }

      // generator step on the full objective
      AdvgenLoss loss = advgen_total_loss(bundle, deps, x_s, cfg.eot, cfg.eot_samples, step_rng);
      opt_g.zero_grad();
      loss.total.backward();
      opt_g.step();

      ++step;
      if (log.is_open()) {
        double phy = loss.phy.item(), geom = loss.geom.item(), idt = loss.identity.item();
        double gan = loss.gan_gen.item(), att = loss.attack.item();
        double total = bundle.lambda_phy * phy + bundle.lambda_geom * geom +
                       bundle.lambda_identity * idt + bundle.lambda_gan * gan +
                       (bundle.attack_term ? bundle.lambda_attack * att : 0.0);
        char buf[240];
        std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", step, phy,
                      geom, idt, gan, att, total);
        log << buf;
        log.flush();
      }
    }
  }

  verify_frozen(deps, before);
  bundle.trained = true;
  return bundle;
}

Tensor attack(const AdvgenBundle& b, const Tensor& x_spoof, double fgsm_eps, int iters,
              const LogitsFn& pad, int target_class) {
  if (!b.trained) throw ParamError("attack needs a trained perturbation bundle");
  if (fgsm_eps <= 0) throw ParamError("attack budget must be positive");
  if (iters < 0) throw ParamError("refinement count must be nonnegative");
  Tensor base;
  {
    nn::NoGradGuard ng;
    base = nn::clamp_t(nn::add(x_spoof, b.gen.forward(x_spoof)), -1.0f, 1.0f);
  }
  if (iters == 0) return base;
  return bim(pad, base, target_class, fgsm_eps, iters, fgsm_eps / iters);
}

ImageTensor attack(const AdvgenBundle& b, const ImageTensor& x_spoof, double fgsm_eps, int iters,
                   const LogitsFn& pad, int target_class) {
  Tensor x = to_tensor(to_symmetric(x_spoof));
  Tensor y = attack(b, x, fgsm_eps, iters, pad, target_class);
  ImageTensor out = from_tensor(y, ValueRange::symmetric);
  return x_spoof.range == ValueRange::symmetric ? out : to_unit(out);
}

}  // namespace advgen
