#include "advgen/idgan.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "advgen/nn/optim.hpp"

namespace advgen {

using nn::Tensor;
using json = nlohmann::json;

const char* gan_mode_name(GanLossMode m) {
  return m == GanLossMode::log ? "log" : "least_squares";
}

GanLossMode gan_mode_from_name(const std::string& s) {
  if (s == "log") return GanLossMode::log;
  if (s == "least_squares") return GanLossMode::least_squares;
  throw ParamError("unknown gan loss mode: " + s);
}

Tensor gan_disc_loss(const Tensor& real_map, const Tensor& fake_map, GanLossMode mode) {
  if (mode == GanLossMode::log)
    return nn::neg(nn::add(nn::mean_t(nn::log_sigmoid(real_map)),
                           nn::mean_t(nn::log_sigmoid(nn::neg(fake_map)))));
  return nn::add(nn::mean_t(nn::square(nn::add_scalar(real_map, -1.0f))),
                 nn::mean_t(nn::square(fake_map)));
}

Tensor gan_gen_loss(const Tensor& fake_map, GanLossMode mode) {
  if (mode == GanLossMode::log) return nn::neg(nn::mean_t(nn::log_sigmoid(fake_map)));
  return nn::mean_t(nn::square(nn::add_scalar(fake_map, -1.0f)));
}

TransformDistribution idgan_default_augmentation() {
  TransformDistribution d = TransformDistribution::disabled();
  d.rotation = {true, -15.0, 15.0};
  d.scale = {true, 0.9, 1.1};
  d.translation = {true, -0.05, 0.05};
  return d;
}

IdganConfig::IdganConfig() : aug(idgan_default_augmentation()) {}

namespace {

// Nudge a freshly built translation generator off its exact-identity init so
// the cycle and adversarial terms see a gradient from the first step.
void randomize_head(Generator& g, Rng& rng) {
  nn::NamedParams params = g.params();
  for (auto& [name, t] : params) {
    if (name != "head.w") continue;
    for (int i = 0; i < t.numel(); ++i) t.data()[i] = 0.02f * float(rng.normal());
  }
}

Tensor one_minus_cos(const Tensor& a, const Tensor& ref, const TensorEmbedFn& embed) {
  Tensor cos = nn::dot(nn::l2_normalize(embed(a)), nn::l2_normalize(embed(ref)));
  return nn::add_scalar(nn::neg(cos), 1.0f);
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  return nn::mean_t(nn::abs_t(nn::sub(a, b)));
}

void check_single_liveness(const DatasetManifest& m, Liveness want, const char* what) {
  if (m.entries.empty()) throw DataError(std::string(what) + " manifest is empty");
  for (const auto& e : m.entries)
    if (e.liveness != want)
      throw DataError(std::string(what) + " manifest contains a " +
                      (e.liveness == Liveness::live ? "live" : "spoof") + " entry: " + e.path);
}

std::string epoch_dir(const std::string& root, int epoch) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "epoch_%03d", epoch);
  return (std::filesystem::path(root) / buf).string();
}

}  // namespace

IdganBundle::IdganBundle(const IdganConfig& cfg, Rng rng)
    : g_rs([&] {
        GeneratorConfig g;
        g.kind = GeneratorKind::translation;
        g.image_size = cfg.image_size;
        g.base = cfg.gen_base;
        Rng r = rng.split("g_rs");
        return Generator(g, r);
      }()),
      g_sr([&] {
        GeneratorConfig g;
        g.kind = GeneratorKind::translation;
        g.image_size = cfg.image_size;
        g.base = cfg.gen_base;
        Rng r = rng.split("g_sr");
        return Generator(g, r);
      }()),
      d_r([&] {
        Rng r = rng.split("d_r");
        return PatchDiscriminator(DiscConfig{cfg.image_size, cfg.disc_base}, r);
      }()),
      d_s([&] {
        Rng r = rng.split("d_s");
        return PatchDiscriminator(DiscConfig{cfg.image_size, cfg.disc_base}, r);
      }()),
      lambda_cycle(cfg.lambda_cycle),
      lambda_id(cfg.lambda_id),
      gan_mode(cfg.gan_mode),
      one_way_id(cfg.one_way_id) {
  if (lambda_cycle < 0 || lambda_id < 0) throw ParamError("loss weights must be nonnegative");
  Rng hr = rng.split("head_nudge");
  randomize_head(g_rs, hr);
  randomize_head(g_sr, hr);
}

IdganBundle::IdganBundle(Generator rs, Generator sr, PatchDiscriminator dr, PatchDiscriminator ds)
    : g_rs(std::move(rs)), g_sr(std::move(sr)), d_r(std::move(dr)), d_s(std::move(ds)) {}

void IdganBundle::save(const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::filesystem::path root(dir);
  g_rs.save((root / "g_rs.ckpt").string());
  g_sr.save((root / "g_sr.ckpt").string());
  d_r.save((root / "d_r.ckpt").string());
  d_s.save((root / "d_s.ckpt").string());
  json j = {{"lambda_cycle", lambda_cycle},
            {"lambda_id", lambda_id},
            {"gan_mode", gan_mode_name(gan_mode)},
            {"one_way_id", one_way_id},
            {"trained", trained}};
  std::ofstream f(root / "bundle.json", std::ios::binary);
  if (!f) throw DataError("cannot write bundle metadata: " + dir);
  f << j.dump(2) << "\n";
  if (!f) throw DataError("short write on bundle metadata: " + dir);
}

IdganBundle IdganBundle::load(const std::string& dir) {
  std::filesystem::path root(dir);
  std::ifstream f(root / "bundle.json", std::ios::binary);
  if (!f) throw DataError("missing bundle metadata: " + dir);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw IntegrityError("corrupt bundle metadata: " + dir);
  try {
    IdganBundle b(Generator::load((root / "g_rs.ckpt").string()),
                  Generator::load((root / "g_sr.ckpt").string()),
                  PatchDiscriminator::load((root / "d_r.ckpt").string()),
                  PatchDiscriminator::load((root / "d_s.ckpt").string()));
    b.lambda_cycle = j.at("lambda_cycle").get<double>();
    b.lambda_id = j.at("lambda_id").get<double>();
    b.gan_mode = gan_mode_from_name(j.at("gan_mode").get<std::string>());
    b.one_way_id = j.at("one_way_id").get<bool>();
    b.trained = j.at("trained").get<bool>();
    return b;
  } catch (const json::exception&) {
    throw IntegrityError("bundle metadata is missing fields: " + dir);
  }
}

Tensor identity_regularizer(const IdganBundle& b, const Tensor& x_r, const Tensor& x_s,
                            const TensorEmbedFn& embed) {
  if (b.one_way_id)
    return nn::add(one_minus_cos(b.g_rs.forward(x_r), x_r, embed),
                   one_minus_cos(b.g_sr.forward(x_s), x_s, embed));
  Tensor rt_r = b.g_sr.forward(b.g_rs.forward(x_r));
  Tensor rt_s = b.g_rs.forward(b.g_sr.forward(x_s));
  return nn::add(one_minus_cos(rt_r, x_r, embed), one_minus_cos(rt_s, x_s, embed));
}

GanLossPair gan_adversarial_loss(const IdganBundle& b, const Tensor& x_r, const Tensor& x_s,
                                 GanLossMode mode) {
  Tensor fake_s = b.g_rs.forward(x_r);
  Tensor fake_r = b.g_sr.forward(x_s);
  Tensor gen = nn::add(gan_gen_loss(b.d_s.forward(fake_s), mode),
                       gan_gen_loss(b.d_r.forward(fake_r), mode));
  Tensor disc = nn::add(gan_disc_loss(b.d_s.forward(x_s), b.d_s.forward(fake_s), mode),
                        gan_disc_loss(b.d_r.forward(x_r), b.d_r.forward(fake_r), mode));
  return {gen, disc};
}

Tensor cycle_loss(const IdganBundle& b, const Tensor& x_r, const Tensor& x_s) {
  Tensor rt_r = b.g_sr.forward(b.g_rs.forward(x_r));
  Tensor rt_s = b.g_rs.forward(b.g_sr.forward(x_s));
  return nn::add(l1_mean(rt_r, x_r), l1_mean(rt_s, x_s));
}

IdganBundle train_idgan(const DatasetManifest& live, const DatasetManifest& spoof,
                        const Embedder& embedder, const IdganConfig& cfg, Rng rng) {
  if (cfg.epochs < 1) throw ParamError("training needs epochs >= 1");
  if (cfg.lr <= 0) throw ParamError("learning rate must be positive");
  check_single_liveness(live, Liveness::live, "live");
  check_single_liveness(spoof, Liveness::spoof, "spoof");

  Rng init = rng.split("init");
  IdganBundle bundle(cfg, init);

  std::vector<Tensor> live_x, spoof_x;
  for (const auto& e : live.entries) live_x.push_back(to_tensor(to_symmetric(load_entry(live, e))));
  for (const auto& e : spoof.entries)
    spoof_x.push_back(to_tensor(to_symmetric(load_entry(spoof, e))));

  TensorEmbedFn embed = [&embedder](const Tensor& t) { return embedder.forward(t); };

  nn::NamedParams gen_params = bundle.g_rs.params();
  for (auto& p : bundle.g_sr.params()) gen_params.push_back(p);
  nn::NamedParams disc_params = bundle.d_r.params();
  for (auto& p : bundle.d_s.params()) disc_params.push_back(p);
  nn::Adam opt_g(gen_params, float(cfg.lr), float(cfg.beta1), float(cfg.beta2));
  nn::Adam opt_d(disc_params, float(cfg.lr), float(cfg.beta1), float(cfg.beta2));

  std::ofstream log;
  if (!cfg.log_csv.empty()) {
    log.open(cfg.log_csv, std::ios::binary);
    if (!log) throw DataError("cannot write training log: " + cfg.log_csv);
    log << "epoch,loss_adv,loss_cycle,loss_id,total\n";
    log.flush();
  }

  std::vector<size_t> li(live_x.size()), si(spoof_x.size());
  for (size_t i = 0; i < li.size(); ++i) li[i] = i;
  for (size_t i = 0; i < si.size(); ++i) si[i] = i;
  size_t per_epoch = std::min(li.size(), si.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng er = rng.split("epoch").split(uint64_t(epoch));
    er.shuffle(li);
    er.shuffle(si);
    double adv_sum = 0.0, cyc_sum = 0.0, id_sum = 0.0;

    for (size_t k = 0; k < per_epoch; ++k) {
      Tensor x_r = live_x[li[k]];
      Tensor x_s = spoof_x[si[k]];
      if (cfg.augment) {
        nn::NoGradGuard ng;
        float fill = float(cfg.aug.fill_value);
        x_r = apply_transform(sample_transform(cfg.aug, er), x_r, fill);
        x_s = apply_transform(sample_transform(cfg.aug, er), x_s, fill);
      }

      // discriminator step on frozen fakes
      {
        Tensor fake_s, fake_r;
        {
          nn::NoGradGuard ng;
          fake_s = bundle.g_rs.forward(x_r);
          fake_r = bundle.g_sr.forward(x_s);
        }
        Tensor d_loss =
            nn::add(gan_disc_loss(bundle.d_s.forward(x_s), bundle.d_s.forward(fake_s),
                                  cfg.gan_mode),
                    gan_disc_loss(bundle.d_r.forward(x_r), bundle.d_r.forward(fake_r),
                                  cfg.gan_mode));
        opt_d.zero_grad();
        d_loss.backward();
        opt_d.step();
      }

      // generator step; forwards shared across the three loss terms
      Tensor fake_s = bundle.g_rs.forward(x_r);
      Tensor fake_r = bundle.g_sr.forward(x_s);
      Tensor rt_r = bundle.g_sr.forward(fake_s);
      Tensor rt_s = bundle.g_rs.forward(fake_r);

      Tensor gen_adv = nn::add(gan_gen_loss(bundle.d_s.forward(fake_s), cfg.gan_mode),
                               gan_gen_loss(bundle.d_r.forward(fake_r), cfg.gan_mode));
      Tensor cyc = nn::add(l1_mean(rt_r, x_r), l1_mean(rt_s, x_s));
      Tensor idt = cfg.one_way_id ? nn::add(one_minus_cos(fake_s, x_r, embed),
                                            one_minus_cos(fake_r, x_s, embed))
                                  : nn::add(one_minus_cos(rt_r, x_r, embed),
                                            one_minus_cos(rt_s, x_s, embed));
      Tensor total = nn::add(gen_adv, nn::add(nn::mul_scalar(cyc, float(cfg.lambda_cycle)),
                                              nn::mul_scalar(idt, float(cfg.lambda_id))));
      adv_sum += gen_adv.item();
      cyc_sum += cyc.item();
      id_sum += idt.item();
      opt_g.zero_grad();
      total.backward();
      opt_g.step();
    }

    double n = double(per_epoch);
    double adv = adv_sum / n, cyc = cyc_sum / n, idm = id_sum / n;
    double total = adv + cfg.lambda_cycle * cyc + cfg.lambda_id * idm;
    if (log.is_open()) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", epoch + 1, adv, cyc, idm,
                    total);
      log << buf;
      log.flush();
    }

    bundle.trained = true;
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        (epoch + 1) % cfg.checkpoint_every == 0)
      bundle.save(epoch_dir(cfg.checkpoint_dir, epoch + 1));
  }
  return bundle;
}

Tensor simulate_spoof(const IdganBundle& b, const Tensor& x_live,
                      const TransformDistribution& dist, Rng& rng) {
  if (!b.trained) throw ParamError("spoof simulator is untrained");
  nn::NoGradGuard ng;
  TransformList t = sample_transform(dist, rng);
  return b.g_rs.forward(apply_transform(t, x_live, float(dist.fill_value)));
}

ImageTensor simulate_spoof(const IdganBundle& b, const ImageTensor& x_live,
                           const TransformDistribution& dist, Rng& rng) {
  Tensor y = simulate_spoof(b, to_tensor(to_symmetric(x_live)), dist, rng);
  ImageTensor out = from_tensor(y, ValueRange::symmetric);
  return x_live.range == ValueRange::symmetric ? out : to_unit(out);
}

}  // namespace advgen
