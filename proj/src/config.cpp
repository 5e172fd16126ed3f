#include "advgen/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "advgen/common.hpp"

namespace advgen {
namespace {

using nlohmann::json;

std::string kind_of(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

// Numbers of any flavor unify (the decode step re-checks integerness); every
// other kind must match exactly. Booleans are not numbers.
bool compatible(const json& slot, const json& v) {
  if (slot.is_number() && v.is_number()) return true;
  return slot.type() == v.type();
}

// Overlay `patch` onto `base`, refusing keys that the schema does not define
// and values of the wrong kind. Paths in errors are dotted key chains.
void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) {
    throw ConfigError("config: expected an object at " + (path.empty() ? "the top level" : path) +
                      ", got " + kind_of(patch));
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("config: unknown key " + p);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), p);
    } else if (!compatible(slot, it.value())) {
      throw ConfigError("config: type mismatch at " + p + ": expected " + kind_of(slot) +
                        ", got " + kind_of(it.value()));
    } else {
      slot = it.value();
    }
  }
}

// Environment overrides: one variable per leaf, ADVGEN_ + the upper-cased
// dotted path with dots as underscores. Strings are taken verbatim, anything
// else is parsed as JSON and type-checked against the schema slot.
void apply_env(json& node, const std::string& prefix) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    std::string name = prefix + "_";
    for (char c : it.key()) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (it.value().is_object()) {
      apply_env(it.value(), name);
      continue;
    }
    const char* text = std::getenv(name.c_str());
    if (!text) continue;
    if (it.value().is_string()) {
      it.value() = std::string(text);
      continue;
    }
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded() || !compatible(it.value(), v)) {
      throw ConfigError("config: environment override " + name + "='" + text +
                        "' is not a valid " + kind_of(it.value()));
    }
    it.value() = v;
  }
}

// ---- struct -> json ---------------------------------------------------

json kind_range_json(const KindRange& k) {
  return json{{"enabled", k.enabled}, {"hi", k.hi}, {"lo", k.lo}};
}

json transforms_json(const TransformDistribution& t) {
  return json{{"brightness", kind_range_json(t.brightness)},
              {"contrast", kind_range_json(t.contrast)},
              {"fill_value", t.fill_value},
              {"fold_shade", kind_range_json(t.fold_shade)},
              {"perspective", kind_range_json(t.perspective)},
              {"rotation", kind_range_json(t.rotation)},
              {"scale", kind_range_json(t.scale)},
              {"translation", kind_range_json(t.translation)}};
}

json channel_json(const ChannelConfig& c) {
  return json{{"blur_enabled", c.blur_enabled},
              {"blur_sigma", c.blur_sigma},
              {"color_bias", c.color_bias},
              {"color_enabled", c.color_enabled},
              {"color_matrix", c.color_matrix},
              {"color_strength", c.color_strength},
              {"halftone_amp", c.halftone_amp},
              {"halftone_enabled", c.halftone_enabled},
              {"jpeg_enabled", c.jpeg_enabled},
              {"jpeg_quality", c.jpeg_quality},
              {"medium", medium_str(c.medium)},
              {"noise_enabled", c.noise_enabled},
              {"noise_sigma", c.noise_sigma},
              {"screen_period", c.screen_period},
              {"warp_enabled", c.warp_enabled},
              {"warp_jitter", c.warp_jitter}};
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["data"] = {{"image_size", cfg.data.image_size},
               {"n_identities", cfg.data.n_identities},
               {"per_identity", cfg.data.per_identity},
               {"seed", cfg.data.seed},
               {"test_fraction", cfg.data.test_fraction},
               {"train_fraction", cfg.data.train_fraction},
               {"val_fraction", cfg.data.val_fraction}};
  j["channel"] = channel_json(cfg.channel);
  j["transforms"] = transforms_json(cfg.transforms);
  j["models"] = {{"decomposer_base", cfg.models.decomposer_base},
                 {"decomposer_epochs", cfg.models.decomposer_epochs},
                 {"embedder_dim", cfg.models.embedder_dim},
                 {"embedder_epochs", cfg.models.embedder_epochs},
                 {"embedder_variant", cfg.models.embedder_variant},
                 {"lr", cfg.models.lr},
                 {"pad_epochs", cfg.models.pad_epochs},
                 {"pad_variant", cfg.models.pad_variant}};
  j["idgan"] = {{"augment", cfg.idgan.augment},
                {"batch", cfg.idgan.batch},
                {"beta1", cfg.idgan.beta1},
                {"beta2", cfg.idgan.beta2},
                {"disc_base", cfg.idgan.disc_base},
                {"epochs", cfg.idgan.epochs},
                {"gan_mode", gan_mode_name(cfg.idgan.gan_mode)},
                {"gen_base", cfg.idgan.gen_base},
                {"lambda_cycle", cfg.idgan.lambda_cycle},
                {"lambda_id", cfg.idgan.lambda_id},
                {"lr", cfg.idgan.lr},
                {"one_way_id", cfg.idgan.one_way_id}};
  j["advgen"] = {{"attack_iters", cfg.advgen_attack_iters},
                 {"attack_term", cfg.advgen.attack_term},
                 {"augment", cfg.advgen.augment},
                 {"beta1", cfg.advgen.beta1},
                 {"beta2", cfg.advgen.beta2},
                 {"disc_base", cfg.advgen.disc_base},
                 {"eot_samples", cfg.advgen.eot_samples},
                 {"epochs", cfg.advgen.epochs},
                 {"eps1", cfg.advgen.eps1},
                 {"eps2", cfg.advgen.eps2},
                 {"fgsm_eps", cfg.advgen_fgsm_eps},
                 {"gan_mode", gan_mode_name(cfg.advgen.gan_mode)},
                 {"gen_base", cfg.advgen.gen_base},
                 {"hinge_form", hinge_form_name(cfg.advgen.hinge_form)},
                 {"lambda_attack", cfg.advgen.lambda_attack},
                 {"lambda_gan", cfg.advgen.lambda_gan},
                 {"lambda_geom", cfg.advgen.lambda_geom},
                 {"lambda_identity", cfg.advgen.lambda_identity},
                 {"lambda_phy", cfg.advgen.lambda_phy},
                 {"lr", cfg.advgen.lr},
                 {"residual_cap", cfg.advgen.residual_cap}};
  j["eval"] = {{"eps", cfg.eval.eps},
               {"identity_cos_min", cfg.eval.identity_cos_min},
               {"methods", cfg.eval.methods},
               {"modes", cfg.eval.modes},
               {"step_size", cfg.eval.step_size},
               {"steps", cfg.eval.steps}};
  return j;
}

// ---- json -> struct (with range checks naming the key path) -----------

[[noreturn]] void fail_range(const std::string& path, const std::string& what) {
  throw ConfigError("config: value out of range at " + path + ": " + what);
}

struct Reader {
  const json& j;
  std::string path;

  std::string at(const char* k) const { return path + "." + k; }

  double num(const char* k) const { return j.at(k).get<double>(); }
  float fnum(const char* k) const { return j.at(k).get<float>(); }
  bool flag(const char* k) const { return j.at(k).get<bool>(); }
  std::string str(const char* k) const { return j.at(k).get<std::string>(); }

  int integer(const char* k) const {
    const json& v = j.at(k);
    if (!v.is_number_integer())
      throw ConfigError("config: expected an integer at " + at(k));
    return v.get<int>();
  }
  uint64_t u64(const char* k) const {
    const json& v = j.at(k);
    if (!v.is_number_integer())
      throw ConfigError("config: expected an integer at " + at(k));
    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0)
      fail_range(at(k), "must be >= 0");
    return v.get<uint64_t>();
  }

  double positive(const char* k) const {
    double v = num(k);
    if (!(v > 0.0)) fail_range(at(k), "must be > 0");
    return v;
  }
  double non_negative(const char* k) const {
    double v = num(k);
    if (!(v >= 0.0)) fail_range(at(k), "must be >= 0");
    return v;
  }
  int at_least(const char* k, int lo) const {
    int v = integer(k);
    if (v < lo) fail_range(at(k), "must be >= " + std::to_string(lo));
    return v;
  }
  double beta(const char* k) const {
    double v = num(k);
    if (!(v >= 0.0 && v < 1.0)) fail_range(at(k), "must be in [0, 1)");
    return v;
  }
  double fraction(const char* k) const {
    double v = num(k);
    if (!(v >= 0.0 && v <= 1.0)) fail_range(at(k), "must be in [0, 1]");
    return v;
  }
};

KindRange read_kind_range(const json& j, const std::string& path) {
  Reader r{j, path};
  KindRange k;
  k.enabled = r.flag("enabled");
  k.lo = r.num("lo");
  k.hi = r.num("hi");
  if (k.enabled && k.lo > k.hi) fail_range(path, "lo must be <= hi");
  return k;
}

TransformDistribution read_transforms(const json& j) {
  TransformDistribution t;
  t.rotation = read_kind_range(j.at("rotation"), "transforms.rotation");
  t.scale = read_kind_range(j.at("scale"), "transforms.scale");
  t.translation = read_kind_range(j.at("translation"), "transforms.translation");
  t.perspective = read_kind_range(j.at("perspective"), "transforms.perspective");
  t.brightness = read_kind_range(j.at("brightness"), "transforms.brightness");
  t.contrast = read_kind_range(j.at("contrast"), "transforms.contrast");
  t.fold_shade = read_kind_range(j.at("fold_shade"), "transforms.fold_shade");
  t.fill_value = j.at("fill_value").get<double>();
  if (t.scale.enabled && t.scale.lo <= 0.0) fail_range("transforms.scale.lo", "must be > 0");
  if (std::abs(t.fill_value) > 1.0) fail_range("transforms.fill_value", "must be in [-1, 1]");
  return t;
}

ChannelConfig read_channel(const json& j) {
  Reader r{j, "channel"};
  ChannelConfig c;
  try {
    c.medium = medium_from_str(r.str("medium"));
  } catch (const std::exception& e) {
    fail_range("channel.medium", e.what());
  }
  c.color_enabled = r.flag("color_enabled");
  c.color_strength = r.fnum("color_strength");
  auto mat = j.at("color_matrix");
  auto bias = j.at("color_bias");
  if (!mat.is_array() || mat.size() != 9) fail_range("channel.color_matrix", "must be 9 numbers");
  if (!bias.is_array() || bias.size() != 3) fail_range("channel.color_bias", "must be 3 numbers");
  for (size_t i = 0; i < 9; ++i) c.color_matrix[i] = mat[i].get<float>();
  for (size_t i = 0; i < 3; ++i) c.color_bias[i] = bias[i].get<float>();
  c.blur_enabled = r.flag("blur_enabled");
  c.blur_sigma = r.fnum("blur_sigma");
  c.halftone_enabled = r.flag("halftone_enabled");
  c.halftone_amp = r.fnum("halftone_amp");
  c.screen_period = r.fnum("screen_period");
  c.warp_enabled = r.flag("warp_enabled");
  c.warp_jitter = r.fnum("warp_jitter");
  c.noise_enabled = r.flag("noise_enabled");
  c.noise_sigma = r.fnum("noise_sigma");
  c.jpeg_enabled = r.flag("jpeg_enabled");
  c.jpeg_quality = r.integer("jpeg_quality");
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: channel: ") + e.what());
  }
  return c;
}

GanLossMode read_gan_mode(const Reader& r) {
  try {
    return gan_mode_from_name(r.str("gan_mode"));
  } catch (const std::exception& e) {
    fail_range(r.at("gan_mode"), e.what());
  }
}

void read_variant(const Reader& r, const char* key, std::string& out) {
  out = r.str(key);
  if (out != "cnn_small" && out != "cnn_wide")
    fail_range(r.at(key), "must be cnn_small or cnn_wide");
}

ExperimentConfig decode(const json& j) {
  ExperimentConfig cfg;

  {
    Reader r{j.at("data"), "data"};
    cfg.data.n_identities = r.at_least("n_identities", 2);
    cfg.data.per_identity = r.at_least("per_identity", 1);
    cfg.data.image_size = r.at_least("image_size", 32);
    cfg.data.train_fraction = r.fraction("train_fraction");
    cfg.data.val_fraction = r.fraction("val_fraction");
    cfg.data.test_fraction = r.fraction("test_fraction");
    double sum = cfg.data.train_fraction + cfg.data.val_fraction + cfg.data.test_fraction;
    if (std::abs(sum - 1.0) > 1e-9) fail_range("data.train_fraction", "split fractions must sum to 1");
    if (cfg.data.train_fraction <= 0.0) fail_range("data.train_fraction", "must be > 0");
    cfg.data.seed = r.u64("seed");
  }

  cfg.channel = read_channel(j.at("channel"));
  cfg.transforms = read_transforms(j.at("transforms"));

  {
    Reader r{j.at("models"), "models"};
    read_variant(r, "pad_variant", cfg.models.pad_variant);
    cfg.models.pad_epochs = r.at_least("pad_epochs", 1);
    read_variant(r, "embedder_variant", cfg.models.embedder_variant);
    cfg.models.embedder_dim = r.at_least("embedder_dim", 2);
    cfg.models.embedder_epochs = r.at_least("embedder_epochs", 1);
    cfg.models.decomposer_base = r.at_least("decomposer_base", 2);
    cfg.models.decomposer_epochs = r.at_least("decomposer_epochs", 1);
    cfg.models.lr = r.positive("lr");
  }

  {
    Reader r{j.at("idgan"), "idgan"};
    cfg.idgan.gen_base = r.at_least("gen_base", 2);
    cfg.idgan.disc_base = r.at_least("disc_base", 2);
    cfg.idgan.lambda_cycle = r.non_negative("lambda_cycle");
    cfg.idgan.lambda_id = r.non_negative("lambda_id");
    cfg.idgan.gan_mode = read_gan_mode(r);
    cfg.idgan.one_way_id = r.flag("one_way_id");
    cfg.idgan.epochs = r.at_least("epochs", 1);
    cfg.idgan.batch = r.integer("batch");
    if (cfg.idgan.batch != 1) fail_range("idgan.batch", "the trainer is single-image; must be 1");
    cfg.idgan.lr = r.positive("lr");
    cfg.idgan.beta1 = r.beta("beta1");
    cfg.idgan.beta2 = r.beta("beta2");
    cfg.idgan.augment = r.flag("augment");
  }

  {
    Reader r{j.at("advgen"), "advgen"};
    cfg.advgen.gen_base = r.at_least("gen_base", 2);
    cfg.advgen.disc_base = r.at_least("disc_base", 2);
    cfg.advgen.residual_cap = static_cast<float>(r.positive("residual_cap"));
    cfg.advgen.eps1 = r.positive("eps1");
    cfg.advgen.eps2 = r.positive("eps2");
    cfg.advgen.lambda_phy = r.non_negative("lambda_phy");
    cfg.advgen.lambda_geom = r.non_negative("lambda_geom");
    cfg.advgen.lambda_identity = r.non_negative("lambda_identity");
    cfg.advgen.lambda_gan = r.non_negative("lambda_gan");
    cfg.advgen.lambda_attack = r.non_negative("lambda_attack");
    cfg.advgen.attack_term = r.flag("attack_term");
    try {
      cfg.advgen.hinge_form = hinge_form_from_name(r.str("hinge_form"));
    } catch (const std::exception& e) {
      fail_range("advgen.hinge_form", e.what());
    }
    cfg.advgen.gan_mode = read_gan_mode(r);
    cfg.advgen.eot_samples = r.at_least("eot_samples", 1);
    cfg.advgen.epochs = r.at_least("epochs", 1);
    cfg.advgen.lr = r.positive("lr");
    cfg.advgen.beta1 = r.beta("beta1");
    cfg.advgen.beta2 = r.beta("beta2");
    cfg.advgen.augment = r.flag("augment");
    cfg.advgen_fgsm_eps = r.positive("fgsm_eps");
    cfg.advgen_attack_iters = r.at_least("attack_iters", 0);
  }

  {
    Reader r{j.at("eval"), "eval"};
    const json& methods = j.at("eval").at("methods");
    if (!methods.is_array() || methods.empty()) fail_range("eval.methods", "must be a non-empty array");
    cfg.eval.methods.clear();
    std::set<std::string> seen;
    for (const auto& m : methods) {
      std::string name = m.get<std::string>();
      try {
        attack_method_from_name(name);
      } catch (const std::exception& e) {
        fail_range("eval.methods", e.what());
      }
      if (!seen.insert(name).second) fail_range("eval.methods", "duplicate method " + name);
      cfg.eval.methods.push_back(name);
    }
    const json& modes = j.at("eval").at("modes");
    if (!modes.is_array() || modes.empty()) fail_range("eval.modes", "must be a non-empty array");
    cfg.eval.modes.clear();
    std::set<std::string> mseen;
    for (const auto& m : modes) {
      std::string name = m.get<std::string>();
      if (name != "digital" && name != "physical") fail_range("eval.modes", "unknown mode " + name);
      if (!mseen.insert(name).second) fail_range("eval.modes", "duplicate mode " + name);
      cfg.eval.modes.push_back(name);
    }
    cfg.eval.eps = r.positive("eps");
    cfg.eval.steps = r.at_least("steps", 1);
    cfg.eval.step_size = r.num("step_size");
    if (cfg.eval.step_size == 0.0) fail_range("eval.step_size", "must be > 0 (or < 0 for eps/4)");
    cfg.eval.identity_cos_min = r.fraction("identity_cos_min");
  }

  return cfg;
}

ExperimentConfig from_merged(json merged, bool env) {
  if (env) apply_env(merged, "ADVGEN");
  return decode(merged);
}

json parse_text(const std::string& text) {
  // Whitespace-only files mean "all defaults".
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: not valid JSON");
  return j;
}

}  // namespace

ExperimentConfig::ExperimentConfig()
    : channel(ChannelConfig::defaults(Medium::print)),
      transforms(TransformDistribution::defaults()) {}

ExperimentConfig parse_config(const std::string& text) {
  json merged = to_json(ExperimentConfig{});
  merge_strict(merged, parse_text(text), "");
  return from_merged(std::move(merged), false);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("config file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json merged = to_json(ExperimentConfig{});
  merge_strict(merged, parse_text(ss.str()), "");
  return from_merged(std::move(merged), true);
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config: " + path);
  out << serialize_config(cfg);
}

std::string config_hash(const ExperimentConfig& cfg) {
  return to_hex(fnv1a64(serialize_config(cfg)));
}

PadConfig resolved_pad(const ExperimentConfig& cfg) {
  PadConfig c;
  c.variant = cfg.models.pad_variant;
  c.image_size = cfg.data.image_size;
  return c;
}

EmbedderConfig resolved_embedder(const ExperimentConfig& cfg) {
  EmbedderConfig c;
  c.variant = cfg.models.embedder_variant;
  c.image_size = cfg.data.image_size;
  c.dim = cfg.models.embedder_dim;
  return c;
}

GeneratorConfig resolved_decomposer(const ExperimentConfig& cfg) {
  GeneratorConfig c;
  c.kind = GeneratorKind::perturbation;
  c.image_size = cfg.data.image_size;
  c.base = cfg.models.decomposer_base;
  return c;
}

IdganConfig resolved_idgan(const ExperimentConfig& cfg) {
  IdganConfig c = cfg.idgan;
  c.image_size = cfg.data.image_size;
  return c;
}

AdvgenConfig resolved_advgen(const ExperimentConfig& cfg) {
  AdvgenConfig c = cfg.advgen;
  c.image_size = cfg.data.image_size;
  c.eot = cfg.transforms;
  return c;
}

BaselineConfig resolved_baseline(const ExperimentConfig& cfg, AttackMethod method) {
  BaselineConfig c;
  c.method = method;
  c.eps = cfg.eval.eps;
  c.steps = cfg.eval.steps;
  c.step_size = cfg.eval.step_size;
  return c;
}

}  // namespace advgen
