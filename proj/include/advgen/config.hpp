#pragma once

#include <string>
#include <vector>

#include "advgen/attack_gen.hpp"
#include "advgen/baselines.hpp"
#include "advgen/channel.hpp"
#include "advgen/idgan.hpp"
#include "advgen/models.hpp"
#include "advgen/transforms.hpp"

namespace advgen {

// Section "data": toy dataset geometry and the master seed every stage rng
// splits from.
struct DataConfig {
  int n_identities = 8;
  int per_identity = 6;
  int image_size = 64;
  double train_fraction = 0.5;
  double val_fraction = 0.25;
  double test_fraction = 0.25;
  uint64_t seed = 7;
};

// Section "models": detector / embedder / decomposer architecture ids, dims,
// and their supervised fit budgets.
struct ModelsConfig {
  std::string pad_variant = "cnn_small";
  int pad_epochs = 30;
  std::string embedder_variant = "cnn_small";
  int embedder_dim = 64;
  int embedder_epochs = 40;
  int decomposer_base = 8;
  int decomposer_epochs = 30;
  double lr = 2e-4;
};

// Section "eval": which attacks to score, in which modes, under what budget.
struct EvalConfig {
  std::vector<std::string> methods{"fgsm", "bim", "pgd", "cw", "advgen"};
  std::vector<std::string> modes{"digital", "physical"};
  double eps = 0.1;
  int steps = 10;
  double step_size = -1.0;  // < 0: eps / 4
  double identity_cos_min = 0.8;  // report threshold for identity preservation
};

// The whole experiment file: one strict, fully-defaulted schema. `transforms`
// is the shared transform distribution (attack-stage expectation sampling and
// the geometric penalty); image_size lives only under `data` and is copied
// into the per-stage configs at resolution time.
struct ExperimentConfig {
  DataConfig data;
  ChannelConfig channel;
  TransformDistribution transforms;
  ModelsConfig models;
  IdganConfig idgan;
  AdvgenConfig advgen;
  double advgen_fgsm_eps = 0.1;  // refinement budget of the generator attack
  int advgen_attack_iters = 4;   // refinement steps (0 = raw generator output)
  EvalConfig eval;

  ExperimentConfig();
};

// Strict load: unknown keys, type mismatches, and out-of-range values all
// throw ConfigError naming the dotted key path. Missing file -> DataError.
// An empty file yields all defaults. After the file, environment variables
// with the ADVGEN_ prefix override single values (dots become underscores,
// upper case: ADVGEN_IDGAN_EPOCHS=2, arrays as JSON text).
ExperimentConfig load_config(const std::string& path);

// Parse from a JSON string (same strictness, no environment pass).
ExperimentConfig parse_config(const std::string& text);

// Canonical serialization (sorted keys, lossless numbers). parse(serialize)
// is the identity; the config hash is the FNV-1a digest of this string.
std::string serialize_config(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);
std::string config_hash(const ExperimentConfig& cfg);

// Per-stage resolved views (image_size and shared sections filled in).
PadConfig resolved_pad(const ExperimentConfig& cfg);
EmbedderConfig resolved_embedder(const ExperimentConfig& cfg);
GeneratorConfig resolved_decomposer(const ExperimentConfig& cfg);
IdganConfig resolved_idgan(const ExperimentConfig& cfg);
AdvgenConfig resolved_advgen(const ExperimentConfig& cfg);
BaselineConfig resolved_baseline(const ExperimentConfig& cfg, AttackMethod method);

}  // namespace advgen
