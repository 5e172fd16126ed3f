#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "advgen/channel.hpp"
#include "advgen/image.hpp"
#include "advgen/transforms.hpp"

namespace advgen {

// successes/total as an exact percentage; display rounding happens only at
// render time.
double asr(int successes, int total);

// Windowed SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01L)^2,
// C2=(0.03L)^2 with L=1, valid windows only. Default operates on Rec.601
// luminance; ssim_rgb averages the three channels. ssim(x, x) == 1.0 exactly.
double ssim(const ImageTensor& x, const ImageTensor& y);
double ssim_rgb(const ImageTensor& x, const ImageTensor& y);

double cosine(const std::vector<float>& a, const std::vector<float>& b);

// unit-norm embedding of an image, for identity-preservation scoring
using EmbedFn = std::function<std::vector<float>(const ImageTensor&)>;

enum class EvalMode { digital, physical };

struct EvalCase {
  std::string path;      // source reference (manifest-relative)
  std::string method;    // attack that produced `attacked`
  ImageTensor source;    // pre-attack image (the attack's input)
  ImageTensor attacked;
};

struct AttackRecord {
  std::string path;
  std::string method;
  bool success_digital = false;
  bool success_physical = false;
  double ssim = 0.0;
  double identity_cos = 0.0;
};

struct AttackReport {
  std::vector<AttackRecord> records;
  bool has_digital = false, has_physical = false;
  double asr_digital = 0.0, asr_physical = 0.0;
  double mean_ssim = 0.0, mean_identity_cos = 0.0;
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> model_hashes;

  void recompute_aggregates();
};

// One evaluation pipeline pass. Digital mode scores the attacked images
// directly; physical mode scores them after the simulated channel. SSIM and
// identity cosine are always measured against the digital attacked image.
// success = PAD argmax says "live" (class 0).
AttackReport evaluate_pipeline(const std::vector<EvalCase>& cases, const Classifier& pad,
                               const EmbedFn& embed, EvalMode mode,
                               const ChannelConfig& cfg, Rng rng, int workers = 1);

// Merges a digital-mode and a physical-mode report over the same cases.
AttackReport merge_reports(const AttackReport& digital, const AttackReport& physical);

struct GeomCase {
  std::string name;
  TransformDistribution dist;
};

struct GeomRow {
  std::string name;
  std::string method;
  int successes = 0;
  int total = 0;
  double asr_value = 0.0;
};

// Per-case ASR with the case transform applied on top of the physical
// channel. The channel rng stream depends only on the image index, so an
// empty-transform case reproduces the plain physical ASR exactly.
std::vector<GeomRow> geometric_robustness_report(const std::vector<EvalCase>& cases,
                                                 const Classifier& pad,
                                                 const std::vector<GeomCase>& geom_cases,
                                                 const ChannelConfig& cfg, Rng rng);

// Deterministic serialization: CSV with lossless numeric round-trip plus a
// markdown summary table (method, digital ASR, physical ASR).
void write_report_csv(const AttackReport& report, const std::string& path);
AttackReport parse_report_csv(const std::string& path);
void write_report_markdown(const AttackReport& report, const std::string& path);
void write_geom_csv(const std::vector<GeomRow>& rows, const std::string& path);

}  // namespace advgen
