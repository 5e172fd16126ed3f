#pragma once

#include <array>
#include <functional>
#include <utility>
#include <vector>

#include "advgen/image.hpp"

namespace advgen {

enum class Medium { none, print, replay };

// Digital stand-in for print-or-display followed by camera recapture.
// Stages run in the fixed order: color shift -> blur -> halftone/moire ->
// recapture warp -> sensor noise -> JPEG. The whole channel is intentionally
// NOT differentiable: attacks never get gradient access to it.
struct ChannelConfig {
  Medium medium = Medium::print;

  bool color_enabled = false;
  float color_strength = 1.0f;  // scales (matrix - I) and bias
  std::array<float, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<float, 3> color_bias{0, 0, 0};

  bool blur_enabled = false;
  float blur_sigma = 0.0f;

  bool halftone_enabled = false;
  float halftone_amp = 0.0f;   // print: dither mix-in; replay: grid amplitude
  float screen_period = 4.7f;  // replay grid pitch in pixels

  bool warp_enabled = false;
  float warp_jitter = 0.0f;  // corner jitter as a fraction of min(H, W)

  bool noise_enabled = false;
  float noise_sigma = 0.0f;

  bool jpeg_enabled = false;
  int jpeg_quality = 90;

  bool is_identity() const {
    return !color_enabled && !blur_enabled && !halftone_enabled && !warp_enabled &&
           !noise_enabled && !jpeg_enabled;
  }
  void validate() const;

  static ChannelConfig disabled(Medium m = Medium::print);
  static ChannelConfig defaults(Medium m);
};

// Deterministic for a fixed (x, cfg, rng). Identity config returns the input
// bit-exactly. Output range matches the input's declared range.
ImageTensor apply_channel(const ImageTensor& x, const ChannelConfig& cfg, Rng rng);

// ASR of a set of attack images before and after the channel, against the
// same classifier (class 0 = live). Returned as percentages.
using Classifier = std::function<int(const ImageTensor&)>;
std::pair<double, double> channel_degradation(const Classifier& classify,
                                              const std::vector<ImageTensor>& images,
                                              const ChannelConfig& cfg, Rng rng);

}  // namespace advgen
