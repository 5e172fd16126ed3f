#include "advgen/channel.hpp"

#include <cmath>

#include "advgen/geometry.hpp"

namespace advgen {

void ChannelConfig::validate() const {
  if (color_strength < 0 || blur_sigma < 0 || halftone_amp < 0 || warp_jitter < 0 ||
      noise_sigma < 0 || screen_period <= 0)
    throw ParamError("channel stage strengths must be nonnegative");
  if (jpeg_quality < 1 || jpeg_quality > 100)
    throw ParamError("jpeg_quality must be in [1,100]");
}

ChannelConfig ChannelConfig::disabled(Medium m) {
  ChannelConfig cfg;
  cfg.medium = m;
  return cfg;
}

ChannelConfig ChannelConfig::defaults(Medium m) {
  ChannelConfig cfg;
  cfg.medium = m;
  cfg.color_enabled = true;
  cfg.blur_enabled = true;
  cfg.halftone_enabled = true;
  cfg.warp_enabled = true;
  cfg.noise_enabled = true;
  cfg.jpeg_enabled = true;
  if (m == Medium::print) {
    // ink gamut: desaturate toward luma, warm cast
    cfg.color_matrix = {0.82f, 0.13f, 0.05f, 0.06f, 0.86f, 0.08f, 0.04f, 0.10f, 0.86f};
    cfg.color_bias = {0.03f, 0.01f, -0.02f};
    cfg.blur_sigma = 0.6f;
    cfg.halftone_amp = 0.35f;
    cfg.warp_jitter = 0.01f;
    cfg.noise_sigma = 0.02f;
    cfg.jpeg_quality = 70;
  } else if (m == Medium::replay) {
    // display: cool cast, slight channel crosstalk, screen-door grid
    cfg.color_matrix = {0.90f, 0.07f, 0.03f, 0.04f, 0.92f, 0.04f, 0.02f, 0.05f, 0.93f};
    cfg.color_bias = {-0.02f, 0.0f, 0.03f};
    cfg.blur_sigma = 0.5f;
    cfg.halftone_amp = 0.08f;
    cfg.screen_period = 4.7f;
    cfg.warp_jitter = 0.01f;
    cfg.noise_sigma = 0.015f;
    cfg.jpeg_quality = 75;
  } else {
    throw ParamError("channel defaults need a print or replay medium");
  }
  return cfg;
}

namespace {

void stage_color(ImageTensor& u, const ChannelConfig& cfg) {
  float s = cfg.color_strength;
  std::array<float, 9> m;
  for (int i = 0; i < 9; ++i) {
    float ident = (i % 4 == 0) ? 1.0f : 0.0f;
    m[size_t(i)] = ident + s * (cfg.color_matrix[size_t(i)] - ident);
  }
  std::array<float, 3> bias{s * cfg.color_bias[0], s * cfg.color_bias[1],
                            s * cfg.color_bias[2]};
  for (int y = 0; y < u.h; ++y)
    for (int x = 0; x < u.w; ++x) {
      float r = u.at(0, y, x), g = u.at(1, y, x), b = u.at(2, y, x);
      u.at(0, y, x) = m[0] * r + m[1] * g + m[2] * b + bias[0];
      u.at(1, y, x) = m[3] * r + m[4] * g + m[5] * b + bias[1];
      u.at(2, y, x) = m[6] * r + m[7] * g + m[8] * b + bias[2];
    }
  u.clamp_to_range();
}

void stage_blur(ImageTensor& u, float sigma) {
  if (sigma <= 0) return;
  int radius = std::max(1, int(std::ceil(3.0f * sigma)));
  std::vector<float> k(size_t(radius) * 2 + 1);
  float ksum = 0;
  for (int i = -radius; i <= radius; ++i) {
    float v = std::exp(-0.5f * float(i) * i / (sigma * sigma));
    k[size_t(i + radius)] = v;
    ksum += v;
  }
  for (auto& v : k) v /= ksum;

  auto reflect = [](int i, int n) {  // reflect-101
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
  };
  std::vector<float> tmp(size_t(u.h) * u.w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < u.h; ++y)
      for (int x = 0; x < u.w; ++x) {
        float s = 0;
        for (int i = -radius; i <= radius; ++i)
          s += k[size_t(i + radius)] * u.at(c, y, reflect(x + i, u.w));
        tmp[size_t(y) * u.w + x] = s;
      }
    for (int y = 0; y < u.h; ++y)
      for (int x = 0; x < u.w; ++x) {
        float s = 0;
        for (int i = -radius; i <= radius; ++i)
          s += k[size_t(i + radius)] * tmp[size_t(reflect(y + i, u.h)) * u.w + x];
        u.at(c, y, x) = s;
      }
  }
}

// classic 4x4 Bayer thresholds, scaled to (0,1)
constexpr float kBayer[4][4] = {{0.5f / 16, 8.5f / 16, 2.5f / 16, 10.5f / 16},
                                {12.5f / 16, 4.5f / 16, 14.5f / 16, 6.5f / 16},
                                {3.5f / 16, 11.5f / 16, 1.5f / 16, 9.5f / 16},
                                {15.5f / 16, 7.5f / 16, 13.5f / 16, 5.5f / 16}};

void stage_halftone_print(ImageTensor& u, float amp) {
  float a = std::min(1.0f, amp);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < u.h; ++y)
      for (int x = 0; x < u.w; ++x) {
        float v = u.at(c, y, x);
        float dithered = v > kBayer[y & 3][x & 3] ? 1.0f : 0.0f;
        u.at(c, y, x) = (1.0f - a) * v + a * dithered;
      }
}

void stage_moire_replay(ImageTensor& u, float amp, float period, Rng& rng) {
  double theta = rng.uniform(-0.26, 0.26);
  double ph1 = rng.uniform(0.0, 2.0 * M_PI);
  double ph2 = rng.uniform(0.0, 2.0 * M_PI);
  double ct = std::cos(theta), st = std::sin(theta);
  double f = 2.0 * M_PI / period;
  for (int y = 0; y < u.h; ++y)
    for (int x = 0; x < u.w; ++x) {
      double a = std::sin(f * (x * ct - y * st) + ph1);
      double b = std::sin(f * (x * st + y * ct) + ph2);
      float p = amp * float(0.5 * (a + b));
      for (int c = 0; c < 3; ++c) u.at(c, y, x) += p;
    }
  u.clamp_to_range();
}

void stage_warp(ImageTensor& u, float jitter, Rng& rng) {
  double j = double(jitter) * std::min(u.h, u.w);
  std::array<Pt, 4> src{{{0, 0}, {double(u.w - 1), 0}, {double(u.w - 1), double(u.h - 1)},
                         {0, double(u.h - 1)}}};
  std::array<Pt, 4> dst = src;
  for (auto& p : dst) {
    p[0] += rng.uniform(-j, j);
    p[1] += rng.uniform(-j, j);
  }
  Mat3 inv = mat3_inverse(solve_homography(src, dst));
  ImageTensor out = u;
  auto sample = [&](int c, double sx, double sy) {
    sx = std::clamp(sx, 0.0, double(u.w - 1));
    sy = std::clamp(sy, 0.0, double(u.h - 1));
    int x0 = int(sx), y0 = int(sy);
    int x1 = std::min(x0 + 1, u.w - 1), y1 = std::min(y0 + 1, u.h - 1);
    double wx = sx - x0, wy = sy - y0;
    return float(u.at(c, y0, x0) * (1 - wx) * (1 - wy) + u.at(c, y0, x1) * wx * (1 - wy) +
                 u.at(c, y1, x0) * (1 - wx) * wy + u.at(c, y1, x1) * wx * wy);
  };
  for (int y = 0; y < u.h; ++y)
    for (int x = 0; x < u.w; ++x) {
      Pt s = mat3_apply(inv, {double(x), double(y)});
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = sample(c, s[0], s[1]);
    }
  u = std::move(out);
}

void stage_noise(ImageTensor& u, float sigma, Rng& rng) {
  for (auto& v : u.data) v += sigma * float(rng.normal());
  u.clamp_to_range();
}

}  // namespace

ImageTensor apply_channel(const ImageTensor& x, const ChannelConfig& cfg, Rng rng) {
  cfg.validate();
  if (cfg.is_identity()) return x;

  ImageTensor u = to_unit(x);
  // independent substream per stage so toggling one stage does not reshuffle
  // the randomness of the others
  Rng moire_rng = rng.split("moire");
  Rng warp_rng = rng.split("warp");
  Rng noise_rng = rng.split("noise");

  if (cfg.color_enabled) stage_color(u, cfg);
  if (cfg.blur_enabled) stage_blur(u, cfg.blur_sigma);
  if (cfg.halftone_enabled) {
    if (cfg.medium == Medium::replay)
      stage_moire_replay(u, cfg.halftone_amp, cfg.screen_period, moire_rng);
    else
      stage_halftone_print(u, cfg.halftone_amp);
  }
  if (cfg.warp_enabled && cfg.warp_jitter > 0) stage_warp(u, cfg.warp_jitter, warp_rng);
  if (cfg.noise_enabled) stage_noise(u, cfg.noise_sigma, noise_rng);
  if (cfg.jpeg_enabled) u = jpeg_roundtrip(u, cfg.jpeg_quality);

  return x.range == ValueRange::unit ? u : to_symmetric(u);
}

std::pair<double, double> channel_degradation(const Classifier& classify,
                                              const std::vector<ImageTensor>& images,
                                              const ChannelConfig& cfg, Rng rng) {
  if (images.empty()) throw ParamError("channel_degradation needs at least one image");
  int before = 0, after = 0;
  for (size_t i = 0; i < images.size(); ++i) {
    if (classify(images[i]) == 0) ++before;
    ImageTensor re = apply_channel(images[i], cfg, rng.split(uint64_t(i)));
    if (classify(re) == 0) ++after;
  }
  double n = double(images.size());
  return {100.0 * before / n, 100.0 * after / n};
}

}  // namespace advgen
