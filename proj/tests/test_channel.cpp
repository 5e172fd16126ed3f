#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advgen/channel.hpp"
#include "advgen/metrics.hpp"
#include "test_util.hpp"

using namespace advgen;

namespace {

double plane_variance(const ImageTensor& img) {
  double mean = 0.0;
  for (float v : img.data) mean += v;
  mean /= double(img.data.size());
  double var = 0.0;
  for (float v : img.data) var += (v - mean) * (v - mean);
  return var / double(img.data.size());
}

// mean |discrete Laplacian| of the red plane: near zero on smooth content,
// large once halftone/noise texture lands
double high_freq_energy(const ImageTensor& img) {
  double total = 0.0;
  long count = 0;
  for (int y = 1; y + 1 < img.h; ++y)
    for (int x = 1; x + 1 < img.w; ++x) {
      double lap = 4.0 * img.at(0, y, x) - img.at(0, y - 1, x) - img.at(0, y + 1, x) -
                   img.at(0, y, x - 1) - img.at(0, y, x + 1);
      total += std::abs(lap);
      ++count;
    }
  return total / double(count);
}

}  // namespace

TEST_SUITE("channel_config") {
  TEST_CASE("disabled config is the identity, defaults are not") {
    CHECK(ChannelConfig::disabled(Medium::print).is_identity());
    CHECK(ChannelConfig::disabled(Medium::replay).is_identity());
    CHECK_FALSE(ChannelConfig::defaults(Medium::print).is_identity());
    CHECK_FALSE(ChannelConfig::defaults(Medium::replay).is_identity());
    ChannelConfig::defaults(Medium::print).validate();
    ChannelConfig::defaults(Medium::replay).validate();
    CHECK_THROWS_AS(ChannelConfig::defaults(Medium::none), ParamError);
  }

  TEST_CASE("validate rejects out-of-range knobs") {
    ChannelConfig cfg = ChannelConfig::disabled();
    cfg.blur_sigma = -0.1f;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
    cfg = ChannelConfig::disabled();
    cfg.jpeg_quality = 0;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
    cfg.jpeg_quality = 101;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
    cfg = ChannelConfig::disabled();
    cfg.screen_period = 0.0f;
    CHECK_THROWS_AS(cfg.validate(), ParamError);
  }
}

TEST_SUITE("channel_apply") {
  TEST_CASE("identity config returns the input bit-exactly") {
    ImageTensor x = testutil::random_image(48, 40, 3);
    ImageTensor y = apply_channel(x, ChannelConfig::disabled(), Rng(9));
    CHECK(testutil::bitwise_equal(x, y));

    ImageTensor xs = testutil::random_image(48, 40, 4, ValueRange::symmetric);
    ImageTensor ys = apply_channel(xs, ChannelConfig::disabled(), Rng(9));
    CHECK(testutil::bitwise_equal(xs, ys));
  }

  TEST_CASE("deterministic per rng stream") {
    ImageTensor x = testutil::smooth_image(48, 48, 5);
    ChannelConfig cfg = ChannelConfig::defaults(Medium::print);
    ImageTensor a = apply_channel(x, cfg, Rng(7));
    ImageTensor b = apply_channel(x, cfg, Rng(7));
    ImageTensor c = apply_channel(x, cfg, Rng(8));
    CHECK(testutil::bitwise_equal(a, b));
    CHECK_FALSE(testutil::bitwise_equal(a, c));
  }

  TEST_CASE("range is preserved") {
    ImageTensor xs = testutil::smooth_image(48, 48, 6, ValueRange::symmetric);
    ImageTensor ys = apply_channel(xs, ChannelConfig::defaults(Medium::replay), Rng(3));
    CHECK(ys.range == ValueRange::symmetric);
    for (float v : ys.data) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }

  TEST_CASE("per-stage rng substreams are isolated") {
    // The noise field must not depend on whether the warp stage ran, so
    // (warp+noise) - (warp only) equals (noise only) - input.
    ImageTensor x = ImageTensor::filled(48, 48, 0.5f, ValueRange::unit);
    for (size_t i = 0; i < x.data.size(); ++i)
      x.data[i] = 0.35f + 0.3f * float(i % 7) / 7.0f;  // headroom: no clamping

    ChannelConfig noise_only = ChannelConfig::disabled();
    noise_only.noise_enabled = true;
    noise_only.noise_sigma = 0.02f;
    ChannelConfig warp_only = ChannelConfig::disabled();
    warp_only.warp_enabled = true;
    warp_only.warp_jitter = 0.01f;
    ChannelConfig both = warp_only;
    both.noise_enabled = true;
    both.noise_sigma = 0.02f;

    Rng rng(101);
    ImageTensor n = apply_channel(x, noise_only, rng);
    ImageTensor w = apply_channel(x, warp_only, rng);
    ImageTensor wn = apply_channel(x, both, rng);

    double worst = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
      double field_a = double(n.data[i]) - double(x.data[i]);
      double field_b = double(wn.data[i]) - double(w.data[i]);
      worst = std::max(worst, std::abs(field_a - field_b));
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("jpeg-only stage is mild at default qualities") {
    ImageTensor x = testutil::smooth_image(64, 64, 30);
    ChannelConfig cfg = ChannelConfig::disabled();
    cfg.jpeg_enabled = true;
    cfg.jpeg_quality = ChannelConfig::defaults(Medium::print).jpeg_quality;
    ImageTensor y = apply_channel(x, cfg, Rng(1));
    CHECK(mean_abs_diff(x, y) < 0.02);
  }

  TEST_CASE("print halftone texturizes flat regions") {
    ImageTensor x = ImageTensor::filled(48, 48, 0.5f, ValueRange::unit);
    CHECK(plane_variance(x) == 0.0);
    ChannelConfig cfg = ChannelConfig::disabled(Medium::print);
    cfg.halftone_enabled = true;
    cfg.halftone_amp = ChannelConfig::defaults(Medium::print).halftone_amp;
    ImageTensor y = apply_channel(x, cfg, Rng(2));
    CHECK(plane_variance(y) > 1e-4);

    ChannelConfig rcfg = ChannelConfig::disabled(Medium::replay);
    rcfg.halftone_enabled = true;
    rcfg.halftone_amp = ChannelConfig::defaults(Medium::replay).halftone_amp;
    ImageTensor yr = apply_channel(x, rcfg, Rng(2));
    CHECK(plane_variance(yr) > 1e-5);
    // the two screen models leave different fingerprints
    CHECK_FALSE(testutil::bitwise_equal(y, yr));
  }

  TEST_CASE("stage strength monotonically erodes similarity") {
    struct Arm {
      const char* name;
      std::function<void(ChannelConfig&, int)> set;  // level 1..3
    };
    std::vector<Arm> arms = {
        {"blur",
         [](ChannelConfig& c, int l) {
           c.blur_enabled = true;
           c.blur_sigma = 0.4f * float(l);
         }},
        {"noise",
         [](ChannelConfig& c, int l) {
           c.noise_enabled = true;
           c.noise_sigma = 0.015f * float(l);
         }},
        {"halftone",
         [](ChannelConfig& c, int l) {
           c.halftone_enabled = true;
           c.halftone_amp = 0.15f * float(l);
         }},
        {"jpeg",
         [](ChannelConfig& c, int l) {
           c.jpeg_enabled = true;
           c.jpeg_quality = 95 - 30 * l;  // 65, 35, 5
         }},
    };
    const int kProbes = 50;
    for (const auto& arm : arms) {
      CAPTURE(arm.name);
      double prev = 1.0;
      for (int level = 1; level <= 3; ++level) {
        double total = 0.0;
        for (int i = 0; i < kProbes; ++i) {
          ImageTensor x = testutil::smooth_image(48, 48, 1000 + uint64_t(i));
          ChannelConfig cfg = ChannelConfig::disabled(Medium::print);
          arm.set(cfg, level);
          ImageTensor y = apply_channel(x, cfg, Rng(uint64_t(i)));
          total += ssim(x, y);
        }
        double mean_ssim = total / kProbes;
        CHECK(mean_ssim < prev + 1e-9);
        CHECK(mean_ssim < 1.0);
        prev = mean_ssim;
      }
    }
  }
}

TEST_SUITE("channel_degradation") {
  TEST_CASE("reports before/after ASR against a texture-sensitive stub") {
    // "live" verdict = low local texture; the print channel adds texture.
    Classifier classify = [](const ImageTensor& img) {
      return high_freq_energy(img) < 0.02 ? 0 : 1;
    };
    std::vector<ImageTensor> images;
    for (int i = 0; i < 10; ++i) images.push_back(testutil::smooth_image(48, 48, 70 + uint64_t(i)));
    auto [before, after] = channel_degradation(classify, images, ChannelConfig::defaults(Medium::print), Rng(5));
    CHECK(before == 100.0);
    CHECK(after < before);

    CHECK_THROWS_AS(channel_degradation(classify, {}, ChannelConfig::disabled(), Rng(1)),
                    ParamError);

    // identity channel cannot change the verdicts
    auto [b2, a2] = channel_degradation(classify, images, ChannelConfig::disabled(), Rng(5));
    CHECK(b2 == a2);
  }
}
