#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advgen/transforms.hpp"
#include "fd_check.hpp"
#include "test_util.hpp"

using namespace advgen;
using namespace advgen::nn;

namespace {

Tensor smooth_tensor(int h, int w, uint64_t seed) {
  return to_tensor(testutil::smooth_image(h, w, seed, ValueRange::symmetric));
}

// mean-pool logits head: differentiable, monotone in image brightness
LogitsFn mean_pad() {
  return [](const Tensor& x) {
    Tensor m = mean_t(x);
    return concat_c(mul_scalar(m, 4.0f), mul_scalar(m, -4.0f));
  };
}

TransformList single(TransformKind k, std::vector<double> params) {
  return {TransformSpec::make(k, std::move(params))};
}

}  // namespace

TEST_SUITE("transform_specs") {
  TEST_CASE("make validates parameter counts and ranges") {
    CHECK_NOTHROW(TransformSpec::make(TransformKind::rotation, {25.0}));
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::rotation, {200.0}), ParamError);
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::rotation, {1.0, 2.0}), ParamError);
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::scale, {0.0}), ParamError);
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::translation, {0.5}), ParamError);
    CHECK_NOTHROW(TransformSpec::make(TransformKind::perspective,
                                      {0.01, 0.0, -0.02, 0.01, 0.0, 0.0, 0.02, -0.01}));
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::perspective, {0.01, 0.0}), ParamError);
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::contrast, {5.0}), ParamError);
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::brightness, {3.0}), ParamError);
    CHECK_NOTHROW(TransformSpec::make(TransformKind::fold_shade, {0.2, 0.5, 0.03}));
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::fold_shade, {0.2}), ParamError);
    CHECK_THROWS_AS(TransformSpec::make(TransformKind::fold_shade, {0.2, 1.5, 0.0}), ParamError);
  }

  TEST_CASE("sampling respects ranges and the pinned kind order") {
    TransformDistribution dist = TransformDistribution::defaults();
    Rng rng(404);
    for (int rep = 0; rep < 200; ++rep) {
      TransformList t = sample_transform(dist, rng);
      REQUIRE(t.size() == 7);
      CHECK(t[0].kind == TransformKind::rotation);
      CHECK(t[1].kind == TransformKind::scale);
      CHECK(t[2].kind == TransformKind::translation);
      CHECK(t[3].kind == TransformKind::perspective);
      CHECK(t[4].kind == TransformKind::brightness);
      CHECK(t[5].kind == TransformKind::contrast);
      CHECK(t[6].kind == TransformKind::fold_shade);

      CHECK(std::abs(t[0].params[0]) <= 25.0);
      CHECK(t[1].params[0] >= 0.9);
      CHECK(t[1].params[0] <= 1.1);
      for (double v : t[2].params) CHECK(std::abs(v) <= 0.05);
      for (double v : t[3].params) CHECK(std::abs(v) <= 0.04);
      CHECK(std::abs(t[4].params[0]) <= 0.15);
      CHECK(t[5].params[0] >= 0.85);
      CHECK(t[5].params[0] <= 1.15);
      CHECK(t[6].params[0] >= 0.0);
      CHECK(t[6].params[0] <= 0.25);
      CHECK(t[6].params[1] >= 0.35);
      CHECK(t[6].params[1] <= 0.65);
      CHECK(t[6].params[2] == doctest::Approx(0.15 * t[6].params[0]).epsilon(1e-12));
    }
  }

  TEST_CASE("disabled distribution samples the empty composite") {
    TransformDistribution dist = TransformDistribution::disabled();
    CHECK(dist.all_disabled());
    Rng rng(1);
    CHECK(sample_transform(dist, rng).empty());
  }
}

TEST_SUITE("transform_apply") {
  TEST_CASE("empty composite is the identity, bit-exact") {
    Tensor x = smooth_tensor(32, 32, 1);
    Tensor y = apply_transform({}, x);
    REQUIRE(y.numel() == x.numel());
    for (size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

    ImageTensor xi = testutil::random_image(32, 32, 2, ValueRange::symmetric);
    CHECK(testutil::bitwise_equal(apply_transform({}, xi), xi));
  }

  TEST_CASE("zero-parameter geometric primitives reduce to the identity") {
    Tensor x = smooth_tensor(48, 48, 3);
    for (auto t : {single(TransformKind::rotation, {0.0}), single(TransformKind::scale, {1.0}),
                   single(TransformKind::translation, {0.0, 0.0}),
                   single(TransformKind::perspective, {0, 0, 0, 0, 0, 0, 0, 0})}) {
      Tensor y = apply_transform(t, x);
      double worst = 0.0;
      for (size_t i = 0; i < x.numel(); ++i)
        worst = std::max(worst, std::abs(double(y.data()[i]) - double(x.data()[i])));
      CHECK(worst < 1e-5);
    }
  }

  TEST_CASE("brightness and contrast follow the photometric model exactly") {
    Tensor x = smooth_tensor(32, 32, 4);
    Tensor yb = apply_transform(single(TransformKind::brightness, {0.1}), x);
    Tensor yc = apply_transform(single(TransformKind::contrast, {1.2}), x);
    TransformList both = {TransformSpec::make(TransformKind::brightness, {0.1}),
                          TransformSpec::make(TransformKind::contrast, {1.2})};
    Tensor ybc = apply_transform(both, x);
    for (size_t i = 0; i < x.numel(); ++i) {
      float v = x.data()[i];
      CHECK(yb.data()[i] == doctest::Approx(std::clamp(v + 0.1f, -1.0f, 1.0f)).epsilon(1e-6));
      CHECK(yc.data()[i] == doctest::Approx(std::clamp(v * 1.2f, -1.0f, 1.0f)).epsilon(1e-6));
      CHECK(ybc.data()[i] ==
            doctest::Approx(std::clamp((v + 0.1f) * 1.2f, -1.0f, 1.0f)).epsilon(1e-6));
    }
  }

  TEST_CASE("integer-pixel translation is an exact shift with fill at the edge") {
    const int W = 64, H = 64;
    Tensor x = smooth_tensor(H, W, 5);
    double tx = 4.0 / W;
    Tensor y = apply_transform(single(TransformKind::translation, {tx, 0.0}), x);
    const float* xd = x.data();
    const float* yd = y.data();
    // content moves toward +x: out(col) = in(col - 4)
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < H; ++r)
        for (int col = 4; col < W; ++col) {
          float got = yd[(size_t(c) * H + r) * W + col];
          float want = xd[(size_t(c) * H + r) * W + col - 4];
          CHECK(std::abs(got - want) < 1e-5f);
        }
    // vacated strip takes the mid-gray fill
    for (int r = 0; r < H; ++r) CHECK(std::abs(yd[size_t(r) * W]) < 1e-5f);
  }

  TEST_CASE("rotation round trip restores interior pixels on smooth probes") {
    Tensor x = smooth_tensor(64, 64, 6);
    Tensor once = apply_transform(single(TransformKind::rotation, {20.0}), x);
    Tensor back = apply_transform(single(TransformKind::rotation, {-20.0}), once);
    const int margin = 18;
    double worst = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int r = margin; r < 64 - margin; ++r)
        for (int col = margin; col < 64 - margin; ++col) {
          size_t i = (size_t(c) * 64 + r) * 64 + col;
          worst = std::max(worst, std::abs(double(back.data()[i]) - double(x.data()[i])));
        }
    CHECK(worst < 0.02);
  }

  TEST_CASE("fold dims and shears only beyond the crease") {
    ImageTensor flat = ImageTensor::filled(64, 64, 0.5f, ValueRange::symmetric);
    ImageTensor folded = apply_transform(single(TransformKind::fold_shade, {0.2, 0.5, 0.0}), flat);
    int crease = 32;
    for (int r = 0; r < 64; ++r) {
      for (int col = 0; col < crease - 4; ++col)
        CHECK(folded.at(0, r, col) == doctest::Approx(0.5).epsilon(1e-5));
      for (int col = crease + 8; col < 64; ++col)
        CHECK(folded.at(0, r, col) == doctest::Approx(0.5 - 0.2 * 0.3).epsilon(1e-3));
      // the feathered seam at the crease (31.5px) dips below both sides
      CHECK(folded.at(0, r, crease - 1) < 0.42);
      CHECK(folded.at(0, r, crease) < 0.42);
    }

    // nonzero shear displaces content beyond the crease but not before it
    ImageTensor stripes = ImageTensor::zeros(64, 64, ValueRange::symmetric);
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 64; ++r)
        for (int col = 0; col < 64; ++col)
          stripes.at(c, r, col) = (col / 4) % 2 == 0 ? 0.5f : -0.5f;
    ImageTensor s0 = apply_transform(single(TransformKind::fold_shade, {0.2, 0.5, 0.0}), stripes);
    ImageTensor s1 = apply_transform(single(TransformKind::fold_shade, {0.2, 0.5, 0.1}), stripes);
    double before = 0.0, beyond = 0.0;
    for (int r = 0; r < 64; ++r) {
      for (int col = 0; col < crease - 2; ++col)
        before = std::max(before, std::abs(double(s0.at(0, r, col)) - double(s1.at(0, r, col))));
      for (int col = crease + 4; col < 64; ++col)
        beyond = std::max(beyond, std::abs(double(s0.at(0, r, col)) - double(s1.at(0, r, col))));
    }
    CHECK(before < 1e-5);
    CHECK(beyond > 0.1);
  }

  TEST_CASE("geometric residual equals transformed minus original") {
    Tensor x = smooth_tensor(32, 32, 7);
    TransformList t = {TransformSpec::make(TransformKind::rotation, {10.0}),
                       TransformSpec::make(TransformKind::brightness, {0.05})};
    Tensor res = geometric_residual(t, x);
    Tensor ref = apply_transform(t, x);
    for (size_t i = 0; i < x.numel(); ++i)
      CHECK(res.data()[i] == doctest::Approx(ref.data()[i] - x.data()[i]).epsilon(1e-6));
  }

  TEST_CASE("gradient flows through the full composite") {
    Tensor probe = smooth_tensor(16, 16, 8);
    TransformList t = {TransformSpec::make(TransformKind::rotation, {15.0}),
                       TransformSpec::make(TransformKind::translation, {0.03, -0.02}),
                       TransformSpec::make(TransformKind::brightness, {0.1}),
                       TransformSpec::make(TransformKind::contrast, {1.1})};
    Rng cot_rng(9);
    Tensor cot = Tensor::randn(probe.shape(), cot_rng, 1.0f);
    // clamp kinks: keep probe values well inside (-1, 1)
    auto f = [&](const Tensor& x) { return dot(apply_transform(t, mul_scalar(x, 0.5f)), cot); };
    double rel = fdcheck::check_grad(f, probe, 0.25);
    CHECK(rel < 1e-3);
  }
}

TEST_SUITE("eot_objective") {
  TEST_CASE("degenerate setup reduces to plain cross entropy") {
    Tensor x = smooth_tensor(32, 32, 11);
    Tensor rho = Tensor::zeros(x.shape());
    TransformDistribution dist = TransformDistribution::disabled();
    LogitsFn pad = mean_pad();

    Rng rng(3);
    Tensor loss = eot_loss(pad, x, rho, 0, dist, 1, rng, 0.0, 2);
    Tensor ce = cross_entropy_logits(pad(x), {0});
    CHECK(loss.item() == doctest::Approx(ce.item()).epsilon(1e-7));

    // a zero perturbation makes the norm penalty vanish identically
    Rng rng2(3);
    Tensor with_pen = eot_loss(pad, x, rho, 0, dist, 1, rng2, 0.7, 2);
    CHECK(with_pen.item() == loss.item());
  }

  TEST_CASE("singleton transform distribution matches a manual evaluation") {
    Tensor x = smooth_tensor(32, 32, 12);
    Rng rr(1);
    Tensor rho = Tensor::randn(x.shape(), rr, 0.01f);
    TransformDistribution dist = TransformDistribution::disabled();
    dist.rotation = {true, 20.0, 20.0};
    LogitsFn pad = mean_pad();

    Rng rng(5);
    double got = eot_loss(pad, x, rho, 1, dist, 1, rng, 0.0, 2).item();
    Tensor manual =
        cross_entropy_logits(pad(add(apply_transform(single(TransformKind::rotation, {20.0}), x), rho)), {1});
    CHECK(got == doctest::Approx(manual.item()).epsilon(1e-6));
  }

  TEST_CASE("norm penalties enter with their lambda weight") {
    Tensor x = smooth_tensor(32, 32, 13);
    Rng rr(2);
    Tensor rho = Tensor::randn(x.shape(), rr, 0.05f);
    TransformDistribution dist = TransformDistribution::disabled();
    LogitsFn pad = mean_pad();

    for (int p : {1, 2, kInfNorm}) {
      Rng r1(9), r2(9);
      double base = eot_loss(pad, x, rho, 0, dist, 1, r1, 0.0, p).item();
      double pen = eot_loss(pad, x, rho, 0, dist, 1, r2, 0.3, p).item();
      NoGradGuard ng;
      double norm = norm_lp(rho, p).item();
      CHECK(pen == doctest::Approx(base + 0.3 * norm).epsilon(1e-5));
    }
  }

  TEST_CASE("sample averaging shrinks the estimator variance") {
    Tensor x = smooth_tensor(32, 32, 14);
    Tensor rho = Tensor::zeros(x.shape());
    TransformDistribution dist = TransformDistribution::disabled();
    dist.rotation = {true, -25.0, 25.0};
    dist.brightness = {true, -0.15, 0.15};
    LogitsFn pad = mean_pad();

    auto variance = [&](int n_samples) {
      std::vector<double> vals;
      for (int rep = 0; rep < 100; ++rep) {
        Rng rng(1000 + uint64_t(rep));
        vals.push_back(eot_loss(pad, x, rho, 0, dist, n_samples, rng, 0.0, 2).item());
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= double(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      return var / double(vals.size() - 1);
    };
    double v1 = variance(1);
    double v8 = variance(8);
    CHECK(v8 < 0.5 * v1);
  }

  TEST_CASE("deterministic for a fixed rng seed and consumes the stream") {
    Tensor x = smooth_tensor(32, 32, 15);
    Tensor rho = Tensor::zeros(x.shape());
    TransformDistribution dist = TransformDistribution::defaults();
    LogitsFn pad = mean_pad();

    Rng a(77), b(77);
    double va = eot_loss(pad, x, rho, 0, dist, 3, a, 0.0, 2).item();
    double vb = eot_loss(pad, x, rho, 0, dist, 3, b, 0.0, 2).item();
    CHECK(va == vb);
    double vc = eot_loss(pad, x, rho, 0, dist, 3, a, 0.0, 2).item();
    CHECK(va != vc);  // the reference rng advanced

    Rng bad(1);
    CHECK_THROWS_AS(eot_loss(pad, x, rho, 0, dist, 0, bad, 0.0, 2), ParamError);
  }

  TEST_CASE("gradients reach both the perturbation and the input") {
    Tensor x = smooth_tensor(16, 16, 16);
    Rng rr(3);
    Tensor rho0 = Tensor::randn(x.shape(), rr, 0.05f);
    TransformDistribution dist = TransformDistribution::disabled();
    dist.rotation = {true, -20.0, 20.0};
    dist.brightness = {true, -0.1, 0.1};
    LogitsFn pad = mean_pad();

    auto f_rho = [&](const Tensor& rho) {
      Rng rng(55);
      return eot_loss(pad, x, rho, 0, dist, 3, rng, 0.05, 2);
    };
    CHECK(fdcheck::check_grad(f_rho, rho0, 0.05) < 1e-3);

    auto f_x = [&](const Tensor& xx) {
      Rng rng(55);
      return eot_loss(pad, mul_scalar(xx, 0.5f), rho0, 0, dist, 3, rng, 0.0, 2);
    };
    CHECK(fdcheck::check_grad(f_x, x, 0.05) < 1e-3);
  }
}
