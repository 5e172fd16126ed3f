#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "advgen/image.hpp"
#include "test_util.hpp"

using namespace advgen;
using testutil::TmpDir;

TEST_SUITE("image_basics") {
  TEST_CASE("construction validates and clamps") {
    CHECK_THROWS_AS(ImageTensor::zeros(8, 64), ParamError);
    CHECK_THROWS_AS(ImageTensor::zeros(64, 8), ParamError);
    CHECK_THROWS_AS(ImageTensor::from_data(16, 16, std::vector<float>(10), ValueRange::unit),
                    ParamError);

    std::vector<float> v(3 * 16 * 16, 2.5f);
    v[0] = -1.0f;
    ImageTensor img = ImageTensor::from_data(16, 16, v, ValueRange::unit);
    CHECK(img.data[0] == 0.0f);
    CHECK(img.data[1] == 1.0f);

    ImageTensor s = ImageTensor::from_data(16, 16, v, ValueRange::symmetric);
    CHECK(s.data[0] == -1.0f);
    CHECK(s.data[1] == 1.0f);
  }

  TEST_CASE("range conversions round trip") {
    ImageTensor u = testutil::random_image(32, 24, 11);
    ImageTensor s = to_symmetric(u);
    CHECK(s.range == ValueRange::symmetric);
    ImageTensor u2 = to_unit(s);
    CHECK(max_abs_diff(u, u2) < 1e-6);

    // already-converted inputs pass through untouched
    CHECK(testutil::bitwise_equal(to_unit(u), u));
    CHECK(testutil::bitwise_equal(to_symmetric(s), s));
  }

  TEST_CASE("tensor bridge preserves layout and values") {
    ImageTensor img = testutil::random_image(20, 28, 5, ValueRange::symmetric);
    nn::Tensor t = to_tensor(img);
    CHECK(t.shape().n == 1);
    CHECK(t.shape().c == 3);
    CHECK(t.shape().h == 20);
    CHECK(t.shape().w == 28);
    ImageTensor back = from_tensor(t, ValueRange::symmetric);
    CHECK(testutil::bitwise_equal(img, back));
  }

  TEST_CASE("quantize8 is idempotent and grid-exact") {
    ImageTensor img = testutil::random_image(24, 24, 7);
    ImageTensor q = quantize8(img);
    CHECK(testutil::bitwise_equal(quantize8(q), q));
    for (float v : q.data) {
      float scaled = v * 255.0f;
      CHECK(std::abs(scaled - std::round(scaled)) < 1e-4f);
    }
    CHECK(max_abs_diff(img, q) <= 0.5f / 255.0f + 1e-6f);

    // symmetric-range images quantize on the same 8-bit grid
    ImageTensor s = testutil::random_image(24, 24, 8, ValueRange::symmetric);
    ImageTensor qs = quantize8(s);
    CHECK(qs.range == ValueRange::symmetric);
    CHECK(testutil::bitwise_equal(quantize8(qs), qs));
  }

  TEST_CASE("luminance of gray is gray") {
    ImageTensor img = ImageTensor::filled(16, 16, 0.5f, ValueRange::unit);
    auto luma = luminance(img);
    REQUIRE(luma.size() == 16u * 16u);
    for (float v : luma) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));
  }

  TEST_CASE("diff helpers") {
    ImageTensor a = ImageTensor::filled(16, 16, 0.25f, ValueRange::unit);
    ImageTensor b = a;
    b.at(0, 3, 3) = 0.75f;
    CHECK(max_abs_diff(a, b) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(mean_abs_diff(a, b) == doctest::Approx(0.5 / (3 * 16 * 16)).epsilon(1e-6));
  }
}

TEST_SUITE("image_io") {
  TEST_CASE("png round trip is lossless for quantized images") {
    TmpDir tmp("png");
    for (uint64_t seed : {1u, 2u, 3u}) {
      ImageTensor img = quantize8(testutil::random_image(33, 47, seed));
      std::string p = tmp.file("img" + std::to_string(seed) + ".png");
      save_png(img, p);
      ImageTensor back = load_image(p);
      CHECK(testutil::bitwise_equal(img, back));
    }
  }

  TEST_CASE("save quantizes implicitly") {
    TmpDir tmp("pngq");
    ImageTensor img = testutil::random_image(32, 32, 4);
    std::string p = tmp.file("img.png");
    save_png(img, p);
    ImageTensor back = load_image(p);
    CHECK(testutil::bitwise_equal(quantize8(img), back));
  }

  TEST_CASE("symmetric-range images save through the same path") {
    TmpDir tmp("pngsym");
    ImageTensor img = quantize8(testutil::random_image(32, 32, 9, ValueRange::symmetric));
    std::string p = tmp.file("img.png");
    save_png(img, p);
    ImageTensor back = load_image(p);  // loads as unit range
    CHECK(max_abs_diff(to_unit(img), back) < 1e-6);
  }

  TEST_CASE("jpeg file round trip stays close on smooth content") {
    TmpDir tmp("jpg");
    ImageTensor img = testutil::smooth_image(48, 48, 21);
    std::string p = tmp.file("img.jpg");
    save_jpeg(img, p, 95);
    ImageTensor back = load_image(p);
    CHECK(back.h == 48);
    CHECK(back.w == 48);
    CHECK(mean_abs_diff(img, back) < 0.02);
  }

  TEST_CASE("in-memory jpeg matches the quality knob") {
    ImageTensor img = testutil::smooth_image(64, 64, 22);
    ImageTensor q95 = jpeg_roundtrip(img, 95);
    ImageTensor q30 = jpeg_roundtrip(img, 30);
    CHECK(mean_abs_diff(img, q95) < 0.02);
    CHECK(mean_abs_diff(img, q95) < mean_abs_diff(img, q30));
    CHECK(q95.range == img.range);

    ImageTensor sym = testutil::smooth_image(64, 64, 23, ValueRange::symmetric);
    ImageTensor sq = jpeg_roundtrip(sym, 90);
    CHECK(sq.range == ValueRange::symmetric);
    CHECK(mean_abs_diff(sym, sq) < 0.06);  // symmetric units are 2x wider
  }

  TEST_CASE("unreadable files raise data errors") {
    TmpDir tmp("bad");
    CHECK_THROWS_AS(load_image(tmp.file("missing.png")), DataError);

    std::string junk = tmp.file("junk.png");
    {
      std::ofstream f(junk, std::ios::binary);
      f << "not a png at all";
    }
    CHECK_THROWS_AS(load_image(junk), DataError);

    // valid png truncated to its first 40 bytes
    std::string trunc = tmp.file("trunc.png");
    {
      ImageTensor img = quantize8(testutil::random_image(32, 32, 5));
      save_png(img, trunc);
      std::string bytes = testutil::slurp(trunc);
      std::ofstream f(trunc, std::ios::binary | std::ios::trunc);
      f.write(bytes.data(), 40);
    }
    CHECK_THROWS_AS(load_image(trunc), DataError);
  }

  TEST_CASE("images below the minimum size are rejected on load") {
    TmpDir tmp("small");
    // 8x8 png written through OpenCV directly would need the raw API; instead
    // check the constructor contract that load_image shares.
    CHECK_THROWS_AS(ImageTensor::zeros(15, 64), ParamError);
  }
}
