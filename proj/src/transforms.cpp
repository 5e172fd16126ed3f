#include "advgen/transforms.hpp"

#include <cmath>

#include "advgen/geometry.hpp"

namespace advgen {

using nn::Tensor;

TransformSpec TransformSpec::make(TransformKind kind, std::vector<double> params) {
  auto need = [&](size_t n) {
    if (params.size() != n) throw ParamError("transform param count mismatch");
  };
  switch (kind) {
    case TransformKind::rotation:
      need(1);
      if (params[0] < -180 || params[0] > 180)
        throw ParamError("rotation angle out of [-180,180]");
      break;
    case TransformKind::scale:
      need(1);
      if (params[0] <= 0 || params[0] > 4) throw ParamError("scale out of (0,4]");
      break;
    case TransformKind::translation:
      need(2);
      for (double v : params)
        if (std::fabs(v) > 1.0) throw ParamError("translation fraction out of [-1,1]");
      break;
    case TransformKind::perspective:
      need(8);
      for (double v : params)
        if (std::fabs(v) > 0.5) throw ParamError("perspective jitter out of [-0.5,0.5]");
      break;
    case TransformKind::brightness:
      need(1);
      if (std::fabs(params[0]) > 2.0) throw ParamError("brightness delta out of [-2,2]");
      break;
    case TransformKind::contrast:
      need(1);
      if (params[0] <= 0 || params[0] > 4) throw ParamError("contrast out of (0,4]");
      break;
    case TransformKind::fold_shade:
      need(3);
      if (params[0] < 0 || params[0] > 1) throw ParamError("fold amplitude out of [0,1]");
      if (params[1] < 0 || params[1] > 1) throw ParamError("fold position out of [0,1]");
      if (std::fabs(params[2]) > 0.5) throw ParamError("fold shear out of [-0.5,0.5]");
      break;
  }
  return TransformSpec{kind, std::move(params)};
}

bool TransformDistribution::all_disabled() const {
  return !rotation.enabled && !scale.enabled && !translation.enabled &&
         !perspective.enabled && !brightness.enabled && !contrast.enabled &&
         !fold_shade.enabled;
}

TransformDistribution TransformDistribution::disabled() { return {}; }

TransformDistribution TransformDistribution::defaults() {
  TransformDistribution d;
  d.rotation = {true, -25.0, 25.0};
  d.scale = {true, 0.9, 1.1};
  d.translation = {true, -0.05, 0.05};
  d.perspective = {true, -0.04, 0.04};
  d.brightness = {true, -0.15, 0.15};
  d.contrast = {true, 0.85, 1.15};
  d.fold_shade = {true, 0.0, 0.25};
  return d;
}

TransformList sample_transform(const TransformDistribution& dist, Rng& rng) {
  TransformList out;
  auto u = [&](const KindRange& r) { return rng.uniform(r.lo, r.hi); };
  if (dist.rotation.enabled)
    out.push_back(TransformSpec::make(TransformKind::rotation, {u(dist.rotation)}));
  if (dist.scale.enabled)
    out.push_back(TransformSpec::make(TransformKind::scale, {u(dist.scale)}));
  if (dist.translation.enabled)
    out.push_back(TransformSpec::make(TransformKind::translation,
                                      {u(dist.translation), u(dist.translation)}));
  if (dist.perspective.enabled) {
    std::vector<double> c(8);
    for (auto& v : c) v = u(dist.perspective);
    out.push_back(TransformSpec::make(TransformKind::perspective, std::move(c)));
  }
  if (dist.brightness.enabled)
    out.push_back(TransformSpec::make(TransformKind::brightness, {u(dist.brightness)}));
  if (dist.contrast.enabled)
    out.push_back(TransformSpec::make(TransformKind::contrast, {u(dist.contrast)}));
  if (dist.fold_shade.enabled) {
    double amp = u(dist.fold_shade);
    double pos = rng.uniform(0.35, 0.65);
    double shear = amp * 0.15;
    out.push_back(TransformSpec::make(TransformKind::fold_shade, {amp, pos, shear}));
  }
  return out;
}

namespace {

Mat3 centered(const Mat3& m, double cx, double cy) {
  Mat3 to_center{1, 0, -cx, 0, 1, -cy, 0, 0, 1};
  Mat3 from_center{1, 0, cx, 0, 1, cy, 0, 0, 1};
  return mat3_mul(from_center, mat3_mul(m, to_center));
}

struct FoldParams {
  double amp = 0.0, pos = 0.5, shear = 0.0;  // shear in px
  bool active = false;
};

}  // namespace

Tensor apply_transform(const TransformList& t, const Tensor& x, double fill) {
  if (t.empty()) return x;
  int H = x.shape().h, W = x.shape().w;
  double cx = (W - 1) * 0.5, cy = (H - 1) * 0.5;

  Mat3 fwd = mat3_identity();
  bool any_geom = false;
  double brightness = 0.0, contrast = 1.0;
  bool any_photo = false;
  FoldParams fold;

  for (const auto& spec : t) {
    switch (spec.kind) {
      case TransformKind::rotation: {
        double a = spec.params[0] * M_PI / 180.0;
        double c = std::cos(a), s = std::sin(a);
        fwd = mat3_mul(centered({c, -s, 0, s, c, 0, 0, 0, 1}, cx, cy), fwd);
        any_geom = true;
        break;
      }
      case TransformKind::scale: {
        double s = spec.params[0];
        fwd = mat3_mul(centered({s, 0, 0, 0, s, 0, 0, 0, 1}, cx, cy), fwd);
        any_geom = true;
        break;
      }
      case TransformKind::translation: {
        double tx = spec.params[0] * W, ty = spec.params[1] * H;
        fwd = mat3_mul({1, 0, tx, 0, 1, ty, 0, 0, 1}, fwd);
        any_geom = true;
        break;
      }
      case TransformKind::perspective: {
        std::array<Pt, 4> src{{{0, 0}, {double(W - 1), 0}, {double(W - 1), double(H - 1)},
                               {0, double(H - 1)}}};
        std::array<Pt, 4> dst = src;
        for (int k = 0; k < 4; ++k) {
          dst[size_t(k)][0] += spec.params[size_t(2 * k)] * W;
          dst[size_t(k)][1] += spec.params[size_t(2 * k + 1)] * H;
        }
        fwd = mat3_mul(solve_homography(src, dst), fwd);
        any_geom = true;
        break;
      }
      case TransformKind::brightness:
        brightness += spec.params[0];
        any_photo = true;
        break;
      case TransformKind::contrast:
        contrast *= spec.params[0];
        any_photo = true;
        break;
      case TransformKind::fold_shade:
        fold.amp = spec.params[0];
        fold.pos = spec.params[1];
        fold.shear = spec.params[2] * W;
        fold.active = fold.amp > 0 || fold.shear != 0;
        break;
    }
  }

  Tensor y = x;
  if (any_geom || fold.active) {
    Mat3 inv = mat3_inverse(fwd);
    std::vector<float> grid(size_t(H) * W * 2);
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        // fold shear displaces output columns beyond the crease before the
        // rest of the inverse chain (fold composes last in the forward chain)
        double xo = j;
        if (fold.active) {
          double frac = W > 1 ? double(j) / (W - 1) : 0.0;
          if (frac > fold.pos && fold.pos < 1.0)
            xo += fold.shear * (frac - fold.pos) / (1.0 - fold.pos);
        }
        Pt s = mat3_apply(inv, {xo, double(i)});
        grid[(size_t(i) * W + j) * 2] = float(s[0]);
        grid[(size_t(i) * W + j) * 2 + 1] = float(s[1]);
      }
    y = nn::warp_bilinear(y, grid, float(fill));
  }

  if (any_photo) {
    if (brightness != 0.0) y = nn::add_scalar(y, float(brightness));
    if (contrast != 1.0) y = nn::mul_scalar(y, float(contrast));
  }

  if (fold.active && fold.amp > 0) {
    // 1-px feathered seam at the crease plus mild dimming beyond it
    std::vector<float> mask(size_t(H) * W * 3);
    double crease_px = fold.pos * (W - 1);
    for (int j = 0; j < W; ++j) {
      double seam = std::max(0.0, 1.0 - std::fabs(double(j) - crease_px));
      double side = std::clamp((double(j) - crease_px) / 2.0, 0.0, 1.0);
      float shade = float(fold.amp * (seam + 0.3 * side));
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < H; ++i) mask[(size_t(c) * H + i) * W + j] = shade;
    }
    y = nn::sub(y, Tensor::from_vector(x.shape(), std::move(mask)));
  }

  return nn::clamp_t(y, -1.0f, 1.0f);
}

ImageTensor apply_transform(const TransformList& t, const ImageTensor& x) {
  if (t.empty()) return x;
  nn::NoGradGuard ng;
  ImageTensor sym = to_symmetric(x);
  Tensor y = apply_transform(t, to_tensor(sym), 0.0);
  ImageTensor out = from_tensor(y, ValueRange::symmetric);
  return x.range == ValueRange::symmetric ? out : to_unit(out);
}

Tensor geometric_residual(const TransformList& t, const Tensor& x, double fill) {
  return nn::sub(apply_transform(t, x, fill), x);
}

Tensor eot_loss(const LogitsFn& pad, const Tensor& x, const Tensor& rho, int target_class,
                const TransformDistribution& dist, int n_samples, Rng& rng, double lambda,
                int p) {
  if (n_samples < 1) throw ParamError("eot_loss needs n_samples >= 1");
  Tensor total;
  for (int i = 0; i < n_samples; ++i) {
    TransformList t = sample_transform(dist, rng);
    Tensor xi = apply_transform(t, x, dist.fill_value);
    Tensor ce = nn::cross_entropy_logits(pad(nn::add(xi, rho)), {target_class});
    total = total.defined() ? nn::add(total, ce) : ce;
  }
  total = nn::mul_scalar(total, 1.0f / float(n_samples));
  if (lambda != 0.0)
    total = nn::add(total, nn::mul_scalar(nn::norm_lp(rho, p), float(lambda)));
  return total;
}

}  // namespace advgen
