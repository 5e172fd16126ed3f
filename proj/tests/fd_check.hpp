#pragma once

// Finite-difference gradient checking helpers shared by the test binaries.
//
// All engine math is float32, so plain 3-point central differences at the
// step sizes needed for 1e-3 accuracy drown in rounding noise. Two tricks
// keep the checks tight anyway:
//   * a 5-point stencil pushes truncation error to O(h^4), which lets us use
//     a large step where rounding noise is harmless;
//   * for maps that are linear in the probed variable, central differences
//     are exact in exact arithmetic, so the step can be made as large as the
//     dynamic range allows.

#include <cmath>
#include <functional>
#include <vector>

#include "advgen/nn/tensor.hpp"

namespace fdcheck {

using ScalarFn = std::function<double(const std::vector<float>&)>;

// d/dx_i via 5-point stencil, evaluated per coordinate.
inline std::vector<double> fd_grad(const ScalarFn& f, std::vector<float> x, double h) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    float x0 = x[i];
    auto eval = [&](double d) {
      x[i] = float(x0 + d);
      return f(x);
    };
    double fp2 = eval(2 * h), fp1 = eval(h), fm1 = eval(-h), fm2 = eval(-2 * h);
    x[i] = x0;
    g[i] = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
  }
  return g;
}

inline double rel_err(const std::vector<double>& fd, const std::vector<float>& an) {
  double d2 = 0.0, f2 = 0.0, a2 = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) {
    double d = fd[i] - double(an[i]);
    d2 += d * d;
    f2 += fd[i] * fd[i];
    a2 += double(an[i]) * an[i];
  }
  double denom = std::sqrt(std::max(f2, a2));
  if (denom == 0.0) return std::sqrt(d2);
  return std::sqrt(d2) / denom;
}

// Runs fn twice: once to get the analytic gradient of the scalar output with
// respect to `probe`, once per stencil point for the numeric one.
inline double check_grad(const std::function<advgen::nn::Tensor(const advgen::nn::Tensor&)>& fn,
                         advgen::nn::Tensor probe, double h) {
  using namespace advgen::nn;
  probe.set_requires_grad(true);
  probe.zero_grad();
  Tensor loss = fn(probe);
  loss.backward();
  std::vector<float> analytic = probe.grad();

  Shape s = probe.shape();
  ScalarFn f = [&fn, s](const std::vector<float>& v) {
    NoGradGuard ng;
    Tensor t = Tensor::from_vector(s, v);
    return double(fn(t).item());
  };
  std::vector<double> numeric = fd_grad(f, probe.values(), h);
  return rel_err(numeric, analytic);
}

}  // namespace fdcheck
