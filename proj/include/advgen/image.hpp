#pragma once

#include <string>
#include <vector>

#include "advgen/common.hpp"
#include "advgen/nn/tensor.hpp"

namespace advgen {

// Storage/IO images live in [0,1]; network compute happens in [-1,1].
enum class ValueRange { unit, symmetric };

// Dense float RGB image, CHW layout. Values are clamped to the declared
// range on construction and after every conversion.
struct ImageTensor {
  int h = 0, w = 0, c = 3;
  ValueRange range = ValueRange::unit;
  std::vector<float> data;

  static ImageTensor zeros(int h, int w, ValueRange range = ValueRange::unit);
  static ImageTensor filled(int h, int w, float value, ValueRange range);
  static ImageTensor from_data(int h, int w, std::vector<float> chw, ValueRange range);

  float& at(int ci, int y, int x) { return data[(size_t(ci) * h + y) * w + x]; }
  float at(int ci, int y, int x) const { return data[(size_t(ci) * h + y) * w + x]; }
  size_t numel() const { return data.size(); }

  void clamp_to_range();
};

ImageTensor to_unit(const ImageTensor& img);
ImageTensor to_symmetric(const ImageTensor& img);

// Bridges to the autodiff engine: (1, 3, H, W) tensors, range preserved.
nn::Tensor to_tensor(const ImageTensor& img);
ImageTensor from_tensor(const nn::Tensor& t, ValueRange range);

// 8-bit quantization used by every save path; exposed so tests can
// pre-quantize and assert lossless PNG round trips.
ImageTensor quantize8(const ImageTensor& img);

ImageTensor load_image(const std::string& path);  // unit range; throws DataError
void save_png(const ImageTensor& img, const std::string& path);
void save_jpeg(const ImageTensor& img, const std::string& path, int quality);

// In-memory JPEG encode/decode, the lossy stage of the simulated channel.
ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality);

// Rec. 601 luma of a unit-range image, H*W row-major.
std::vector<float> luminance(const ImageTensor& img);

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b);
double max_abs_diff(const ImageTensor& a, const ImageTensor& b);

}  // namespace advgen
