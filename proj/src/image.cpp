#include "advgen/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace advgen {

namespace {

void check_dims(int h, int w) {
  if (h < 16 || w < 16) throw ParamError("image too small: " + std::to_string(h) + "x" +
                                         std::to_string(w) + " (minimum 16x16)");
}

std::pair<float, float> bounds(ValueRange r) {
  return r == ValueRange::unit ? std::pair{0.0f, 1.0f} : std::pair{-1.0f, 1.0f};
}

}  // namespace

void ImageTensor::clamp_to_range() {
  auto [lo, hi] = bounds(range);
  for (auto& v : data) v = std::min(hi, std::max(lo, v));
}

ImageTensor ImageTensor::zeros(int h, int w, ValueRange range) {
  check_dims(h, w);
  ImageTensor img;
  img.h = h;
  img.w = w;
  img.range = range;
  img.data.assign(size_t(3) * h * w, 0.0f);
  return img;
}

ImageTensor ImageTensor::filled(int h, int w, float value, ValueRange range) {
  ImageTensor img = zeros(h, w, range);
  std::fill(img.data.begin(), img.data.end(), value);
  img.clamp_to_range();
  return img;
}

ImageTensor ImageTensor::from_data(int h, int w, std::vector<float> chw, ValueRange range) {
  check_dims(h, w);
  if (chw.size() != size_t(3) * h * w) throw ParamError("image data size mismatch");
  ImageTensor img;
  img.h = h;
  img.w = w;
  img.range = range;
  img.data = std::move(chw);
  img.clamp_to_range();
  return img;
}

ImageTensor to_unit(const ImageTensor& img) {
  if (img.range == ValueRange::unit) return img;
  ImageTensor out = img;
  out.range = ValueRange::unit;
  for (auto& v : out.data) v = (v + 1.0f) * 0.5f;
  out.clamp_to_range();
  return out;
}

ImageTensor to_symmetric(const ImageTensor& img) {
  if (img.range == ValueRange::symmetric) return img;
  ImageTensor out = img;
  out.range = ValueRange::symmetric;
  for (auto& v : out.data) v = v * 2.0f - 1.0f;
  out.clamp_to_range();
  return out;
}

nn::Tensor to_tensor(const ImageTensor& img) {
  return nn::Tensor::from_vector(nn::Shape{1, img.c, img.h, img.w}, img.data);
}

ImageTensor from_tensor(const nn::Tensor& t, ValueRange range) {
  nn::Shape s = t.shape();
  if (s.n != 1 || s.c != 3) throw ParamError("from_tensor expects a (1,3,H,W) tensor");
  return ImageTensor::from_data(s.h, s.w, t.values(), range);
}

ImageTensor quantize8(const ImageTensor& img) {
  ImageTensor u = to_unit(img);
  for (auto& v : u.data) v = std::round(v * 255.0f) / 255.0f;
  return img.range == ValueRange::unit ? u : to_symmetric(u);
}

namespace {

cv::Mat to_mat8(const ImageTensor& img) {
  ImageTensor u = to_unit(img);
  cv::Mat m(u.h, u.w, CV_8UC3);
  for (int y = 0; y < u.h; ++y)
    for (int x = 0; x < u.w; ++x) {
      // OpenCV stores BGR
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(
          uchar(std::lround(std::clamp(u.at(2, y, x), 0.0f, 1.0f) * 255.0f)),
          uchar(std::lround(std::clamp(u.at(1, y, x), 0.0f, 1.0f) * 255.0f)),
          uchar(std::lround(std::clamp(u.at(0, y, x), 0.0f, 1.0f) * 255.0f)));
    }
  return m;
}

ImageTensor from_mat8(const cv::Mat& m) {
  ImageTensor img = ImageTensor::zeros(m.rows, m.cols, ValueRange::unit);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      cv::Vec3b px = m.at<cv::Vec3b>(y, x);
      img.at(0, y, x) = float(px[2]) / 255.0f;
      img.at(1, y, x) = float(px[1]) / 255.0f;
      img.at(2, y, x) = float(px[0]) / 255.0f;
    }
  return img;
}

}  // namespace

ImageTensor load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot decode image: " + path);
  if (m.rows < 16 || m.cols < 16) throw DataError("decoded image too small: " + path);
  return from_mat8(m);
}

void save_png(const ImageTensor& img, const std::string& path) {
  if (!cv::imwrite(path, to_mat8(img)))
    throw DataError("cannot write PNG: " + path);
}

void save_jpeg(const ImageTensor& img, const std::string& path, int quality) {
  if (quality < 1 || quality > 100) throw ParamError("jpeg quality out of range");
  if (!cv::imwrite(path, to_mat8(img), {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw DataError("cannot write JPEG: " + path);
}

ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality) {
  if (quality < 1 || quality > 100) throw ParamError("jpeg quality out of range");
  std::vector<uchar> buf;
  if (!cv::imencode(".jpg", to_mat8(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw DataError("jpeg encode failed");
  cv::Mat m = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("jpeg decode failed");
  ImageTensor out = from_mat8(m);
  return img.range == ValueRange::unit ? out : to_symmetric(out);
}

std::vector<float> luminance(const ImageTensor& img) {
  ImageTensor u = to_unit(img);
  std::vector<float> y(size_t(u.h) * u.w);
  for (int i = 0; i < u.h; ++i)
    for (int j = 0; j < u.w; ++j)
      y[size_t(i) * u.w + j] =
          0.299f * u.at(0, i, j) + 0.587f * u.at(1, i, j) + 0.114f * u.at(2, i, j);
  return y;
}

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  if (a.h != b.h || a.w != b.w) throw ParamError("image shape mismatch");
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) s += std::fabs(double(a.data[i]) - b.data[i]);
  return s / double(a.data.size());
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  if (a.h != b.h || a.w != b.w) throw ParamError("image shape mismatch");
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(double(a.data[i]) - b.data[i]));
  return m;
}

}  // namespace advgen
