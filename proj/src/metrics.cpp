#include "advgen/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "advgen/common.hpp"

namespace advgen {

double asr(int successes, int total) {
  if (total < 1) throw ParamError("asr: total must be >= 1");
  if (successes < 0 || successes > total) throw ParamError("asr: successes out of range");
  return 100.0 * double(successes) / double(total);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2, L=1
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWin * kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) {
        double di = i - (kWin - 1) / 2.0, dj = j - (kWin - 1) / 2.0;
        double g = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
        v[size_t(i * kWin + j)] = g;
        sum += g;
      }
    for (double& x : v) x /= sum;
    return v;
  }();
  return w;
}

// SSIM over one plane. The second-moment expressions for x and y are written
// identically so x == y yields bitwise-equal numerator and denominator and the
// result is exactly 1.0.
double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, int h, int w) {
  const auto& win = gaussian_window();
  double total = 0.0;
  long count = 0;
  for (int i = 0; i + kWin <= h; ++i) {
    for (int j = 0; j + kWin <= w; ++j) {
      double mux = 0.0, muy = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
      for (int a = 0; a < kWin; ++a)
        for (int b = 0; b < kWin; ++b) {
          double wt = win[size_t(a * kWin + b)];
          double xv = x[size_t((i + a) * w + (j + b))];
          double yv = y[size_t((i + a) * w + (j + b))];
          mux += wt * xv;
          muy += wt * yv;
          xx += wt * xv * xv;
          yy += wt * yv * yv;
          xy += wt * xv * yv;
        }
      // x == y must give bitwise-equal numerator and denominator: products are
      // rounded once into named slots shared by both expressions, and this
      // translation unit builds with -ffp-contract=off so no FMA reassociates
      // them differently.
      double pxx = mux * mux, pyy = muy * muy, pxy = mux * muy;
      double sxx = xx - pxx;
      double syy = yy - pyy;
      double sxy = xy - pxy;
      double num = (pxy + pxy + kC1) * (sxy + sxy + kC2);
      double den = (pxx + pyy + kC1) * (sxx + syy + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / double(count);
}

std::vector<double> unit_plane(const ImageTensor& img, int c) {
  ImageTensor u = to_unit(img);
  std::vector<double> p(size_t(u.h) * size_t(u.w));
  const float* src = u.data.data() + size_t(c) * p.size();
  for (size_t i = 0; i < p.size(); ++i) p[i] = double(src[i]);
  return p;
}

std::vector<double> unit_luma(const ImageTensor& img) {
  ImageTensor u = to_unit(img);
  size_t plane = size_t(u.h) * size_t(u.w);
  std::vector<double> p(plane);
  for (size_t i = 0; i < plane; ++i)
    p[i] = 0.299 * double(u.data[i]) + 0.587 * double(u.data[plane + i]) +
           0.114 * double(u.data[2 * plane + i]);
  return p;
}

void check_same_geometry(const ImageTensor& x, const ImageTensor& y) {
  if (x.h != y.h || x.w != y.w) throw ParamError("ssim: image sizes differ");
}

}  // namespace

double ssim(const ImageTensor& x, const ImageTensor& y) {
  check_same_geometry(x, y);
  return ssim_plane(unit_luma(x), unit_luma(y), x.h, x.w);
}

double ssim_rgb(const ImageTensor& x, const ImageTensor& y) {
  check_same_geometry(x, y);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) total += ssim_plane(unit_plane(x, c), unit_plane(y, c), x.h, x.w);
  return total / 3.0;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty()) throw ParamError("cosine: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  double den = std::sqrt(na) * std::sqrt(nb);
  if (den == 0.0) throw ParamError("cosine: zero-norm vector");
  return dot / den;
}

void AttackReport::recompute_aggregates() {
  if (records.empty()) {
    asr_digital = asr_physical = mean_ssim = mean_identity_cos = 0.0;
    return;
  }
  int sd = 0, sp = 0;
  double ss = 0.0, ic = 0.0;
  for (const auto& r : records) {
    sd += r.success_digital ? 1 : 0;
    sp += r.success_physical ? 1 : 0;
    ss += r.ssim;
    ic += r.identity_cos;
  }
  asr_digital = has_digital ? asr(sd, int(records.size())) : 0.0;
  asr_physical = has_physical ? asr(sp, int(records.size())) : 0.0;
  mean_ssim = ss / double(records.size());
  mean_identity_cos = ic / double(records.size());
}

AttackReport evaluate_pipeline(const std::vector<EvalCase>& cases, const Classifier& pad,
                               const EmbedFn& embed, EvalMode mode, const ChannelConfig& cfg,
                               Rng rng, int workers) {
  if (cases.empty()) throw ParamError("evaluate_pipeline: empty case list");
  if (workers < 1) throw ParamError("evaluate_pipeline: workers must be >= 1");
  cfg.validate();
  AttackReport rep;
  rep.records.resize(cases.size());
  Rng base = rng.split("eval");
  auto eval_one = [&](size_t i) {
    const EvalCase& c = cases[i];
    AttackRecord r;
    r.path = c.path;
    r.method = c.method;
    r.ssim = ssim(c.source, c.attacked);
    r.identity_cos = embed ? cosine(embed(c.source), embed(c.attacked)) : 0.0;
    ImageTensor probe = c.attacked;
    if (mode == EvalMode::physical) probe = apply_channel(probe, cfg, base.split(uint64_t(i)));
    bool live = pad(probe) == 0;
    if (mode == EvalMode::digital)
      r.success_digital = live;
    else
      r.success_physical = live;
    rep.records[i] = std::move(r);
  };
  if (workers == 1) {
    for (size_t i = 0; i < cases.size(); ++i) eval_one(i);
  } else {
    // Deterministic regardless of worker count: results land by index and rng
    // streams are derived from the index alone. pad/embed must be thread-safe.
    std::vector<std::thread> pool;
    size_t w = size_t(std::min<int>(workers, int(cases.size())));
    for (size_t t = 0; t < w; ++t)
      pool.emplace_back([&, t] {
        for (size_t i = t; i < cases.size(); i += w) eval_one(i);
      });
    for (auto& th : pool) th.join();
  }
  rep.has_digital = mode == EvalMode::digital;
  rep.has_physical = mode == EvalMode::physical;
  rep.recompute_aggregates();
  return rep;
}

AttackReport merge_reports(const AttackReport& digital, const AttackReport& physical) {
  if (digital.records.size() != physical.records.size())
    throw ParamError("merge_reports: record counts differ");
  AttackReport rep = digital;
  for (size_t i = 0; i < rep.records.size(); ++i) {
    const AttackRecord& p = physical.records[i];
    AttackRecord& d = rep.records[i];
    if (d.path != p.path || d.method != p.method)
      throw ParamError("merge_reports: case mismatch at row " + std::to_string(i));
    d.success_physical = p.success_physical;
  }
  rep.has_digital = digital.has_digital;
  rep.has_physical = physical.has_physical;
  rep.recompute_aggregates();
  return rep;
}

std::vector<GeomRow> geometric_robustness_report(const std::vector<EvalCase>& cases,
                                                 const Classifier& pad,
                                                 const std::vector<GeomCase>& geom_cases,
                                                 const ChannelConfig& cfg, Rng rng) {
  if (cases.empty()) throw ParamError("geometric_robustness_report: empty case list");
  cfg.validate();
  // Channel streams match evaluate_pipeline's derivation and depend only on
  // the image index, so every case sees the same physical rendition and an
  // all-disabled case reproduces the plain physical ASR bit-exactly.
  Rng chan_rng = rng.split("eval");
  std::vector<ImageTensor> phys;
  phys.reserve(cases.size());
  for (size_t i = 0; i < cases.size(); ++i)
    phys.push_back(apply_channel(cases[i].attacked, cfg, chan_rng.split(uint64_t(i))));

  std::vector<GeomRow> rows;
  for (const GeomCase& gc : geom_cases) {
    std::map<std::string, GeomRow> by_method;
    std::vector<std::string> method_order;
    Rng case_rng = rng.split("case").split(gc.name);
    for (size_t i = 0; i < cases.size(); ++i) {
      Rng r = case_rng.split(uint64_t(i));
      TransformList t = sample_transform(gc.dist, r);
      ImageTensor probe = apply_transform(t, phys[i]);
      bool live = pad(probe) == 0;
      auto it = by_method.find(cases[i].method);
      if (it == by_method.end()) {
        method_order.push_back(cases[i].method);
        it = by_method.emplace(cases[i].method, GeomRow{gc.name, cases[i].method, 0, 0, 0.0}).first;
      }
      it->second.total += 1;
      it->second.successes += live ? 1 : 0;
    }
    for (const std::string& m : method_order) {
      GeomRow row = by_method[m];
      row.asr_value = asr(row.successes, row.total);
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_report_csv(const AttackReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "path,method,mode,success,ssim,identity_cos\n";
  for (const auto& r : report.records) {
    if (report.has_digital)
      f << r.path << ',' << r.method << ",digital," << (r.success_digital ? 1 : 0) << ','
        << fmt_double(r.ssim) << ',' << fmt_double(r.identity_cos) << '\n';
    if (report.has_physical)
      f << r.path << ',' << r.method << ",physical," << (r.success_physical ? 1 : 0) << ','
        << fmt_double(r.ssim) << ',' << fmt_double(r.identity_cos) << '\n';
  }
  if (!f.good()) throw DataError("short write to " + path);
}

AttackReport parse_report_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line != "path,method,mode,success,ssim,identity_cos")
    throw DataError(path + ": bad report header");
  AttackReport rep;
  std::map<std::pair<std::string, std::string>, size_t> index;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = split_csv_line(line);
    if (cols.size() != 6)
      throw DataError(path + ':' + std::to_string(lineno) + ": expected 6 columns");
    auto key = std::make_pair(cols[0], cols[1]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rep.records.size()).first;
      AttackRecord r;
      r.path = cols[0];
      r.method = cols[1];
      rep.records.push_back(r);
    }
    AttackRecord& r = rep.records[it->second];
    bool success;
    if (cols[3] == "0")
      success = false;
    else if (cols[3] == "1")
      success = true;
    else
      throw DataError(path + ':' + std::to_string(lineno) + ": bad success flag");
    if (cols[2] == "digital") {
      r.success_digital = success;
      rep.has_digital = true;
    } else if (cols[2] == "physical") {
      r.success_physical = success;
      rep.has_physical = true;
    } else {
      throw DataError(path + ':' + std::to_string(lineno) + ": bad mode " + cols[2]);
    }
    try {
      r.ssim = std::stod(cols[4]);
      r.identity_cos = std::stod(cols[5]);
    } catch (const std::exception&) {
      throw DataError(path + ':' + std::to_string(lineno) + ": bad numeric field");
    }
  }
  rep.recompute_aggregates();
  return rep;
}

void write_report_markdown(const AttackReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "# Attack evaluation\n\n";
  f << "- seed: " << report.seed << '\n';
  if (!report.config_hash.empty()) f << "- config: " << report.config_hash << '\n';
  for (const auto& [name, hash] : report.model_hashes) f << "- model " << name << ": " << hash << '\n';
  f << "- cases: " << report.records.size() << '\n';
  f << "- mean ssim: " << fmt_pct(report.mean_ssim) << '\n';
  f << "- mean identity cosine: " << fmt_pct(report.mean_identity_cos) << "\n\n";
  f << "| method | digital ASR | physical ASR |\n";
  f << "| --- | --- | --- |\n";
  std::map<std::string, std::array<int, 3>> agg;  // method -> {digital, physical, total}
  std::vector<std::string> order;
  for (const auto& r : report.records) {
    auto it = agg.find(r.method);
    if (it == agg.end()) {
      order.push_back(r.method);
      it = agg.emplace(r.method, std::array<int, 3>{0, 0, 0}).first;
    }
    it->second[0] += r.success_digital ? 1 : 0;
    it->second[1] += r.success_physical ? 1 : 0;
    it->second[2] += 1;
  }
  for (const std::string& m : order) {
    const auto& a = agg[m];
    f << "| " << m << " | " << (report.has_digital ? fmt_pct(asr(a[0], a[2])) : std::string("-"))
      << " | " << (report.has_physical ? fmt_pct(asr(a[1], a[2])) : std::string("-")) << " |\n";
  }
  if (!f.good()) throw DataError("short write to " + path);
}

void write_geom_csv(const std::vector<GeomRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "case,method,successes,total,asr\n";
  for (const auto& r : rows)
    f << r.name << ',' << r.method << ',' << r.successes << ',' << r.total << ','
      << fmt_double(r.asr_value) << '\n';
  if (!f.good()) throw DataError("short write to " + path);
}

}  // namespace advgen
