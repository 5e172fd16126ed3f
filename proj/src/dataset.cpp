#include "advgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace advgen {

namespace fs = std::filesystem;

std::vector<int> DatasetManifest::identities() const {
  std::set<int> ids;
  for (const auto& e : entries) ids.insert(e.identity);
  return {ids.begin(), ids.end()};
}

size_t DatasetManifest::count(Liveness l) const {
  size_t n = 0;
  for (const auto& e : entries) n += e.liveness == l;
  return n;
}

std::string liveness_str(Liveness l) { return l == Liveness::live ? "live" : "spoof"; }

std::string medium_str(Medium m) {
  switch (m) {
    case Medium::none: return "none";
    case Medium::print: return "print";
    case Medium::replay: return "replay";
  }
  return "none";
}

Liveness liveness_from_str(const std::string& s) {
  if (s == "live") return Liveness::live;
  if (s == "spoof") return Liveness::spoof;
  throw DataError("unknown liveness value: '" + s + "'");
}

Medium medium_from_str(const std::string& s) {
  if (s == "none") return Medium::none;
  if (s == "print") return Medium::print;
  if (s == "replay") return Medium::replay;
  throw DataError("unknown medium value: '" + s + "'");
}

// ---------------------------------------------------------------------------
// procedural face rendering

namespace {

struct FaceIdentity {
  double face_a, face_b;           // ellipse semi-axes (fractions of size)
  double skin_r, skin_g, skin_b;
  double eye_dx, eye_y, eye_r, eye_aspect;
  double iris_r, iris_g, iris_b;
  double brow_dy, brow_h, brow_dark;
  double mouth_y, mouth_w, mouth_h;
  double lip_r, lip_g, lip_b;
  double hair_h, hair_r, hair_g, hair_b;
  double nose_len;
  bool glasses;
  double bg_r, bg_g, bg_b;
};

FaceIdentity sample_identity(Rng rng) {
  FaceIdentity f;
  f.face_a = rng.uniform(0.26, 0.36);
  f.face_b = rng.uniform(0.33, 0.44);
  f.skin_r = rng.uniform(0.55, 0.92);
  f.skin_g = f.skin_r * rng.uniform(0.72, 0.88);
  f.skin_b = f.skin_g * rng.uniform(0.70, 0.95);
  f.eye_dx = rng.uniform(0.09, 0.17);
  f.eye_y = -rng.uniform(0.04, 0.13);
  f.eye_r = rng.uniform(0.028, 0.052);
  f.eye_aspect = rng.uniform(0.55, 1.0);
  f.iris_r = rng.uniform(0.05, 0.45);
  f.iris_g = rng.uniform(0.05, 0.35);
  f.iris_b = rng.uniform(0.05, 0.55);
  f.brow_dy = rng.uniform(0.045, 0.085);
  f.brow_h = rng.uniform(0.008, 0.022);
  f.brow_dark = rng.uniform(0.1, 0.55);
  f.mouth_y = rng.uniform(0.13, 0.22);
  f.mouth_w = rng.uniform(0.07, 0.16);
  f.mouth_h = rng.uniform(0.014, 0.042);
  f.lip_r = rng.uniform(0.45, 0.8);
  f.lip_g = f.lip_r * rng.uniform(0.3, 0.55);
  f.lip_b = f.lip_g * rng.uniform(0.7, 1.1);
  f.hair_h = rng.uniform(0.0, 0.30);
  f.hair_r = rng.uniform(0.05, 0.45);
  f.hair_g = f.hair_r * rng.uniform(0.5, 1.0);
  f.hair_b = f.hair_g * rng.uniform(0.4, 1.0);
  f.nose_len = rng.uniform(0.05, 0.12);
  f.glasses = rng.uniform() < 0.3;
  f.bg_r = rng.uniform(0.25, 0.75);
  f.bg_g = rng.uniform(0.25, 0.75);
  f.bg_b = rng.uniform(0.3, 0.8);
  return f;
}

struct SampleJitter {
  double dx, dy, rot, scale;
  double gain;       // illumination
  double bg_gain;
  double grad_amp;   // vertical lighting gradient
  double warm;       // color temperature shift
};

SampleJitter sample_jitter(Rng rng) {
  SampleJitter j;
  j.dx = rng.uniform(-0.04, 0.04);
  j.dy = rng.uniform(-0.04, 0.04);
  j.rot = rng.uniform(-8.0, 8.0) * M_PI / 180.0;
  j.scale = rng.uniform(0.94, 1.06);
  j.gain = rng.uniform(0.85, 1.15);
  j.bg_gain = rng.uniform(0.75, 1.2);
  j.grad_amp = rng.uniform(0.0, 0.15);
  j.warm = rng.uniform(-0.03, 0.03);
  return j;
}

// signed "distance" to an axis-aligned ellipse, good enough for feathered
// coverage (exact near the boundary where it matters)
double sd_ellipse(double px, double py, double a, double b) {
  double n = std::sqrt((px / a) * (px / a) + (py / b) * (py / b));
  return (n - 1.0) * std::min(a, b);
}

double sd_box(double px, double py, double hw, double hh) {
  double qx = std::fabs(px) - hw, qy = std::fabs(py) - hh;
  double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

double coverage(double sd, double feather) {
  double a = 0.5 - sd / feather;
  return std::clamp(a, 0.0, 1.0);
}

void blend(double& r, double& g, double& b, double cr, double cg, double cb, double a) {
  r = r * (1 - a) + cr * a;
  g = g * (1 - a) + cg * a;
  b = b * (1 - a) + cb * a;
}

ImageTensor render_face(const FaceIdentity& f, const SampleJitter& j, int size) {
  ImageTensor img = ImageTensor::zeros(size, size, ValueRange::unit);
  double feather = 1.5 / size;
  double ct = std::cos(-j.rot), st = std::sin(-j.rot);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      // face-local frame: undo translation, rotation, scale
      double u = (double(x) + 0.5) / size - 0.5 - j.dx;
      double v = (double(y) + 0.5) / size - 0.5 - j.dy;
      double px = (u * ct - v * st) / j.scale;
      double py = (u * st + v * ct) / j.scale;

      // background with a vertical lighting gradient
      double shade = j.bg_gain * (1.0 - j.grad_amp * (double(y) / size - 0.5));
      double r = f.bg_r * shade, g = f.bg_g * shade, b = f.bg_b * shade;

      // head
      double face_sd = sd_ellipse(px, py, f.face_a, f.face_b);
      blend(r, g, b, f.skin_r, f.skin_g, f.skin_b, coverage(face_sd, feather));

      if (face_sd < 0.02) {
        // hair cap: top slice of the head ellipse
        if (f.hair_h > 0.01) {
          double hair_top = -f.face_b + f.hair_h * 2.0 * f.face_b;
          double sd = std::max(face_sd, py - hair_top);
          blend(r, g, b, f.hair_r, f.hair_g, f.hair_b, coverage(sd, feather));
        }
        for (int side = -1; side <= 1; side += 2) {
          double ex = px - side * f.eye_dx;
          double ey = py - f.eye_y;
          // sclera + iris
          blend(r, g, b, 0.95, 0.95, 0.93,
                coverage(sd_ellipse(ex, ey, f.eye_r * 1.35, f.eye_r * f.eye_aspect * 1.1),
                         feather));
          blend(r, g, b, f.iris_r, f.iris_g, f.iris_b,
                coverage(sd_ellipse(ex, ey, f.eye_r * 0.62, f.eye_r * f.eye_aspect * 0.62),
                         feather));
          // brow
          double bx = px - side * f.eye_dx;
          double by = py - (f.eye_y - f.brow_dy);
          blend(r, g, b, f.brow_dark * f.hair_r, f.brow_dark * f.hair_g,
                f.brow_dark * f.hair_b,
                coverage(sd_box(bx, by, f.eye_r * 1.3, f.brow_h), feather));
          // glasses ring
          if (f.glasses) {
            double ring = std::fabs(sd_ellipse(ex, ey, f.eye_r * 1.8,
                                               f.eye_r * f.eye_aspect * 1.6)) -
                          0.006;
            blend(r, g, b, 0.1, 0.1, 0.12, coverage(ring, feather));
          }
        }
        if (f.glasses) {  // bridge
          blend(r, g, b, 0.1, 0.1, 0.12,
                coverage(sd_box(px, py - f.eye_y, f.eye_dx - f.eye_r, 0.004), feather));
        }
        // nose: subtle vertical shading line
        double nose_sd = sd_box(px, py - f.nose_len * 0.5, 0.008, f.nose_len * 0.5);
        blend(r, g, b, f.skin_r * 0.82, f.skin_g * 0.82, f.skin_b * 0.82,
              0.7 * coverage(nose_sd, feather * 2));
        // mouth
        blend(r, g, b, f.lip_r, f.lip_g, f.lip_b,
              coverage(sd_ellipse(px, py - f.mouth_y, f.mouth_w, f.mouth_h), feather));
      }

      // illumination gain + warmth
      r = r * j.gain + j.warm;
      g = g * j.gain;
      b = b * j.gain - j.warm;
      img.at(0, y, x) = float(r);
      img.at(1, y, x) = float(g);
      img.at(2, y, x) = float(b);
    }
  }
  img.clamp_to_range();
  return img;
}

}  // namespace

Rng pair_channel_rng(uint64_t dataset_seed, size_t pair_index) {
  return Rng(dataset_seed).split("channel").split(uint64_t(pair_index));
}

Medium pair_medium(size_t pair_index) {
  return pair_index % 2 == 0 ? Medium::print : Medium::replay;
}

DatasetManifest generate_toy_dataset(int n_identities, int per_identity, int image_size,
                                     uint64_t seed, const std::string& out_dir) {
  if (n_identities < 2) throw ParamError("need at least 2 identities");
  if (per_identity < 2) throw ParamError("need at least 2 samples per identity");
  if (image_size < 32) throw ParamError("image_size must be >= 32");

  fs::create_directories(fs::path(out_dir) / "images");

  DatasetManifest m;
  m.root = out_dir;
  m.seed = seed;
  m.image_size = image_size;

  Rng base(seed);
  ChannelConfig print_cfg = ChannelConfig::defaults(Medium::print);
  ChannelConfig replay_cfg = ChannelConfig::defaults(Medium::replay);

  char name[64];
  for (int id = 0; id < n_identities; ++id) {
    FaceIdentity face = sample_identity(base.split("identity").split(uint64_t(id)));
    for (int k = 0; k < per_identity; ++k) {
      size_t pair_index = size_t(id) * per_identity + size_t(k);
      SampleJitter jit = sample_jitter(base.split("sample").split(uint64_t(pair_index)));
      // quantize before the channel so the live PNG on disk is the exact
      // channel input — the pairing invariant stays re-verifiable from disk
      ImageTensor live = quantize8(render_face(face, jit, image_size));

      Medium medium = pair_medium(pair_index);
      const ChannelConfig& ccfg = medium == Medium::print ? print_cfg : replay_cfg;
      ImageTensor spoof = apply_channel(live, ccfg, pair_channel_rng(seed, pair_index));

      std::snprintf(name, sizeof(name), "images/id%03d_s%03d_live.png", id, k);
      save_png(live, (fs::path(out_dir) / name).string());
      m.entries.push_back({name, Liveness::live, id, Medium::none});

      std::snprintf(name, sizeof(name), "images/id%03d_s%03d_spoof.png", id, k);
      save_png(spoof, (fs::path(out_dir) / name).string());
      m.entries.push_back({name, Liveness::spoof, id, medium});
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // binary: no CRLF drift
  if (!f) throw DataError("cannot write manifest: " + path);
  f << m.version << "," << m.seed << "," << m.image_size << "\n";
  for (const auto& e : m.entries)
    f << e.path << "," << liveness_str(e.liveness) << "," << e.identity << ","
      << medium_str(e.medium) << "\n";
  if (!f) throw DataError("short write on manifest: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read manifest: " + path);
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";

  std::string stem = fs::path(path).stem().string();
  if (stem == "val") m.split = Split::val;
  else if (stem == "test") m.split = Split::test;
  else m.split = Split::train;

  std::string line;
  if (!std::getline(f, line)) throw DataError("empty manifest: " + path);
  {
    std::istringstream hs(line);
    char c1, c2;
    if (!(hs >> m.version >> c1 >> m.seed >> c2 >> m.image_size) || c1 != ',' || c2 != ',')
      throw DataError("malformed manifest header: " + path);
  }
  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        parts.push_back(cur);
        cur.clear();
      } else
        cur.push_back(ch);
    }
    parts.push_back(cur);
    if (parts.size() != 4)
      throw DataError("malformed manifest record at line " + std::to_string(lineno) +
                      ": " + path);
    ManifestEntry e;
    e.path = parts[0];
    e.liveness = liveness_from_str(parts[1]);
    try {
      size_t used = 0;
      e.identity = std::stoi(parts[2], &used);
      if (used != parts[2].size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw DataError("bad identity field at line " + std::to_string(lineno) + ": " + path);
    }
    if (e.identity < 0) throw DataError("negative identity at line " + std::to_string(lineno));
    e.medium = medium_from_str(parts[3]);
    bool live_ok = (e.liveness == Liveness::live) == (e.medium == Medium::none);
    if (!live_ok)
      throw DataError("liveness/medium mismatch at line " + std::to_string(lineno) + ": " +
                      path);
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::array<DatasetManifest, 3> split_by_identity(const DatasetManifest& m,
                                                 std::array<double, 3> fractions,
                                                 uint64_t seed) {
  double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(sum - 1.0) > 1e-9) throw ParamError("split fractions must sum to 1");
  for (double fr : fractions)
    if (fr < 0) throw ParamError("split fractions must be nonnegative");

  std::vector<int> ids = m.identities();
  int n = int(ids.size());
  // largest-remainder apportionment
  std::array<int, 3> counts;
  std::array<double, 3> rema;
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = fractions[size_t(i)] * n;
    counts[size_t(i)] = int(std::floor(exact));
    rema[size_t(i)] = exact - counts[size_t(i)];
    assigned += counts[size_t(i)];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rema[size_t(i)] > rema[size_t(best)]) best = i;
    ++counts[size_t(best)];
    rema[size_t(best)] = -1;
    ++assigned;
  }
  for (int i = 0; i < 3; ++i)
    if (fractions[size_t(i)] > 0 && counts[size_t(i)] == 0)
      throw DataError("not enough identities to populate every nonzero split");

  Rng rng = Rng(seed).split("split");
  rng.shuffle(ids);

  std::array<std::set<int>, 3> id_sets;
  int cursor = 0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < counts[size_t(i)]; ++k) id_sets[size_t(i)].insert(ids[size_t(cursor++)]);

  std::array<DatasetManifest, 3> out;
  std::array<Split, 3> kinds{Split::train, Split::val, Split::test};
  for (int i = 0; i < 3; ++i) {
    out[size_t(i)].root = m.root;
    out[size_t(i)].seed = m.seed;
    out[size_t(i)].image_size = m.image_size;
    out[size_t(i)].version = m.version;
    out[size_t(i)].split = kinds[size_t(i)];
    for (const auto& e : m.entries)
      if (id_sets[size_t(i)].count(e.identity)) out[size_t(i)].entries.push_back(e);
  }
  return out;
}

ImageTensor load_entry(const DatasetManifest& m, const ManifestEntry& e) {
  return load_image((fs::path(m.root) / e.path).string());
}

std::vector<std::pair<ManifestEntry, ManifestEntry>> paired_entries(
    const DatasetManifest& m) {
  auto stem_of = [](const std::string& p) {
    std::string s = fs::path(p).filename().string();
    size_t pos = s.rfind('_');
    if (pos == std::string::npos) return std::string();
    return s.substr(0, pos);
  };
  std::map<std::string, const ManifestEntry*> lives, spoofs;
  for (const auto& e : m.entries) {
    std::string stem = stem_of(e.path);
    if (stem.empty()) throw DataError("unpairable entry path: " + e.path);
    auto& side = e.liveness == Liveness::live ? lives : spoofs;
    if (!side.emplace(stem, &e).second) throw DataError("duplicate entry stem: " + stem);
  }
  if (lives.size() != spoofs.size())
    throw DataError("dataset is not fully paired (live/spoof count mismatch)");
  std::vector<std::pair<ManifestEntry, ManifestEntry>> pairs;
  for (const auto& [stem, live] : lives) {
    auto it = spoofs.find(stem);
    if (it == spoofs.end()) throw DataError("live entry without spoof pair: " + stem);
    pairs.push_back({*live, *it->second});
  }
  return pairs;
}

}  // namespace advgen
