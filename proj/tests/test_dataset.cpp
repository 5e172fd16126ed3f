#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "advgen/dataset.hpp"
#include "test_util.hpp"

using namespace advgen;
using testutil::TmpDir;

namespace {

DatasetManifest make_manifest(std::vector<ManifestEntry> entries) {
  DatasetManifest m;
  m.root = ".";
  m.seed = 1;
  m.image_size = 32;
  m.entries = std::move(entries);
  return m;
}

ManifestEntry entry(const std::string& path, Liveness l, int id, Medium med) {
  ManifestEntry e;
  e.path = path;
  e.liveness = l;
  e.identity = id;
  e.medium = med;
  return e;
}

}  // namespace

TEST_SUITE("toy_dataset") {
  TEST_CASE("generation produces the advertised counts and pairing") {
    TmpDir tmp("gen");
    DatasetManifest m = generate_toy_dataset(3, 4, 32, 99, tmp.path.string());
    CHECK(m.entries.size() == 24);  // 3 ids * 4 samples * (live + spoof)
    CHECK(m.count(Liveness::live) == 12);
    CHECK(m.count(Liveness::spoof) == 12);
    CHECK(m.image_size == 32);
    CHECK(m.seed == 99);
    CHECK(m.identities() == std::vector<int>{0, 1, 2});

    for (const auto& e : m.entries) {
      ImageTensor img = load_entry(m, e);
      CHECK(img.h == 32);
      CHECK(img.w == 32);
      bool live = e.liveness == Liveness::live;
      CHECK((e.medium == Medium::none) == live);
    }

    auto pairs = paired_entries(m);
    REQUIRE(pairs.size() == 12);
    for (size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].first.liveness == Liveness::live);
      CHECK(pairs[i].second.liveness == Liveness::spoof);
      CHECK(pairs[i].first.identity == pairs[i].second.identity);
      CHECK(pairs[i].second.medium == pair_medium(i));
    }
    // media alternate deterministically
    CHECK(pair_medium(0) == Medium::print);
    CHECK(pair_medium(1) == Medium::replay);
  }

  TEST_CASE("pairing invariant re-verifiable from the files on disk") {
    TmpDir tmp("pair");
    DatasetManifest m = generate_toy_dataset(2, 3, 32, 1234, tmp.path.string());
    auto pairs = paired_entries(m);
    REQUIRE(pairs.size() == 6);
    for (size_t i = 0; i < pairs.size(); ++i) {
      ImageTensor live = load_entry(m, pairs[i].first);
      ImageTensor spoof = load_entry(m, pairs[i].second);
      ChannelConfig cfg = ChannelConfig::defaults(pair_medium(i));
      ImageTensor redone = quantize8(apply_channel(live, cfg, pair_channel_rng(m.seed, i)));
      CHECK(testutil::bitwise_equal(redone, spoof));
    }
  }

  TEST_CASE("same seed reproduces files byte for byte, new seed does not") {
    TmpDir a("seedA"), b("seedB"), c("seedC");
    DatasetManifest ma = generate_toy_dataset(2, 2, 32, 5, a.path.string());
    DatasetManifest mb = generate_toy_dataset(2, 2, 32, 5, b.path.string());
    DatasetManifest mc = generate_toy_dataset(2, 2, 32, 6, c.path.string());
    REQUIRE(ma.entries.size() == mb.entries.size());
    bool any_differs = false;
    for (size_t i = 0; i < ma.entries.size(); ++i) {
      CHECK(ma.entries[i].path == mb.entries[i].path);
      std::string bytes_a = testutil::slurp((std::filesystem::path(ma.root) / ma.entries[i].path).string());
      std::string bytes_b = testutil::slurp((std::filesystem::path(mb.root) / mb.entries[i].path).string());
      std::string bytes_c = testutil::slurp((std::filesystem::path(mc.root) / mc.entries[i].path).string());
      CHECK(bytes_a == bytes_b);
      if (bytes_a != bytes_c) any_differs = true;
    }
    CHECK(any_differs);
  }

  TEST_CASE("generation parameter validation") {
    TmpDir tmp("bad");
    CHECK_THROWS_AS(generate_toy_dataset(1, 4, 32, 1, tmp.path.string()), ParamError);
    CHECK_THROWS_AS(generate_toy_dataset(4, 1, 32, 1, tmp.path.string()), ParamError);
    CHECK_THROWS_AS(generate_toy_dataset(4, 4, 16, 1, tmp.path.string()), ParamError);
  }
}

TEST_SUITE("manifest_io") {
  TEST_CASE("save and load round trip") {
    TmpDir tmp("mrt");
    DatasetManifest m = generate_toy_dataset(2, 2, 32, 3, tmp.path.string());
    std::string mp = tmp.file("manifest.csv");
    save_manifest(m, mp);
    DatasetManifest back = load_manifest(mp);
    CHECK(back.seed == m.seed);
    CHECK(back.image_size == m.image_size);
    CHECK(back.version == m.version);
    REQUIRE(back.entries.size() == m.entries.size());
    for (size_t i = 0; i < m.entries.size(); ++i) {
      CHECK(back.entries[i].path == m.entries[i].path);
      CHECK(back.entries[i].liveness == m.entries[i].liveness);
      CHECK(back.entries[i].identity == m.entries[i].identity);
      CHECK(back.entries[i].medium == m.entries[i].medium);
    }

    // byte-identical re-save
    std::string mp2 = tmp.file("manifest2.csv");
    save_manifest(back, mp2);
    CHECK(testutil::slurp(mp) == testutil::slurp(mp2));
  }

  TEST_CASE("malformed manifests are rejected with line context") {
    TmpDir tmp("mbad");
    auto write = [&](const std::string& name, const std::string& body) {
      std::ofstream f(tmp.file(name), std::ios::binary);
      f << body;
      return tmp.file(name);
    };

    CHECK_THROWS_AS(load_manifest(tmp.file("missing.csv")), DataError);
    CHECK_THROWS_AS(load_manifest(write("h.csv", "bogus header\n")), DataError);

    std::string good_header = "1,7,32\n";  // version,seed,image_size
    CHECK_THROWS_AS(load_manifest(write("l.csv", good_header + "img/a_live.png,alive,0,none\n")),
                    DataError);
    CHECK_THROWS_AS(load_manifest(write("m.csv", good_header + "img/a_live.png,live,0,vinyl\n")),
                    DataError);
    CHECK_THROWS_AS(load_manifest(write("i.csv", good_header + "img/a_live.png,live,x,none\n")),
                    DataError);
    // live entries must have medium none; spoof entries must not
    CHECK_THROWS_AS(load_manifest(write("c1.csv", good_header + "img/a_live.png,live,0,print\n")),
                    DataError);
    CHECK_THROWS_AS(load_manifest(write("c2.csv", good_header + "img/a_spoof.png,spoof,0,none\n")),
                    DataError);
    CHECK_THROWS_AS(load_manifest(write("n.csv", good_header + "img/a_live.png,live\n")),
                    DataError);

    try {
      load_manifest(write("ln.csv", good_header + "img/a_live.png,live,0,none\nbroken line\n"));
      CHECK(false);
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
}

TEST_SUITE("identity_split") {
  TEST_CASE("fractions apportion identities disjointly and deterministically") {
    std::vector<ManifestEntry> entries;
    for (int id = 0; id < 10; ++id)
      for (int s = 0; s < 2; ++s) {
        std::string stem = "img/id" + std::to_string(id) + "_s" + std::to_string(s);
        entries.push_back(entry(stem + "_live.png", Liveness::live, id, Medium::none));
        entries.push_back(entry(stem + "_spoof.png", Liveness::spoof, id, Medium::print));
      }
    DatasetManifest m = make_manifest(entries);

    auto parts = split_by_identity(m, {0.6, 0.2, 0.2}, 42);
    CHECK(parts[0].identities().size() == 6);
    CHECK(parts[1].identities().size() == 2);
    CHECK(parts[2].identities().size() == 2);
    CHECK(parts[0].split == Split::train);
    CHECK(parts[1].split == Split::val);
    CHECK(parts[2].split == Split::test);

    std::set<int> seen;
    size_t total = 0;
    for (const auto& p : parts) {
      total += p.entries.size();
      for (int id : p.identities()) {
        CHECK(seen.count(id) == 0);
        seen.insert(id);
      }
      // entry order within a part preserves manifest order
      auto sorted = p.entries;
      std::stable_sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
        auto pos = [&](const ManifestEntry& e) {
          for (size_t i = 0; i < m.entries.size(); ++i)
            if (m.entries[i].path == e.path) return i;
          return size_t(-1);
        };
        return pos(a) < pos(b);
      });
      for (size_t i = 0; i < p.entries.size(); ++i) CHECK(p.entries[i].path == sorted[i].path);
    }
    CHECK(total == m.entries.size());
    CHECK(seen.size() == 10);

    auto parts2 = split_by_identity(m, {0.6, 0.2, 0.2}, 42);
    for (int k = 0; k < 3; ++k) {
      REQUIRE(parts2[k].entries.size() == parts[k].entries.size());
      for (size_t i = 0; i < parts[k].entries.size(); ++i)
        CHECK(parts2[k].entries[i].path == parts[k].entries[i].path);
    }

    auto parts3 = split_by_identity(m, {0.6, 0.2, 0.2}, 43);
    bool differs = false;
    for (int k = 0; k < 3 && !differs; ++k)
      differs = parts3[k].identities() != parts[k].identities();
    CHECK(differs);
  }

  TEST_CASE("invalid fractions and starved splits are rejected") {
    std::vector<ManifestEntry> entries;
    for (int id = 0; id < 2; ++id) {
      std::string stem = "img/id" + std::to_string(id) + "_s0";
      entries.push_back(entry(stem + "_live.png", Liveness::live, id, Medium::none));
      entries.push_back(entry(stem + "_spoof.png", Liveness::spoof, id, Medium::replay));
    }
    DatasetManifest m = make_manifest(entries);
    CHECK_THROWS_AS(split_by_identity(m, {0.5, 0.2, 0.2}, 1), ParamError);
    // three-way split of two identities starves one nonzero fraction
    CHECK_THROWS_AS(split_by_identity(m, {0.4, 0.3, 0.3}, 1), DataError);
    // zero fractions are fine: everything lands in train/test
    auto parts = split_by_identity(m, {0.5, 0.0, 0.5}, 1);
    CHECK(parts[0].identities().size() == 1);
    CHECK(parts[1].entries.empty());
    CHECK(parts[2].identities().size() == 1);
  }
}

TEST_SUITE("pair_lookup") {
  TEST_CASE("unpaired or duplicate stems are data errors") {
    DatasetManifest lonely = make_manifest(
        {entry("img/id0_s0_live.png", Liveness::live, 0, Medium::none)});
    CHECK_THROWS_AS(paired_entries(lonely), DataError);

    DatasetManifest dup = make_manifest({
        entry("img/id0_s0_live.png", Liveness::live, 0, Medium::none),
        entry("img/id0_s0_live.png", Liveness::live, 0, Medium::none),
        entry("img/id0_s0_spoof.png", Liveness::spoof, 0, Medium::print),
    });
    CHECK_THROWS_AS(paired_entries(dup), DataError);
  }
}
