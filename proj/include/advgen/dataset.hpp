#pragma once

#include <array>
#include <string>
#include <vector>

#include "advgen/channel.hpp"
#include "advgen/image.hpp"

namespace advgen {

enum class Liveness { live, spoof };
enum class Split { train, val, test };

struct ManifestEntry {
  std::string path;  // relative to the manifest's root
  Liveness liveness = Liveness::live;
  int identity = 0;
  Medium medium = Medium::none;
};

struct DatasetManifest {
  std::string root;
  std::vector<ManifestEntry> entries;
  Split split = Split::train;
  uint64_t seed = 0;
  int image_size = 0;
  int version = 1;

  std::vector<int> identities() const;  // sorted unique ids
  size_t count(Liveness l) const;
};

// Procedural parametric faces: identity controls geometry/color templates,
// each sample adds pose/illumination jitter. Every live image gets a paired
// spoof produced by the default physical channel (media alternate
// print/replay by sample index). Images are written under out_dir/images.
DatasetManifest generate_toy_dataset(int n_identities, int per_identity, int image_size,
                                     uint64_t seed, const std::string& out_dir);

// The rng stream a given pair index used for its channel pass; exposed so the
// pairing invariant (spoof == apply_channel(live)) can be re-verified.
Rng pair_channel_rng(uint64_t dataset_seed, size_t pair_index);
Medium pair_medium(size_t pair_index);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Disjoint identity-level split, deterministic per seed. Fractions must sum
// to 1; apportionment is largest-remainder.
std::array<DatasetManifest, 3> split_by_identity(const DatasetManifest& m,
                                                 std::array<double, 3> fractions,
                                                 uint64_t seed);

ImageTensor load_entry(const DatasetManifest& m, const ManifestEntry& e);

// (live, spoof) entry pairs matched by filename stem; throws if unpaired.
std::vector<std::pair<ManifestEntry, ManifestEntry>> paired_entries(
    const DatasetManifest& m);

std::string liveness_str(Liveness l);
std::string medium_str(Medium m);
Liveness liveness_from_str(const std::string& s);
Medium medium_from_str(const std::string& s);

}  // namespace advgen
