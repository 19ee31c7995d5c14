#pragma once

#include "dhcnet/rng.hpp"
#include "dhcnet/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dhcnet {

// Desk-scale stand-in for cultivar photos: classes differ only in the
// closed contour r(theta) = r0 * (1 + sum_h a_h cos(h theta) + b_h
// sin(h theta)) drawn over a shared noisy texture.
struct DatasetSpec {
  int num_classes = 20;
  int train_per_class = 3;
  int test_per_class = 3;
  int image_size = 64;
  int contour_harmonics = 6;
  double class_separation = 0.08;  // min pairwise L2 distance in coef space
  double instance_jitter = 0.02;   // max per-coefficient perturbation
  std::uint64_t texture_seed = 7;
  std::uint64_t seed = 0;

  void validate() const;
};

// Radial Fourier coefficients of one class contour.
struct ContourParams {
  std::vector<double> a, b;  // cos / sin, harmonics 1..H

  double distance(const ContourParams& other) const;
};

struct ManifestRow {
  std::string path;  // relative to the manifest directory
  int label;
  bool is_train;
};

struct Manifest {
  std::string dir;
  std::vector<ManifestRow> rows;
};

// Renders one instance: contour fill over the texture, anti-aliased
// boundary, plus per-instance coefficient jitter, a small random
// offset, and pixel noise (all from instance_rng; jitter = false
// renders the clean class prototype).
Tensor render_instance(const ContourParams& cls, const DatasetSpec& spec,
                       Rng instance_rng, bool jitter = true);

// Samples class contours at pairwise distance >= class_separation
// (rejection sampling; throws after bounded attempts).
std::vector<ContourParams> sample_class_params(const DatasetSpec& spec);

// Renders the whole tree under out_dir and writes manifest.csv
// (header "path,label,split"). Pure function of the spec.
Manifest gen_dataset(const DatasetSpec& spec, const std::string& out_dir);

Manifest read_manifest(const std::string& manifest_path);

struct Dataset {
  std::vector<Tensor> train_images;
  std::vector<int> train_labels;
  std::vector<Tensor> test_images;
  std::vector<int> test_labels;
  int num_classes = 0;
  int image_size = 0;
};

// Decodes every manifest row; pixel values in [0,1], manifest order.
Dataset load_dataset(const std::string& manifest_path);

}  // namespace dhcnet
