#include "dhcnet/synth.hpp"

#include "dhcnet/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace dhcnet {

void DatasetSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("DatasetSpec: < 2 classes");
  if (train_per_class < 1 || train_per_class > 9)
    throw std::invalid_argument(
        "DatasetSpec: train_per_class must stay in the single-digit regime "
        "[1,9]");
  if (test_per_class < 1) throw std::invalid_argument("DatasetSpec: no test images");
  if (image_size < 16) throw std::invalid_argument("DatasetSpec: image_size < 16");
  if (contour_harmonics < 1)
    throw std::invalid_argument("DatasetSpec: contour_harmonics < 1");
  if (!(class_separation > instance_jitter))
    throw std::invalid_argument(
        "DatasetSpec: class_separation must exceed instance_jitter");
}

double ContourParams::distance(const ContourParams& other) const {
  double s = 0.0;
  for (std::size_t h = 0; h < a.size(); ++h) {
    s += (a[h] - other.a[h]) * (a[h] - other.a[h]);
    s += (b[h] - other.b[h]) * (b[h] - other.b[h]);
  }
  return std::sqrt(s);
}

namespace {

// Smooth value noise: low-res random grid, bilinearly upsampled.
Array value_noise(int size, int grid, Rng& rng) {
  std::vector<double> g(static_cast<std::size_t>(grid + 1) * (grid + 1));
  for (auto& v : g) v = rng.uniform();
  Array out(static_cast<Eigen::Index>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double gy = static_cast<double>(y) / size * grid;
      double gx = static_cast<double>(x) / size * grid;
      int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
      double fy = gy - y0, fx = gx - x0;
      double v = (1 - fy) * ((1 - fx) * g[y0 * (grid + 1) + x0] +
                             fx * g[y0 * (grid + 1) + x0 + 1]) +
                 fy * ((1 - fx) * g[(y0 + 1) * (grid + 1) + x0] +
                       fx * g[(y0 + 1) * (grid + 1) + x0 + 1]);
      out[y * size + x] = v;
    }
  return out;
}

double radius_at(const ContourParams& p, double theta) {
  double r = 1.0;
  for (std::size_t h = 0; h < p.a.size(); ++h)
    r += p.a[h] * std::cos((h + 1) * theta) + p.b[h] * std::sin((h + 1) * theta);
  return r;
}

}  // namespace

Tensor render_instance(const ContourParams& cls, const DatasetSpec& spec,
                       Rng instance_rng, bool jitter) {
  int S = spec.image_size;
  ContourParams p = cls;
  double cx = S * 0.5, cy = S * 0.5;
  double noise_amp = 0.0;
  if (jitter) {
    for (auto& v : p.a)
      v += instance_rng.uniform(-spec.instance_jitter, spec.instance_jitter);
    for (auto& v : p.b)
      v += instance_rng.uniform(-spec.instance_jitter, spec.instance_jitter);
    // small placement jitter; a convnet shrugs it off, raw-pixel
    // matching does not
    cx += instance_rng.uniform(-0.06, 0.06) * S;
    cy += instance_rng.uniform(-0.06, 0.06) * S;
    noise_amp = 0.10;
  }

  double r0 = 0.30 * S;
  // contour must stay positive everywhere
  for (int i = 0; i < 512; ++i) {
    double r = radius_at(p, 2.0 * M_PI * i / 512.0);
    if (r <= 0.05)
      throw std::domain_error("render_instance: contour radius non-positive");
  }

  Rng tex_rng(spec.texture_seed);
  Array bg = value_noise(S, 8, tex_rng);
  Array fg_tex = value_noise(S, 5, tex_rng);

  Tensor img = Tensor::zeros({3, S, S});
  // mild fixed channel tints so the PNGs look like plant matter
  const double bg_base[3] = {0.55, 0.50, 0.40};
  const double fg_base[3] = {0.25, 0.45, 0.20};
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      double dist = std::sqrt(dx * dx + dy * dy);
      double theta = std::atan2(dy, dx);
      double edge = dist - r0 * radius_at(p, theta);
      double alpha = std::clamp(0.5 - edge, 0.0, 1.0);  // ~1 px anti-alias
      double btex = 0.30 * (bg[y * S + x] - 0.5);
      double ftex = 0.30 * (fg_tex[y * S + x] - 0.5);
      double n = noise_amp > 0.0
                     ? noise_amp * (instance_rng.uniform() - 0.5)
                     : 0.0;
      for (int c = 0; c < 3; ++c) {
        double v = (1.0 - alpha) * (bg_base[c] + btex) +
                   alpha * (fg_base[c] + ftex) + n;
        img.values[(c * S + y) * S + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

std::vector<ContourParams> sample_class_params(const DatasetSpec& spec) {
  spec.validate();
  Rng rng = Rng(spec.seed).spawn(0xC1A55);
  std::vector<ContourParams> out;
  int attempts = 0;
  const int max_attempts = 20000;
  while (static_cast<int>(out.size()) < spec.num_classes) {
    if (++attempts > max_attempts)
      throw std::runtime_error(
          "sample_class_params: rejection sampling exhausted; lower "
          "class_separation");
    ContourParams p;
    double total = 0.0;
    for (int h = 1; h <= spec.contour_harmonics; ++h) {
      double scale = 0.35 / h;  // tamer high harmonics keep r positive
      p.a.push_back(rng.uniform(-scale, scale));
      p.b.push_back(rng.uniform(-scale, scale));
      total += std::abs(p.a.back()) + std::abs(p.b.back());
    }
    if (total >= 0.85) continue;  // radius could dip non-positive
    bool ok = true;
    for (const auto& q : out)
      if (p.distance(q) < spec.class_separation) {
        ok = false;
        break;
      }
    if (ok) out.push_back(std::move(p));
  }
  return out;
}

Manifest gen_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  spec.validate();
  auto classes = sample_class_params(spec);
  fs::create_directories(out_dir);

  Manifest mf;
  mf.dir = out_dir;
  Rng root(spec.seed);
  for (int k = 0; k < spec.num_classes; ++k) {
    char cls_dir[32];
    std::snprintf(cls_dir, sizeof cls_dir, "class_%03d", k);
    fs::create_directories(fs::path(out_dir) / cls_dir);
    int total = spec.train_per_class + spec.test_per_class;
    for (int i = 0; i < total; ++i) {
      bool is_train = i < spec.train_per_class;
      Rng inst = root.spawn((static_cast<std::uint64_t>(k) << 20) | i);
      Tensor img = render_instance(classes[k], spec, inst);
      char name[48];
      std::snprintf(name, sizeof name, "%s/%s_%d.png", cls_dir,
                    is_train ? "train" : "test",
                    is_train ? i : i - spec.train_per_class);
      write_png((fs::path(out_dir) / name).string(), img);
      mf.rows.push_back({name, k, is_train});
    }
  }

  std::ofstream f(fs::path(out_dir) / "manifest.csv", std::ios::binary);
  if (!f) throw std::runtime_error("gen_dataset: cannot write manifest");
  f << "path,label,split\n";
  for (const auto& r : mf.rows)
    f << r.path << "," << r.label << "," << (r.is_train ? "train" : "test")
      << "\n";
  return mf;
}

Manifest read_manifest(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f)
    throw std::runtime_error("read_manifest: cannot open " + manifest_path);
  Manifest mf;
  mf.dir = fs::path(manifest_path).parent_path().string();
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "path,label,split")
        throw std::runtime_error("read_manifest: bad header at row 1");
      continue;
    }
    std::istringstream ss(line);
    std::string path, label, split;
    if (!std::getline(ss, path, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, split))
      throw std::runtime_error("read_manifest: malformed row " +
                               std::to_string(line_no));
    if (split != "train" && split != "test")
      throw std::runtime_error("read_manifest: bad split at row " +
                               std::to_string(line_no));
    int lbl;
    try {
      lbl = std::stoi(label);
    } catch (...) {
      throw std::runtime_error("read_manifest: bad label at row " +
                               std::to_string(line_no));
    }
    mf.rows.push_back({path, lbl, split == "train"});
  }
  return mf;
}

Dataset load_dataset(const std::string& manifest_path) {
  Manifest mf = read_manifest(manifest_path);
  Dataset ds;
  int max_label = -1;
  for (std::size_t i = 0; i < mf.rows.size(); ++i) {
    const auto& r = mf.rows[i];
    Tensor img;
    try {
      img = read_png((fs::path(mf.dir) / r.path).string());
    } catch (const std::exception& e) {
      throw std::runtime_error("load_dataset: row " + std::to_string(i + 2) +
                               ": " + e.what());
    }
    if (ds.image_size == 0) ds.image_size = img.shape[1];
    if (img.shape[1] != ds.image_size || img.shape[2] != ds.image_size)
      throw std::runtime_error("load_dataset: row " + std::to_string(i + 2) +
                               ": size mismatch");
    max_label = std::max(max_label, r.label);
    if (r.is_train) {
      ds.train_images.push_back(std::move(img));
      ds.train_labels.push_back(r.label);
    } else {
      ds.test_images.push_back(std::move(img));
      ds.test_labels.push_back(r.label);
    }
  }
  ds.num_classes = max_label + 1;
  return ds;
}

}  // namespace dhcnet
