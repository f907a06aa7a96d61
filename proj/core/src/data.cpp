#include "adr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "adr/rng.hpp"

namespace adr {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;  // 2051
constexpr std::uint32_t kLabelMagic = 0x00000801;  // 2049

std::uint32_t read_be_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("idx: truncated " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Shape Dataset::input_shape() const {
  Shape s = images.shape();
  s.erase(s.begin());
  return s;
}

Tensor Dataset::batch(const std::vector<int>& indices) const {
  const std::size_t stride = images.size() / static_cast<std::size_t>(size());
  std::vector<double> out(indices.size() * stride);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= size()) {
      throw ConfigError("dataset: example index " + std::to_string(idx) +
                        " outside [0," + std::to_string(size()) + ")");
    }
    std::copy_n(images.data().begin() + static_cast<std::size_t>(idx) * stride,
                stride, out.begin() + i * stride);
  }
  Shape s = images.shape();
  s[0] = static_cast<int>(indices.size());
  return Tensor(std::move(s), std::move(out));
}

Tensor Dataset::example(int index) const { return batch({index}); }

std::vector<int> Dataset::batch_labels(const std::vector<int>& indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out[i] = labels.at(static_cast<std::size_t>(indices[i]));
  return out;
}

void Dataset::validate() const {
  if (!images.defined() || images.shape().empty()) {
    throw IoError("dataset: no image tensor");
  }
  if (static_cast<int>(labels.size()) != size()) {
    throw IoError("dataset: " + std::to_string(labels.size()) + " labels for " +
                  std::to_string(size()) + " images");
  }
  for (double v : images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw IoError("dataset: pixel value " + std::to_string(v) +
                    " outside [0,1]");
    }
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw IoError("dataset: label " + std::to_string(y) + " outside [0," +
                    std::to_string(num_classes) + ")");
    }
  }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("idx: cannot open '" + images_path + "'");
  const std::uint32_t img_magic = read_be_u32(img, "image magic");
  if (img_magic != kImageMagic) {
    throw IoError("idx: bad image magic " + std::to_string(img_magic) +
                  " in '" + images_path + "' (expected 2051)");
  }
  const std::uint32_t n = read_be_u32(img, "image count");
  const std::uint32_t h = read_be_u32(img, "image rows");
  const std::uint32_t w = read_be_u32(img, "image cols");
  const std::size_t npix = std::size_t(n) * h * w;
  std::vector<unsigned char> pixels(npix);
  img.read(reinterpret_cast<char*>(pixels.data()),
           static_cast<std::streamsize>(npix));
  if (static_cast<std::size_t>(img.gcount()) != npix) {
    throw IoError("idx: truncated image payload in '" + images_path + "'");
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("idx: cannot open '" + labels_path + "'");
  const std::uint32_t lab_magic = read_be_u32(lab, "label magic");
  if (lab_magic != kLabelMagic) {
    throw IoError("idx: bad label magic " + std::to_string(lab_magic) +
                  " in '" + labels_path + "' (expected 2049)");
  }
  const std::uint32_t n_labels = read_be_u32(lab, "label count");
  if (n_labels != n) {
    throw IoError("idx: " + std::to_string(n_labels) + " labels for " +
                  std::to_string(n) + " images");
  }
  std::vector<unsigned char> raw_labels(n_labels);
  lab.read(reinterpret_cast<char*>(raw_labels.data()),
           static_cast<std::streamsize>(n_labels));
  if (static_cast<std::size_t>(lab.gcount()) != n_labels) {
    throw IoError("idx: truncated label payload in '" + labels_path + "'");
  }

  std::vector<double> data(npix);
  for (std::size_t i = 0; i < npix; ++i)
    data[i] = static_cast<double>(pixels[i]) / 255.0;

  Dataset ds;
  ds.images = Tensor({static_cast<int>(n), 1, static_cast<int>(h),
                      static_cast<int>(w)},
                     std::move(data));
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = std::max(10, max_label + 1);
  ds.validate();
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  if (ds.images.shape().size() != 4) {
    throw IoError("idx: can only serialize [N,1,H,W] datasets, got " +
                  shape_str(ds.images.shape()));
  }
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IoError("idx: cannot open '" + images_path + "' for writing");
  write_be_u32(img, kImageMagic);
  write_be_u32(img, static_cast<std::uint32_t>(ds.images.shape()[0]));
  write_be_u32(img, static_cast<std::uint32_t>(ds.images.shape()[2]));
  write_be_u32(img, static_cast<std::uint32_t>(ds.images.shape()[3]));
  for (double v : ds.images.data()) {
    const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
    img.write(reinterpret_cast<const char*>(&byte), 1);
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("idx: cannot open '" + labels_path + "' for writing");
  write_be_u32(lab, kLabelMagic);
  write_be_u32(lab, static_cast<std::uint32_t>(ds.labels.size()));
  for (int y : ds.labels) {
    const auto byte = static_cast<unsigned char>(y);
    lab.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

Dataset synthetic_blobs(int n, int classes, int dim, double separation,
                        double noise, std::uint64_t seed) {
  if (n <= 0 || classes < 2 || dim < 1) {
    throw ConfigError("synthetic_blobs: need n > 0, classes >= 2, dim >= 1");
  }
  if (noise < 0.0) throw ConfigError("synthetic_blobs: negative noise");

  std::vector<std::vector<double>> means(
      static_cast<std::size_t>(classes),
      std::vector<double>(static_cast<std::size_t>(dim), 0.5));
  if (dim == 1) {
    for (int k = 0; k < classes; ++k)
      means[static_cast<std::size_t>(k)][0] =
          0.5 + (k - (classes - 1) / 2.0) * separation;
  } else {
    // Circle in the first two coordinates, adjacent means `separation` apart.
    const double pi = 3.14159265358979323846;
    const double radius =
        classes == 2 ? separation / 2.0
                     : separation / (2.0 * std::sin(pi / classes));
    for (int k = 0; k < classes; ++k) {
      const double angle = 2.0 * pi * k / classes;
      means[static_cast<std::size_t>(k)][0] = 0.5 + radius * std::cos(angle);
      means[static_cast<std::size_t>(k)][1] = 0.5 + radius * std::sin(angle);
    }
  }
  for (auto& m : means)
    for (auto& c : m) c = std::min(std::max(c, 0.0), 1.0);

  DetRng rng(seed);
  std::vector<double> data(static_cast<std::size_t>(n) * dim);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int k = i % classes;
    labels[static_cast<std::size_t>(i)] = k;
    double* row = data.data() + static_cast<std::size_t>(i) * dim;
    const auto& mean = means[static_cast<std::size_t>(k)];
    bool inside = false;
    for (int attempt = 0; attempt < 10000 && !inside; ++attempt) {
      inside = true;
      for (int d = 0; d < dim; ++d) {
        row[d] = mean[static_cast<std::size_t>(d)] + noise * rng.normal();
        if (row[d] < 0.0 || row[d] > 1.0) inside = false;
      }
    }
    if (!inside) {
      throw ConfigError("synthetic_blobs: could not sample inside [0,1]^dim; "
                        "noise too large for the mean placement");
    }
  }

  Dataset ds;
  ds.images = Tensor({n, dim}, std::move(data));
  ds.labels = std::move(labels);
  ds.num_classes = classes;
  ds.validate();
  return ds;
}

Dataset subsample(const Dataset& ds, int per_class, std::uint64_t seed) {
  if (per_class <= 0) throw ConfigError("subsample: per_class must be > 0");
  std::vector<std::vector<int>> by_class(
      static_cast<std::size_t>(ds.num_classes));
  for (int i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])]
        .push_back(i);

  std::vector<int> chosen;
  for (int c = 0; c < ds.num_classes; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(pool.size()) < per_class) {
      throw ConfigError("subsample: class " + std::to_string(c) + " has only " +
                        std::to_string(pool.size()) + " examples, need " +
                        std::to_string(per_class));
    }
    DetRng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    rng.shuffle(pool);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + per_class);
  }
  DetRng rng(derive_seed(seed, {0xC0FFEE}));
  rng.shuffle(chosen);

  Dataset out;
  out.images = ds.batch(chosen);
  out.labels = ds.batch_labels(chosen);
  out.split = ds.split;
  out.num_classes = ds.num_classes;
  return out;
}

Dataset materialize(const DatasetSpec& spec) {
  Dataset ds;
  if (spec.kind == "idx") {
    if (spec.images_path.empty() || spec.labels_path.empty()) {
      throw ConfigError("dataset: idx kind needs images and labels paths");
    }
    ds = load_idx(spec.images_path, spec.labels_path);
  } else if (spec.kind == "synthetic-blobs") {
    ds = synthetic_blobs(spec.n, spec.classes, spec.dim, spec.separation,
                         spec.noise, spec.seed);
  } else {
    throw ConfigError("dataset: unknown kind '" + spec.kind + "'");
  }
  if (spec.subsample_per_class > 0) {
    ds = subsample(ds, spec.subsample_per_class, spec.subsample_seed);
  }
  ds.split = spec.split;
  return ds;
}

}  // namespace adr
