#ifndef ADR_DATA_HPP
#define ADR_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "adr/tensor.hpp"

namespace adr {

/// Immutable labeled dataset. Pixels live in [0,1]; violations are a hard
/// error at construction, never a clamp.
struct Dataset {
  Tensor images;  // [N, ...input shape]
  std::vector<int> labels;
  std::string split = "train";  // train | test
  int num_classes = 0;

  int size() const { return images.defined() ? images.shape()[0] : 0; }
  Shape input_shape() const;           // shape without the batch axis
  Tensor batch(const std::vector<int>& indices) const;
  Tensor example(int index) const;     // [1, ...] single-example batch
  std::vector<int> batch_labels(const std::vector<int>& indices) const;

  void validate() const;
};

/// Declarative dataset source, recorded in run configs for reproducibility.
struct DatasetSpec {
  std::string kind;  // "idx" | "synthetic-blobs"
  // idx
  std::string images_path;
  std::string labels_path;
  // synthetic-blobs
  int n = 0;
  int classes = 2;
  int dim = 2;
  double separation = 0.35;
  double noise = 0.05;
  std::uint64_t seed = 0;
  // common
  std::string split = "train";
  int subsample_per_class = 0;  // 0 = keep all
  std::uint64_t subsample_seed = 0;
};

/// Parses the big-endian IDX pair (magic 0x00000803 images, 0x00000801
/// labels); pixel bytes are scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Inverse of load_idx for u8-valued data; used by fixtures and round-trip
/// checks.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

/// M Gaussian clusters in [0,1]^dim. Means sit on a deterministic circle (or
/// line for dim 1) with adjacent spacing `separation`, clipped into the unit
/// box; samples are rejection-resampled until they land inside [0,1]^dim so
/// the dataset invariant holds without clamping.
Dataset synthetic_blobs(int n, int classes, int dim, double separation,
                        double noise, std::uint64_t seed);

/// Class-balanced deterministic subsample of n examples per class.
Dataset subsample(const Dataset& ds, int per_class, std::uint64_t seed);

Dataset materialize(const DatasetSpec& spec);

}  // namespace adr

#endif  // ADR_DATA_HPP
