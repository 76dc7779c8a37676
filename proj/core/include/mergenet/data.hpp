#ifndef MERGENET_DATA_HPP
#define MERGENET_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mergenet/rng.hpp"
#include "mergenet/tensor.hpp"

namespace mergenet {

struct Dataset {
  Tensor inputs;  // n x features
  std::vector<int> labels;
  std::size_t classes = 0;
  /// CIFAR-100 coarse labels; empty otherwise.
  std::vector<int> coarse_labels;

  std::size_t size() const { return labels.size(); }
  std::size_t features() const { return inputs.cols(); }
  /// First `count` samples, in order.
  Dataset head(std::size_t count) const;
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
};

/*
 * Gaussian-mixture classification task. Class c owns `components_per_class`
 * mean vectors; a sample draws its label uniformly, then a component
 * uniformly, then adds isotropic noise. Means come from `task_seed`
 * (N(0, separation^2) per coordinate) unless given explicitly. With
 * 0 < signal_dim < input_dim the means are drawn in signal_dim coordinates
 * and embedded through a seeded random orthonormal basis, so the class
 * signal occupies a subspace and the other directions are pure noise.
 * Samples come
 * from `sample_seed`. The train split is drawn first and the test split
 * continues the same stream, so the two never share a draw.
 */
struct SyntheticTask {
  std::size_t classes = 10;
  std::size_t input_dim = 32;
  std::size_t components_per_class = 1;
  double separation = 1.0;
  double noise = 1.0;
  std::size_t signal_dim = 0;  // 0: means span every input direction
  std::size_t train_size = 1000;
  std::size_t test_size = 1000;
  std::uint64_t task_seed = 1;
  std::uint64_t sample_seed = 1;
  /// Optional explicit means, classes * components_per_class rows,
  /// ordered class-major.
  std::vector<std::vector<double>> means;
};

/// Returns (train, test).
std::pair<Dataset, Dataset> gen_synthetic(const SyntheticTask& task);

/// Endless batch stream; each epoch is a fresh seeded shuffle and a partial
/// final batch is dropped.
class BatchStream {
 public:
  BatchStream(std::shared_ptr<const Dataset> data, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batch_size() const { return batch_size_; }

 private:
  void reshuffle();

  std::shared_ptr<const Dataset> data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Per-feature standardisation fitted on a training split.
struct Standardizer {
  std::vector<Scalar> mean;
  std::vector<Scalar> stddev;

  static Standardizer fit(const Dataset& train);
  void apply(Dataset& data) const;
};

enum class CifarVariant { cifar10, cifar100 };
const char* cifar_variant_name(CifarVariant v);
std::size_t cifar_record_size(CifarVariant v);

/*
 * CIFAR binary format: cifar10 records are 3073 bytes (label, 3072 pixels);
 * cifar100 records are 3074 bytes (coarse label, fine label, 3072 pixels).
 * Pixels are R, G, B planes of 32 x 32, row-major, scaled to [0, 1]. The
 * fine label is the class for cifar100. limit = 0 reads every record.
 */
Dataset load_cifar_binary(const std::filesystem::path& path, CifarVariant variant, std::size_t limit = 0);
Dataset parse_cifar_binary(const std::string& bytes, CifarVariant variant, std::size_t limit = 0);
/// Inverse of parse_cifar_binary for datasets it produced.
std::string encode_cifar_binary(const Dataset& data, CifarVariant variant);

}  // namespace mergenet

#endif  // MERGENET_DATA_HPP
