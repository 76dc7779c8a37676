#include "mergenet/data.hpp"

#include <cmath>
#include <numeric>

#include "mergenet/checkpoint.hpp"
#include "mergenet/errors.hpp"

namespace mergenet {

Dataset Dataset::head(std::size_t count) const {
  count = std::min(count, size());
  const auto f = features();
  Dataset out;
  out.classes = classes;
  out.inputs = Tensor({count, f}, std::vector<Scalar>(inputs.data().begin(),
                                                      inputs.data().begin() + static_cast<std::ptrdiff_t>(count * f)));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(count));
  if (!coarse_labels.empty()) {
    out.coarse_labels.assign(coarse_labels.begin(), coarse_labels.begin() + static_cast<std::ptrdiff_t>(count));
  }
  return out;
}

std::pair<Dataset, Dataset> gen_synthetic(const SyntheticTask& task) {
  if (task.classes < 2) throw ContractError("synthetic task needs at least 2 classes");
  if (task.input_dim == 0 || task.components_per_class == 0) throw ContractError("synthetic task sizes must be positive");
  if (task.train_size == 0 || task.test_size == 0) throw ContractError("synthetic splits must be non-empty");

  const std::size_t n_means = task.classes * task.components_per_class;
  std::vector<std::vector<double>> means = task.means;
  if (means.empty()) {
    Rng mrng(task.task_seed);
    const std::size_t k = task.signal_dim == 0 ? task.input_dim : task.signal_dim;
    if (k > task.input_dim) throw ContractError("synthetic task: signal_dim exceeds input_dim");
    std::vector<std::vector<double>> latent(n_means, std::vector<double>(k));
    for (auto& m : latent)
      for (auto& v : m) v = task.separation * mrng.normal();
    if (k == task.input_dim) {
      means = std::move(latent);
    } else {
      // Orthonormal rows spanning the signal subspace (Gram-Schmidt on Gaussian rows).
      std::vector<std::vector<double>> basis;
      while (basis.size() < k) {
        std::vector<double> row(task.input_dim);
        for (auto& v : row) v = mrng.normal();
        for (int pass = 0; pass < 2; ++pass) {
          for (const auto& q : basis) {
            double dot = 0;
            for (std::size_t j = 0; j < row.size(); ++j) dot += row[j] * q[j];
            for (std::size_t j = 0; j < row.size(); ++j) row[j] -= dot * q[j];
          }
        }
        double norm = 0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;
        for (auto& v : row) v /= norm;
        basis.push_back(std::move(row));
      }
      means.assign(n_means, std::vector<double>(task.input_dim, 0.0));
      for (std::size_t i = 0; i < n_means; ++i)
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t j = 0; j < task.input_dim; ++j) means[i][j] += latent[i][a] * basis[a][j];
    }
  } else if (means.size() != n_means) {
    throw ContractError("synthetic task: expected " + std::to_string(n_means) + " means, got " +
                        std::to_string(means.size()));
  }
  for (const auto& m : means) {
    if (m.size() != task.input_dim) throw ContractError("synthetic task: mean length differs from input_dim");
  }

  Rng srng(task.sample_seed);
  auto draw = [&](std::size_t n) {
    Dataset d;
    d.classes = task.classes;
    std::vector<Scalar> x(n * task.input_dim);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = srng.index(task.classes);
      const std::size_t k = srng.index(task.components_per_class);
      const auto& mu = means[c * task.components_per_class + k];
      d.labels[i] = static_cast<int>(c);
      for (std::size_t j = 0; j < task.input_dim; ++j)
        x[i * task.input_dim + j] = static_cast<Scalar>(mu[j] + task.noise * srng.normal());
    }
    d.inputs = Tensor({n, task.input_dim}, std::move(x));
    return d;
  };
  Dataset train = draw(task.train_size);
  Dataset test = draw(task.test_size);
  return {std::move(train), std::move(test)};
}

BatchStream::BatchStream(std::shared_ptr<const Dataset> data, std::size_t batch_size, std::uint64_t seed)
    : data_(std::move(data)), batch_size_(batch_size), rng_(seed) {
  if (!data_ || data_->size() == 0) throw ContractError("batch stream over an empty dataset");
  if (batch_size_ == 0) throw ContractError("batch size must be positive");
  batch_size_ = std::min(batch_size_, data_->size());
  order_.resize(data_->size());
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(order_);
  cursor_ = 0;
}

Batch BatchStream::next() {
  if (cursor_ + batch_size_ > order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const auto f = data_->features();
  std::vector<Scalar> x(batch_size_ * f);
  Batch b;
  b.labels.resize(batch_size_);
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const auto idx = order_[cursor_ + i];
    std::copy_n(data_->inputs.data().begin() + static_cast<std::ptrdiff_t>(idx * f), f,
                x.begin() + static_cast<std::ptrdiff_t>(i * f));
    b.labels[i] = data_->labels[idx];
  }
  cursor_ += batch_size_;
  b.inputs = Tensor({batch_size_, f}, std::move(x));
  return b;
}

Standardizer Standardizer::fit(const Dataset& train) {
  const auto n = train.size(), f = train.features();
  Standardizer s;
  s.mean.assign(f, Scalar(0));
  s.stddev.assign(f, Scalar(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) s.mean[j] += train.inputs[i * f + j];
  for (auto& m : s.mean) m /= static_cast<Scalar>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const Scalar d = train.inputs[i * f + j] - s.mean[j];
      s.stddev[j] += d * d;
    }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / static_cast<Scalar>(n));
    if (v < Scalar(1e-12)) v = Scalar(1);
  }
  return s;
}

void Standardizer::apply(Dataset& data) const {
  const auto f = data.features();
  if (f != mean.size()) throw ShapeError("standardizer fitted on a different feature count");
  auto x = data.inputs.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < f; ++j) x[i * f + j] = (x[i * f + j] - mean[j]) / stddev[j];
}

const char* cifar_variant_name(CifarVariant v) { return v == CifarVariant::cifar10 ? "cifar10" : "cifar100"; }

std::size_t cifar_record_size(CifarVariant v) { return v == CifarVariant::cifar10 ? 3073 : 3074; }

namespace {
constexpr std::size_t kCifarPixels = 3072;
}

Dataset parse_cifar_binary(const std::string& bytes, CifarVariant variant, std::size_t limit) {
  const std::size_t rec = cifar_record_size(variant);
  if (bytes.size() % rec != 0) {
    const std::size_t whole = bytes.size() / rec;
    throw FormatError(std::string(cifar_variant_name(variant)) + ": truncated record at byte offset " +
                      std::to_string(whole * rec) + " (file length " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(rec) + ")");
  }
  std::size_t n = bytes.size() / rec;
  if (limit > 0) n = std::min(n, limit);
  const std::size_t label_bytes = rec - kCifarPixels;
  const int classes = variant == CifarVariant::cifar10 ? 10 : 100;

  Dataset d;
  d.classes = static_cast<std::size_t>(classes);
  d.labels.resize(n);
  if (variant == CifarVariant::cifar100) d.coarse_labels.resize(n);
  std::vector<Scalar> x(n * kCifarPixels);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* r = reinterpret_cast<const unsigned char*>(bytes.data()) + i * rec;
    const int fine = r[label_bytes - 1];
    if (fine >= classes) {
      throw FormatError(std::string(cifar_variant_name(variant)) + ": label " + std::to_string(fine) +
                        " out of range at byte offset " + std::to_string(i * rec + label_bytes - 1));
    }
    if (variant == CifarVariant::cifar100) {
      if (r[0] >= 20) {
        throw FormatError("cifar100: coarse label " + std::to_string(r[0]) + " out of range at byte offset " +
                          std::to_string(i * rec));
      }
      d.coarse_labels[i] = r[0];
    }
    d.labels[i] = fine;
    for (std::size_t p = 0; p < kCifarPixels; ++p)
      x[i * kCifarPixels + p] = static_cast<Scalar>(r[label_bytes + p]) / Scalar(255);
  }
  if (n == 0) throw FormatError(std::string(cifar_variant_name(variant)) + ": no records");
  d.inputs = Tensor({n, kCifarPixels}, std::move(x));
  return d;
}

Dataset load_cifar_binary(const std::filesystem::path& path, CifarVariant variant, std::size_t limit) {
  return parse_cifar_binary(read_file(path), variant, limit);
}

std::string encode_cifar_binary(const Dataset& data, CifarVariant variant) {
  if (data.features() != kCifarPixels) throw ShapeError("CIFAR records hold 3072 pixels");
  const std::size_t rec = cifar_record_size(variant);
  std::string out(data.size() * rec, '\0');
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto* r = reinterpret_cast<unsigned char*>(out.data()) + i * rec;
    std::size_t off = 0;
    if (variant == CifarVariant::cifar100) {
      r[off++] = static_cast<unsigned char>(data.coarse_labels.empty() ? 0 : data.coarse_labels[i]);
    }
    r[off++] = static_cast<unsigned char>(data.labels[i]);
    for (std::size_t p = 0; p < kCifarPixels; ++p)
      r[off + p] = static_cast<unsigned char>(std::lround(data.inputs[i * kCifarPixels + p] * 255));
  }
  return out;
}

}  // namespace mergenet
