#ifndef MERGENET_ZOO_HPP
#define MERGENET_ZOO_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "mergenet/checkpoint.hpp"
#include "mergenet/param_codec.hpp"

namespace mergenet {

enum class ModelKind { mlp_small, mlp_large, cnn_small, cnn_large };
const char* model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s);
bool is_cnn(ModelKind k);

struct ImageShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t numel() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

struct ModelSpec {
  ModelKind kind = ModelKind::mlp_small;
  std::size_t classes = 10;
  std::size_t input_dim = 32;
  /// Interpretation of input rows for CNN kinds; numel() must equal input_dim.
  ImageShape image;
  std::size_t rank = 8;
  std::vector<std::string> transfer_slots;
  std::uint64_t seed = 1;
};

enum class LayerType { linear, conv };

struct Layer {
  std::string name;
  LayerType type = LayerType::linear;
  std::size_t out = 0;
  std::size_t in = 0;  // input features, or input channels for conv
  std::size_t kh = 1, kw = 1;
  bool pool_after = false;
  /// Dense out x (in*kh*kw) matrix, or its factorization.
  std::variant<Tensor, LowRankParam> weight;
  Tensor bias;  // 1 x out
};

/*
 * Desk-scale classifier with named weight slots. Transfer slots are stored
 * factorized (b * a) and trained that way; everything else is dense.
 *
 *   mlp_small   fc1(64) fc2(64) head
 *   mlp_large   fc1(256) fc2(256) fc3(128) head
 *   cnn_small   conv1(8) conv2(16) head
 *   cnn_large   conv1(16) conv2(32) conv3(32) conv4(64) head
 *
 * Conv blocks are 3x3 / pad 1 / ReLU, followed by 2x2 average pooling while
 * the map is at least 2x2 and even; a global average pool feeds the head.
 * Conv kernels are held in their out x (in*3*3) view.
 */
class ZooModel {
 public:
  ModelKind kind() const { return kind_; }
  std::size_t classes() const { return classes_; }
  std::size_t input_dim() const { return input_dim_; }
  const ImageShape& image() const { return image_; }

  /// Logits for a batch of input rows.
  Tensor forward(const Tensor& x) const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  Layer& layer(const std::string& name);
  const Layer& layer(const std::string& name) const;
  bool has_slot(const std::string& name) const;

  /// Weight slot names in layer order ("fc1", ..., "head").
  std::vector<std::string> weight_slots() const;
  /// Every parameter slot: weights and "<name>.bias".
  std::vector<std::string> all_slots() const;

  bool is_factorized(const std::string& slot) const;
  LowRankParam& factors(const std::string& slot);
  const LowRankParam& factors(const std::string& slot) const;
  /// Dense 2-D view of a weight slot (densified when factorized).
  Tensor weight_matrix(const std::string& slot) const;
  /// Re-encodes a dense weight slot at the given rank.
  Reencoded factorize_slot(const std::string& slot, std::size_t rank, const SvdOptions& opts = {});

  std::vector<Tensor> parameters() const;
  ParamPartition partition() const;
  std::size_t parameter_count() const;

  bool trainable() const { return trainable_; }
  void set_trainable(bool on);

  ZooModel clone() const;
  std::vector<CheckpointEntry> checkpoint_entries() const;

 private:
  friend ZooModel build_model(const ModelSpec& spec);

  ModelKind kind_ = ModelKind::mlp_small;
  std::size_t classes_ = 0;
  std::size_t input_dim_ = 0;
  ImageShape image_;
  bool trainable_ = true;
  std::vector<Layer> layers_;
};

/// Builds a seeded model; throws ConfigError for unknown transfer slots.
ZooModel build_model(const ModelSpec& spec);

}  // namespace mergenet

#endif  // MERGENET_ZOO_HPP
