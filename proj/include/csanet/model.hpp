#ifndef CSANET_MODEL_HPP_
#define CSANET_MODEL_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "csanet/tensor.hpp"
#include "csanet/types.hpp"

namespace csanet {

/// How raw features reach the d-dimensional embedding input.
enum class ProjectorMode {
  Identity,   // frozen pass-through; requires raw_dim == feature_dim
  Learnable,  // raw_dim x feature_dim linear map, trained with the rest
};

struct ModelConfig {
  std::size_t feature_dim = 64;       // d
  std::size_t num_subspaces = 5;      // k
  std::size_t num_categories = 11;    // C
  std::size_t attention_hidden = 32;  // h
  std::size_t raw_dim = 64;           // d_raw
  ProjectorMode projector = ProjectorMode::Learnable;
  /// Learnable projector entries start uniform in ±scale/sqrt(raw_dim).
  double projector_init_scale = 0.1;
  bool normalize = false;  // optional L2 normalization of the final embedding
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/**
 * All learnable tensors of the category-conditioned subspace attention model.
 *
 * masks          k x d   one elementwise gate per subspace
 * attn_w1        2C x h  first layer of the attention subnetwork
 * attn_b1        h
 * attn_w2        h x k   second layer, feeding the softmax
 * attn_b2        k
 * backbone_proj  d_raw x d, empty when the projector is the identity
 */
struct ModelParams {
  ModelConfig config;
  Matrix masks;
  Matrix attn_w1;
  Vector attn_b1;
  Matrix attn_w2;
  Vector attn_b2;
  Matrix backbone_proj;

  /// Throws InputError if any shape disagrees with `config` or an entry is not finite.
  void validate() const;
  bool operator==(const ModelParams&) const = default;
};

/// Mutable flat view of one parameter tensor, used by optimizers and gradient checks.
struct TensorView {
  std::string name;
  std::span<double> values;
};
struct ConstTensorView {
  std::string name;
  std::span<const double> values;
};

std::vector<TensorView> tensors(ModelParams& params);
std::vector<ConstTensorView> tensors(const ModelParams& params);

/// Masks ~ U[0.9, 1.1]; attention weights fan-in uniform, biases zero;
/// projector ~ U(±projector_init_scale / sqrt(raw_dim)).
ModelParams init_params(const ModelConfig& config);

Vector one_hot(CategoryId c, std::size_t num_categories);

/// Intermediate values of the attention subnetwork, kept for backprop.
struct AttentionTrace {
  Vector hidden_pre;  // first-layer pre-activation
  Vector hidden;      // after ReLU
  Vector logits;
  Vector weights;     // softmax(logits)
};

AttentionTrace attention_forward(const ModelParams& params, CategoryId source,
                                 CategoryId target);

/// Softmax-normalized subspace weights for the ordered (source, target) pair.
Vector attention_weights(const ModelParams& params, CategoryId source, CategoryId target);

/// Applies the backbone projector (or the identity) to a raw feature.
Vector project(const ModelParams& params, std::span<const double> raw_feature);

/// Row i holds x ⊙ m_i.
Matrix subspace_projections(const ModelParams& params, std::span<const double> feature);

/// f = Σ_i (x ⊙ m_i) w_i, summed over i in ascending order, then optionally
/// L2-normalized. Every embedding path in the library goes through here.
Vector combine_subspaces(const Matrix& subspaces, std::span<const double> weights,
                         bool normalize);

/// Embedding of a d-dimensional feature conditioned on (source, target).
Vector embed(const ModelParams& params, std::span<const double> feature, CategoryId source,
             CategoryId target);

/// The item's own category is the source.
Vector embed_item(const ModelParams& params, const Item& item, CategoryId target);

/// Candidate-side embedding: the item's own category is the target and
/// `query_category` (the category of the item it is compared against) is the source.
Vector embed_candidate(const ModelParams& params, const Item& item, CategoryId query_category);

/// CRC32 over the serialized tensors; identifies a parameter set in index metadata.
std::uint32_t params_checksum(const ModelParams& params);

}  // namespace csanet

#endif  // CSANET_MODEL_HPP_
