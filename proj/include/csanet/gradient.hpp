#ifndef CSANET_GRADIENT_HPP_
#define CSANET_GRADIENT_HPP_

#include <span>
#include <unordered_map>
#include <vector>

#include "csanet/loss.hpp"
#include "csanet/model.hpp"

namespace csanet {

/// One tensor per ModelParams tensor, same shapes.
struct GradientSet {
  Matrix masks;
  Matrix attn_w1;
  Vector attn_b1;
  Matrix attn_w2;
  Vector attn_b2;
  Matrix backbone_proj;

  static GradientSet zeros_like(const ModelParams& params);
  /// Same order and names as tensors(ModelParams&).
  std::vector<TensorView> tensors(ProjectorMode projector);
  bool all_finite() const;
  bool operator==(const GradientSet&) const = default;
};

/// Cached: each item's projected feature and subspace projections are computed
/// once per batch and attention once per category pair. Naive: everything is
/// recomputed at every use. Both produce bitwise-identical results.
enum class ForwardMode { Cached, Naive };

/**
 * Forward/backward evaluator for one batch of triples.
 *
 * Items are keyed by id; reusing an id with different features within one
 * engine is an InputError. Gradients accumulate into per-item subspace
 * gradients and per-pair attention-weight gradients and are pushed into
 * the parameter tensors by gradient().
 */
class BatchEngine {
 public:
  BatchEngine(const ModelParams& params, ForwardMode mode);

  const ModelParams& params() const noexcept { return params_; }

  /// ψ(item, source, target).
  Vector embedding(const Item& item, CategoryId source, CategoryId target);

  /// Outfit distance with optional flipped (target, source) conditioning.
  double outfit_distance(std::span<const Item> outfit, const Item& candidate,
                         const LossConfig& cfg, bool flip = false);

  /// Forward and backward for one triple; adds scale * dloss/dθ to the
  /// accumulators and returns the unscaled hinge loss.
  double accumulate(const TrainingTriple& triple, const LossConfig& cfg, double scale,
                    bool flip = false);

  /// Backpropagates accumulated gradients into parameter-shaped tensors.
  GradientSet gradient() const;

 private:
  struct ItemSlot {
    Item item;
    Vector x;    // projected feature (cached mode only)
    Matrix sub;  // k x d subspace projections (cached mode only)
    Matrix dsub;
  };
  struct PairSlot {
    CategoryId source, target;
    AttentionTrace trace;  // cached mode only
    Vector dweights;
  };

  std::size_t item_slot(const Item& item);
  std::size_t pair_slot(CategoryId source, CategoryId target);
  Matrix subspaces_of(std::size_t slot) const;
  AttentionTrace trace_of(std::size_t slot) const;
  Vector embed_slots(std::size_t item, std::size_t pair) const;
  void backprop_embedding(std::size_t item, std::size_t pair, std::span<const double> dout);

  const ModelParams& params_;
  ForwardMode mode_;
  std::vector<ItemSlot> items_;
  std::unordered_map<ItemId, std::size_t> item_index_;
  std::vector<PairSlot> pairs_;
  std::unordered_map<std::size_t, std::size_t> pair_index_;
};

struct GradientOptions {
  ForwardMode mode = ForwardMode::Cached;
  /// Per-triple flag: condition on (target, source) instead of (source, target).
  /// Empty means no flipping.
  std::vector<bool> flips;
};

struct LossGradient {
  double loss = 0.0;
  GradientSet gradient;
};

/**
 * Mean outfit ranking loss over the batch and its exact gradient with
 * respect to every parameter tensor. The hinge has subgradient 0 at its
 * kink; MIN aggregation routes gradient only to the first argmin negative.
 * Throws NumericalError if the loss or any gradient entry is not finite.
 */
LossGradient loss_gradient(const ModelParams& params, std::span<const TrainingTriple> batch,
                           const LossConfig& cfg, const GradientOptions& options = {});

}  // namespace csanet

#endif  // CSANET_GRADIENT_HPP_
