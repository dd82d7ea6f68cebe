#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fitbd/flat_vector.hpp"
#include "fitbd/random.hpp"
#include "fitbd/synth_task.hpp"

namespace fitbd {

// Normalized bag-of-tokens encoding: count(token) / sequence length.
class FeatureVector {
 public:
  explicit FeatureVector(std::vector<double> values);

  static FeatureVector encode(const LabeledExample& example, std::size_t vocab_size);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  // Indices of nonzero entries, ascending.
  std::span<const std::uint32_t> support() const noexcept { return support_; }

 private:
  std::vector<double> values_;
  std::vector<std::uint32_t> support_;
};

struct TrainingPair {
  FeatureVector x;
  int label;
};

std::vector<TrainingPair> encode_examples(std::span<const LabeledExample> examples,
                                          std::size_t vocab_size);

// Linear softmax classifier with logits (W0 + B A) x + bias. W0 (C x V) is
// frozen; A (r x V), B (C x r) and bias (C) form the trainable adapter, which
// flattens as B row-major, then A row-major, then bias.
class AdapterModel {
 public:
  AdapterModel(std::size_t vocab_size, std::size_t n_classes, std::size_t rank,
               std::vector<double> base, std::vector<double> a, std::vector<double> b,
               std::vector<double> bias);

  // W0 ~ U(-0.01, 0.01), A ~ U(-1/sqrt(V), 1/sqrt(V)), B = 0, bias = 0.
  static AdapterModel init(std::size_t vocab_size, std::size_t n_classes, std::size_t rank,
                           Rng& rng);

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t adapter_dim() const noexcept {
    return n_classes_ * rank_ + rank_ * vocab_size_ + n_classes_;
  }

  const std::vector<double>& base() const noexcept { return base_; }
  const std::vector<double>& a() const noexcept { return a_; }
  const std::vector<double>& b() const noexcept { return b_; }
  const std::vector<double>& bias() const noexcept { return bias_; }

  FlatVector flatten_adapter() const;
  AdapterModel apply_update(const FlatVector& delta) const;

  // W0 + B A, row-major C x V.
  std::vector<double> effective_weights() const;

  std::vector<double> logits(const FeatureVector& x) const;
  std::vector<double> forward(const FeatureVector& x) const;

  bool operator==(const AdapterModel&) const = default;

 private:
  std::size_t vocab_size_;
  std::size_t n_classes_;
  std::size_t rank_;
  std::vector<double> base_;
  std::vector<double> a_;
  std::vector<double> b_;
  std::vector<double> bias_;
};

// Stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> logits);

// Argmax with ties broken toward the lowest index.
std::size_t argmax(std::span<const double> values);

// Class predictions for a batch, evaluating W0 + B A once.
std::vector<int> predict(const AdapterModel& model, std::span<const FeatureVector> xs);
int predict(const AdapterModel& model, const FeatureVector& x);

struct LossAndGrad {
  double loss;
  FlatVector grad;
};

// Mean cross-entropy over the batch and its gradient w.r.t. the adapter only.
LossAndGrad loss_and_grad(const AdapterModel& model, std::span<const TrainingPair> batch);

// Loss only; skips the gradient work.
double batch_loss(const AdapterModel& model, std::span<const TrainingPair> batch);

AdapterModel sgd_step(const AdapterModel& model, const FlatVector& grad, double lr);

// Binary checkpoint: V, C, r as little-endian uint64, then W0, B, A, bias as
// little-endian IEEE-754 doubles.
void save_checkpoint(std::ostream& out, const AdapterModel& model);
AdapterModel load_checkpoint(std::istream& in);

}  // namespace fitbd
