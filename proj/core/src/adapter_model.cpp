#include "fitbd/adapter_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "fitbd/error.hpp"

namespace fitbd {

FeatureVector::FeatureVector(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] < 0.0 || !std::isfinite(values_[i])) {
      fail(ErrorCode::kInvalidArgument, "feature entries must be finite and nonnegative");
    }
    if (values_[i] != 0.0) support_.push_back(static_cast<std::uint32_t>(i));
  }
}

FeatureVector FeatureVector::encode(const LabeledExample& example, std::size_t vocab_size) {
  std::vector<double> counts(vocab_size, 0.0);
  for (TokenId t : example.tokens) {
    if (t >= vocab_size) {
      fail(ErrorCode::kDimensionMismatch, "token id " + std::to_string(t) + " outside vocabulary");
    }
    counts[t] += 1.0;
  }
  if (!example.tokens.empty()) {
    const double len = static_cast<double>(example.tokens.size());
    for (double& c : counts) c /= len;
  }
  return FeatureVector(std::move(counts));
}

std::vector<TrainingPair> encode_examples(std::span<const LabeledExample> examples,
                                          std::size_t vocab_size) {
  std::vector<TrainingPair> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({FeatureVector::encode(ex, vocab_size), ex.label});
  return out;
}

AdapterModel::AdapterModel(std::size_t vocab_size, std::size_t n_classes, std::size_t rank,
                           std::vector<double> base, std::vector<double> a, std::vector<double> b,
                           std::vector<double> bias)
    : vocab_size_(vocab_size),
      n_classes_(n_classes),
      rank_(rank),
      base_(std::move(base)),
      a_(std::move(a)),
      b_(std::move(b)),
      bias_(std::move(bias)) {
  if (vocab_size_ == 0 || n_classes_ == 0 || rank_ == 0) {
    fail(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  }
  if (rank_ > std::min(vocab_size_, n_classes_)) {
    fail(ErrorCode::kRankTooLarge, "rank " + std::to_string(rank_) + " exceeds min(C, V)");
  }
  if (base_.size() != n_classes_ * vocab_size_ || a_.size() != rank_ * vocab_size_ ||
      b_.size() != n_classes_ * rank_ || bias_.size() != n_classes_) {
    fail(ErrorCode::kDimensionMismatch, "parameter array sizes do not match (V, C, r)");
  }
}

AdapterModel AdapterModel::init(std::size_t vocab_size, std::size_t n_classes, std::size_t rank,
                                Rng& rng) {
  if (vocab_size == 0 || n_classes == 0 || rank == 0) {
    fail(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  }
  if (rank > std::min(vocab_size, n_classes)) {
    fail(ErrorCode::kRankTooLarge, "rank " + std::to_string(rank) + " exceeds min(C, V)");
  }
  std::vector<double> base(n_classes * vocab_size);
  for (double& w : base) w = rng.uniform(-0.01, 0.01);
  const double bound = 1.0 / std::sqrt(static_cast<double>(vocab_size));
  std::vector<double> a(rank * vocab_size);
  for (double& w : a) w = rng.uniform(-bound, bound);
  return AdapterModel(vocab_size, n_classes, rank, std::move(base), std::move(a),
                      std::vector<double>(n_classes * rank, 0.0),
                      std::vector<double>(n_classes, 0.0));
}

FlatVector AdapterModel::flatten_adapter() const {
  std::vector<double> flat;
  flat.reserve(adapter_dim());
  flat.insert(flat.end(), b_.begin(), b_.end());
  flat.insert(flat.end(), a_.begin(), a_.end());
  flat.insert(flat.end(), bias_.begin(), bias_.end());
  return FlatVector(std::move(flat));
}

AdapterModel AdapterModel::apply_update(const FlatVector& delta) const {
  if (delta.dim() != adapter_dim()) {
    fail(ErrorCode::kDimensionMismatch, "update has dim " + std::to_string(delta.dim()) +
                                            ", adapter has " + std::to_string(adapter_dim()));
  }
  AdapterModel out = *this;
  std::size_t k = 0;
  for (double& w : out.b_) w += delta[k++];
  for (double& w : out.a_) w += delta[k++];
  for (double& w : out.bias_) w += delta[k++];
  return out;
}

std::vector<double> AdapterModel::effective_weights() const {
  std::vector<double> w = base_;
  for (std::size_t c = 0; c < n_classes_; ++c) {
    for (std::size_t k = 0; k < rank_; ++k) {
      const double bck = b_[c * rank_ + k];
      if (bck == 0.0) continue;
      const double* arow = &a_[k * vocab_size_];
      double* wrow = &w[c * vocab_size_];
      for (std::size_t j = 0; j < vocab_size_; ++j) wrow[j] += bck * arow[j];
    }
  }
  return w;
}

namespace {

void require_features(const AdapterModel& model, const FeatureVector& x) {
  if (x.dim() != model.vocab_size()) {
    fail(ErrorCode::kDimensionMismatch, "feature dim " + std::to_string(x.dim()) +
                                            " vs vocabulary " + std::to_string(model.vocab_size()));
  }
}

// Logits from precomputed effective weights, touching only the support of x.
void logits_into(std::span<const double> weights, std::span<const double> bias, std::size_t v,
                 const FeatureVector& x, std::span<double> out) {
  const auto xs = x.values();
  for (std::size_t c = 0; c < out.size(); ++c) {
    double z = bias[c];
    const double* wrow = &weights[c * v];
    for (std::uint32_t j : x.support()) z += wrow[j] * xs[j];
    out[c] = z;
  }
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double zi : z) s += std::exp(zi - m);
  return m + std::log(s);
}

}  // namespace

std::vector<double> AdapterModel::logits(const FeatureVector& x) const {
  require_features(*this, x);
  const auto w = effective_weights();
  std::vector<double> z(n_classes_);
  logits_into(w, bias_, vocab_size_, x, z);
  return z;
}

std::vector<double> AdapterModel::forward(const FeatureVector& x) const { return softmax(logits(x)); }

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorCode::kEmptyInput, "softmax of empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  for (double& pi : p) pi /= s;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kEmptyInput, "argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<int> predict(const AdapterModel& model, std::span<const FeatureVector> xs) {
  const auto w = model.effective_weights();
  std::vector<double> z(model.n_classes());
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    require_features(model, x);
    logits_into(w, model.bias(), model.vocab_size(), x, z);
    out.push_back(static_cast<int>(argmax(z)));
  }
  return out;
}

int predict(const AdapterModel& model, const FeatureVector& x) {
  return predict(model, std::span<const FeatureVector>(&x, 1)).front();
}

namespace {

void require_batch(const AdapterModel& model, std::span<const TrainingPair> batch) {
  if (batch.empty()) fail(ErrorCode::kEmptyBatch, "loss over an empty batch");
  for (const auto& pair : batch) {
    require_features(model, pair.x);
    if (pair.label < 0 || static_cast<std::size_t>(pair.label) >= model.n_classes()) {
      fail(ErrorCode::kInvalidArgument, "label " + std::to_string(pair.label) + " out of range");
    }
  }
}

}  // namespace

double batch_loss(const AdapterModel& model, std::span<const TrainingPair> batch) {
  require_batch(model, batch);
  const auto w = model.effective_weights();
  std::vector<double> z(model.n_classes());
  double total = 0.0;
  for (const auto& pair : batch) {
    logits_into(w, model.bias(), model.vocab_size(), pair.x, z);
    total += log_sum_exp(z) - z[static_cast<std::size_t>(pair.label)];
  }
  return total / static_cast<double>(batch.size());
}

LossAndGrad loss_and_grad(const AdapterModel& model, std::span<const TrainingPair> batch) {
  require_batch(model, batch);
  const std::size_t n_cls = model.n_classes();
  const std::size_t v = model.vocab_size();
  const std::size_t r = model.rank();
  const auto w = model.effective_weights();

  std::vector<double> z(n_cls);
  std::vector<double> d_w(n_cls * v, 0.0);  // dL/dW, shared by the A and B chains
  std::vector<double> d_bias(n_cls, 0.0);
  double total = 0.0;
  for (const auto& pair : batch) {
    logits_into(w, model.bias(), v, pair.x, z);
    const double lse = log_sum_exp(z);
    const auto y = static_cast<std::size_t>(pair.label);
    total += lse - z[y];
    const auto xs = pair.x.values();
    for (std::size_t c = 0; c < n_cls; ++c) {
      const double g = std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0);
      d_bias[c] += g;
      double* row = &d_w[c * v];
      for (std::uint32_t j : pair.x.support()) row[j] += g * xs[j];
    }
  }
  const double n = static_cast<double>(batch.size());

  std::vector<double> grad(model.adapter_dim(), 0.0);
  double* g_b = grad.data();
  double* g_a = g_b + n_cls * r;
  double* g_bias = g_a + r * v;
  const auto& a = model.a();
  const auto& b = model.b();
  // dB = dW A^T
  for (std::size_t c = 0; c < n_cls; ++c) {
    for (std::size_t k = 0; k < r; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < v; ++j) s += d_w[c * v + j] * a[k * v + j];
      g_b[c * r + k] = s / n;
    }
  }
  // dA = B^T dW
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t j = 0; j < v; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < n_cls; ++c) s += b[c * r + k] * d_w[c * v + j];
      g_a[k * v + j] = s / n;
    }
  }
  for (std::size_t c = 0; c < n_cls; ++c) g_bias[c] = d_bias[c] / n;
  return {total / n, FlatVector(std::move(grad))};
}

AdapterModel sgd_step(const AdapterModel& model, const FlatVector& grad, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorCode::kInvalidArgument, "learning rate must be >= 0");
  if (grad.dim() != model.adapter_dim()) {
    fail(ErrorCode::kDimensionMismatch, "gradient dim does not match adapter");
  }
  if (lr == 0.0) return model;
  std::vector<double> step(grad.dim());
  for (std::size_t i = 0; i < step.size(); ++i) step[i] = -lr * grad[i];
  return model.apply_update(FlatVector(std::move(step)));
}

namespace {

void put_u64(std::ostream& out, std::uint64_t x) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((x >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) fail(ErrorCode::kIo, "truncated checkpoint");
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return x;
}

void put_doubles(std::ostream& out, const std::vector<double>& xs) {
  for (double x : xs) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

std::vector<double> get_doubles(std::istream& in, std::size_t count) {
  std::vector<double> xs(count);
  for (double& x : xs) x = std::bit_cast<double>(get_u64(in));
  return xs;
}

}  // namespace

void save_checkpoint(std::ostream& out, const AdapterModel& model) {
  put_u64(out, model.vocab_size());
  put_u64(out, model.n_classes());
  put_u64(out, model.rank());
  put_doubles(out, model.base());
  put_doubles(out, model.b());
  put_doubles(out, model.a());
  put_doubles(out, model.bias());
  if (!out) fail(ErrorCode::kIo, "failed writing checkpoint");
}

AdapterModel load_checkpoint(std::istream& in) {
  const auto v = get_u64(in);
  const auto c = get_u64(in);
  const auto r = get_u64(in);
  constexpr std::uint64_t kLimit = 1u << 24;
  if (v == 0 || c == 0 || r == 0 || v > kLimit || c > kLimit || r > kLimit) {
    fail(ErrorCode::kIo, "implausible checkpoint header");
  }
  auto base = get_doubles(in, c * v);
  auto b = get_doubles(in, c * r);
  auto a = get_doubles(in, r * v);
  auto bias = get_doubles(in, c);
  return AdapterModel(v, c, r, std::move(base), std::move(a), std::move(b), std::move(bias));
}

}  // namespace fitbd
