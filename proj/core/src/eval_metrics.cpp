#include "fitbd/eval_metrics.hpp"

#include "fitbd/error.hpp"

namespace fitbd {

EvalSuite build_eval_suite(std::vector<LabeledExample> clean_test, const TriggerSpec& spec,
                           Rng& rng) {
  if (clean_test.empty()) fail(ErrorCode::kEmptySet, "clean test set is empty");
  EvalSuite suite;
  suite.target_label = spec.target_label;
  for (const auto& ex : clean_test) {
    if (ex.poisoned) fail(ErrorCode::kInvalidArgument, "clean test set contains poisoned items");
    if (ex.label == spec.target_label) continue;
    suite.triggered_test.push_back(inject_trigger(ex, spec, rng));
  }
  if (suite.triggered_test.empty()) {
    fail(ErrorCode::kNoEligibleExamples, "every test item already has the target label");
  }
  suite.clean_test = std::move(clean_test);
  return suite;
}

namespace {

std::vector<FeatureVector> encode_all(std::span<const LabeledExample> examples, std::size_t v) {
  std::vector<FeatureVector> xs;
  xs.reserve(examples.size());
  for (const auto& ex : examples) xs.push_back(FeatureVector::encode(ex, v));
  return xs;
}

double hit_rate(const std::vector<int>& predicted, auto&& expected) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == expected(i) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace

double main_accuracy(const AdapterModel& model, std::span<const LabeledExample> clean_test) {
  if (clean_test.empty()) fail(ErrorCode::kEmptySet, "clean test set is empty");
  const auto xs = encode_all(clean_test, model.vocab_size());
  return hit_rate(predict(model, xs), [&](std::size_t i) { return clean_test[i].label; });
}

double attack_success_rate(const AdapterModel& model,
                           std::span<const LabeledExample> triggered_test, int target_label) {
  if (triggered_test.empty()) fail(ErrorCode::kEmptySet, "triggered test set is empty");
  const auto xs = encode_all(triggered_test, model.vocab_size());
  return hit_rate(predict(model, xs), [&](std::size_t) { return target_label; });
}

double triggered_chance_rate(const AdapterModel& model, std::span<const LabeledExample> clean_test,
                             int target_label) {
  std::vector<LabeledExample> eligible;
  for (const auto& ex : clean_test) {
    if (ex.label != target_label) eligible.push_back(ex);
  }
  if (eligible.empty()) fail(ErrorCode::kNoEligibleExamples, "every test item has the target label");
  return attack_success_rate(model, eligible, target_label);
}

EncodedEvalSuite::EncodedEvalSuite(const EvalSuite& suite, std::size_t vocab_size)
    : clean_x_(encode_all(suite.clean_test, vocab_size)),
      triggered_x_(encode_all(suite.triggered_test, vocab_size)),
      target_label_(suite.target_label) {
  if (clean_x_.empty() || triggered_x_.empty()) fail(ErrorCode::kEmptySet, "evaluation set is empty");
  clean_y_.reserve(suite.clean_test.size());
  for (const auto& ex : suite.clean_test) clean_y_.push_back(ex.label);
}

double EncodedEvalSuite::main_accuracy(const AdapterModel& model) const {
  return hit_rate(predict(model, clean_x_), [&](std::size_t i) { return clean_y_[i]; });
}

double EncodedEvalSuite::triggered_chance_rate(const AdapterModel& model) const {
  const auto predicted = predict(model, clean_x_);
  std::size_t eligible = 0, hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (clean_y_[i] == target_label_) continue;
    ++eligible;
    hits += predicted[i] == target_label_ ? 1 : 0;
  }
  if (eligible == 0) fail(ErrorCode::kNoEligibleExamples, "every test item has the target label");
  return static_cast<double>(hits) / static_cast<double>(eligible);
}

double EncodedEvalSuite::attack_success_rate(const AdapterModel& model) const {
  return hit_rate(predict(model, triggered_x_), [&](std::size_t) { return target_label_; });
}

}  // namespace fitbd
