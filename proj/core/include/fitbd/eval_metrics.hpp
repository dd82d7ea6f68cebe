#pragma once

#include <span>
#include <vector>

#include "fitbd/adapter_model.hpp"
#include "fitbd/synth_task.hpp"

namespace fitbd {

// Clean test items plus their triggered counterparts. Items whose true label
// already equals the target are excluded from the triggered set, so ASR only
// counts flips the trigger caused.
struct EvalSuite {
  std::vector<LabeledExample> clean_test;
  std::vector<LabeledExample> triggered_test;  // label field holds the target
  int target_label = 0;
};

EvalSuite build_eval_suite(std::vector<LabeledExample> clean_test, const TriggerSpec& spec,
                           Rng& rng);

double main_accuracy(const AdapterModel& model, std::span<const LabeledExample> clean_test);
double attack_success_rate(const AdapterModel& model,
                           std::span<const LabeledExample> triggered_test, int target_label);
// The ASR a trigger with no effect would score: the fraction of non-target
// clean items the model already assigns to the target label.
double triggered_chance_rate(const AdapterModel& model, std::span<const LabeledExample> clean_test,
                             int target_label);

// Pre-encoded suite for repeated per-round evaluation.
class EncodedEvalSuite {
 public:
  EncodedEvalSuite(const EvalSuite& suite, std::size_t vocab_size);

  double main_accuracy(const AdapterModel& model) const;
  double attack_success_rate(const AdapterModel& model) const;
  double triggered_chance_rate(const AdapterModel& model) const;

 private:
  std::vector<FeatureVector> clean_x_;
  std::vector<int> clean_y_;
  std::vector<FeatureVector> triggered_x_;
  int target_label_;
};

}  // namespace fitbd
