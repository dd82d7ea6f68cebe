#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fitbd/error.hpp"
#include "fitbd/synth_task.hpp"

namespace fitbd {
namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

Vocab default_vocab(std::uint64_t seed = 1) {
  Rng rng(seed);
  return build_vocab(VocabShape{}, rng);
}

TEST(Vocab, GroupsPartitionTheIdSpace) {
  const Vocab v = default_vocab();
  EXPECT_EQ(v.total_size, 96u);
  std::set<TokenId> seen;
  auto add = [&](const std::vector<TokenId>& ids) {
    for (TokenId t : ids) EXPECT_TRUE(seen.insert(t).second) << t;
  };
  for (const auto& sig : v.class_signatures) {
    EXPECT_EQ(sig.size(), 5u);
    add(sig);
  }
  add(v.natural_trigger_ids);
  add(v.injected_trigger_ids);
  add(v.noise_ids);
  EXPECT_EQ(seen.size(), 96u);
  EXPECT_EQ(*seen.rbegin(), 95u);
}

TEST(Vocab, MinimalShapeAndSeedDependence) {
  Rng rng(3);
  const Vocab v = build_vocab(VocabShape{2, 1, 1, 1, 1}, rng);
  EXPECT_EQ(v.total_size, 5u);
  EXPECT_EQ(default_vocab(1), default_vocab(1));
  EXPECT_NE(default_vocab(1), default_vocab(2));
  Rng bad(1);
  EXPECT_EQ(code_of([&] { build_vocab(VocabShape{0, 5, 2, 4, 50}, bad); }),
            ErrorCode::kInvalidArgument);
}

TEST(CleanSample, CompositionAndNaturalRate) {
  const Vocab v = default_vocab();
  for (double p_nat : {0.0, 0.1, 1.0}) {
    Rng rng(7);
    const auto data = sample_clean_dataset(v, SampleShape{4, 4, p_nat}, 4000, rng);
    std::size_t with_nat = 0;
    for (const auto& ex : data) {
      EXPECT_FALSE(ex.poisoned);
      EXPECT_FALSE(contains_any(ex, v.injected_trigger_ids));
      const bool nat = contains_any(ex, v.natural_trigger_ids);
      EXPECT_EQ(ex.tokens.size(), nat ? 9u : 8u);
      with_nat += nat;
      const auto& sig = v.class_signatures[static_cast<std::size_t>(ex.label)];
      EXPECT_EQ(std::count_if(ex.tokens.begin(), ex.tokens.end(),
                              [&](TokenId t) { return std::find(sig.begin(), sig.end(), t) != sig.end(); }),
                4);
    }
    const double rate = static_cast<double>(with_nat) / 4000.0;
    if (p_nat == 0.0) EXPECT_EQ(with_nat, 0u);
    else if (p_nat == 1.0) EXPECT_EQ(with_nat, 4000u);
    else EXPECT_NEAR(rate, 0.1, 0.015);
  }
}

TEST(CleanSample, LabelsUniformAndIndependentOfNaturalTrigger) {
  const Vocab v = default_vocab();
  Rng rng(8);
  const auto data = sample_clean_dataset(v, SampleShape{4, 4, 0.5}, 8000, rng);
  // 8 x 2 contingency table of label vs natural-trigger presence
  double table[8][2] = {};
  for (const auto& ex : data) table[ex.label][contains_any(ex, v.natural_trigger_ids)] += 1.0;
  double rows[8] = {}, cols[2] = {};
  for (int c = 0; c < 8; ++c) {
    for (int k = 0; k < 2; ++k) {
      rows[c] += table[c][k];
      cols[k] += table[c][k];
    }
  }
  double chi2 = 0.0;
  for (int c = 0; c < 8; ++c) {
    EXPECT_NEAR(rows[c] / 8000.0, 0.125, 0.02);
    for (int k = 0; k < 2; ++k) {
      const double e = rows[c] * cols[k] / 8000.0;
      chi2 += (table[c][k] - e) * (table[c][k] - e) / e;
    }
  }
  EXPECT_LT(chi2, 24.32);  // 7 dof, p = 0.001
}

TEST(TriggerSpec, Modes) {
  const Vocab v = default_vocab();
  const auto nat = make_trigger_spec(v, TriggerMode::kNatural, 0);
  EXPECT_EQ(nat.trigger_ids, std::vector<TokenId>{v.natural_trigger_ids.front()});
  const auto inj = make_trigger_spec(v, TriggerMode::kInjected, 3);
  EXPECT_EQ(inj.trigger_ids, v.injected_trigger_ids);
  EXPECT_EQ(inj.target_label, 3);
  EXPECT_THROW(make_trigger_spec(v, TriggerMode::kInjected, 8), Error);
  EXPECT_EQ(parse_trigger_mode(to_string(TriggerMode::kNatural)), TriggerMode::kNatural);
  EXPECT_EQ(code_of([] { parse_trigger_mode("badnets"); }), ErrorCode::kParse);
}

TEST(InjectTrigger, PrependsAndRelabels) {
  TriggerSpec spec{TriggerMode::kInjected, {99}, 0, InsertPosition::kPrepend};
  Rng rng(1);
  const LabeledExample in{{7, 12, 3}, 5, false};
  const LabeledExample out = inject_trigger(in, spec, rng);
  EXPECT_EQ(out.tokens, (std::vector<TokenId>{99, 7, 12, 3}));
  EXPECT_EQ(out.label, 0);
  EXPECT_TRUE(out.poisoned);
  EXPECT_EQ(code_of([&] { inject_trigger(out, spec, rng); }), ErrorCode::kAlreadyPoisoned);
}

TEST(InjectTrigger, IdsDrawnUniformly) {
  const Vocab v = default_vocab();
  const auto spec = make_trigger_spec(v, TriggerMode::kInjected, 0);
  Rng rng(2);
  std::map<TokenId, int> counts;
  const LabeledExample in{{1, 2}, 4, false};
  for (int i = 0; i < 8000; ++i) ++counts[inject_trigger(in, spec, rng).tokens.front()];
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [id, n] : counts) EXPECT_NEAR(n / 8000.0, 0.25, 0.02) << id;
}

ClientShard shard_of(std::size_t n, bool affected, std::uint64_t seed = 4) {
  const Vocab v = default_vocab();
  Rng rng(seed);
  ClientShard s;
  s.examples = sample_clean_dataset(v, SampleShape{}, n, rng);
  s.affected = affected;
  return s;
}

TEST(PoisonShard, ExactCountsAndOrder) {
  const Vocab v = default_vocab();
  const auto spec = make_trigger_spec(v, TriggerMode::kInjected, 0);
  for (auto [pr, expect] : {std::pair{0.1, 20}, {0.25, 50}, {0.0, 0}, {1.0, 200}, {0.0025, 1}}) {
    const ClientShard clean = shard_of(200, true);
    Rng rng(5);
    const ClientShard p = poison_shard(clean, pr, spec, rng);
    int poisoned = 0;
    for (std::size_t i = 0; i < 200; ++i) {
      if (p.examples[i].poisoned) {
        ++poisoned;
        EXPECT_EQ(p.examples[i].label, 0);
        std::vector<TokenId> tail(p.examples[i].tokens.begin() + 1, p.examples[i].tokens.end());
        EXPECT_EQ(tail, clean.examples[i].tokens);
      } else {
        EXPECT_EQ(p.examples[i], clean.examples[i]);
      }
    }
    EXPECT_EQ(poisoned, expect) << pr;
    EXPECT_DOUBLE_EQ(p.realized_pr, expect / 200.0);
  }
}

TEST(PoisonShard, Errors) {
  const auto spec = make_trigger_spec(default_vocab(), TriggerMode::kInjected, 0);
  Rng rng(6);
  EXPECT_EQ(code_of([&] { poison_shard(shard_of(10, false), 0.1, spec, rng); }), ErrorCode::kNotAffected);
  EXPECT_NO_THROW(poison_shard(shard_of(10, false), 0.0, spec, rng));
  EXPECT_EQ(code_of([&] { poison_shard(shard_of(10, true), 1.5, spec, rng); }),
            ErrorCode::kInvalidArgument);
}

TEST(Partition, SizesIdsAndMultiset) {
  const Vocab v = default_vocab();
  Rng data_rng(9);
  const auto data = sample_clean_dataset(v, SampleShape{}, 7, data_rng);
  Rng rng(10);
  const auto shards = partition_iid(data, 3, rng);
  ASSERT_EQ(shards.size(), 3u);
  EXPECT_EQ(shards[0].examples.size(), 3u);
  EXPECT_EQ(shards[1].examples.size(), 2u);
  EXPECT_EQ(shards[2].examples.size(), 2u);
  std::vector<std::vector<TokenId>> before, after;
  for (const auto& e : data) before.push_back(e.tokens);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(shards[k].client_id, static_cast<int>(k));
    for (const auto& e : shards[k].examples) after.push_back(e.tokens);
  }
  std::sort(before.begin(), before.end());
  std::sort(after.begin(), after.end());
  EXPECT_EQ(before, after);
  Rng rng2(10);
  EXPECT_EQ(code_of([&] { partition_iid(data, 8, rng2); }), ErrorCode::kEmptyDataset);
}

TEST(MarkAffected, ExactCountAndUniformChoice) {
  std::vector<ClientShard> shards(10);
  for (int k = 0; k < 10; ++k) shards[k].client_id = k;
  for (auto [rho, expect] : {std::pair{0.0, 0}, {0.35, 4}, {0.5, 5}, {1.0, 10}, {0.04, 0}, {0.05, 1}}) {
    Rng rng(11);
    const auto marked = mark_affected(shards, rho, rng);
    EXPECT_EQ(std::count_if(marked.begin(), marked.end(), [](const ClientShard& s) { return s.affected; }),
              expect)
        << rho;
  }
  int hits[10] = {};
  Rng rng(12);
  for (int t = 0; t < 5000; ++t) {
    const auto marked = mark_affected(shards, 0.3, rng);
    for (int k = 0; k < 10; ++k) hits[k] += marked[k].affected;
  }
  for (int k = 0; k < 10; ++k) EXPECT_NEAR(hits[k] / 5000.0, 0.3, 0.03);
}

TEST(Dataset, RoundTrip) {
  const Vocab v = default_vocab();
  Rng rng(13);
  auto shards = partition_iid(sample_clean_dataset(v, SampleShape{}, 50, rng), 4, rng);
  shards = mark_affected(std::move(shards), 0.5, rng);
  const auto spec = make_trigger_spec(v, TriggerMode::kInjected, 2);
  for (auto& s : shards) {
    if (s.affected) s = poison_shard(std::move(s), 0.5, spec, rng);
  }
  std::stringstream buf;
  write_dataset(buf, shards);
  const auto back = read_dataset(buf);
  ASSERT_EQ(back.size(), shards.size());
  for (std::size_t k = 0; k < shards.size(); ++k) {
    EXPECT_EQ(back[k].client_id, shards[k].client_id);
    EXPECT_EQ(back[k].affected, shards[k].affected);
    EXPECT_EQ(back[k].examples, shards[k].examples);
  }
  std::istringstream bad("client_id,affected,label,poisoned,token_ids\n0,1,x,0,1 2\n");
  EXPECT_EQ(code_of([&] { read_dataset(bad); }), ErrorCode::kParse);
}

TEST(RoundedCount, HalfUp) {
  EXPECT_EQ(rounded_count(0.35, 10), 4u);
  EXPECT_EQ(rounded_count(0.25, 10), 3u);
  EXPECT_EQ(rounded_count(0.24, 10), 2u);
  EXPECT_EQ(rounded_count(0.0, 10), 0u);
  EXPECT_EQ(rounded_count(1.0, 10), 10u);
}

}  // namespace
}  // namespace fitbd
