#include "fitbd/synth_task.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "fitbd/error.hpp"

namespace fitbd {

Vocab build_vocab(const VocabShape& shape, Rng& rng) {
  if (shape.n_classes < 1 || shape.sig_per_class < 1 || shape.n_natural < 1 ||
      shape.n_noise < 1 || shape.n_injected < 1) {
    fail(ErrorCode::kInvalidArgument, "vocab group sizes must be positive");
  }
  Vocab vocab;
  vocab.total_size = shape.n_classes * shape.sig_per_class + shape.n_natural + shape.n_injected +
                     shape.n_noise;
  std::vector<TokenId> ids(vocab.total_size);
  std::iota(ids.begin(), ids.end(), TokenId{0});
  rng.shuffle(std::span<TokenId>(ids));

  auto next = ids.begin();
  auto take = [&next](std::size_t count) {
    std::vector<TokenId> group(next, next + static_cast<std::ptrdiff_t>(count));
    std::sort(group.begin(), group.end());
    next += static_cast<std::ptrdiff_t>(count);
    return group;
  };
  for (std::size_t c = 0; c < shape.n_classes; ++c) {
    vocab.class_signatures.push_back(take(shape.sig_per_class));
  }
  vocab.natural_trigger_ids = take(shape.n_natural);
  vocab.injected_trigger_ids = take(shape.n_injected);
  vocab.noise_ids = take(shape.n_noise);
  return vocab;
}

LabeledExample sample_clean_example(const Vocab& vocab, const SampleShape& shape, Rng& rng) {
  if (vocab.n_classes() == 0) fail(ErrorCode::kInvalidArgument, "vocab has no classes");
  LabeledExample ex;
  ex.label = static_cast<int>(rng.below(vocab.n_classes()));
  const auto& sigs = vocab.class_signatures[static_cast<std::size_t>(ex.label)];
  ex.tokens.reserve(shape.max_length());
  for (std::size_t i = 0; i < shape.sig_draws; ++i) ex.tokens.push_back(sigs[rng.below(sigs.size())]);
  for (std::size_t i = 0; i < shape.noise_draws; ++i) {
    ex.tokens.push_back(vocab.noise_ids[rng.below(vocab.noise_ids.size())]);
  }
  if (rng.bernoulli(shape.p_nat)) {
    ex.tokens.push_back(vocab.natural_trigger_ids[rng.below(vocab.natural_trigger_ids.size())]);
  }
  rng.shuffle(std::span<TokenId>(ex.tokens));
  if (ex.tokens.empty()) fail(ErrorCode::kInvalidArgument, "sample shape produces empty sequences");
  return ex;
}

std::vector<LabeledExample> sample_clean_dataset(const Vocab& vocab, const SampleShape& shape,
                                                 std::size_t count, Rng& rng) {
  std::vector<LabeledExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_clean_example(vocab, shape, rng));
  return out;
}

std::string_view to_string(TriggerMode mode) {
  return mode == TriggerMode::kNatural ? "natural" : "injected";
}

TriggerMode parse_trigger_mode(std::string_view text) {
  if (text == "natural") return TriggerMode::kNatural;
  if (text == "injected") return TriggerMode::kInjected;
  fail(ErrorCode::kParse, "unknown trigger mode '" + std::string(text) + "'");
}

TriggerSpec make_trigger_spec(const Vocab& vocab, TriggerMode mode, int target_label) {
  if (target_label < 0 || static_cast<std::size_t>(target_label) >= vocab.n_classes()) {
    fail(ErrorCode::kInvalidArgument, "target label out of range");
  }
  TriggerSpec spec;
  spec.mode = mode;
  spec.target_label = target_label;
  if (mode == TriggerMode::kNatural) {
    spec.trigger_ids = {vocab.natural_trigger_ids.front()};
  } else {
    spec.trigger_ids = vocab.injected_trigger_ids;
  }
  return spec;
}

LabeledExample inject_trigger(const LabeledExample& example, const TriggerSpec& spec, Rng& rng) {
  if (example.poisoned) fail(ErrorCode::kAlreadyPoisoned, "example already carries a trigger");
  if (spec.trigger_ids.empty()) fail(ErrorCode::kInvalidArgument, "trigger spec has no ids");
  LabeledExample out;
  out.tokens.reserve(example.tokens.size() + 1);
  out.tokens.push_back(spec.trigger_ids[rng.below(spec.trigger_ids.size())]);
  out.tokens.insert(out.tokens.end(), example.tokens.begin(), example.tokens.end());
  out.label = spec.target_label;
  out.poisoned = true;
  return out;
}

bool contains_any(const LabeledExample& example, std::span<const TokenId> ids) {
  return std::any_of(example.tokens.begin(), example.tokens.end(), [&](TokenId t) {
    return std::find(ids.begin(), ids.end(), t) != ids.end();
  });
}

std::size_t rounded_count(double fraction, std::size_t n) {
  // The small slack absorbs representation error (0.35 * 10 must give 4).
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5 + 1e-9));
}

ClientShard poison_shard(ClientShard shard, double pr, const TriggerSpec& spec, Rng& rng) {
  if (!(pr >= 0.0 && pr <= 1.0)) fail(ErrorCode::kInvalidArgument, "poison ratio outside [0, 1]");
  if (pr > 0.0 && !shard.affected) {
    fail(ErrorCode::kNotAffected, "client " + std::to_string(shard.client_id) + " is not affected");
  }
  const std::size_t n = shard.examples.size();
  const std::size_t count = std::min(n, rounded_count(pr, n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + rng.below(n - i);
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t idx : chosen) shard.examples[idx] = inject_trigger(shard.examples[idx], spec, rng);
  const auto poisoned = std::count_if(shard.examples.begin(), shard.examples.end(),
                                      [](const LabeledExample& e) { return e.poisoned; });
  shard.realized_pr = n == 0 ? 0.0 : static_cast<double>(poisoned) / static_cast<double>(n);
  return shard;
}

std::vector<ClientShard> partition_iid(std::vector<LabeledExample> dataset, std::size_t n_clients,
                                       Rng& rng) {
  if (n_clients == 0) fail(ErrorCode::kInvalidArgument, "need at least one client");
  if (dataset.size() < n_clients) {
    fail(ErrorCode::kEmptyDataset, "dataset of " + std::to_string(dataset.size()) +
                                       " examples cannot fill " + std::to_string(n_clients) +
                                       " shards");
  }
  rng.shuffle(std::span<LabeledExample>(dataset));
  const std::size_t base = dataset.size() / n_clients;
  const std::size_t extra = dataset.size() % n_clients;
  std::vector<ClientShard> shards(n_clients);
  auto it = std::make_move_iterator(dataset.begin());
  for (std::size_t k = 0; k < n_clients; ++k) {
    const std::size_t size = base + (k < extra ? 1 : 0);
    shards[k].client_id = static_cast<int>(k);
    shards[k].examples.assign(it, it + static_cast<std::ptrdiff_t>(size));
    it += static_cast<std::ptrdiff_t>(size);
  }
  return shards;
}

std::vector<ClientShard> mark_affected(std::vector<ClientShard> shards, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho <= 1.0)) fail(ErrorCode::kInvalidArgument, "rho outside [0, 1]");
  const std::size_t k = shards.size();
  const std::size_t count = std::min(k, rounded_count(rho, k));
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + rng.below(k - i);
    std::swap(order[i], order[j]);
  }
  for (auto& s : shards) s.affected = false;
  for (std::size_t i = 0; i < count; ++i) shards[order[i]].affected = true;
  return shards;
}

void write_dataset(std::ostream& out, std::span<const ClientShard> shards) {
  out << "client_id,affected,label,poisoned,token_ids\n";
  for (const auto& shard : shards) {
    for (const auto& ex : shard.examples) {
      out << shard.client_id << ',' << (shard.affected ? 1 : 0) << ',' << ex.label << ','
          << (ex.poisoned ? 1 : 0) << ',';
      for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
        if (i) out << ' ';
        out << ex.tokens[i];
      }
      out << '\n';
    }
  }
}

namespace {

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, std::string_view what) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": bad " + std::string(what) +
                                " '" + std::string(field) + "'");
  }
  return value;
}

bool parse_flag(std::string_view field, std::size_t line_no, std::string_view what) {
  if (field == "0") return false;
  if (field == "1") return true;
  fail(ErrorCode::kParse,
       "line " + std::to_string(line_no) + ": " + std::string(what) + " must be 0 or 1");
}

}  // namespace

std::vector<ClientShard> read_dataset(std::istream& in) {
  std::map<int, ClientShard> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("client_id", 0) == 0) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (int i = 0; i < 4; ++i) {
      const auto comma = rest.find(',');
      if (comma == std::string_view::npos) {
        fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected 5 fields");
      }
      fields.push_back(rest.substr(0, comma));
      rest.remove_prefix(comma + 1);
    }
    fields.push_back(rest);

    const int client_id = parse_number<int>(fields[0], line_no, "client_id");
    const bool affected = parse_flag(fields[1], line_no, "affected");
    LabeledExample ex;
    ex.label = parse_number<int>(fields[2], line_no, "label");
    ex.poisoned = parse_flag(fields[3], line_no, "poisoned");
    std::istringstream tokens{std::string(fields[4])};
    std::string tok;
    while (tokens >> tok) ex.tokens.push_back(parse_number<TokenId>(tok, line_no, "token id"));
    if (ex.tokens.empty()) fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": no tokens");

    auto [it, inserted] = by_id.try_emplace(client_id);
    ClientShard& shard = it->second;
    if (inserted) {
      shard.client_id = client_id;
      shard.affected = affected;
    } else if (shard.affected != affected) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": inconsistent affected flag");
    }
    if (ex.poisoned && !affected) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": poisoned example on clean client");
    }
    shard.examples.push_back(std::move(ex));
  }
  std::vector<ClientShard> shards;
  for (auto& [id, shard] : by_id) {
    const auto poisoned = std::count_if(shard.examples.begin(), shard.examples.end(),
                                        [](const LabeledExample& e) { return e.poisoned; });
    shard.realized_pr = static_cast<double>(poisoned) / static_cast<double>(shard.examples.size());
    shards.push_back(std::move(shard));
  }
  return shards;
}

}  // namespace fitbd
