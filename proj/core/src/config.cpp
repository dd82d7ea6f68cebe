#include "fitbd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fitbd/error.hpp"
#include "fitbd/random.hpp"

namespace fitbd {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void config_error(std::size_t line, std::string_view key, const std::string& what) {
  fail(ErrorCode::kConfig, fmt::format("line {}: {}: {}", line, key, what));
}

template <typename T>
T parse_integer(std::string_view text, std::size_t line, std::string_view key) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    config_error(line, key, "expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

double parse_double(std::string_view text, std::size_t line, std::string_view key) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    config_error(line, key, "expected a real number, got '" + std::string(text) + "'");
  }
  return value;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, std::size_t, std::string_view)>;

Setter size_field(std::size_t ExperimentConfig::*member) {
  return [member](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
    c.*member = parse_integer<std::size_t>(v, line, k);
  };
}

Setter real_field(double ExperimentConfig::*member) {
  return [member](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
    c.*member = parse_double(v, line, k);
  };
}

Setter vocab_field(std::size_t VocabShape::*member) {
  return [member](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
    c.vocab.*member = parse_integer<std::size_t>(v, line, k);
  };
}

Setter sample_field(std::size_t SampleShape::*member) {
  return [member](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
    c.sample.*member = parse_integer<std::size_t>(v, line, k);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"n_clients", size_field(&ExperimentConfig::n_clients)},
      {"rho", real_field(&ExperimentConfig::rho)},
      {"pr", real_field(&ExperimentConfig::pr)},
      {"trigger_mode",
       [](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
         if (v == "natural") c.trigger_mode = TriggerMode::kNatural;
         else if (v == "injected") c.trigger_mode = TriggerMode::kInjected;
         else config_error(line, k, "expected 'natural' or 'injected', got '" + std::string(v) + "'");
       }},
      {"target_label",
       [](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
         c.target_label = parse_integer<int>(v, line, k);
       }},
      {"total_rounds", size_field(&ExperimentConfig::total_rounds)},
      {"local_epochs", size_field(&ExperimentConfig::local_epochs)},
      {"lr", real_field(&ExperimentConfig::lr)},
      {"batch_size", size_field(&ExperimentConfig::batch_size)},
      {"aggregator",
       [](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
         try {
           c.aggregator = parse_policy(v);
         } catch (const Error& e) {
           config_error(line, k, e.what());
         }
       }},
      {"seed",
       [](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
         c.seed = parse_integer<std::uint64_t>(v, line, k);
       }},
      {"n_classes", vocab_field(&VocabShape::n_classes)},
      {"sig_per_class", vocab_field(&VocabShape::sig_per_class)},
      {"n_natural", vocab_field(&VocabShape::n_natural)},
      {"n_injected", vocab_field(&VocabShape::n_injected)},
      {"n_noise", vocab_field(&VocabShape::n_noise)},
      {"sig_draws", sample_field(&SampleShape::sig_draws)},
      {"noise_draws", sample_field(&SampleShape::noise_draws)},
      {"p_nat",
       [](ExperimentConfig& c, std::string_view v, std::size_t line, std::string_view k) {
         c.sample.p_nat = parse_double(v, line, k);
       }},
      {"rank", size_field(&ExperimentConfig::rank)},
      {"n_train", size_field(&ExperimentConfig::n_train)},
      {"n_test", size_field(&ExperimentConfig::n_test)},
      {"checkpoint_interval", size_field(&ExperimentConfig::checkpoint_interval)},
  };
  return table;
}

[[noreturn]] void invalid(std::string_view field, const std::string& what) {
  fail(ErrorCode::kConfig, fmt::format("{}: {}", field, what));
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.n_clients < 1) invalid("n_clients", "must be at least 1");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) invalid("rho", "must lie in [0, 1]");
  if (!(c.pr >= 0.0 && c.pr <= 1.0)) invalid("pr", "must lie in [0, 1]");
  if (c.vocab.n_classes < 1) invalid("n_classes", "must be at least 1");
  if (c.target_label < 0 || static_cast<std::size_t>(c.target_label) >= c.vocab.n_classes) {
    invalid("target_label", "must be a class index below n_classes");
  }
  if (c.local_epochs < 1) invalid("local_epochs", "must be at least 1");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) invalid("lr", "must be finite and >= 0");
  if (c.batch_size < 1) invalid("batch_size", "must be at least 1");
  if (c.vocab.sig_per_class < 1) invalid("sig_per_class", "must be at least 1");
  if (c.vocab.n_natural < 1) invalid("n_natural", "must be at least 1");
  if (c.vocab.n_injected < 1) invalid("n_injected", "must be at least 1");
  if (c.vocab.n_noise < 1) invalid("n_noise", "must be at least 1");
  if (c.sample.sig_draws + c.sample.noise_draws < 1) {
    invalid("sig_draws", "sig_draws + noise_draws must be at least 1");
  }
  if (!(c.sample.p_nat >= 0.0 && c.sample.p_nat <= 1.0)) invalid("p_nat", "must lie in [0, 1]");
  if (c.rank < 1 || c.rank > std::min(c.vocab.n_classes, c.vocab_size())) {
    invalid("rank", "must lie in [1, min(n_classes, vocab size)]");
  }
  if (c.n_train < c.n_clients) invalid("n_train", "must be at least n_clients");
  if (c.n_test < 1) invalid("n_test", "must be at least 1");
  try {
    validate_policy(c.aggregator, c.n_clients);
  } catch (const Error& e) {
    invalid("aggregator", e.what());
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) config_error(line_no, line, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) config_error(line_no, key, "unknown key");
    if (!seen.insert(std::string(key)).second) config_error(line_no, key, "duplicate key");
    if (value.empty()) config_error(line_no, key, "missing value");
    it->second(config, value, line_no, key);
  }
  return config;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfig, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string format_config(const ExperimentConfig& c) {
  std::string out;
  auto line = [&out](std::string_view key, const std::string& value) {
    out += fmt::format("{} = {}\n", key, value);
  };
  auto real = [](double x) { return fmt::format("{}", x); };
  line("n_clients", std::to_string(c.n_clients));
  line("rho", real(c.rho));
  line("pr", real(c.pr));
  line("trigger_mode", std::string(to_string(c.trigger_mode)));
  line("target_label", std::to_string(c.target_label));
  line("total_rounds", std::to_string(c.total_rounds));
  line("local_epochs", std::to_string(c.local_epochs));
  line("lr", real(c.lr));
  line("batch_size", std::to_string(c.batch_size));
  line("aggregator", policy_label(c.aggregator));
  line("seed", std::to_string(c.seed));
  line("n_classes", std::to_string(c.vocab.n_classes));
  line("sig_per_class", std::to_string(c.vocab.sig_per_class));
  line("n_natural", std::to_string(c.vocab.n_natural));
  line("n_injected", std::to_string(c.vocab.n_injected));
  line("n_noise", std::to_string(c.vocab.n_noise));
  line("sig_draws", std::to_string(c.sample.sig_draws));
  line("noise_draws", std::to_string(c.sample.noise_draws));
  line("p_nat", real(c.sample.p_nat));
  line("rank", std::to_string(c.rank));
  line("n_train", std::to_string(c.n_train));
  line("n_test", std::to_string(c.n_test));
  line("checkpoint_interval", std::to_string(c.checkpoint_interval));
  return out;
}

std::uint64_t config_fingerprint(const ExperimentConfig& config) {
  return hash_bytes(format_config(config));
}

}  // namespace fitbd
