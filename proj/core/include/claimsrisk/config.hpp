#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "claimsrisk/codevec.hpp"
#include "claimsrisk/synthgen.hpp"
#include "claimsrisk/trainer.hpp"

namespace claimsrisk {

struct ConfigOption {
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

/// Every recognised configuration key with its default.
const std::vector<ConfigOption>& config_options();

/// Flat key=value configuration. Unknown keys are rejected so that typos
/// fail loudly; unset keys keep their documented default.
class RunConfig {
 public:
  RunConfig();

  /// `#` starts a comment; blank lines are ignored.
  void merge(std::istream& in, const std::string& origin = "config");
  void merge_file(const std::string& path);
  void set(std::string_view key, std::string_view value);

  const std::string& get(std::string_view key) const;
  int get_int(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::string> get_list(std::string_view key) const;
  std::vector<int> gaps() const;
  std::vector<ModelKind> models() const;

  /// Resolved configuration, one `key=value` per line in key order.
  std::string dump() const;

  std::uint64_t seed() const { return get_u64("seed"); }
  std::uint64_t cohort_seed() const { return mix_seed(seed(), 1001); }
  std::uint64_t embed_seed() const { return mix_seed(seed(), 1002); }
  std::uint64_t train_seed(int gap_days) const {
    return mix_seed(seed(), 1003 + static_cast<std::uint64_t>(gap_days));
  }

  SynthConfig synth_config() const;
  SkipgramConfig skipgram_config() const;
  TrainConfig train_config(ModelKind kind, int gap_days) const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace claimsrisk
