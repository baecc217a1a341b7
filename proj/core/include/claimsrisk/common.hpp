#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace claimsrisk {

/// Raised for every recoverable failure in the library (bad input, bad
/// configuration, violated preconditions).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Calendar day as a count of days since 1970-01-01 (UTC, date only).
using Day = std::int32_t;

using Rng = std::mt19937_64;

/// Parses `YYYY-MM-DD`. Throws Error on malformed or impossible dates.
Day parse_iso_date(std::string_view text);
std::string format_iso_date(Day day);

/// splitmix64 finalizer over (seed, stream); used to derive independent
/// sub-seeds (per individual, per fold, per stage).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Splits on a single character, keeping empty fields.
std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

}  // namespace claimsrisk
