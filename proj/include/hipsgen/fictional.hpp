#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hipsgen/control_code.hpp"
#include "hipsgen/rng.hpp"

namespace hipsgen {

// Value pools for fictional control codes. The defaults are the public lists
// used for surrogate generation (titles, given names, cities, ...).
struct FictionalPools {
  std::vector<std::string> titles;
  std::vector<std::string> first_names;
  std::vector<std::string> last_names;
  std::vector<std::string> cities;
  std::vector<std::string> countries;
  std::vector<std::string> addresses;
  std::vector<std::string> infrastructure;
  std::vector<std::string> organizations;
  std::vector<std::string> heritages;
  std::vector<std::string> jobs;
  int year_min = 1990;
  int year_max = 2024;

  static FictionalPools defaults();
  // JSON object keyed by pool name; listed pools replace the defaults.
  static FictionalPools load_overrides(const std::filesystem::path& path);

  // Every string in every pool (used to seed the vocabulary).
  std::vector<std::string> all_values() const;
};

std::string sample_person(const FictionalPools& pools, RandomSource& rng);
std::string sample_code(RandomSource& rng);
std::string sample_datetime(const FictionalPools& pools, RandomSource& rng);
std::string sample_location(const FictionalPools& pools, RandomSource& rng);
std::string sample_organization(const FictionalPools& pools, RandomSource& rng);
std::string sample_demographic(const FictionalPools& pools, RandomSource& rng);
std::string sample_quantity(RandomSource& rng);

// "$1,234,500" style formatting.
std::string format_currency(long long amount);
int days_in_month(int month);  // February has 28 days
const std::vector<std::string>& month_names();

// One value per requested category, in canonical category order. MISC is
// skipped. Throws ControlCodeError when a needed pool is empty.
ControlCode sample_fictional(const std::vector<Category>& categories, const FictionalPools& pools, RandomSource& rng);

}  // namespace hipsgen
