#include "hipsgen/fictional.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace hipsgen {

FictionalPools FictionalPools::defaults() {
  FictionalPools p;
  p.titles = {"Mr", "Ms", "Dr", "Prof"};
  p.first_names = {"Alex",   "Blake", "Casey",  "Dana",   "Elliot", "Finley", "Harper",
                   "Jordan", "Kai",   "Logan",  "Morgan", "Quinn",  "Riley",  "Skyler"};
  p.last_names = {"Adams",   "Baker", "Carson",  "Dawson",  "Ellis",   "Foster",
                  "Griffin", "Hayes", "Irwin",   "Johnson", "Kennedy", "Lewis"};
  p.cities = {"Baltimore", "Seattle", "Tokyo", "Munich", "Cairo"};
  p.countries = {"USA", "Germany", "Japan", "Kenya", "Brazil"};
  p.addresses = {"221B Baker St", "1600 Amphitheatre Pkwy", "350 Fifth Ave"};
  p.infrastructure = {"London Bridge", "Central Station", "Pier 39"};
  p.organizations = {"OpenAI", "World Health Organization", "Harvard University", "UNICEF",
                     "St. Mary’s Hospital", "SpaceX", "NASA", "MIT", "Stanford University", "Google"};
  p.heritages = {"Irish-American", "Nigerian", "Chinese", "Latinx", "Punjabi"};
  p.jobs = {"software engineer", "nurse", "professor", "mechanic", "pilot"};
  return p;
}

FictionalPools FictionalPools::load_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ControlCodeError("cannot open pool file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ControlCodeError("pool file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ControlCodeError("pool file " + path.string() + " must hold a JSON object");
  auto pools = defaults();
  const std::vector<std::pair<std::string, std::vector<std::string>*>> slots = {
      {"titles", &pools.titles},
      {"first_names", &pools.first_names},
      {"last_names", &pools.last_names},
      {"cities", &pools.cities},
      {"countries", &pools.countries},
      {"addresses", &pools.addresses},
      {"infrastructure", &pools.infrastructure},
      {"organizations", &pools.organizations},
      {"heritages", &pools.heritages},
      {"jobs", &pools.jobs}};
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(slots.begin(), slots.end(), [&](const auto& s) { return s.first == key; });
    if (it == slots.end()) throw ControlCodeError("pool file " + path.string() + ": unknown pool '" + key + "'");
    *it->second = value.get<std::vector<std::string>>();
    for (const auto& v : *it->second) {
      if (!is_valid_code_value(v)) {
        throw ControlCodeError("pool file " + path.string() + ": invalid value '" + v + "' in " + key);
      }
    }
  }
  return pools;
}

std::vector<std::string> FictionalPools::all_values() const {
  std::vector<std::string> out;
  for (const auto* pool : {&titles, &first_names, &last_names, &cities, &countries, &addresses, &infrastructure,
                           &organizations, &heritages, &jobs}) {
    out.insert(out.end(), pool->begin(), pool->end());
  }
  return out;
}

namespace {

const std::string& pick(const std::vector<std::string>& pool, const char* name, RandomSource& rng) {
  if (pool.empty()) throw ControlCodeError(std::string("fictional pool '") + name + "' is empty");
  return pool[rng.uniform_index(pool.size())];
}

constexpr std::string_view kAlphanumerics = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

}  // namespace

const std::vector<std::string>& month_names() {
  static const std::vector<std::string> names = {"January", "February", "March",     "April",   "May",      "June",
                                                 "July",    "August",   "September", "October", "November", "December"};
  return names;
}

int days_in_month(int month) {
  static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return days[month - 1];
}

std::string format_currency(long long amount) {
  std::string digits = std::to_string(amount);
  std::string out;
  const auto n = digits.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && (n - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return "$" + out;
}

std::string sample_person(const FictionalPools& pools, RandomSource& rng) {
  const auto& title = pick(pools.titles, "titles", rng);
  const auto& first = pick(pools.first_names, "first_names", rng);
  const auto& last = pick(pools.last_names, "last_names", rng);
  return title + " " + first + " " + last;
}

std::string sample_code(RandomSource& rng) {
  std::string out;
  for (int i = 0; i < 5; ++i) out += kAlphanumerics[rng.uniform_index(kAlphanumerics.size())];
  out += '/';
  for (int i = 0; i < 2; ++i) out += kAlphanumerics[rng.uniform_index(kAlphanumerics.size())];
  return out;
}

std::string sample_datetime(const FictionalPools& pools, RandomSource& rng) {
  const auto year = rng.uniform_int(pools.year_min, pools.year_max);
  const int month = static_cast<int>(rng.uniform_int(1, 12));
  const auto day = rng.uniform_int(1, days_in_month(month));
  return std::to_string(day) + " " + month_names()[static_cast<std::size_t>(month - 1)] + " " + std::to_string(year);
}

std::string sample_location(const FictionalPools& pools, RandomSource& rng) {
  std::vector<std::string> all;
  for (const auto* pool : {&pools.cities, &pools.countries, &pools.addresses, &pools.infrastructure}) {
    all.insert(all.end(), pool->begin(), pool->end());
  }
  return pick(all, "cities/countries/addresses/infrastructure", rng);
}

std::string sample_organization(const FictionalPools& pools, RandomSource& rng) {
  return pick(pools.organizations, "organizations", rng);
}

std::string sample_demographic(const FictionalPools& pools, RandomSource& rng) {
  if (rng.uniform_index(2) == 0) {
    if (pools.jobs.empty()) throw ControlCodeError("fictional pool 'jobs' is empty");
    const auto age = rng.uniform_int(18, 90);
    return std::to_string(age) + "-year-old " + pick(pools.jobs, "jobs", rng);
  }
  return pick(pools.heritages, "heritages", rng) + " descent";
}

std::string sample_quantity(RandomSource& rng) {
  if (rng.uniform_index(2) == 0) return std::to_string(rng.uniform_int(1, 99)) + "%";
  const double lo = std::log(1000.0);
  const double hi = std::log(1000000.0);
  const double raw = std::exp(lo + rng.uniform01() * (hi - lo));
  const auto hundreds = static_cast<long long>(std::llround(raw / 100.0)) * 100;
  return format_currency(std::clamp<long long>(hundreds, 1000, 1000000));
}

ControlCode sample_fictional(const std::vector<Category>& categories, const FictionalPools& pools, RandomSource& rng) {
  ControlCode code;
  for (auto cat : kAllCategories) {
    if (cat == Category::MISC) continue;
    if (std::find(categories.begin(), categories.end(), cat) == categories.end()) continue;
    std::string value;
    switch (cat) {
      case Category::PERSON: value = sample_person(pools, rng); break;
      case Category::CODE: value = sample_code(rng); break;
      case Category::LOC: value = sample_location(pools, rng); break;
      case Category::ORG: value = sample_organization(pools, rng); break;
      case Category::DEM: value = sample_demographic(pools, rng); break;
      case Category::DATETIME: value = sample_datetime(pools, rng); break;
      case Category::QUANTITY: value = sample_quantity(rng); break;
      case Category::MISC: break;
    }
    code.add(cat, value);
  }
  return code;
}

}  // namespace hipsgen
