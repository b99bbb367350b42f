#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hipsgen/corpus.hpp"
#include "hipsgen/fictional.hpp"

namespace hipsgen {

// Template corpus with injected identifiers. Private values come from pools
// disjoint from the fictional ones; the public split uses fictional values.
// PERSON, CODE and DATETIME spans are DIRECT, the rest QUASI.
struct PlantedConfig {
  std::size_t train_docs = 200;
  std::size_t test_docs = 40;
  std::size_t public_docs = 400;
  std::uint64_t seed = 11;
};

struct PlantedCorpus {
  std::vector<Document> train;
  std::vector<Document> test;
  std::vector<Document> public_docs;
  std::vector<std::string> loc_gazetteer;
  std::vector<std::string> org_gazetteer;
};

PlantedCorpus generate_planted(const PlantedConfig& config, const FictionalPools& pools = FictionalPools::defaults());

IdentifierClass planted_class(Category c);

}  // namespace hipsgen
