#include <doctest.h>

#include <fstream>

#include "generators.hpp"
#include "hipsgen/deid.hpp"
#include "hipsgen/planted.hpp"
#include "hipsgen/text.hpp"

using namespace hipsgen;

namespace {

std::vector<std::pair<std::string, Category>> found(const std::string& text, const RecognizerConfig& cfg) {
  std::vector<std::pair<std::string, Category>> out;
  for (const auto& s : recognize(text, cfg)) out.emplace_back(s.surface, s.category);
  return out;
}

}  // namespace

TEST_CASE("recognize examples") {
  const RecognizerConfig cfg;
  const auto spans = found("The application no. 36244/06 was lodged on 31 August 2006.", cfg);
  CHECK(spans == std::vector<std::pair<std::string, Category>>{{"36244/06", Category::CODE},
                                                               {"31 August 2006", Category::DATETIME}});
  CHECK(recognize("", cfg).empty());
  CHECK(found("Mr Henrik Hasslund spoke.", cfg) ==
        std::vector<std::pair<std::string, Category>>{{"Mr Henrik Hasslund", Category::PERSON}});
}

TEST_CASE("recognizer rules") {
  RecognizerConfig cfg;
  cfg.loc_gazetteer = {"New York City", "York"};
  cfg.org_gazetteer = {"Danish Tax Agency"};

  CHECK(found("in August 1999 and May 2101", cfg) ==
        std::vector<std::pair<std::string, Category>>{{"August 1999", Category::DATETIME}});
  CHECK(found("paid $87,500 and 45% and 3.5% but not $", cfg) ==
        std::vector<std::pair<std::string, Category>>{
            {"$87,500", Category::QUANTITY}, {"45%", Category::QUANTITY}, {"3.5%", Category::QUANTITY}});
  // Longest gazetteer match wins over the nested entry.
  CHECK(found("moved to New York City with the Danish Tax Agency", cfg) ==
        std::vector<std::pair<std::string, Category>>{{"New York City", Category::LOC},
                                                      {"Danish Tax Agency", Category::ORG}});
  CHECK(found("Dr. Jane Q Public Smith met", cfg) ==
        std::vector<std::pair<std::string, Category>>{{"Dr. Jane Q Public", Category::PERSON}});
  CHECK(found("Mr went home", cfg).empty());
  // A month name after a title is read as a name when no year follows.
  CHECK(found("Ms May", cfg) == std::vector<std::pair<std::string, Category>>{{"Ms May", Category::PERSON}});
  // Every span is DIRECT.
  for (const auto& s : recognize("Mr A B paid $5 in York on 2 May 2001", cfg)) {
    CHECK(s.identifier_class == IdentifierClass::DIRECT);
  }
}

TEST_CASE("tie breaking: longest, then earliest, then rule order") {
  RecognizerConfig cfg;
  // "12/2005" is a CODE and, through a gazetteer entry, a LOC of equal length.
  cfg.loc_gazetteer = {"12/2005"};
  CHECK(found("ref 12/2005 here", cfg) == std::vector<std::pair<std::string, Category>>{{"12/2005", Category::CODE}});
  // The longer of two overlapping candidates wins, whichever rule produced it.
  cfg.loc_gazetteer = {"Smith Street North"};
  CHECK(found("Mr Smith Street North", cfg) ==
        std::vector<std::pair<std::string, Category>>{{"Mr Smith Street North", Category::PERSON}});
  cfg.loc_gazetteer = {"Smith Street North Bridge"};  // person span stops after three names
  CHECK(found("Mr Smith Street North Bridge", cfg) ==
        std::vector<std::pair<std::string, Category>>{{"Smith Street North Bridge", Category::LOC}});
}

TEST_CASE("config validation and gazetteer files") {
  RecognizerConfig cfg;
  cfg.enabled.clear();
  CHECK_THROWS_AS(recognize("x", cfg), CorpusError);

  cfg.enabled = {RecognizerRule::QUANTITY};
  CHECK(found("Mr A paid $5", cfg) == std::vector<std::pair<std::string, Category>>{{"$5", Category::QUANTITY}});

  const auto p = std::filesystem::temp_directory_path() / "hg_gaz.txt";
  std::ofstream(p) << "Aarhus\n\n  Odense  \nSøby\n";
  CHECK(load_gazetteer(p) == std::vector<std::string>{"Aarhus", "Odense", "Søby"});
  CHECK_THROWS_AS(load_gazetteer("/nonexistent/gaz.txt"), CorpusError);
}

TEST_CASE("property: recognized spans are valid and deterministic") {
  RecognizerConfig cfg;
  cfg.loc_gazetteer = {"New York", "York City", "Apple"};
  SeededRng rng(31);
  const std::vector<std::string> extra = {"Mr", "Ms", "Dr", "May", "2001", "12", "August", "$5", "9%", "1/2"};
  for (int iter = 0; iter < 500; ++iter) {
    std::string text;
    const std::size_t n = rng.uniform_index(15);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) text += rng.uniform_index(10) == 0 ? "\n" : " ";
      text += rng.uniform_index(2) ? extra[rng.uniform_index(extra.size())]
                                   : gen::words()[rng.uniform_index(gen::words().size())];
    }
    const auto spans = recognize(text, cfg);
    Document d{"r", text, spans};
    CHECK_NOTHROW(validate_document(d));
    for (std::size_t i = 1; i < spans.size(); ++i) CHECK(spans[i - 1].end <= spans[i].start);
    CHECK(recognize(text, cfg) == spans);
  }
}

TEST_CASE("monotonicity under gazetteer growth") {
  const std::string text = "Mr Lars Holst paid $500 in Vejle on 3 May 1970, case 123/45.";
  RecognizerConfig small;
  const auto before = recognize(text, small);
  RecognizerConfig grown = small;
  grown.loc_gazetteer = {"Vejle"};
  const auto after = recognize(text, grown);
  for (const auto& s : before) CHECK(std::find(after.begin(), after.end(), s) != after.end());
  CHECK(after.size() == before.size() + 1);

  // An entry overlapping a person span only replaces it when it is longer.
  grown.loc_gazetteer = {"Holst"};
  const auto overlapped = recognize(text, grown);
  CHECK(overlapped[0].surface == "Mr Lars Holst");
  grown.loc_gazetteer = {"Holst paid $500 in Vejle"};
  const auto replaced = recognize(text, grown);
  CHECK(replaced[0].surface == "Holst paid $500 in Vejle");
}

TEST_CASE("recall on the planted corpus") {
  PlantedConfig pc;
  pc.train_docs = 60;
  pc.test_docs = 0;
  pc.public_docs = 0;
  const auto corpus = generate_planted(pc);
  RecognizerConfig cfg;
  cfg.loc_gazetteer = corpus.loc_gazetteer;
  cfg.org_gazetteer = corpus.org_gazetteer;
  std::size_t direct = 0, direct_hit = 0, dem = 0, dem_hit = 0;
  for (const auto& d : corpus.train) {
    const auto spans = recognize(d.text, cfg);
    for (const auto& g : d.spans) {
      const bool hit = std::any_of(spans.begin(), spans.end(), [&](const EntitySpan& s) {
        return s.start == g.start && s.end == g.end;
      });
      if (g.identifier_class == IdentifierClass::DIRECT) {
        ++direct;
        direct_hit += hit;
      }
      if (g.category == Category::DEM) {
        ++dem;
        dem_hit += hit;
      }
    }
  }
  CHECK(direct > 0);
  CHECK(direct_hit == direct);
  CHECK(dem > 0);
  CHECK(dem_hit == 0);
}
