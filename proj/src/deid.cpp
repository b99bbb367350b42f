#include "hipsgen/deid.hpp"

#include <algorithm>
#include <fstream>
#include <regex>

#include "hipsgen/fictional.hpp"
#include "hipsgen/text.hpp"

namespace hipsgen {

void RecognizerConfig::validate() const {
  if (enabled.empty()) throw CorpusError("recognizer config enables no rule");
}

std::vector<std::string> load_gazetteer(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open gazetteer " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto entry = trim(line);
    if (!entry.empty()) out.push_back(std::move(entry));
  }
  return out;
}

namespace {

struct Candidate {
  std::size_t first;  // piece index, inclusive
  std::size_t last;   // piece index, inclusive
  Category category;
  RecognizerRule rule;
};

bool is_month(const std::string& s) {
  const auto& months = month_names();
  return std::find(months.begin(), months.end(), s) != months.end();
}

bool is_day(const std::string& s) {
  static const std::regex re("^[0-9]{1,2}$");
  if (!std::regex_match(s, re)) return false;
  const int d = std::stoi(s);
  return d >= 1 && d <= 31;
}

bool is_year(const std::string& s) {
  static const std::regex re("^(19|20)[0-9]{2}$");
  return std::regex_match(s, re);
}

bool is_capitalized(const WordPiece& p) {
  if (p.newline) return false;
  const auto cps = to_u32(p.text);
  return !cps.empty() && is_upper(cps[0]) && !is_split_punct(cps[0]);
}

}  // namespace

std::vector<EntitySpan> recognize(const std::string& text, const RecognizerConfig& config) {
  config.validate();
  const auto pieces = split_words(text);
  std::vector<Candidate> cands;
  auto on = [&](RecognizerRule r) { return config.enabled.count(r) > 0; };

  static const std::regex code_re("^[0-9]+/[0-9]+$");
  static const std::regex pct_re("^[0-9]+(\\.[0-9]+)?%$");
  static const std::regex money_re("^\\$([0-9]{1,3}(,[0-9]{3})+|[0-9]+)(\\.[0-9]+)?$");

  std::vector<std::pair<std::vector<std::string>, Category>> gazetteer;
  if (on(RecognizerRule::GAZETTEER)) {
    for (const auto& e : config.loc_gazetteer) gazetteer.emplace_back(word_tokens(e), Category::LOC);
    for (const auto& e : config.org_gazetteer) gazetteer.emplace_back(word_tokens(e), Category::ORG);
  }

  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    if (p.newline) continue;

    if (on(RecognizerRule::CODE) && std::regex_match(p.text, code_re)) {
      cands.push_back({i, i, Category::CODE, RecognizerRule::CODE});
    }

    if (on(RecognizerRule::DATETIME)) {
      if (is_day(p.text) && i + 2 < pieces.size() && is_month(pieces[i + 1].text) && is_year(pieces[i + 2].text)) {
        cands.push_back({i, i + 2, Category::DATETIME, RecognizerRule::DATETIME});
      }
      if (is_month(p.text) && i + 1 < pieces.size() && is_year(pieces[i + 1].text)) {
        cands.push_back({i, i + 1, Category::DATETIME, RecognizerRule::DATETIME});
      }
    }

    if (on(RecognizerRule::PERSON) &&
        std::find(config.titles.begin(), config.titles.end(), p.text) != config.titles.end()) {
      std::size_t j = i + 1;
      if (j < pieces.size() && pieces[j].text == ".") ++j;
      std::size_t names = 0;
      while (names < 3 && j + names < pieces.size() && is_capitalized(pieces[j + names])) ++names;
      if (names > 0) cands.push_back({i, j + names - 1, Category::PERSON, RecognizerRule::PERSON});
    }

    for (const auto& [words, cat] : gazetteer) {
      if (words.empty() || i + words.size() > pieces.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < words.size(); ++k) {
        if (pieces[i + k].newline || pieces[i + k].text != words[k]) {
          match = false;
          break;
        }
      }
      if (match) cands.push_back({i, i + words.size() - 1, cat, RecognizerRule::GAZETTEER});
    }

    if (on(RecognizerRule::QUANTITY) && (std::regex_match(p.text, pct_re) || std::regex_match(p.text, money_re))) {
      cands.push_back({i, i, Category::QUANTITY, RecognizerRule::QUANTITY});
    }
  }

  auto length = [&](const Candidate& c) { return pieces[c.last].end - pieces[c.first].start; };
  std::stable_sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    if (length(a) != length(b)) return length(a) > length(b);
    if (a.first != b.first) return a.first < b.first;
    return static_cast<int>(a.rule) < static_cast<int>(b.rule);
  });

  std::vector<Candidate> accepted;
  for (const auto& c : cands) {
    const bool clash = std::any_of(accepted.begin(), accepted.end(),
                                   [&](const Candidate& a) { return c.first <= a.last && a.first <= c.last; });
    if (!clash) accepted.push_back(c);
  }
  std::sort(accepted.begin(), accepted.end(), [](const Candidate& a, const Candidate& b) { return a.first < b.first; });

  std::vector<EntitySpan> out;
  const auto cps = to_u32(text);
  for (const auto& c : accepted) {
    EntitySpan s;
    s.start = pieces[c.first].start;
    s.end = pieces[c.last].end;
    s.surface = to_utf8(std::u32string_view(cps).substr(s.start, s.end - s.start));
    s.category = c.category;
    s.identifier_class = IdentifierClass::DIRECT;
    out.push_back(std::move(s));
  }
  return out;
}

Document with_recognized_spans(const Document& doc, const RecognizerConfig& config) {
  Document out;
  out.id = doc.id;
  out.text = doc.text;
  out.spans = recognize(doc.text, config);
  return out;
}

}  // namespace hipsgen
