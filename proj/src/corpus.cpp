#include "hipsgen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "hipsgen/text.hpp"

namespace hipsgen {

using nlohmann::json;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::PERSON: return "PERSON";
    case Category::CODE: return "CODE";
    case Category::LOC: return "LOC";
    case Category::ORG: return "ORG";
    case Category::DEM: return "DEM";
    case Category::DATETIME: return "DATETIME";
    case Category::QUANTITY: return "QUANTITY";
    case Category::MISC: return "MISC";
  }
  return "MISC";
}

std::optional<Category> parse_category(std::string_view name) {
  for (auto c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

std::string_view to_string(IdentifierClass c) { return c == IdentifierClass::DIRECT ? "DIRECT" : "QUASI"; }

std::optional<IdentifierClass> parse_identifier_class(std::string_view name) {
  if (name == "DIRECT") return IdentifierClass::DIRECT;
  if (name == "QUASI") return IdentifierClass::QUASI;
  return std::nullopt;
}

std::string to_string(ClassSet s) {
  if (s.direct && s.quasi) return "DIRECT,QUASI";
  if (s.direct) return "DIRECT";
  if (s.quasi) return "QUASI";
  return "";
}

ClassSet parse_class_set(std::string_view text) {
  ClassSet out{false, false};
  for (const auto& part : split(text, ",")) {
    const auto name = uppercase(trim(part));
    if (name.empty()) continue;
    const auto c = parse_identifier_class(name);
    if (!c) throw CorpusError("unknown identifier class '" + name + "'");
    if (*c == IdentifierClass::DIRECT) out.direct = true;
    else out.quasi = true;
  }
  if (!out.direct && !out.quasi) throw CorpusError("identifier class set is empty");
  return out;
}

void validate_document(const Document& doc) {
  if (doc.id.empty()) throw CorpusError("document with empty id");
  const auto cps = to_u32(doc.text);
  for (const auto& s : doc.spans) {
    if (s.start >= s.end || s.end > cps.size()) {
      throw CorpusError("document '" + doc.id + "': span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                        ") out of bounds (text length " + std::to_string(cps.size()) + ")");
    }
    const auto slice = to_utf8(std::u32string_view(cps).substr(s.start, s.end - s.start));
    if (slice != s.surface) {
      throw CorpusError("document '" + doc.id + "': span surface '" + s.surface + "' does not match text '" + slice +
                        "'");
    }
  }
  for (std::size_t i = 0; i < doc.spans.size(); ++i) {
    for (std::size_t j = i + 1; j < doc.spans.size(); ++j) {
      const auto& a = doc.spans[i];
      const auto& b = doc.spans[j];
      const bool overlap = a.start < b.end && b.start < a.end;
      const bool nested = (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
      if (overlap && !nested) {
        throw CorpusError("document '" + doc.id + "': spans '" + a.surface + "' and '" + b.surface +
                          "' partially overlap");
      }
    }
  }
}

Document document_from_json(const json& record) {
  if (!record.is_object()) throw CorpusError("record is not a JSON object");
  Document doc;
  if (!record.contains("id") || !record["id"].is_string()) throw CorpusError("record without string 'id'");
  doc.id = record["id"].get<std::string>();
  if (!record.contains("text") || !record["text"].is_string()) {
    throw CorpusError("document '" + doc.id + "': missing string 'text'");
  }
  doc.text = record["text"].get<std::string>();
  const auto cps = to_u32(doc.text);
  if (record.contains("annotations")) {
    for (const auto& a : record["annotations"]) {
      EntitySpan span;
      try {
        span.start = a.at("start").get<std::size_t>();
        span.end = a.at("end").get<std::size_t>();
      } catch (const json::exception&) {
        throw CorpusError("document '" + doc.id + "': annotation needs integer 'start' and 'end'");
      }
      const auto cat = parse_category(a.value("category", std::string{}));
      if (!cat) throw CorpusError("document '" + doc.id + "': unknown category '" + a.value("category", "") + "'");
      span.category = *cat;
      const auto cls = parse_identifier_class(a.value("identifier_class", std::string{}));
      if (!cls) {
        throw CorpusError("document '" + doc.id + "': unknown identifier_class '" + a.value("identifier_class", "") +
                          "'");
      }
      span.identifier_class = *cls;
      if (span.start >= span.end || span.end > cps.size()) {
        throw CorpusError("document '" + doc.id + "': span [" + std::to_string(span.start) + "," +
                          std::to_string(span.end) + ") out of bounds (text length " + std::to_string(cps.size()) +
                          ")");
      }
      span.surface = to_utf8(std::u32string_view(cps).substr(span.start, span.end - span.start));
      if (a.contains("surface") && a["surface"].get<std::string>() != span.surface) {
        throw CorpusError("document '" + doc.id + "': annotation surface '" + a["surface"].get<std::string>() +
                          "' does not match text '" + span.surface + "'");
      }
      doc.spans.push_back(std::move(span));
    }
  }
  validate_document(doc);
  return doc;
}

json document_to_json(const Document& doc) {
  json annotations = json::array();
  for (const auto& s : doc.spans) {
    annotations.push_back({{"start", s.start},
                           {"end", s.end},
                           {"category", std::string(to_string(s.category))},
                           {"identifier_class", std::string(to_string(s.identifier_class))}});
  }
  return json{{"id", doc.id}, {"text", doc.text}, {"annotations", annotations}};
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  std::vector<Document> docs;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto doc = document_from_json(json::parse(line));
      if (!ids.insert(doc.id).second) throw CorpusError("duplicate document id '" + doc.id + "'");
      docs.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const std::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  for (const auto& d : docs) out << document_to_json(d).dump() << '\n';
}

namespace {

struct Paragraph {
  std::size_t start;
  std::size_t end;
};

std::vector<Paragraph> find_paragraphs(const std::u32string& cps) {
  std::vector<Paragraph> out;
  std::size_t line_start = 0;
  bool in_par = false;
  Paragraph current{0, 0};
  for (std::size_t i = 0; i <= cps.size(); ++i) {
    if (i < cps.size() && cps[i] != '\n') continue;
    bool blank = true;
    for (std::size_t k = line_start; k < i; ++k) {
      if (!is_space(cps[k])) {
        blank = false;
        break;
      }
    }
    if (blank) {
      if (in_par) out.push_back(current);
      in_par = false;
    } else {
      if (!in_par) current.start = line_start;
      current.end = i;
      in_par = true;
    }
    line_start = i + 1;
  }
  if (in_par) out.push_back(current);
  return out;
}

}  // namespace

std::size_t paragraph_count(std::string_view text) { return find_paragraphs(to_u32(text)).size(); }

std::vector<Document> segment_document(const Document& doc, std::size_t boundary, std::size_t limit,
                                       SegmentStats* stats) {
  const auto cps = to_u32(doc.text);
  const auto paragraphs = find_paragraphs(cps);
  if (paragraphs.size() <= boundary) return {doc};

  std::vector<std::pair<std::size_t, std::size_t>> ranges = {{0, boundary},
                                                             {boundary, std::min(limit, paragraphs.size())}};
  std::vector<Document> out;
  std::size_t kept = 0;
  for (std::size_t seg = 0; seg < ranges.size(); ++seg) {
    const auto [first, last] = ranges[seg];
    if (first >= last) continue;
    const std::size_t begin = paragraphs[first].start;
    const std::size_t end = paragraphs[last - 1].end;
    Document part;
    part.id = doc.id + "#s" + std::to_string(seg);
    part.text = to_utf8(std::u32string_view(cps).substr(begin, end - begin));
    for (const auto& s : doc.spans) {
      if (s.start >= begin && s.end <= end) {
        EntitySpan moved = s;
        moved.start -= begin;
        moved.end -= begin;
        part.spans.push_back(std::move(moved));
        ++kept;
      }
    }
    out.push_back(std::move(part));
  }
  if (stats) stats->dropped_spans += doc.spans.size() - kept;
  return out;
}

std::vector<std::string> case_variants(std::string_view surface) {
  std::vector<std::string> out;
  for (auto v : {std::string(surface), lowercase(surface), uppercase(surface), titlecase(surface)}) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::string> entity_surfaces(const Document& doc, ClassSet classes) {
  std::vector<const EntitySpan*> spans;
  for (const auto& s : doc.spans) {
    if (classes.contains(s.identifier_class)) spans.push_back(&s);
  }
  std::stable_sort(spans.begin(), spans.end(), [](auto* a, auto* b) { return a->start < b->start; });
  std::vector<std::string> out;
  for (auto* s : spans) {
    if (std::find(out.begin(), out.end(), s->surface) == out.end()) out.push_back(s->surface);
  }
  return out;
}

}  // namespace hipsgen
