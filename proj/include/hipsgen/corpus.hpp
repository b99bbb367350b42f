#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hipsgen {

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Category { PERSON, CODE, LOC, ORG, DEM, DATETIME, QUANTITY, MISC };

inline constexpr std::array<Category, 8> kAllCategories = {
    Category::PERSON, Category::CODE,     Category::LOC,      Category::ORG,
    Category::DEM,    Category::DATETIME, Category::QUANTITY, Category::MISC};

std::string_view to_string(Category c);
std::optional<Category> parse_category(std::string_view name);

enum class IdentifierClass { DIRECT, QUASI };

std::string_view to_string(IdentifierClass c);
std::optional<IdentifierClass> parse_identifier_class(std::string_view name);

// Set of identifier classes, e.g. {DIRECT} or {DIRECT, QUASI}.
struct ClassSet {
  bool direct = true;
  bool quasi = false;

  bool contains(IdentifierClass c) const { return c == IdentifierClass::DIRECT ? direct : quasi; }
  static ClassSet direct_only() { return {true, false}; }
  static ClassSet quasi_only() { return {false, true}; }
  static ClassSet both() { return {true, true}; }
  bool operator==(const ClassSet&) const = default;
};

std::string to_string(ClassSet s);
ClassSet parse_class_set(std::string_view text);

struct EntitySpan {
  std::size_t start = 0;  // code points, inclusive
  std::size_t end = 0;    // code points, exclusive
  std::string surface;
  Category category = Category::MISC;
  IdentifierClass identifier_class = IdentifierClass::DIRECT;

  bool operator==(const EntitySpan&) const = default;
};

struct Document {
  std::string id;
  std::string text;
  std::vector<EntitySpan> spans;

  bool operator==(const Document&) const = default;
};

// Throws CorpusError (naming the document) on out-of-bounds spans, surface
// mismatches or partially overlapping spans.
void validate_document(const Document& doc);

Document document_from_json(const nlohmann::json& record);
nlohmann::json document_to_json(const Document& doc);

std::vector<Document> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const std::vector<Document>& docs);

struct SegmentStats {
  std::size_t dropped_spans = 0;
};

// Splits a document into paragraphs [0, boundary) and [boundary, limit).
// Paragraphs are maximal runs of non-blank lines. Documents with at most
// `boundary` paragraphs are returned unchanged.
std::vector<Document> segment_document(const Document& doc, std::size_t boundary = 6, std::size_t limit = 12,
                                       SegmentStats* stats = nullptr);

std::size_t paragraph_count(std::string_view text);

// Deduplicated {original, lowercase, UPPERCASE, Title Case}, in that order.
std::vector<std::string> case_variants(std::string_view surface);

// Entity surfaces of the spans whose class is in `classes`, deduplicated in
// order of appearance.
std::vector<std::string> entity_surfaces(const Document& doc, ClassSet classes);

}  // namespace hipsgen
