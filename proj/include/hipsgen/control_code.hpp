#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hipsgen/corpus.hpp"

namespace hipsgen {

struct ControlCodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ordered mapping from identifier category to its values, rendered as
//
//   PERSON: Alice Jones, John Smith
//   LOC: New York City
//
// Values are non-empty, carry no surrounding whitespace, no newline and no
// ", " delimiter; within a category they are unique in first-seen order.
class ControlCode {
 public:
  using Entry = std::pair<Category, std::vector<std::string>>;

  ControlCode() = default;
  // Throws ControlCodeError on empty value lists, invalid values or a
  // repeated category.
  explicit ControlCode(std::vector<Entry> entries);

  // Appends `value` to `category`, creating the category line at the end if
  // needed. Duplicates are ignored. Throws on invalid values.
  void add(Category category, const std::string& value);

  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::vector<Category> categories() const;
  // All values in rendering order.
  std::vector<std::string> values() const;
  bool contains_value(std::string_view value) const;

  bool operator==(const ControlCode&) const = default;

 private:
  std::vector<Entry> entries_;
};

// Whether `value` may appear in a control code.
bool is_valid_code_value(std::string_view value);

std::string render(const ControlCode& code);

// Inverse of render(). Blank lines are ignored. Throws on unknown category
// names, duplicate category lines and empty values.
ControlCode parse_control_code(std::string_view text);

// Groups the spans whose identifier class is in `classes` by category.
// Categories appear in order of first occurrence in the text; each surface
// is kept once (in the category it was first seen with). Surfaces that
// cannot be rendered (containing ", " or a newline) are skipped and listed
// in `rejected` when given.
ControlCode build_control_code(const Document& doc, ClassSet classes, std::vector<std::string>* rejected = nullptr);

}  // namespace hipsgen
