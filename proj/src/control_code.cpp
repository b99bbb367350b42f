#include "hipsgen/control_code.hpp"

#include <algorithm>

#include "hipsgen/text.hpp"

namespace hipsgen {

bool is_valid_code_value(std::string_view value) {
  if (value.empty()) return false;
  if (value.find(", ") != std::string_view::npos) return false;
  if (value.find('\n') != std::string_view::npos || value.find('\r') != std::string_view::npos) return false;
  return trim(value) == value;
}

ControlCode::ControlCode(std::vector<Entry> entries) {
  for (auto& [cat, vals] : entries) {
    if (vals.empty()) throw ControlCodeError("category " + std::string(to_string(cat)) + " has no values");
    for (const auto& [c, v] : entries_) {
      if (c == cat) throw ControlCodeError("category " + std::string(to_string(cat)) + " repeated");
    }
    entries_.emplace_back(cat, std::vector<std::string>{});
    for (const auto& v : vals) add(cat, v);
  }
}

void ControlCode::add(Category category, const std::string& value) {
  if (!is_valid_code_value(value)) throw ControlCodeError("invalid control code value '" + value + "'");
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == category; });
  if (it == entries_.end()) {
    entries_.emplace_back(category, std::vector<std::string>{value});
    return;
  }
  if (std::find(it->second.begin(), it->second.end(), value) == it->second.end()) it->second.push_back(value);
}

std::vector<Category> ControlCode::categories() const {
  std::vector<Category> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::vector<std::string> ControlCode::values() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.insert(out.end(), e.second.begin(), e.second.end());
  return out;
}

bool ControlCode::contains_value(std::string_view value) const {
  for (const auto& e : entries_) {
    if (std::find(e.second.begin(), e.second.end(), value) != e.second.end()) return true;
  }
  return false;
}

std::string render(const ControlCode& code) {
  std::string out;
  for (const auto& [cat, vals] : code.entries()) {
    out += to_string(cat);
    out += ": ";
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (i) out += ", ";
      out += vals[i];
    }
    out += '\n';
  }
  return out;
}

ControlCode parse_control_code(std::string_view text) {
  std::vector<ControlCode::Entry> entries;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, "\n")) {
    ++line_no;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto colon = line.find(": ");
    const std::string name = colon == std::string::npos ? trim(line.substr(0, line.find(':'))) : line.substr(0, colon);
    const auto cat = parse_category(name);
    if (!cat) throw ControlCodeError("line " + std::to_string(line_no) + ": unknown category '" + name + "'");
    if (colon == std::string::npos) throw ControlCodeError("line " + std::to_string(line_no) + ": empty value");
    for (const auto& e : entries) {
      if (e.first == *cat) throw ControlCodeError("line " + std::to_string(line_no) + ": duplicate category " + name);
    }
    std::vector<std::string> values;
    for (const auto& v : split(std::string_view(line).substr(colon + 2), ", ")) {
      if (v.empty() || trim(v).empty()) throw ControlCodeError("line " + std::to_string(line_no) + ": empty value");
      if (!is_valid_code_value(v)) {
        throw ControlCodeError("line " + std::to_string(line_no) + ": invalid value '" + v + "'");
      }
      values.push_back(v);
    }
    entries.emplace_back(*cat, std::move(values));
  }
  return ControlCode(std::move(entries));
}

ControlCode build_control_code(const Document& doc, ClassSet classes, std::vector<std::string>* rejected) {
  std::vector<const EntitySpan*> spans;
  for (const auto& s : doc.spans) {
    if (classes.contains(s.identifier_class)) spans.push_back(&s);
  }
  std::stable_sort(spans.begin(), spans.end(), [](auto* a, auto* b) { return a->start < b->start; });
  ControlCode code;
  for (const auto* s : spans) {
    if (!is_valid_code_value(s->surface)) {
      if (rejected) rejected->push_back(s->surface);
      continue;
    }
    if (code.contains_value(s->surface)) continue;
    code.add(s->category, s->surface);
  }
  return code;
}

}  // namespace hipsgen
