#include "ariel/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ariel {

namespace {

std::string join_indices(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string strip_quotes(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s = s.substr(1, s.size() - 2);
  }
  return std::string(trim(s));
}

}  // namespace

const char* dimension_name(Dimension d) noexcept {
  switch (d) {
    case Dimension::DataType: return "data_type";
    case Dimension::DataSender: return "data_sender";
    case Dimension::DataRecipient: return "data_recipient";
    case Dimension::TransmissionPrinciple: return "transmission_principle";
  }
  return "?";
}

std::optional<Dimension> dimension_from_name(std::string_view name) noexcept {
  for (Dimension d : kAllDimensions) {
    if (name == dimension_name(d)) return d;
  }
  return std::nullopt;
}

std::optional<Dimension> dimension_for_field(Field f) noexcept {
  switch (f) {
    case Field::DataType: return Dimension::DataType;
    case Field::DataSender: return Dimension::DataSender;
    case Field::DataRecipient: return Dimension::DataRecipient;
    case Field::TransmissionPrinciple: return Dimension::TransmissionPrinciple;
    case Field::DataSubject: return std::nullopt;
  }
  return std::nullopt;
}

Field field_for_dimension(Dimension d) noexcept {
  switch (d) {
    case Dimension::DataType: return Field::DataType;
    case Dimension::DataSender: return Field::DataSender;
    case Dimension::DataRecipient: return Field::DataRecipient;
    case Dimension::TransmissionPrinciple: return Field::TransmissionPrinciple;
  }
  return Field::DataType;
}

MissingSection::MissingSection(Dimension d)
    : OntologyError(std::string("missing ontology section for dimension '") +
                    dimension_name(d) + "'"),
      dimension(d) {}

NonContiguousLevels::NonContiguousLevels(Dimension d, std::vector<int> idx)
    : OntologyError(std::string("non-contiguous levels for dimension '") +
                    dimension_name(d) + "': [" + join_indices(idx) + "]"),
      dimension(d),
      indices(std::move(idx)) {}

EmptyDescription::EmptyDescription(Dimension d, int i)
    : OntologyError(std::string("empty description at L") + std::to_string(i) +
                    " of dimension '" + dimension_name(d) + "'"),
      dimension(d),
      index(i) {}

LevelOutOfRange::LevelOutOfRange(int i, int k)
    : OntologyError("level L" + std::to_string(i) + " outside ontology range 1.." +
                    std::to_string(k)),
      index(i),
      level_count(k) {}

MissingOntology::MissingOntology(Dimension d)
    : OntologyError(std::string("no ontology for dimension '") +
                    dimension_name(d) + "'"),
      dimension(d) {}

Ontology::Ontology(Dimension dimension, std::vector<OntologyLevel> levels)
    : dimension_(dimension), levels_(std::move(levels)) {
  std::vector<int> indices;
  indices.reserve(levels_.size());
  for (const OntologyLevel& l : levels_) indices.push_back(l.index);
  for (size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i].index != static_cast<int>(i) + 1) {
      throw NonContiguousLevels(dimension_, indices);
    }
    if (strip_quotes(levels_[i].description).empty()) {
      throw EmptyDescription(dimension_, levels_[i].index);
    }
  }
}

const OntologyLevel& Ontology::level(int index) const {
  if (index < 1 || index > level_count()) {
    throw LevelOutOfRange(index, level_count());
  }
  return levels_[static_cast<size_t>(index) - 1];
}

bool Ontology::contains(const OntologyLevel& l) const noexcept {
  return l.index >= 1 && l.index <= level_count() &&
         levels_[static_cast<size_t>(l.index) - 1].description == l.description;
}

OntologyLevel parse_level_ref(std::string_view label, const Ontology& ontology) {
  std::string_view s = trim(label);
  if (s.size() < 2 || (s[0] != 'L' && s[0] != 'l')) {
    throw MalformedLabel("level label '" + std::string(label) +
                         "' does not match L<index>");
  }
  int index = 0;
  for (size_t i = 1; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
      throw MalformedLabel("level label '" + std::string(label) +
                           "' does not match L<index>");
    }
    index = index * 10 + (s[i] - '0');
  }
  return ontology.level(index);
}

std::string level_label(const OntologyLevel& l) {
  return "L" + std::to_string(l.index);
}

bool level_leq(const Ontology& o, const OntologyLevel& a, const OntologyLevel& b) {
  if (!o.contains(a) || !o.contains(b)) {
    throw DimensionMismatch("level does not belong to the '" +
                            std::string(dimension_name(o.dimension())) +
                            "' ontology");
  }
  return a.index <= b.index;
}

OntologySet::OntologySet(std::string user_id, std::vector<Ontology> ontologies)
    : user_id_(std::move(user_id)) {
  for (Ontology& o : ontologies) {
    Dimension d = o.dimension();
    if (by_dimension_.count(d)) {
      throw OntologyError(std::string("duplicate ontology for dimension '") +
                          dimension_name(d) + "'");
    }
    by_dimension_.emplace(d, std::move(o));
  }
}

bool OntologySet::has(Dimension d) const noexcept { return by_dimension_.count(d) > 0; }

const Ontology& OntologySet::get(Dimension d) const {
  auto it = by_dimension_.find(d);
  if (it == by_dimension_.end()) throw MissingOntology(d);
  return it->second;
}

namespace {

struct RawSection {
  Dimension dimension;
  std::vector<std::pair<int, std::string>> levels;  // (index, description)
};

// Header form: "<dimension> Ontology", tolerating bold/list decorations.
std::optional<Dimension> match_header(std::string_view line) {
  std::string_view s = trim(line);
  while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == '-')) {
    s.remove_prefix(1);
    s = trim(s);
  }
  while (!s.empty() && (s.back() == '*' || s.back() == ':')) {
    s.remove_suffix(1);
    s = trim(s);
  }
  constexpr std::string_view suffix = " Ontology";
  if (s.size() <= suffix.size() || s.substr(s.size() - suffix.size()) != suffix) {
    return std::nullopt;
  }
  return dimension_from_name(trim(s.substr(0, s.size() - suffix.size())));
}

// Level line form: "L<n>. <description>" ("L<n>: ..." tolerated).
std::optional<std::pair<int, std::string>> match_level(std::string_view line) {
  std::string_view s = trim(line);
  while (!s.empty() && s.front() == '*') s.remove_prefix(1);
  s = trim(s);
  if (s.size() < 3 || (s[0] != 'L' && s[0] != 'l')) return std::nullopt;
  size_t i = 1;
  int index = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
    index = index * 10 + (s[i] - '0');
    ++i;
  }
  if (i == 1 || i >= s.size() || (s[i] != '.' && s[i] != ':')) return std::nullopt;
  return std::make_pair(index, std::string(trim(s.substr(i + 1))));
}

std::vector<RawSection> scan_sections(const std::string& raw) {
  std::vector<RawSection> sections;
  std::istringstream in(raw);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (auto dim = match_header(line)) {
      sections.push_back(RawSection{*dim, {}});
      continue;
    }
    if (sections.empty()) continue;  // preamble before the first header
    if (auto level = match_level(line)) {
      sections.back().levels.push_back(std::move(*level));
    } else if (!sections.back().levels.empty()) {
      // wrapped description line
      auto& [idx, desc] = sections.back().levels.back();
      desc += ' ';
      desc += std::string(trim(line));
    }
  }
  return sections;
}

ParsedOntologySet build_set(const std::string& user_id,
                            std::vector<RawSection> sections,
                            const std::vector<Dimension>& expected) {
  for (Dimension d : expected) {
    bool found = std::any_of(sections.begin(), sections.end(),
                             [d](const RawSection& s) { return s.dimension == d; });
    if (!found) throw MissingSection(d);
  }

  ParsedOntologySet result;
  std::vector<Ontology> ontologies;
  for (RawSection& section : sections) {
    std::vector<int> indices;
    std::vector<OntologyLevel> levels;
    for (auto& [index, description] : section.levels) {
      indices.push_back(index);
      levels.push_back(OntologyLevel{index, strip_quotes(description)});
    }
    for (size_t i = 0; i < levels.size(); ++i) {
      if (levels[i].index != static_cast<int>(i) + 1) {
        throw NonContiguousLevels(section.dimension, indices);
      }
      if (levels[i].description.empty()) {
        throw EmptyDescription(section.dimension, levels[i].index);
      }
    }
    if (levels.empty()) throw MissingSection(section.dimension);
    if (levels.size() == 1) {
      result.warnings.push_back(
          std::string("ontology for '") + dimension_name(section.dimension) +
          "' has a single level; every mapped pair will compare equal");
    }
    ontologies.emplace_back(section.dimension, std::move(levels));
  }
  result.set = OntologySet(user_id, std::move(ontologies));
  return result;
}

}  // namespace

ParsedOntologySet parse_ontology_set(const std::string& raw,
                                     const std::string& user_id,
                                     const std::vector<Dimension>& expected_dimensions) {
  return build_set(user_id, scan_sections(raw), expected_dimensions);
}

ParsedOntologySet parse_ontology_set_any(const std::string& raw,
                                         const std::string& user_id) {
  auto sections = scan_sections(raw);
  if (sections.empty()) {
    throw OntologyError("no '<dimension> Ontology' sections found");
  }
  return build_set(user_id, std::move(sections), {});
}

std::string serialize_ontology_set(const OntologySet& set) {
  std::string out;
  bool first = true;
  for (const auto& [dim, ontology] : set.all()) {
    if (!first) out += '\n';
    first = false;
    out += dimension_name(dim);
    out += " Ontology\n";
    for (const OntologyLevel& l : ontology.levels()) {
      out += level_label(l);
      out += ". \"";
      out += l.description;
      out += "\"\n";
    }
  }
  return out;
}

std::string ontology_set_to_json(const OntologySet& set) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [dim, ontology] : set.all()) {
    for (const OntologyLevel& l : ontology.levels()) {
      arr.push_back({{"dimension", dimension_name(dim)},
                     {"index", l.index},
                     {"description", l.description}});
    }
  }
  return arr.dump(2);
}

OntologySet ontology_set_from_json(const std::string& text, const std::string& user_id) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw OntologyError(std::string("bad ontology json: ") + e.what());
  }
  std::map<Dimension, std::vector<OntologyLevel>> levels;
  for (const auto& item : arr) {
    auto dim = dimension_from_name(item.at("dimension").get<std::string>());
    if (!dim) throw OntologyError("unknown dimension in ontology json");
    levels[*dim].push_back(OntologyLevel{item.at("index").get<int>(),
                                         item.at("description").get<std::string>()});
  }
  std::vector<Ontology> ontologies;
  for (auto& [dim, lv] : levels) {
    std::sort(lv.begin(), lv.end(),
              [](const OntologyLevel& a, const OntologyLevel& b) { return a.index < b.index; });
    ontologies.emplace_back(dim, std::move(lv));
  }
  return OntologySet(user_id, std::move(ontologies));
}

void save_ontology_set(const OntologySet& set, const std::string& text_path,
                       const std::string& json_path) {
  {
    std::ofstream out(text_path);
    if (!out) throw Error("cannot open '" + text_path + "' for writing");
    out << serialize_ontology_set(set);
  }
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw Error("cannot open '" + json_path + "' for writing");
    out << ontology_set_to_json(set) << '\n';
  }
}

ParsedOntologySet load_ontology_set(const std::string& text_path,
                                    const std::string& user_id,
                                    const std::vector<Dimension>& expected_dimensions) {
  std::ifstream in(text_path);
  if (!in) throw Error("cannot open ontology file '" + text_path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (expected_dimensions.empty()) {
    return parse_ontology_set_any(buf.str(), user_id);
  }
  return parse_ontology_set(buf.str(), user_id, expected_dimensions);
}

}  // namespace ariel
