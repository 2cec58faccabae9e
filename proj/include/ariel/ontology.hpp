#pragma once
// Leveled ontologies: per-dimension total orders of level descriptions.
//
// Each ontology is a directed path L1..Lk. Index 1 is always the
// most-shareable end of its dimension (least sensitive data type, most
// sender authority, most recipient trust, strongest safeguards), so a single
// integer comparison on indices realizes the ordering for all dimensions.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ariel/core.hpp"

namespace ariel {

// The four ordered request parameters. The data subject is constant per
// context and carries no ontology.
enum class Dimension { DataType, DataSender, DataRecipient, TransmissionPrinciple };

inline constexpr Dimension kAllDimensions[] = {
    Dimension::DataType,
    Dimension::DataSender,
    Dimension::DataRecipient,
    Dimension::TransmissionPrinciple,
};

const char* dimension_name(Dimension d) noexcept;  // "data_type", ...
std::optional<Dimension> dimension_from_name(std::string_view name) noexcept;

// Field -> Dimension; nullopt for the data subject.
std::optional<Dimension> dimension_for_field(Field f) noexcept;
Field field_for_dimension(Dimension d) noexcept;

struct OntologyLevel {
  int index = 0;  // 1-based
  std::string description;

  bool operator==(const OntologyLevel&) const = default;
};

struct OntologyError : Error {
  using Error::Error;
};
struct MissingSection final : OntologyError {
  explicit MissingSection(Dimension d);
  Dimension dimension;
};
struct NonContiguousLevels final : OntologyError {
  NonContiguousLevels(Dimension d, std::vector<int> indices);
  Dimension dimension;
  std::vector<int> indices;
};
struct EmptyDescription final : OntologyError {
  EmptyDescription(Dimension d, int index);
  Dimension dimension;
  int index;
};
struct MalformedLabel final : OntologyError {
  using OntologyError::OntologyError;
};
struct LevelOutOfRange final : OntologyError {
  LevelOutOfRange(int index, int level_count);
  int index;
  int level_count;
};
struct DimensionMismatch final : OntologyError {
  using OntologyError::OntologyError;
};
struct MissingOntology final : OntologyError {
  explicit MissingOntology(Dimension d);
  Dimension dimension;
};

class Ontology {
 public:
  Ontology() = default;
  // Levels must be contiguous from 1. Throws NonContiguousLevels or
  // EmptyDescription otherwise.
  Ontology(Dimension dimension, std::vector<OntologyLevel> levels);

  Dimension dimension() const noexcept { return dimension_; }
  const std::vector<OntologyLevel>& levels() const noexcept { return levels_; }
  int level_count() const noexcept { return static_cast<int>(levels_.size()); }

  // Throws LevelOutOfRange.
  const OntologyLevel& level(int index) const;

  bool contains(const OntologyLevel& l) const noexcept;

 private:
  Dimension dimension_ = Dimension::DataType;
  std::vector<OntologyLevel> levels_;
};

// "L3" -> level 3 of the ontology. Accepts surrounding whitespace. Throws
// MalformedLabel or LevelOutOfRange.
OntologyLevel parse_level_ref(std::string_view label, const Ontology& ontology);

// Canonical "L<index>" label.
std::string level_label(const OntologyLevel& l);

// a.index <= b.index, after checking both levels belong to `o`.
// Throws DimensionMismatch when either is foreign to the ontology.
bool level_leq(const Ontology& o, const OntologyLevel& a, const OntologyLevel& b);

class OntologySet {
 public:
  OntologySet() = default;
  OntologySet(std::string user_id, std::vector<Ontology> ontologies);

  const std::string& user_id() const noexcept { return user_id_; }

  bool has(Dimension d) const noexcept;
  // Throws MissingOntology.
  const Ontology& get(Dimension d) const;

  const std::map<Dimension, Ontology>& all() const noexcept { return by_dimension_; }

 private:
  std::string user_id_;
  std::map<Dimension, Ontology> by_dimension_;
};

struct ParsedOntologySet {
  OntologySet set;
  std::vector<std::string> warnings;  // e.g. single-level ontologies
};

// Parses the plain-text format emitted by the generation prompt:
//   <dimension> Ontology
//   L1. "description"
//   L2. "description"
// Sections listed in expected_dimensions must be present. Descriptions keep
// their full text with surrounding quotes stripped; a non-blank line that is
// neither a header nor a level line continues the previous description.
ParsedOntologySet parse_ontology_set(const std::string& raw,
                                     const std::string& user_id,
                                     const std::vector<Dimension>& expected_dimensions);

// Same, requiring only that at least one section is present.
ParsedOntologySet parse_ontology_set_any(const std::string& raw,
                                         const std::string& user_id);

// Re-emits the generation-prompt text format (descriptions quoted).
std::string serialize_ontology_set(const OntologySet& set);

// Structured (dimension, index, description) triples for tooling.
std::string ontology_set_to_json(const OntologySet& set);
OntologySet ontology_set_from_json(const std::string& text, const std::string& user_id);

void save_ontology_set(const OntologySet& set, const std::string& text_path,
                       const std::string& json_path = {});
ParsedOntologySet load_ontology_set(const std::string& text_path,
                                    const std::string& user_id,
                                    const std::vector<Dimension>& expected_dimensions = {});

}  // namespace ariel
