#pragma once
// Core model: CI requests, judgments, and the per-user knowledge base.
//
// A request is the five-parameter contextual-integrity tuple describing one
// information flow. Parameter equality is always decided on normalized text;
// raw values are preserved for serialization and prompt rendering.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ariel {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
struct PreconditionError final : Error {
  using Error::Error;
};

// The five fields of a CI information flow, in canonical order.
enum class Field {
  DataType,
  DataSubject,
  DataSender,
  DataRecipient,
  TransmissionPrinciple,
};

inline constexpr Field kAllFields[] = {
    Field::DataType,      Field::DataSubject,           Field::DataSender,
    Field::DataRecipient, Field::TransmissionPrinciple,
};

const char* field_name(Field f) noexcept;
std::optional<Field> field_from_name(std::string_view name) noexcept;

// Evaluation corpora this build knows how to drive.
enum class DatasetId { Spa, Education };
const char* dataset_name(DatasetId d) noexcept;  // "spa" / "education"
std::optional<DatasetId> dataset_from_name(std::string_view name) noexcept;

// FNV-1a 64-bit. Stable across runs and platforms; used for cache keys,
// fixture identities, and per-user seed derivation.
std::uint64_t fnv1a64(std::string_view data) noexcept;
std::string to_hex(std::uint64_t value);

// Trim, casefold, collapse internal whitespace. Idempotent.
std::string normalize(std::string_view value);

struct Request {
  std::string data_type;
  std::string data_subject;
  std::string data_sender;
  std::string data_recipient;
  std::string transmission_principle;  // empty means "no purpose/condition"

  const std::string& field(Field f) const noexcept;
  std::string& field(Field f) noexcept;

  // Normalized tuple, usable as a map key.
  std::string normalized_key() const;

  bool operator==(const Request&) const = default;
};

// data_type, data_subject, data_sender, data_recipient must be non-empty
// after normalization. transmission_principle may be empty.
void validate_request(const Request& r);

// Number of the five fields whose normalized values differ. Range 0..5.
int hamming_distance(const Request& a, const Request& b);

struct FieldDifference {
  Field field;
  std::string value_a;  // raw, un-normalized
  std::string value_b;
};

// The single differing field with both raw values, or nullopt at distance 0.
// Throws PreconditionError when the distance exceeds 1.
std::optional<FieldDifference> differing_parameter(const Request& a,
                                                   const Request& b);

enum class BinaryJudgment { Appropriate, Inappropriate };
enum class Decision { Appropriate, Inappropriate, Undetermined };

const char* to_string(BinaryJudgment j) noexcept;
const char* to_string(Decision d) noexcept;
std::optional<BinaryJudgment> binary_judgment_from_string(std::string_view s);
std::optional<Decision> decision_from_string(std::string_view s);

inline Decision to_decision(BinaryJudgment j) noexcept {
  return j == BinaryJudgment::Appropriate ? Decision::Appropriate
                                          : Decision::Inappropriate;
}

struct PriorRequest {
  Request request;
  BinaryJudgment judgment = BinaryJudgment::Appropriate;

  bool operator==(const PriorRequest&) const = default;
};

// A user's history of judged requests. Priors keep insertion order; duplicate
// (request, judgment) entries are legal and each contributes its own vote.
struct KnowledgeBase {
  std::string user_id;
  std::vector<PriorRequest> priors;

  // All priors must share one normalized data_subject.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Record format: one JSON object per line with fields user_id, data_type,
// data_subject, data_sender, data_recipient, transmission_principle,
// judgment. Round-trips raw values losslessly.
// ---------------------------------------------------------------------------

std::string to_record_line(const std::string& user_id, const PriorRequest& p);
PriorRequest prior_from_record_line(const std::string& line,
                                    std::string* user_id_out = nullptr);

void save_knowledge_base(const KnowledgeBase& kb, const std::string& path);
KnowledgeBase load_knowledge_base(const std::string& path);

}  // namespace ariel
