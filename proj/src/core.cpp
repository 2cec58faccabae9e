#include "ariel/core.hpp"

#include <cctype>
#include <fstream>

#include <json.hpp>

namespace ariel {

const char* field_name(Field f) noexcept {
  switch (f) {
    case Field::DataType: return "data_type";
    case Field::DataSubject: return "data_subject";
    case Field::DataSender: return "data_sender";
    case Field::DataRecipient: return "data_recipient";
    case Field::TransmissionPrinciple: return "transmission_principle";
  }
  return "?";
}

std::optional<Field> field_from_name(std::string_view name) noexcept {
  for (Field f : kAllFields) {
    if (name == field_name(f)) return f;
  }
  return std::nullopt;
}

const char* dataset_name(DatasetId d) noexcept {
  return d == DatasetId::Spa ? "spa" : "education";
}

std::optional<DatasetId> dataset_from_name(std::string_view name) noexcept {
  if (name == "spa") return DatasetId::Spa;
  if (name == "education") return DatasetId::Education;
  return std::nullopt;
}

std::uint64_t fnv1a64(std::string_view data) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string normalize(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  bool pending_space = false;
  for (unsigned char c : value) {
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

const std::string& Request::field(Field f) const noexcept {
  switch (f) {
    case Field::DataType: return data_type;
    case Field::DataSubject: return data_subject;
    case Field::DataSender: return data_sender;
    case Field::DataRecipient: return data_recipient;
    case Field::TransmissionPrinciple: return transmission_principle;
  }
  return data_type;  // unreachable
}

std::string& Request::field(Field f) noexcept {
  return const_cast<std::string&>(std::as_const(*this).field(f));
}

std::string Request::normalized_key() const {
  std::string key;
  for (Field f : kAllFields) {
    key += normalize(field(f));
    key.push_back('\x1f');
  }
  return key;
}

void validate_request(const Request& r) {
  for (Field f : kAllFields) {
    if (f == Field::TransmissionPrinciple) continue;
    if (normalize(r.field(f)).empty()) {
      throw Error(std::string("request field '") + field_name(f) +
                  "' is empty after normalization");
    }
  }
}

int hamming_distance(const Request& a, const Request& b) {
  int d = 0;
  for (Field f : kAllFields) {
    if (normalize(a.field(f)) != normalize(b.field(f))) ++d;
  }
  return d;
}

std::optional<FieldDifference> differing_parameter(const Request& a,
                                                   const Request& b) {
  std::optional<FieldDifference> diff;
  for (Field f : kAllFields) {
    if (normalize(a.field(f)) == normalize(b.field(f))) continue;
    if (diff) {
      throw PreconditionError(
          "differing_parameter called on requests at Hamming distance > 1");
    }
    diff = FieldDifference{f, a.field(f), b.field(f)};
  }
  return diff;
}

const char* to_string(BinaryJudgment j) noexcept {
  return j == BinaryJudgment::Appropriate ? "appropriate" : "inappropriate";
}

const char* to_string(Decision d) noexcept {
  switch (d) {
    case Decision::Appropriate: return "appropriate";
    case Decision::Inappropriate: return "inappropriate";
    case Decision::Undetermined: return "undetermined";
  }
  return "?";
}

std::optional<BinaryJudgment> binary_judgment_from_string(std::string_view s) {
  const std::string n = normalize(s);
  if (n == "appropriate") return BinaryJudgment::Appropriate;
  if (n == "inappropriate") return BinaryJudgment::Inappropriate;
  return std::nullopt;
}

std::optional<Decision> decision_from_string(std::string_view s) {
  const std::string n = normalize(s);
  if (n == "appropriate") return Decision::Appropriate;
  if (n == "inappropriate") return Decision::Inappropriate;
  if (n == "undetermined") return Decision::Undetermined;
  return std::nullopt;
}

void KnowledgeBase::validate() const {
  if (priors.empty()) return;
  const std::string subject = normalize(priors.front().request.data_subject);
  for (const PriorRequest& p : priors) {
    validate_request(p.request);
    if (normalize(p.request.data_subject) != subject) {
      throw Error("knowledge base for user '" + user_id +
                  "' mixes data subjects: '" + subject + "' vs '" +
                  normalize(p.request.data_subject) + "'");
    }
  }
}

std::string to_record_line(const std::string& user_id, const PriorRequest& p) {
  nlohmann::json j;
  j["user_id"] = user_id;
  for (Field f : kAllFields) j[field_name(f)] = p.request.field(f);
  j["judgment"] = to_string(p.judgment);
  return j.dump();
}

PriorRequest prior_from_record_line(const std::string& line,
                                    std::string* user_id_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad knowledge-base record: ") + e.what());
  }
  PriorRequest p;
  for (Field f : kAllFields) {
    const char* name = field_name(f);
    if (!j.contains(name) || !j[name].is_string()) {
      throw Error(std::string("knowledge-base record missing field '") + name +
                  "'");
    }
    p.request.field(f) = j[name].get<std::string>();
  }
  if (!j.contains("judgment")) {
    throw Error("knowledge-base record missing field 'judgment'");
  }
  auto judgment = binary_judgment_from_string(j["judgment"].get<std::string>());
  if (!judgment) {
    throw Error("knowledge-base record has illegal judgment '" +
                j["judgment"].get<std::string>() + "'");
  }
  p.judgment = *judgment;
  if (user_id_out) {
    *user_id_out = j.value("user_id", std::string{});
  }
  return p;
}

void save_knowledge_base(const KnowledgeBase& kb, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const PriorRequest& p : kb.priors) {
    out << to_record_line(kb.user_id, p) << '\n';
  }
}

KnowledgeBase load_knowledge_base(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open knowledge base '" + path + "'");
  KnowledgeBase kb;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string user_id;
    kb.priors.push_back(prior_from_record_line(line, &user_id));
    if (first) {
      kb.user_id = user_id;
      first = false;
    }
  }
  kb.validate();
  return kb;
}

}  // namespace ariel
