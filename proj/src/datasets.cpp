#include "ariel/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace ariel::data {

namespace fs = std::filesystem;

ColumnMapping ColumnMapping::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad column mapping: ") + e.what());
  }
  ColumnMapping m;
  if (j.contains("delimiter")) {
    const std::string d = j["delimiter"].get<std::string>();
    if (d == "\\t" || d == "tab") {
      m.delimiter = '\t';
    } else if (d.size() == 1) {
      m.delimiter = d[0];
    } else {
      throw Error("column mapping delimiter must be a single character");
    }
  }
  const auto& columns = j.at("columns");
  m.user_id_column = columns.at("user_id").get<std::string>();
  m.score_column = columns.at("score").get<std::string>();
  for (Field f : kAllFields) {
    const char* name = field_name(f);
    if (columns.contains(name)) {
      m.field_columns[f] = columns[name].get<std::string>();
    }
  }
  if (j.contains("constants")) {
    for (Field f : kAllFields) {
      const char* name = field_name(f);
      if (j["constants"].contains(name)) {
        m.constants[f] = j["constants"][name].get<std::string>();
      }
    }
  }
  for (Field f : kAllFields) {
    if (f == Field::TransmissionPrinciple) continue;  // may be absent -> empty
    if (!m.field_columns.count(f) && !m.constants.count(f)) {
      throw Error(std::string("column mapping covers neither a column nor a "
                              "constant for field '") +
                  field_name(f) + "'");
    }
  }
  return m;
}

ColumnMapping ColumnMapping::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open column mapping '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

namespace {

// One record, honoring quotes and embedded newlines.
bool read_row(std::istream& in, char delimiter, std::vector<std::string>& row) {
  row.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == delimiter) {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      break;
    } else {
      field.push_back(c);
    }
  }
  if (!any) return false;
  row.push_back(std::move(field));
  return true;
}

}  // namespace

std::vector<RawResponse> read_survey_file(const std::string& path,
                                          const ColumnMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open survey file '" + path + "'");

  std::vector<std::string> header;
  if (!read_row(in, mapping.delimiter, header)) {
    throw Error("survey file '" + path + "' is empty");
  }
  auto column_index = [&](const std::string& name) -> size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error("survey file '" + path + "' has no column '" + name + "'");
    }
    return static_cast<size_t>(it - header.begin());
  };

  const size_t user_idx = column_index(mapping.user_id_column);
  const size_t score_idx = column_index(mapping.score_column);
  std::map<Field, size_t> field_idx;
  for (const auto& [field, column] : mapping.field_columns) {
    field_idx[field] = column_index(column);
  }

  std::vector<RawResponse> responses;
  std::vector<std::string> row;
  size_t line_no = 1;
  while (read_row(in, mapping.delimiter, row)) {
    ++line_no;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() < header.size()) {
      throw Error("survey file '" + path + "' row " + std::to_string(line_no) +
                  " has " + std::to_string(row.size()) + " fields, expected " +
                  std::to_string(header.size()));
    }
    RawResponse r;
    r.user_id = row[user_idx];
    try {
      r.score = std::stoi(row[score_idx]);
    } catch (const std::exception&) {
      throw Error("survey file '" + path + "' row " + std::to_string(line_no) +
                  " has non-numeric score '" + row[score_idx] + "'");
    }
    for (Field f : kAllFields) {
      auto it = field_idx.find(f);
      if (it != field_idx.end()) {
        r.request.field(f) = row[it->second];
      } else if (auto c = mapping.constants.find(f); c != mapping.constants.end()) {
        r.request.field(f) = c->second;
      }
    }
    responses.push_back(std::move(r));
  }
  return responses;
}

std::optional<BinaryJudgment> convert_spa(int score) {
  if (score < 1 || score > 5) {
    throw Error("spa score " + std::to_string(score) + " outside 1..5");
  }
  if (score <= 2) return BinaryJudgment::Inappropriate;
  if (score >= 4) return BinaryJudgment::Appropriate;
  return std::nullopt;  // neutral
}

std::optional<BinaryJudgment> convert_education(int score) {
  if (score < 1 || score > 5) {
    throw Error("education score " + std::to_string(score) + " outside 1..5");
  }
  if (score == 1) return BinaryJudgment::Appropriate;
  if (score == 2) return BinaryJudgment::Inappropriate;
  return std::nullopt;  // "does not make sense" options
}

std::optional<BinaryJudgment> convert_score(DatasetId dataset, int score) {
  return dataset == DatasetId::Spa ? convert_spa(score) : convert_education(score);
}

InsufficientUsers::InsufficientUsers(int f, int r)
    : Error("only " + std::to_string(f) + " eligible users, need " +
            std::to_string(r)),
      found(f),
      requested(r) {}

void deterministic_shuffle_indices(std::vector<size_t>& indices, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (size_t i = indices.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(indices[i - 1], indices[j]);
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view scope) {
  return fnv1a64(to_hex(seed) + '\x1f' + std::string(scope));
}

std::pair<std::vector<UserSplit>, DatasetManifest> build_splits(
    const std::vector<RawResponse>& responses, DatasetId dataset,
    const SplitConfig& config) {
  const int per_user = config.prior_count + config.incoming_count;
  if (per_user > config.min_responses) {
    throw PreconditionError(
        "prior_count + incoming_count (" + std::to_string(per_user) +
        ") exceeds the eligibility threshold (" +
        std::to_string(config.min_responses) + ")");
  }

  // Convert first, then filter; neutral / does-not-make-sense responses never
  // count toward eligibility.
  struct Converted {
    Request request;
    BinaryJudgment judgment;
  };
  std::map<std::string, std::vector<Converted>> by_user;
  for (const RawResponse& r : responses) {
    auto judgment = convert_score(dataset, r.score);
    if (!judgment) continue;
    by_user[r.user_id].push_back(Converted{r.request, *judgment});
  }

  // Dedupe per user on the normalized tuple; first occurrence wins. This is
  // what guarantees prior/incoming disjointness.
  std::vector<std::string> eligible;
  for (auto& [user_id, converted] : by_user) {
    std::unordered_set<std::string> seen;
    std::vector<Converted> unique;
    unique.reserve(converted.size());
    for (Converted& c : converted) {
      if (seen.insert(c.request.normalized_key()).second) {
        unique.push_back(std::move(c));
      }
    }
    converted = std::move(unique);
    if (static_cast<int>(converted.size()) >= config.min_responses) {
      eligible.push_back(user_id);
    }
  }

  if (config.user_sample > 0) {
    if (static_cast<int>(eligible.size()) < config.user_sample) {
      throw InsufficientUsers(static_cast<int>(eligible.size()), config.user_sample);
    }
    deterministic_shuffle(eligible, derive_seed(config.seed, "user-sample"));
    eligible.resize(static_cast<size_t>(config.user_sample));
    std::sort(eligible.begin(), eligible.end());
  } else if (eligible.empty()) {
    throw InsufficientUsers(0, 1);
  }

  std::vector<UserSplit> splits;
  splits.reserve(eligible.size());
  DatasetManifest manifest;
  manifest.dataset_id = dataset;
  manifest.seed = config.seed;
  manifest.per_user_requests = per_user;
  manifest.notes =
      "conversion and neutral-score filtering precede per-user sampling; "
      "responses deduplicated per user on the normalized request tuple";

  for (const std::string& user_id : eligible) {
    auto& converted = by_user[user_id];
    deterministic_shuffle(converted, derive_seed(config.seed, user_id));

    UserSplit split;
    split.user_id = user_id;
    for (int i = 0; i < config.prior_count; ++i) {
      split.priors.push_back(
          PriorRequest{converted[static_cast<size_t>(i)].request,
                       converted[static_cast<size_t>(i)].judgment});
    }
    for (int i = config.prior_count; i < per_user; ++i) {
      const auto& c = converted[static_cast<size_t>(i)];
      split.incoming.push_back(LabeledRequest{c.request, c.judgment});
      if (c.judgment == BinaryJudgment::Appropriate) {
        ++manifest.appropriate_count;
      } else {
        ++manifest.inappropriate_count;
      }
    }
    splits.push_back(std::move(split));
  }
  manifest.user_count = static_cast<int>(splits.size());
  return {std::move(splits), std::move(manifest)};
}

std::string DatasetManifest::to_json(int indent) const {
  nlohmann::json j{{"dataset", dataset_name(dataset_id)},
                   {"seed", seed},
                   {"user_count", user_count},
                   {"per_user_requests", per_user_requests},
                   {"class_counts",
                    {{"appropriate", appropriate_count},
                     {"inappropriate", inappropriate_count}}},
                   {"generator", generator},
                   {"notes", notes}};
  return j.dump(indent);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad dataset manifest: ") + e.what());
  }
  DatasetManifest m;
  auto dataset = dataset_from_name(j.at("dataset").get<std::string>());
  if (!dataset) throw Error("dataset manifest names an unknown dataset");
  m.dataset_id = *dataset;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.user_count = j.at("user_count").get<int>();
  m.per_user_requests = j.at("per_user_requests").get<int>();
  m.appropriate_count = j.at("class_counts").at("appropriate").get<long>();
  m.inappropriate_count = j.at("class_counts").at("inappropriate").get<long>();
  m.generator = j.value("generator", m.generator);
  m.notes = j.value("notes", std::string{});
  return m;
}

void save_splits(std::span<const UserSplit> splits, const DatasetManifest& manifest,
                 const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream priors(fs::path(dir) / "priors.jsonl");
  std::ofstream incoming(fs::path(dir) / "incoming.jsonl");
  if (!priors || !incoming) throw Error("cannot write split files under '" + dir + "'");
  for (const UserSplit& split : splits) {
    for (const PriorRequest& p : split.priors) {
      priors << to_record_line(split.user_id, p) << '\n';
    }
    for (const LabeledRequest& r : split.incoming) {
      incoming << to_record_line(split.user_id, r) << '\n';
    }
  }
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.to_json() << '\n';
}

namespace {

void load_records(const std::string& path,
                  const std::function<void(const std::string&, PriorRequest)>& sink) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::string user_id;
    PriorRequest p = prior_from_record_line(line, &user_id);
    sink(user_id, std::move(p));
  }
}

}  // namespace

std::pair<std::vector<UserSplit>, DatasetManifest> load_splits(const std::string& dir) {
  std::vector<UserSplit> splits;
  std::map<std::string, size_t> index_of;
  auto split_for = [&](const std::string& user_id) -> UserSplit& {
    auto [it, inserted] = index_of.try_emplace(user_id, splits.size());
    if (inserted) {
      splits.push_back(UserSplit{user_id, {}, {}});
    }
    return splits[it->second];
  };
  load_records((fs::path(dir) / "priors.jsonl").string(),
               [&](const std::string& user_id, PriorRequest p) {
                 split_for(user_id).priors.push_back(std::move(p));
               });
  load_records((fs::path(dir) / "incoming.jsonl").string(),
               [&](const std::string& user_id, PriorRequest p) {
                 split_for(user_id).incoming.push_back(std::move(p));
               });

  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw Error("missing manifest.json under '" + dir + "'");
  std::ostringstream buf;
  buf << mf.rdbuf();
  return {std::move(splits), DatasetManifest::from_json(buf.str())};
}

KnowledgeBase knowledge_base_of(const UserSplit& split) {
  KnowledgeBase kb;
  kb.user_id = split.user_id;
  kb.priors = split.priors;
  return kb;
}

}  // namespace ariel::data
