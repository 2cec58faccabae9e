#pragma once
// Survey-corpus ingestion: delimited-text reading behind per-dataset column
// mappings, score-to-judgment conversion, and seeded prior/incoming splits.
//
// Everything downstream consumes the split files, so ingestion is the only
// place that knows about source schemas.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ariel/core.hpp"

namespace ariel::data {

struct RawResponse {
  std::string user_id;
  Request request;
  int score = 0;
};

// Maps logical fields onto source columns. Fields listed under `constants`
// take a fixed value instead of a column (e.g. the spa corpus has no
// data_subject column; every row is the 'user').
struct ColumnMapping {
  char delimiter = ',';
  std::string user_id_column;
  std::string score_column;
  std::map<Field, std::string> field_columns;
  std::map<Field, std::string> constants;

  static ColumnMapping from_json(const std::string& text);
  static ColumnMapping from_file(const std::string& path);
};

// Reads an RFC-4180-style delimited file with a header row.
std::vector<RawResponse> read_survey_file(const std::string& path,
                                          const ColumnMapping& mapping);

// Likert conversion, spa: 1-2 inappropriate, 4-5 appropriate, 3 filtered.
std::optional<BinaryJudgment> convert_spa(int score);
// Education: 1 appropriate, 2 inappropriate, 3-5 ("does not make sense"
// options) filtered.
std::optional<BinaryJudgment> convert_education(int score);
std::optional<BinaryJudgment> convert_score(DatasetId dataset, int score);

using LabeledRequest = PriorRequest;  // ground-truth label on an incoming request

struct UserSplit {
  std::string user_id;
  std::vector<PriorRequest> priors;
  std::vector<LabeledRequest> incoming;
};

struct DatasetManifest {
  DatasetId dataset_id = DatasetId::Spa;
  std::uint64_t seed = 0;
  int user_count = 0;
  int per_user_requests = 0;  // priors + incoming
  long appropriate_count = 0;    // over incoming ground truth
  long inappropriate_count = 0;
  std::string generator = "mt19937_64/fisher-yates-mod";
  std::string notes;

  std::string to_json(int indent = 2) const;
  static DatasetManifest from_json(const std::string& text);
};

struct SplitConfig {
  std::uint64_t seed = 0;
  int user_sample = 0;  // 0 = keep every eligible user
  int prior_count = 60;
  int incoming_count = 10;
  int min_responses = 70;  // eligibility threshold on converted judgments
};

struct InsufficientUsers final : Error {
  InsufficientUsers(int found, int requested);
  int found;
  int requested;
};

// Portable Fisher-Yates over mt19937_64; std::shuffle is not reproducible
// across standard libraries.
void deterministic_shuffle_indices(std::vector<size_t>& indices, std::uint64_t seed);

template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  deterministic_shuffle_indices(order, seed);
  std::vector<T> shuffled;
  shuffled.reserve(items.size());
  for (size_t i : order) shuffled.push_back(std::move(items[i]));
  items = std::move(shuffled);
}

// Seed for a user-scoped draw, stable under user-set changes.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view scope);

// Conversion, neutral-score filtering, eligibility filtering, user sampling,
// and the per-user prior/incoming partition, in that order. Responses are
// deduplicated per user on the normalized request tuple before sampling, so
// priors and incoming are disjoint as request sets.
std::pair<std::vector<UserSplit>, DatasetManifest> build_splits(
    const std::vector<RawResponse>& responses, DatasetId dataset,
    const SplitConfig& config);

// Split directory layout: priors.jsonl + incoming.jsonl in the knowledge-base
// record format, manifest.json alongside.
void save_splits(std::span<const UserSplit> splits, const DatasetManifest& manifest,
                 const std::string& dir);
std::pair<std::vector<UserSplit>, DatasetManifest> load_splits(const std::string& dir);

KnowledgeBase knowledge_base_of(const UserSplit& split);

}  // namespace ariel::data
