#pragma once
// Online judgment: neighbor selection, per-pair entailment, vote aggregation.
//
// A prior entails the incoming request when either
//   (1) prior judged inappropriate and prior_level <= incoming_level, or
//   (2) prior judged appropriate  and incoming_level <= prior_level,
// on the single differing dimension (equal parameters compare equal by
// construction). Votes are tallied across all neighboring priors; a tie,
// including zero votes, escalates as Undetermined.

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ariel/core.hpp"
#include "ariel/ontology.hpp"

namespace ariel {

// Maps the two differing raw values onto levels of one ontology. The prior
// request and incoming request give the mapper full context, mirroring the
// mapping-call contract of the LLM backend. Implementations must be safe to
// call from concurrent judgments.
class LevelMapper {
 public:
  struct Levels {
    OntologyLevel prior_level;
    OntologyLevel incoming_level;
  };

  virtual ~LevelMapper() = default;

  // Throws on failure; the engine degrades a throwing mapping to NoVote.
  virtual Levels map_pair(const Request& prior, const Request& incoming,
                          const Ontology& ontology, const std::string& prior_value,
                          const std::string& incoming_value) = 0;
};

// Fixture mapper: (dimension, normalized value) -> level index.
class TableMapper final : public LevelMapper {
 public:
  void set(Dimension d, std::string_view value, int level_index);
  Levels map_pair(const Request& prior, const Request& incoming,
                  const Ontology& ontology, const std::string& prior_value,
                  const std::string& incoming_value) override;

 private:
  int lookup(Dimension d, const std::string& value) const;
  std::unordered_map<std::string, int> table_;
};

// Read-through cache keyed by (dimension, normalized value). One delegate
// call can fill both entries of a pair; a call is made only when at least
// one value is uncached, so total calls never exceed the number of distinct
// (dimension, normalized value) pairs seen.
class CachingMapper final : public LevelMapper {
 public:
  explicit CachingMapper(std::shared_ptr<LevelMapper> delegate);

  Levels map_pair(const Request& prior, const Request& incoming,
                  const Ontology& ontology, const std::string& prior_value,
                  const std::string& incoming_value) override;

  size_t delegate_calls() const;
  size_t cached_values() const;

 private:
  std::shared_ptr<LevelMapper> delegate_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, int> cache_;
  size_t delegate_calls_ = 0;
};

enum class Vote { Appropriate, Inappropriate, None };
const char* to_string(Vote v) noexcept;

struct EntailmentTrace {
  PriorRequest prior;
  std::optional<Dimension> dimension;    // absent at distance 0 or on failure
  std::optional<std::string> prior_level;     // "L<n>"
  std::optional<std::string> incoming_level;  // "L<n>"
  Vote vote = Vote::None;
  std::string note;
};

struct JudgmentResult {
  Decision decision = Decision::Undetermined;
  int appropriate_votes = 0;
  int inappropriate_votes = 0;
  int neighbors_considered = 0;
  std::vector<EntailmentTrace> traces;
};

enum class ConflictPolicy {
  Majority,            // tie -> undetermined
  EscalateOnConflict,  // any opposing votes -> undetermined
};

struct JudgeOptions {
  ConflictPolicy conflict_policy = ConflictPolicy::Majority;
};

// Priors at Hamming distance <= 1 from the incoming request, in kb order.
std::vector<PriorRequest> select_neighbors(const KnowledgeBase& kb,
                                           const Request& incoming);

// One prior against the incoming request. Requires distance <= 1 (throws
// PreconditionError otherwise). Mapper failures and a differing data subject
// yield Vote::None with a diagnostic note; a missing ontology for the
// differing dimension is a configuration error and propagates.
EntailmentTrace entail_pair(const PriorRequest& prior, const Request& incoming,
                            LevelMapper& mapper, const OntologySet& ontologies);

JudgmentResult judge(const KnowledgeBase& kb, const Request& incoming,
                     LevelMapper& mapper, const OntologySet& ontologies,
                     const JudgeOptions& options = {});

// Structured audit record: decision, vote counts, one entry per neighbor.
std::string judgment_to_json(const JudgmentResult& result, int indent = -1);

// ---------------------------------------------------------------------------
// Batch kernel. Judgments are independent, so the batch is a data-parallel
// loop; the serial variant is the reference the parallel one is checked
// against and is also what the benchmark compares.
// ---------------------------------------------------------------------------

struct JudgeJob {
  const KnowledgeBase* kb = nullptr;
  const OntologySet* ontologies = nullptr;
  Request incoming;
};

std::vector<JudgmentResult> judge_batch_serial(std::span<const JudgeJob> jobs,
                                               LevelMapper& mapper,
                                               const JudgeOptions& options = {});

// OpenMP over jobs; results land at their job's index, so output order is
// schedule-independent. threads = 0 uses the runtime default.
std::vector<JudgmentResult> judge_batch(std::span<const JudgeJob> jobs,
                                        LevelMapper& mapper,
                                        const JudgeOptions& options = {},
                                        int threads = 0);

}  // namespace ariel
