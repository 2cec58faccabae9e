#pragma once
// Evaluation harness: runs the entailment engine and the four prompting
// baselines over dataset splits, computes per-class F1 and Support, and
// emits machine-readable reports with a per-request prediction log.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ariel/core.hpp"
#include "ariel/datasets.hpp"
#include "ariel/entailment.hpp"
#include "ariel/llm.hpp"
#include "ariel/ontology.hpp"

namespace ariel::eval {

enum class Method { ZeroShot, PrivacyNorms, Icl, IclWithUndet, Ariel };

const char* method_name(Method m) noexcept;  // "zero-shot", "norms", ...
std::optional<Method> method_from_name(std::string_view name) noexcept;

// Prediction outcome; parse failures are tracked apart from deliberate
// abstention so the failure rate is reportable.
enum class Outcome { Appropriate, Inappropriate, Undetermined, ParseFailure };
const char* to_string(Outcome o) noexcept;
std::optional<Outcome> outcome_from_string(std::string_view s) noexcept;

struct PredictionRecord {
  std::string user_id;
  int index = 0;  // position within the user's incoming list
  Request request;
  BinaryJudgment truth = BinaryJudgment::Appropriate;
  Outcome outcome = Outcome::Undetermined;
  int appropriate_votes = 0;    // entailment method only
  int inappropriate_votes = 0;  // entailment method only
  std::string detail;           // trace json / failure note
};

struct Confusion {
  long tp_a = 0, fp_a = 0, fn_a = 0;
  long tp_i = 0, fp_i = 0, fn_i = 0;
  long undetermined = 0;
  long parse_failures = 0;

  // Predictions that were an actual appropriateness call.
  long judged() const noexcept { return tp_a + fp_a + tp_i + fp_i; }
};

// How abstentions (undetermined / parse failure) interact with recall.
enum class ExclusionPolicy {
  ExcludeFromBoth,      // abstained requests leave both denominators
  CountAgainstRecall,   // abstained positives still count as recall misses
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;         // judged predictions in scope
  bool degenerate = false;  // some denominator was zero
};

// Per-class precision/recall/F1 over (outcome, truth) pairs. Abstained
// predictions are excluded per the policy; zero denominators yield 0 with
// the degenerate flag set.
ClassMetrics f1_for_class(
    std::span<const std::pair<Outcome, BinaryJudgment>> predictions,
    BinaryJudgment target,
    ExclusionPolicy policy = ExclusionPolicy::ExcludeFromBoth);

Confusion tally_confusion(std::span<const PredictionRecord> records);

struct MethodReport {
  Method method = Method::Ariel;
  DatasetId dataset = DatasetId::Spa;
  double f1_appropriate = 0.0;
  double f1_inappropriate = 0.0;
  long support = 0;  // total - undetermined - parse_failures
  Confusion confusion;
  long total = 0;
  long distinct_prompts = 0;  // norm-based methods: unique requests judged
  std::vector<PredictionRecord> log;

  std::string to_json(int indent = -1) const;
  static MethodReport from_json(const std::string& text);
};

MethodReport aggregate(Method method, DatasetId dataset,
                       std::vector<PredictionRecord> records,
                       ExclusionPolicy policy = ExclusionPolicy::ExcludeFromBoth);

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct MethodContext {
  std::shared_ptr<llm::Gateway> gateway;          // all LLM-backed paths
  const llm::TemplateStore* templates = nullptr;  // all LLM-backed paths
  // Entailment runs: the user's ontology set, nullptr when unavailable.
  std::function<const OntologySet*(const std::string& user_id)> ontologies;
  // Entailment runs: replaces the LLM-backed mapper (tests, benchmarks).
  std::shared_ptr<LevelMapper> mapper_override;
};

struct RunConfig {
  bool cot = false;  // reasoning-first prompt variant for the four baselines
  ConflictPolicy conflict_policy = ConflictPolicy::Majority;
  ExclusionPolicy exclusion = ExclusionPolicy::ExcludeFromBoth;
  int threads = 0;  // batch-judgment kernel width; 0 = runtime default
};

// One prediction per incoming request. Gateway failures become per-request
// parse failures (and abstentions for the undetermined-aware baseline);
// the run itself never aborts on them.
MethodReport run_method(Method method, std::span<const data::UserSplit> splits,
                        DatasetId dataset, const MethodContext& context,
                        const RunConfig& config = {});

struct SubsetReport {
  MethodReport entailed;      // requests the entailment engine determined
  MethodReport not_entailed;  // requests it escalated

  std::string to_json(int indent = -1) const;
};

// Re-scores the baseline log on the partition induced by the entailment
// log's abstentions. Both logs must cover the same (user, index, request)
// set.
SubsetReport subset_analysis(std::span<const PredictionRecord> baseline_log,
                             std::span<const PredictionRecord> entailment_log,
                             DatasetId dataset, Method baseline_method = Method::Icl,
                             ExclusionPolicy policy = ExclusionPolicy::ExcludeFromBoth);

struct AblationRow {
  int prior_count = 0;
  Method method = Method::Ariel;
  double f1_appropriate = 0.0;
  double f1_inappropriate = 0.0;
  long support = 0;
};

// Reruns the given methods with each user's priors truncated to the first
// `count` elements of one seeded shuffle (one shuffle per user, shared
// across counts, so smaller knowledge bases are prefixes of larger ones).
std::vector<AblationRow> ablate_prior_count(
    std::span<const data::UserSplit> splits, DatasetId dataset,
    std::span<const int> counts, std::span<const Method> methods,
    const MethodContext& context, const RunConfig& config, std::uint64_t seed);

// Plot-ready TSV: prior_count, method, f1_appropriate, f1_inappropriate, support.
std::string ablation_tsv(std::span<const AblationRow> rows);

}  // namespace ariel::eval
