#include "ariel/entailment.hpp"

#include <exception>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ariel {

namespace {

std::string cache_key(Dimension d, const std::string& raw_value) {
  return std::string(dimension_name(d)) + '\x1f' + normalize(raw_value);
}

// Level assignments are only meaningful against one concrete ontology, so
// cached entries carry its fingerprint; sharing a cache across users with
// different generated ontologies cannot cross-contaminate.
std::string ontology_fingerprint(const Ontology& o) {
  std::string text = dimension_name(o.dimension());
  for (const OntologyLevel& l : o.levels()) {
    text += '\x1f';
    text += l.description;
  }
  return to_hex(fnv1a64(text));
}

}  // namespace

void TableMapper::set(Dimension d, std::string_view value, int level_index) {
  table_[cache_key(d, std::string(value))] = level_index;
}

int TableMapper::lookup(Dimension d, const std::string& value) const {
  auto it = table_.find(cache_key(d, value));
  if (it == table_.end()) {
    throw Error("no level mapping for '" + value + "' on dimension '" +
                dimension_name(d) + "'");
  }
  return it->second;
}

LevelMapper::Levels TableMapper::map_pair(const Request&, const Request&,
                                          const Ontology& ontology,
                                          const std::string& prior_value,
                                          const std::string& incoming_value) {
  return Levels{ontology.level(lookup(ontology.dimension(), prior_value)),
                ontology.level(lookup(ontology.dimension(), incoming_value))};
}

CachingMapper::CachingMapper(std::shared_ptr<LevelMapper> delegate)
    : delegate_(std::move(delegate)) {}

LevelMapper::Levels CachingMapper::map_pair(const Request& prior,
                                            const Request& incoming,
                                            const Ontology& ontology,
                                            const std::string& prior_value,
                                            const std::string& incoming_value) {
  const Dimension dim = ontology.dimension();
  const std::string scope = ontology_fingerprint(ontology) + '\x1f';
  const std::string key_a = scope + cache_key(dim, prior_value);
  const std::string key_b = scope + cache_key(dim, incoming_value);
  {
    std::lock_guard lock(mutex_);
    auto a = cache_.find(key_a);
    auto b = cache_.find(key_b);
    if (a != cache_.end() && b != cache_.end()) {
      return Levels{ontology.level(a->second), ontology.level(b->second)};
    }
  }
  // Delegate outside the lock; concurrent misses on the same key re-map and
  // overwrite with identical results for a deterministic delegate.
  Levels levels = delegate_->map_pair(prior, incoming, ontology, prior_value,
                                      incoming_value);
  {
    std::lock_guard lock(mutex_);
    ++delegate_calls_;
    cache_[key_a] = levels.prior_level.index;
    cache_[key_b] = levels.incoming_level.index;
  }
  return levels;
}

size_t CachingMapper::delegate_calls() const {
  std::lock_guard lock(mutex_);
  return delegate_calls_;
}

size_t CachingMapper::cached_values() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

const char* to_string(Vote v) noexcept {
  switch (v) {
    case Vote::Appropriate: return "appropriate";
    case Vote::Inappropriate: return "inappropriate";
    case Vote::None: return "none";
  }
  return "?";
}

std::vector<PriorRequest> select_neighbors(const KnowledgeBase& kb,
                                           const Request& incoming) {
  std::vector<PriorRequest> neighbors;
  for (const PriorRequest& prior : kb.priors) {
    if (hamming_distance(prior.request, incoming) <= 1) {
      neighbors.push_back(prior);
    }
  }
  return neighbors;
}

EntailmentTrace entail_pair(const PriorRequest& prior, const Request& incoming,
                            LevelMapper& mapper, const OntologySet& ontologies) {
  EntailmentTrace trace;
  trace.prior = prior;

  const auto diff = differing_parameter(prior.request, incoming);
  if (!diff) {
    // Exact precedent: votes with its own judgment, no mapping needed.
    trace.vote = prior.judgment == BinaryJudgment::Appropriate
                     ? Vote::Appropriate
                     : Vote::Inappropriate;
    trace.note = "identical request; prior judgment applies directly";
    return trace;
  }

  const auto dim = dimension_for_field(diff->field);
  if (!dim) {
    trace.note = "requests differ on the data subject, which has no ontology";
    return trace;
  }
  trace.dimension = *dim;

  const Ontology& ontology = ontologies.get(*dim);  // missing set is a hard error
  LevelMapper::Levels levels;
  try {
    levels = mapper.map_pair(prior.request, incoming, ontology, diff->value_a,
                             diff->value_b);
  } catch (const std::exception& e) {
    trace.note = std::string("level mapping failed: ") + e.what();
    return trace;
  }
  trace.prior_level = level_label(levels.prior_level);
  trace.incoming_level = level_label(levels.incoming_level);

  // Inappropriate case first, matching the published branch order; at equal
  // levels both conditions hold and either branch returns the prior's label.
  if (prior.judgment == BinaryJudgment::Inappropriate &&
      level_leq(ontology, levels.prior_level, levels.incoming_level)) {
    trace.vote = Vote::Inappropriate;
    trace.note = "denied at " + *trace.prior_level +
                 " extends to incoming at " + *trace.incoming_level;
  } else if (prior.judgment == BinaryJudgment::Appropriate &&
             level_leq(ontology, levels.incoming_level, levels.prior_level)) {
    trace.vote = Vote::Appropriate;
    trace.note = "approved at " + *trace.prior_level +
                 " covers incoming at " + *trace.incoming_level;
  } else {
    trace.note = "levels " + *trace.prior_level + " vs " +
                 *trace.incoming_level + " do not entail the prior judgment";
  }
  return trace;
}

JudgmentResult judge(const KnowledgeBase& kb, const Request& incoming,
                     LevelMapper& mapper, const OntologySet& ontologies,
                     const JudgeOptions& options) {
  JudgmentResult result;
  const std::vector<PriorRequest> neighbors = select_neighbors(kb, incoming);
  result.neighbors_considered = static_cast<int>(neighbors.size());
  result.traces.reserve(neighbors.size());

  for (const PriorRequest& prior : neighbors) {
    EntailmentTrace trace = entail_pair(prior, incoming, mapper, ontologies);
    if (trace.vote == Vote::Appropriate) ++result.appropriate_votes;
    if (trace.vote == Vote::Inappropriate) ++result.inappropriate_votes;
    result.traces.push_back(std::move(trace));
  }

  const int pos = result.appropriate_votes;
  const int neg = result.inappropriate_votes;
  if (options.conflict_policy == ConflictPolicy::EscalateOnConflict && pos > 0 &&
      neg > 0) {
    result.decision = Decision::Undetermined;
  } else if (pos > neg) {
    result.decision = Decision::Appropriate;
  } else if (neg > pos) {
    result.decision = Decision::Inappropriate;
  } else {
    result.decision = Decision::Undetermined;
  }
  return result;
}

std::string judgment_to_json(const JudgmentResult& result, int indent) {
  nlohmann::json traces = nlohmann::json::array();
  for (const EntailmentTrace& t : result.traces) {
    nlohmann::json jt;
    nlohmann::json prior;
    for (Field f : kAllFields) prior[field_name(f)] = t.prior.request.field(f);
    prior["judgment"] = to_string(t.prior.judgment);
    jt["prior"] = std::move(prior);
    jt["dimension"] =
        t.dimension ? nlohmann::json(dimension_name(*t.dimension)) : nullptr;
    jt["prior_level"] = t.prior_level ? nlohmann::json(*t.prior_level) : nullptr;
    jt["incoming_level"] =
        t.incoming_level ? nlohmann::json(*t.incoming_level) : nullptr;
    jt["vote"] = to_string(t.vote);
    jt["note"] = t.note;
    traces.push_back(std::move(jt));
  }
  nlohmann::json j{{"decision", to_string(result.decision)},
                   {"appropriate_votes", result.appropriate_votes},
                   {"inappropriate_votes", result.inappropriate_votes},
                   {"neighbors_considered", result.neighbors_considered},
                   {"traces", std::move(traces)}};
  return j.dump(indent);
}

std::vector<JudgmentResult> judge_batch_serial(std::span<const JudgeJob> jobs,
                                               LevelMapper& mapper,
                                               const JudgeOptions& options) {
  std::vector<JudgmentResult> results(jobs.size());
  for (size_t i = 0; i < jobs.size(); ++i) {
    results[i] = judge(*jobs[i].kb, jobs[i].incoming, mapper, *jobs[i].ontologies,
                       options);
  }
  return results;
}

std::vector<JudgmentResult> judge_batch(std::span<const JudgeJob> jobs,
                                        LevelMapper& mapper,
                                        const JudgeOptions& options,
                                        int threads) {
  std::vector<JudgmentResult> results(jobs.size());
  const auto n = static_cast<std::int64_t>(jobs.size());
  // Hard errors (missing ontology, broken precondition) may not unwind out
  // of the parallel region; capture the first and rethrow afterwards.
  std::exception_ptr first_error = nullptr;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads > 0 ? threads : omp_get_max_threads())
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& job = jobs[static_cast<size_t>(i)];
    try {
      results[static_cast<size_t>(i)] =
          judge(*job.kb, job.incoming, mapper, *job.ontologies, options);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical(ariel_judge_batch_error)
#endif
      {
        if (!first_error) first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

}  // namespace ariel
