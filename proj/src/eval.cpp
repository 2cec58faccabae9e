#include "ariel/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

#include <json.hpp>

namespace ariel::eval {

const char* method_name(Method m) noexcept {
  switch (m) {
    case Method::ZeroShot: return "zero-shot";
    case Method::PrivacyNorms: return "norms";
    case Method::Icl: return "icl";
    case Method::IclWithUndet: return "icl-undet";
    case Method::Ariel: return "ariel";
  }
  return "?";
}

std::optional<Method> method_from_name(std::string_view name) noexcept {
  for (Method m : {Method::ZeroShot, Method::PrivacyNorms, Method::Icl,
                   Method::IclWithUndet, Method::Ariel}) {
    if (name == method_name(m)) return m;
  }
  return std::nullopt;
}

const char* to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::Appropriate: return "appropriate";
    case Outcome::Inappropriate: return "inappropriate";
    case Outcome::Undetermined: return "undetermined";
    case Outcome::ParseFailure: return "parse-failure";
  }
  return "?";
}

std::optional<Outcome> outcome_from_string(std::string_view s) noexcept {
  for (Outcome o : {Outcome::Appropriate, Outcome::Inappropriate,
                    Outcome::Undetermined, Outcome::ParseFailure}) {
    if (s == to_string(o)) return o;
  }
  return std::nullopt;
}

namespace {

Outcome outcome_of(Decision d) noexcept {
  switch (d) {
    case Decision::Appropriate: return Outcome::Appropriate;
    case Decision::Inappropriate: return Outcome::Inappropriate;
    case Decision::Undetermined: return Outcome::Undetermined;
  }
  return Outcome::Undetermined;
}

bool is_judged(Outcome o) noexcept {
  return o == Outcome::Appropriate || o == Outcome::Inappropriate;
}

Outcome outcome_for_truth(BinaryJudgment truth) noexcept {
  return truth == BinaryJudgment::Appropriate ? Outcome::Appropriate
                                              : Outcome::Inappropriate;
}

}  // namespace

ClassMetrics f1_for_class(
    std::span<const std::pair<Outcome, BinaryJudgment>> predictions,
    BinaryJudgment target, ExclusionPolicy policy) {
  const Outcome positive = outcome_for_truth(target);
  long tp = 0, predicted_positive = 0, actual_positive = 0, judged = 0;
  for (const auto& [outcome, truth] : predictions) {
    const bool in_scope = is_judged(outcome);
    if (in_scope) ++judged;
    if (in_scope && outcome == positive) {
      ++predicted_positive;
      if (truth == target) ++tp;
    }
    if (truth == target &&
        (in_scope || policy == ExclusionPolicy::CountAgainstRecall)) {
      ++actual_positive;
    }
  }

  ClassMetrics m;
  m.support = judged;
  if (predicted_positive == 0) {
    m.degenerate = true;
  } else {
    m.precision = static_cast<double>(tp) / static_cast<double>(predicted_positive);
  }
  if (actual_positive == 0) {
    m.degenerate = true;
  } else {
    m.recall = static_cast<double>(tp) / static_cast<double>(actual_positive);
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

Confusion tally_confusion(std::span<const PredictionRecord> records) {
  Confusion c;
  for (const PredictionRecord& r : records) {
    switch (r.outcome) {
      case Outcome::Undetermined:
        ++c.undetermined;
        break;
      case Outcome::ParseFailure:
        ++c.parse_failures;
        break;
      case Outcome::Appropriate:
        if (r.truth == BinaryJudgment::Appropriate) {
          ++c.tp_a;
        } else {
          ++c.fp_a;
          ++c.fn_i;
        }
        break;
      case Outcome::Inappropriate:
        if (r.truth == BinaryJudgment::Inappropriate) {
          ++c.tp_i;
        } else {
          ++c.fp_i;
          ++c.fn_a;
        }
        break;
    }
  }
  return c;
}

MethodReport aggregate(Method method, DatasetId dataset,
                       std::vector<PredictionRecord> records,
                       ExclusionPolicy policy) {
  // Deterministic fold order, independent of how the records were produced.
  std::sort(records.begin(), records.end(),
            [](const PredictionRecord& a, const PredictionRecord& b) {
              if (a.user_id != b.user_id) return a.user_id < b.user_id;
              return a.index < b.index;
            });

  std::vector<std::pair<Outcome, BinaryJudgment>> pairs;
  pairs.reserve(records.size());
  for (const PredictionRecord& r : records) pairs.emplace_back(r.outcome, r.truth);

  MethodReport report;
  report.method = method;
  report.dataset = dataset;
  report.total = static_cast<long>(records.size());
  report.confusion = tally_confusion(records);
  report.support = report.total - report.confusion.undetermined -
                   report.confusion.parse_failures;
  report.f1_appropriate =
      f1_for_class(pairs, BinaryJudgment::Appropriate, policy).f1;
  report.f1_inappropriate =
      f1_for_class(pairs, BinaryJudgment::Inappropriate, policy).f1;
  report.log = std::move(records);
  return report;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace {

struct ReplyOutcome {
  Outcome outcome;
  std::string detail;
};

// undet_on_bad_reply: the undetermined-aware baseline treats an unparseable
// or out-of-vocabulary reply as an abstention instead of a parse failure.
ReplyOutcome judged_reply(llm::Gateway& gateway, const std::string& prompt,
                          bool allow_undetermined, bool undet_on_bad_reply) {
  try {
    const llm::ChatExchange exchange = gateway.complete(prompt);
    try {
      const Decision d =
          llm::parse_judgment(exchange.raw_response, allow_undetermined);
      return {outcome_of(d), {}};
    } catch (const llm::ReplyError& e) {
      if (undet_on_bad_reply) {
        return {Outcome::Undetermined,
                std::string("bad reply treated as undetermined: ") + e.what()};
      }
      return {Outcome::ParseFailure, e.what()};
    }
  } catch (const llm::ExhaustedRetries& e) {
    return {Outcome::ParseFailure, e.what()};
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

}  // namespace

MethodReport run_method(Method method, std::span<const data::UserSplit> splits,
                        DatasetId dataset, const MethodContext& context,
                        const RunConfig& config) {
  std::vector<PredictionRecord> records;
  long distinct_prompts = 0;

  if (method == Method::ZeroShot || method == Method::PrivacyNorms) {
    require(context.gateway && context.templates,
            "norm-based methods need a gateway and templates");
    const llm::PromptSpec spec{method == Method::ZeroShot
                                   ? llm::PromptKind::ZeroShot
                                   : llm::PromptKind::PrivacyNorms,
                               config.cot};
    // Identical requests across users share one judgment, so the prompt set
    // is the unique-request set.
    std::unordered_map<std::string, ReplyOutcome> memo;
    for (const data::UserSplit& split : splits) {
      int index = 0;
      for (const data::LabeledRequest& item : split.incoming) {
        const std::string key = item.request.normalized_key();
        auto it = memo.find(key);
        if (it == memo.end()) {
          const std::string prompt = llm::render_prompt(
              *context.templates, spec, dataset,
              {{"incoming_request", llm::format_request_block(item.request)}});
          it = memo.emplace(key, judged_reply(*context.gateway, prompt,
                                              /*allow_undetermined=*/false,
                                              /*undet_on_bad_reply=*/false))
                   .first;
        }
        PredictionRecord r;
        r.user_id = split.user_id;
        r.index = index++;
        r.request = item.request;
        r.truth = item.judgment;
        r.outcome = it->second.outcome;
        r.detail = it->second.detail;
        records.push_back(std::move(r));
      }
    }
    distinct_prompts = static_cast<long>(memo.size());
  } else if (method == Method::Icl || method == Method::IclWithUndet) {
    require(context.gateway && context.templates,
            "in-context methods need a gateway and templates");
    const bool with_undet = method == Method::IclWithUndet;
    const llm::PromptSpec spec{with_undet ? llm::PromptKind::IclWithUndet
                                          : llm::PromptKind::Icl,
                               config.cot};
    for (const data::UserSplit& split : splits) {
      const std::string examples = llm::format_icl_examples(split.priors);
      int index = 0;
      for (const data::LabeledRequest& item : split.incoming) {
        const std::string prompt = llm::render_prompt(
            *context.templates, spec, dataset,
            {{"icl_examples", examples},
             {"incoming_request", llm::format_request_block(item.request)}});
        const ReplyOutcome reply =
            judged_reply(*context.gateway, prompt, with_undet, with_undet);
        PredictionRecord r;
        r.user_id = split.user_id;
        r.index = index++;
        r.request = item.request;
        r.truth = item.judgment;
        r.outcome = reply.outcome;
        r.detail = reply.detail;
        records.push_back(std::move(r));
      }
    }
    distinct_prompts = static_cast<long>(records.size());
  } else {  // Method::Ariel
    require(static_cast<bool>(context.ontologies),
            "entailment runs need per-user ontologies");
    const JudgeOptions judge_options{config.conflict_policy};
    for (const data::UserSplit& split : splits) {
      const OntologySet* set = context.ontologies(split.user_id);
      require(set != nullptr, "no ontology set for user");

      std::shared_ptr<LevelMapper> mapper = context.mapper_override;
      if (!mapper) {
        require(context.gateway && context.templates,
                "LLM-backed mapping needs a gateway and templates");
        mapper = std::make_shared<CachingMapper>(
            std::make_shared<llm::LlmLevelMapper>(context.gateway,
                                                  *context.templates, dataset,
                                                  *set));
      }

      const KnowledgeBase kb = data::knowledge_base_of(split);
      std::vector<JudgeJob> jobs;
      jobs.reserve(split.incoming.size());
      for (const data::LabeledRequest& item : split.incoming) {
        jobs.push_back(JudgeJob{&kb, set, item.request});
      }
      const std::vector<JudgmentResult> results =
          judge_batch(jobs, *mapper, judge_options, config.threads);

      for (size_t i = 0; i < results.size(); ++i) {
        PredictionRecord r;
        r.user_id = split.user_id;
        r.index = static_cast<int>(i);
        r.request = split.incoming[i].request;
        r.truth = split.incoming[i].judgment;
        r.outcome = outcome_of(results[i].decision);
        r.appropriate_votes = results[i].appropriate_votes;
        r.inappropriate_votes = results[i].inappropriate_votes;
        r.detail = judgment_to_json(results[i]);
        records.push_back(std::move(r));
      }
    }
    distinct_prompts = static_cast<long>(records.size());
  }

  MethodReport report =
      aggregate(method, dataset, std::move(records), config.exclusion);
  report.distinct_prompts = distinct_prompts;
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json record_to_json(const PredictionRecord& r) {
  nlohmann::json req;
  for (Field f : kAllFields) req[field_name(f)] = r.request.field(f);
  return nlohmann::json{{"user_id", r.user_id},
                        {"index", r.index},
                        {"request", std::move(req)},
                        {"truth", to_string(r.truth)},
                        {"outcome", to_string(r.outcome)},
                        {"appropriate_votes", r.appropriate_votes},
                        {"inappropriate_votes", r.inappropriate_votes},
                        {"detail", r.detail}};
}

PredictionRecord record_from_json(const nlohmann::json& j) {
  PredictionRecord r;
  r.user_id = j.at("user_id").get<std::string>();
  r.index = j.at("index").get<int>();
  for (Field f : kAllFields) {
    r.request.field(f) = j.at("request").at(field_name(f)).get<std::string>();
  }
  auto truth = binary_judgment_from_string(j.at("truth").get<std::string>());
  if (!truth) throw Error("prediction record has illegal truth label");
  r.truth = *truth;
  auto outcome = outcome_from_string(j.at("outcome").get<std::string>());
  if (!outcome) throw Error("prediction record has illegal outcome");
  r.outcome = *outcome;
  r.appropriate_votes = j.value("appropriate_votes", 0);
  r.inappropriate_votes = j.value("inappropriate_votes", 0);
  r.detail = j.value("detail", std::string{});
  return r;
}

nlohmann::json report_to_json_value(const MethodReport& r) {
  nlohmann::json log = nlohmann::json::array();
  for (const PredictionRecord& rec : r.log) log.push_back(record_to_json(rec));
  return nlohmann::json{
      {"method", method_name(r.method)},
      {"dataset", dataset_name(r.dataset)},
      {"f1_appropriate", r.f1_appropriate},
      {"f1_inappropriate", r.f1_inappropriate},
      {"support", r.support},
      {"total", r.total},
      {"distinct_prompts", r.distinct_prompts},
      {"confusion",
       {{"tp_a", r.confusion.tp_a},
        {"fp_a", r.confusion.fp_a},
        {"fn_a", r.confusion.fn_a},
        {"tp_i", r.confusion.tp_i},
        {"fp_i", r.confusion.fp_i},
        {"fn_i", r.confusion.fn_i},
        {"undetermined", r.confusion.undetermined},
        {"parse_failures", r.confusion.parse_failures}}},
      {"log", std::move(log)}};
}

MethodReport report_from_json_value(const nlohmann::json& j) {
  MethodReport r;
  auto method = method_from_name(j.at("method").get<std::string>());
  auto dataset = dataset_from_name(j.at("dataset").get<std::string>());
  if (!method || !dataset) throw Error("report names an unknown method or dataset");
  r.method = *method;
  r.dataset = *dataset;
  r.f1_appropriate = j.at("f1_appropriate").get<double>();
  r.f1_inappropriate = j.at("f1_inappropriate").get<double>();
  r.support = j.at("support").get<long>();
  r.total = j.at("total").get<long>();
  r.distinct_prompts = j.value("distinct_prompts", 0L);
  const auto& c = j.at("confusion");
  r.confusion = Confusion{c.at("tp_a").get<long>(),  c.at("fp_a").get<long>(),
                          c.at("fn_a").get<long>(),  c.at("tp_i").get<long>(),
                          c.at("fp_i").get<long>(),  c.at("fn_i").get<long>(),
                          c.at("undetermined").get<long>(),
                          c.at("parse_failures").get<long>()};
  for (const auto& rec : j.at("log")) r.log.push_back(record_from_json(rec));
  return r;
}

}  // namespace

std::string MethodReport::to_json(int indent) const {
  return report_to_json_value(*this).dump(indent);
}

MethodReport MethodReport::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad report json: ") + e.what());
  }
  return report_from_json_value(j);
}

std::string SubsetReport::to_json(int indent) const {
  nlohmann::json j{{"entailed", report_to_json_value(entailed)},
                   {"not_entailed", report_to_json_value(not_entailed)}};
  return j.dump(indent);
}

SubsetReport subset_analysis(std::span<const PredictionRecord> baseline_log,
                             std::span<const PredictionRecord> entailment_log,
                             DatasetId dataset, Method baseline_method,
                             ExclusionPolicy policy) {
  if (baseline_log.size() != entailment_log.size()) {
    throw Error("subset analysis: logs cover different request counts");
  }
  std::map<std::pair<std::string, int>, const PredictionRecord*> entailment_by_key;
  for (const PredictionRecord& r : entailment_log) {
    entailment_by_key[{r.user_id, r.index}] = &r;
  }

  std::vector<PredictionRecord> entailed, not_entailed;
  for (const PredictionRecord& r : baseline_log) {
    auto it = entailment_by_key.find({r.user_id, r.index});
    if (it == entailment_by_key.end() ||
        it->second->request.normalized_key() != r.request.normalized_key()) {
      throw Error("subset analysis: logs cover different request sets");
    }
    if (is_judged(it->second->outcome)) {
      entailed.push_back(r);
    } else {
      not_entailed.push_back(r);
    }
  }

  // Both partitions keep the baseline's method label; they re-score the same
  // predictions on the induced subsets.
  SubsetReport report;
  report.entailed = aggregate(baseline_method, dataset, std::move(entailed), policy);
  report.not_entailed =
      aggregate(baseline_method, dataset, std::move(not_entailed), policy);
  return report;
}

std::vector<AblationRow> ablate_prior_count(
    std::span<const data::UserSplit> splits, DatasetId dataset,
    std::span<const int> counts, std::span<const Method> methods,
    const MethodContext& context, const RunConfig& config, std::uint64_t seed) {
  // One shuffle per user, shared across counts: each smaller knowledge base
  // is a prefix of the larger ones.
  std::vector<data::UserSplit> shuffled(splits.begin(), splits.end());
  for (data::UserSplit& split : shuffled) {
    data::deterministic_shuffle(split.priors,
                                data::derive_seed(seed, "ablate:" + split.user_id));
  }

  std::vector<AblationRow> rows;
  for (int count : counts) {
    std::vector<data::UserSplit> truncated = shuffled;
    for (data::UserSplit& split : truncated) {
      if (count > static_cast<int>(split.priors.size())) {
        throw PreconditionError("ablation count " + std::to_string(count) +
                                " exceeds available priors for user '" +
                                split.user_id + "'");
      }
      split.priors.resize(static_cast<size_t>(count));
    }
    for (Method method : methods) {
      const MethodReport report =
          run_method(method, truncated, dataset, context, config);
      rows.push_back(AblationRow{count, method, report.f1_appropriate,
                                 report.f1_inappropriate, report.support});
    }
  }
  return rows;
}

std::string ablation_tsv(std::span<const AblationRow> rows) {
  std::string out =
      "prior_count\tmethod\tf1_appropriate\tf1_inappropriate\tsupport\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d\t%s\t%.6f\t%.6f\t%ld\n", r.prior_count,
                  method_name(r.method), r.f1_appropriate, r.f1_inappropriate,
                  r.support);
    out += buf;
  }
  return out;
}

}  // namespace ariel::eval
