// Entry point: ingest, gen-ontologies, judge, evaluate, ablate, and
// subset-analysis subcommands over a shared provider/template configuration.
//
// Configuration precedence is flags > environment > config file. All
// randomness flows from --seed; scripted-provider runs are reproducible
// byte for byte (manifests carry the timestamps).

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ariel/core.hpp"
#include "ariel/datasets.hpp"
#include "ariel/entailment.hpp"
#include "ariel/eval.hpp"
#include "ariel/llm.hpp"
#include "ariel/ontology.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string provider = "scripted";  // scripted | live
  std::string scripted_fixture;
  std::string cache_dir;
  std::string out_dir = "out";
  std::string templates_dir;
  int threads = 0;

  // live-provider settings (config/env resolvable)
  std::string endpoint;
  std::string model_id;
  std::string credential_env = "ARIEL_API_KEY";
  double temperature = 0.0;
  int retry_budget = 3;
  int backoff_ms = 250;
  int max_in_flight = 4;

  json config_snapshot = json::object();
};

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string{};
}

// Which numeric flags the user passed explicitly; strings use empty-means-
// unset and need no tracking.
struct PassedFlags {
  bool retry_budget = false;
  bool backoff_ms = false;
  bool max_in_flight = false;
};

void apply_config_file(GlobalOptions& g, const PassedFlags& passed) {
  if (g.config_path.empty()) return;
  std::ifstream in(g.config_path);
  if (!in) throw ariel::Error("cannot open config '" + g.config_path + "'");
  json cfg;
  in >> cfg;
  g.config_snapshot = cfg;
  // flags beat environment beat config: only fill what is still unset
  if (g.endpoint.empty()) g.endpoint = cfg.value("endpoint", g.endpoint);
  if (g.model_id.empty()) g.model_id = cfg.value("model_id", g.model_id);
  g.credential_env = cfg.value("credential_env", g.credential_env);
  g.temperature = cfg.value("temperature", g.temperature);
  if (!passed.retry_budget) g.retry_budget = cfg.value("retry_budget", g.retry_budget);
  if (!passed.backoff_ms) g.backoff_ms = cfg.value("backoff_ms", g.backoff_ms);
  if (!passed.max_in_flight) g.max_in_flight = cfg.value("max_in_flight", g.max_in_flight);
  if (g.templates_dir.empty()) g.templates_dir = cfg.value("templates_dir", g.templates_dir);
  if (g.scripted_fixture.empty()) g.scripted_fixture = cfg.value("scripted_fixture", g.scripted_fixture);
}

void apply_environment(GlobalOptions& g) {
  if (g.endpoint.empty()) g.endpoint = env_or_empty("ARIEL_ENDPOINT");
  if (g.model_id.empty()) g.model_id = env_or_empty("ARIEL_MODEL_ID");
}

struct Runtime {
  std::shared_ptr<ariel::llm::Gateway> gateway;
  std::unique_ptr<ariel::llm::TemplateStore> templates;
  std::string fixture_hash;  // scripted provider only
};

Runtime make_runtime(const GlobalOptions& g, bool needs_provider) {
  Runtime rt;
  rt.templates = std::make_unique<ariel::llm::TemplateStore>(g.templates_dir);
  if (!needs_provider) return rt;

  std::shared_ptr<ariel::llm::ChatProvider> provider;
  if (g.provider == "scripted") {
    if (g.scripted_fixture.empty()) {
      throw ariel::Error("scripted provider needs --scripted-fixture");
    }
    auto scripted = std::make_shared<ariel::llm::ScriptedProvider>(
        ariel::llm::ScriptedProvider::from_file(g.scripted_fixture));
    rt.fixture_hash = scripted->fixture_hash();
    provider = scripted;
  } else if (g.provider == "live") {
    if (g.endpoint.empty() || g.model_id.empty()) {
      throw ariel::Error("live provider needs an endpoint and model id "
                         "(flags, environment, or config file)");
    }
    ariel::llm::HttpProvider::Config cfg;
    cfg.endpoint = g.endpoint;
    cfg.model_id = g.model_id;
    cfg.api_key = env_or_empty(g.credential_env.c_str());
    cfg.temperature = g.temperature;
    provider = std::make_shared<ariel::llm::HttpProvider>(cfg);
  } else {
    throw ariel::Error("unknown provider '" + g.provider + "'");
  }

  ariel::llm::Gateway::Options options;
  options.retry_budget = g.retry_budget;
  options.backoff_base = std::chrono::milliseconds(g.backoff_ms);
  options.max_in_flight = g.max_in_flight;
  options.cache_dir = g.cache_dir;
  rt.gateway = std::make_shared<ariel::llm::Gateway>(std::move(provider), options);
  return rt;
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// One manifest line per run, append-only.
void write_manifest(const GlobalOptions& g, const Runtime& rt,
                    const std::string& command, const json& extra) {
  fs::create_directories(g.out_dir);
  json m{{"command", command},
         {"timestamp", iso_timestamp()},
         {"seed", g.seed},
         {"provider", g.provider},
         {"model_id", rt.gateway ? rt.gateway->model_id() : ""},
         {"template_version", rt.templates ? rt.templates->version() : ""},
         {"temperature", g.temperature},
         {"config", g.config_snapshot},
         {"extra", extra}};
  if (!rt.fixture_hash.empty()) m["fixture_hash"] = rt.fixture_hash;
  if (rt.gateway) {
    m["cache_hits"] = rt.gateway->cache_hits();
    m["provider_calls"] = rt.gateway->provider_calls();
  }
  std::ofstream out(fs::path(g.out_dir) / "manifests.jsonl", std::ios::app);
  out << m.dump() << '\n';
}

// Scripted runs stamp the fixture hash; live runs are marked
// non-deterministic with the model id and date.
json report_stamp(const GlobalOptions& g, const Runtime& rt) {
  if (g.provider == "live") {
    return json{{"mode", "live"},
                {"determinism", "non-deterministic"},
                {"model_id", rt.gateway ? rt.gateway->model_id() : ""},
                {"date", iso_timestamp()}};
  }
  return json{{"mode", "scripted"},
              {"determinism", "deterministic"},
              {"fixture_hash", rt.fixture_hash},
              {"model_id", rt.gateway ? rt.gateway->model_id() : ""}};
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw ariel::Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ariel::Error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ariel::DatasetId parse_dataset(const std::string& name) {
  auto d = ariel::dataset_from_name(name);
  if (!d) throw ariel::Error("unknown dataset '" + name + "' (spa|education)");
  return *d;
}

std::vector<ariel::Dimension> expected_dimensions(ariel::DatasetId dataset) {
  using ariel::Dimension;
  if (dataset == ariel::DatasetId::Spa) {
    // the sender is fixed to the assistant provider; the generation prompt
    // requests three ontologies
    return {Dimension::DataType, Dimension::DataRecipient,
            Dimension::TransmissionPrinciple};
  }
  return {Dimension::DataType, Dimension::DataSender, Dimension::DataRecipient,
          Dimension::TransmissionPrinciple};
}

// Loads per-user ontology sets lazily; owns them for the run's lifetime.
struct OntologyDir {
  std::string dir;
  std::map<std::string, ariel::OntologySet> loaded;

  const ariel::OntologySet* get(const std::string& user_id) {
    auto it = loaded.find(user_id);
    if (it == loaded.end()) {
      const fs::path path = fs::path(dir) / (user_id + ".txt");
      if (!fs::exists(path)) return nullptr;
      auto parsed = ariel::load_ontology_set(path.string(), user_id);
      it = loaded.emplace(user_id, std::move(parsed.set)).first;
    }
    return &it->second;
  }
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_ingest(const GlobalOptions& g, const std::string& dataset_name,
               const std::string& input, const std::string& mapping_path,
               int users, int priors, int incoming, int min_responses) {
  const ariel::DatasetId dataset = parse_dataset(dataset_name);
  const auto mapping = ariel::data::ColumnMapping::from_file(mapping_path);
  const auto responses = ariel::data::read_survey_file(input, mapping);

  ariel::data::SplitConfig config;
  config.seed = g.seed;
  config.user_sample = users;
  config.prior_count = priors;
  config.incoming_count = incoming;
  config.min_responses = min_responses;

  auto [splits, manifest] = ariel::data::build_splits(responses, dataset, config);
  const fs::path dir = fs::path(g.out_dir) / dataset_name;
  ariel::data::save_splits(splits, manifest, dir.string());

  Runtime rt = make_runtime(g, /*needs_provider=*/false);
  write_manifest(g, rt, "ingest",
                 json{{"dataset", dataset_name},
                      {"input", input},
                      {"users", manifest.user_count},
                      {"incoming_total", manifest.user_count * incoming},
                      {"class_counts",
                       {{"appropriate", manifest.appropriate_count},
                        {"inappropriate", manifest.inappropriate_count}}}});

  std::cout << "ingested " << manifest.user_count << " users ("
            << manifest.user_count * incoming << " incoming requests; "
            << manifest.appropriate_count << " appropriate / "
            << manifest.inappropriate_count << " inappropriate) -> " << dir
            << "\n";
  return 0;
}

int cmd_gen_ontologies(const GlobalOptions& g, const std::string& dataset_name,
                       const std::string& splits_dir, int limit) {
  const ariel::DatasetId dataset = parse_dataset(dataset_name);
  auto [splits, manifest] = ariel::data::load_splits(splits_dir);
  Runtime rt = make_runtime(g, /*needs_provider=*/true);

  const fs::path dir = fs::path(g.out_dir) / "ontologies" / dataset_name;
  fs::create_directories(dir);

  int generated = 0;
  int warnings = 0;
  for (const auto& split : splits) {
    if (limit > 0 && generated >= limit) break;
    const std::string prompt = ariel::llm::render_prompt(
        *rt.templates, {ariel::llm::PromptKind::OntologyGeneration, false},
        dataset,
        {{"privacy_preferences",
          ariel::llm::format_flow_lines(dataset, split.priors)}});
    const auto exchange = rt.gateway->complete(prompt);
    auto parsed = ariel::parse_ontology_set(exchange.raw_response, split.user_id,
                                            expected_dimensions(dataset));
    for (const std::string& w : parsed.warnings) {
      std::cerr << split.user_id << ": " << w << "\n";
      ++warnings;
    }
    const fs::path text_path = dir / (split.user_id + ".txt");
    const fs::path json_path = dir / (split.user_id + ".json");
    ariel::save_ontology_set(parsed.set, text_path.string(), json_path.string());
    ++generated;
  }

  write_manifest(g, rt, "gen-ontologies",
                 json{{"dataset", dataset_name},
                      {"splits", splits_dir},
                      {"generated", generated},
                      {"warnings", warnings}});
  std::cout << "generated ontologies for " << generated << " users -> " << dir
            << "\n";
  return 0;
}

int cmd_judge(const GlobalOptions& g, const std::string& kb_path,
              const std::string& ontology_path, const ariel::Request& incoming,
              const std::string& dataset_name, const std::string& conflict_policy,
              bool as_json) {
  const ariel::DatasetId dataset = parse_dataset(dataset_name);
  ariel::validate_request(incoming);
  const ariel::KnowledgeBase kb = ariel::load_knowledge_base(kb_path);
  auto parsed = ariel::load_ontology_set(ontology_path, kb.user_id);
  for (const std::string& w : parsed.warnings) std::cerr << w << "\n";

  Runtime rt = make_runtime(g, /*needs_provider=*/true);
  ariel::CachingMapper mapper(std::make_shared<ariel::llm::LlmLevelMapper>(
      rt.gateway, *rt.templates, dataset, parsed.set));

  ariel::JudgeOptions options;
  if (conflict_policy == "escalate-on-conflict") {
    options.conflict_policy = ariel::ConflictPolicy::EscalateOnConflict;
  } else if (conflict_policy != "majority") {
    throw ariel::Error("unknown conflict policy '" + conflict_policy + "'");
  }

  const ariel::JudgmentResult result =
      ariel::judge(kb, incoming, mapper, parsed.set, options);

  if (as_json) {
    std::cout << ariel::judgment_to_json(result, 2) << "\n";
  } else {
    std::cout << "decision: " << ariel::to_string(result.decision) << "\n"
              << "votes: " << result.appropriate_votes << " appropriate, "
              << result.inappropriate_votes << " inappropriate ("
              << result.neighbors_considered << " neighboring priors)\n";
    for (const auto& trace : result.traces) {
      std::cout << "  - prior [" << ariel::to_string(trace.prior.judgment) << "] ";
      std::cout << trace.prior.request.data_type << " -> "
                << trace.prior.request.data_recipient;
      if (trace.dimension) {
        std::cout << " | " << ariel::dimension_name(*trace.dimension) << " "
                  << trace.prior_level.value_or("?") << " vs "
                  << trace.incoming_level.value_or("?");
      }
      std::cout << " | vote: " << ariel::to_string(trace.vote) << " | "
                << trace.note << "\n";
    }
  }

  write_manifest(g, rt, "judge",
                 json{{"kb", kb_path},
                      {"ontologies", ontology_path},
                      {"decision", ariel::to_string(result.decision)}});
  return 0;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& method_name,
                 const std::string& dataset_name, const std::string& splits_dir,
                 const std::string& ontologies_dir, bool cot,
                 const std::string& conflict_policy) {
  const ariel::DatasetId dataset = parse_dataset(dataset_name);
  auto method = ariel::eval::method_from_name(method_name);
  if (!method) throw ariel::Error("unknown method '" + method_name + "'");

  auto [splits, manifest] = ariel::data::load_splits(splits_dir);
  Runtime rt = make_runtime(g, /*needs_provider=*/true);

  OntologyDir ontology_dir{ontologies_dir, {}};
  ariel::eval::MethodContext context;
  context.gateway = rt.gateway;
  context.templates = rt.templates.get();
  if (*method == ariel::eval::Method::Ariel) {
    if (ontologies_dir.empty()) {
      throw ariel::Error("the entailment method needs --ontologies-dir");
    }
    context.ontologies = [&ontology_dir](const std::string& user_id) {
      return ontology_dir.get(user_id);
    };
  }

  ariel::eval::RunConfig config;
  config.cot = cot;
  config.threads = g.threads;
  if (conflict_policy == "escalate-on-conflict") {
    config.conflict_policy = ariel::ConflictPolicy::EscalateOnConflict;
  }

  const auto report =
      ariel::eval::run_method(*method, splits, dataset, context, config);

  fs::create_directories(g.out_dir);
  const fs::path report_path =
      fs::path(g.out_dir) /
      ("report_" + method_name + "_" + dataset_name + ".json");
  json document{{"stamp", report_stamp(g, rt)},
                {"report", json::parse(report.to_json())}};
  write_text(report_path, document.dump(2) + "\n");

  // flat row for plotting, one line per run
  const fs::path metrics_path = fs::path(g.out_dir) / "metrics.tsv";
  const bool fresh = !fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, std::ios::app);
  if (fresh) {
    metrics << "dataset\tmethod\tcot\tf1_appropriate\tf1_inappropriate\t"
               "support\ttotal\tundetermined\tparse_failures\n";
  }
  char row[256];
  std::snprintf(row, sizeof(row), "%s\t%s\t%d\t%.6f\t%.6f\t%ld\t%ld\t%ld\t%ld\n",
                dataset_name.c_str(), method_name.c_str(), cot ? 1 : 0,
                report.f1_appropriate, report.f1_inappropriate, report.support,
                report.total, report.confusion.undetermined,
                report.confusion.parse_failures);
  metrics << row;

  write_manifest(g, rt, "evaluate",
                 json{{"method", method_name},
                      {"dataset", dataset_name},
                      {"splits", splits_dir},
                      {"cot", cot},
                      {"report", report_path.string()}});

  std::printf("%s on %s: F1_A=%.4f F1_I=%.4f support=%ld/%ld (undetermined=%ld, "
              "parse_failures=%ld, distinct_prompts=%ld)\n",
              method_name.c_str(), dataset_name.c_str(), report.f1_appropriate,
              report.f1_inappropriate, report.support, report.total,
              report.confusion.undetermined, report.confusion.parse_failures,
              report.distinct_prompts);
  std::cout << "report -> " << report_path << "\n";
  return 0;
}

int cmd_ablate(const GlobalOptions& g, const std::string& dataset_name,
               const std::string& splits_dir, const std::string& ontologies_dir,
               const std::vector<int>& counts,
               const std::vector<std::string>& method_names,
               const std::string& conflict_policy) {
  const ariel::DatasetId dataset = parse_dataset(dataset_name);
  auto [splits, manifest] = ariel::data::load_splits(splits_dir);
  Runtime rt = make_runtime(g, /*needs_provider=*/true);

  std::vector<ariel::eval::Method> methods;
  for (const std::string& name : method_names) {
    auto m = ariel::eval::method_from_name(name);
    if (!m) throw ariel::Error("unknown method '" + name + "'");
    methods.push_back(*m);
  }

  OntologyDir ontology_dir{ontologies_dir, {}};
  ariel::eval::MethodContext context;
  context.gateway = rt.gateway;
  context.templates = rt.templates.get();
  context.ontologies = [&ontology_dir](const std::string& user_id) {
    return ontology_dir.get(user_id);
  };

  ariel::eval::RunConfig config;
  config.threads = g.threads;
  if (conflict_policy == "escalate-on-conflict") {
    config.conflict_policy = ariel::ConflictPolicy::EscalateOnConflict;
  }

  const auto rows = ariel::eval::ablate_prior_count(
      splits, dataset, counts, methods, context, config, g.seed);

  const std::string tsv = ariel::eval::ablation_tsv(rows);
  const fs::path tsv_path =
      fs::path(g.out_dir) / ("ablation_" + dataset_name + ".tsv");
  write_text(tsv_path, tsv);
  std::cout << tsv;

  write_manifest(g, rt, "ablate",
                 json{{"dataset", dataset_name},
                      {"counts", counts},
                      {"methods", method_names},
                      {"table", tsv_path.string()}});
  std::cout << "table -> " << tsv_path << "\n";
  return 0;
}

int cmd_subset_analysis(const GlobalOptions& g, const std::string& baseline_path,
                        const std::string& entailment_path,
                        const std::string& out_path) {
  auto load_report = [](const std::string& path) {
    const json document = json::parse(read_text(path));
    const json& inner = document.contains("report") ? document["report"] : document;
    return ariel::eval::MethodReport::from_json(inner.dump());
  };
  const auto baseline = load_report(baseline_path);
  const auto entailment = load_report(entailment_path);

  const auto report = ariel::eval::subset_analysis(
      baseline.log, entailment.log, baseline.dataset, baseline.method);

  const std::string out =
      out_path.empty()
          ? (fs::path(g.out_dir) / "subset_analysis.json").string()
          : out_path;
  write_text(out, report.to_json(2) + "\n");

  Runtime rt = make_runtime(g, /*needs_provider=*/false);
  write_manifest(g, rt, "subset-analysis",
                 json{{"baseline", baseline_path},
                      {"entailment", entailment_path},
                      {"out", out}});

  std::printf("entailed:     F1_A=%.4f F1_I=%.4f support=%ld (n=%ld)\n",
              report.entailed.f1_appropriate, report.entailed.f1_inappropriate,
              report.entailed.support, report.entailed.total);
  std::printf("not entailed: F1_A=%.4f F1_I=%.4f support=%ld (n=%ld)\n",
              report.not_entailed.f1_appropriate,
              report.not_entailed.f1_inappropriate, report.not_entailed.support,
              report.not_entailed.total);
  std::cout << "report -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-judgment engine: entailment over prior user judgments "
               "with leveled ontologies, plus the evaluation harness"};
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "seed for all randomness (default 0)");
  app.add_option("--provider", g.provider, "LLM provider: scripted|live");
  app.add_option("--scripted-fixture", g.scripted_fixture,
                 "response fixture for the scripted provider");
  app.add_option("--cache-dir", g.cache_dir, "on-disk response cache directory");
  app.add_option("--out-dir", g.out_dir, "output directory (default: out)");
  app.add_option("--templates", g.templates_dir, "prompt template directory");
  app.add_option("--threads", g.threads, "judgment kernel threads (0 = auto)");
  app.add_option("--endpoint", g.endpoint, "chat-completions endpoint (live)");
  app.add_option("--model-id", g.model_id, "model id (live)");
  auto* retry_opt =
      app.add_option("--retry-budget", g.retry_budget, "provider retry budget");
  auto* backoff_opt =
      app.add_option("--backoff-ms", g.backoff_ms, "base retry backoff in ms");
  auto* in_flight_opt = app.add_option("--max-in-flight", g.max_in_flight,
                                       "concurrent provider calls");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build prior/incoming splits from a survey export");
  std::string ingest_dataset, ingest_input, ingest_mapping;
  int ingest_users = -1, ingest_priors = 60, ingest_incoming = 10, ingest_min = 70;
  ingest->add_option("--dataset", ingest_dataset, "spa|education")->required();
  ingest->add_option("--input", ingest_input, "survey export file")->required();
  ingest->add_option("--mapping", ingest_mapping, "column-mapping JSON")->required();
  ingest->add_option("--users", ingest_users,
                     "users to sample (default: 500 for spa, all for education)");
  ingest->add_option("--priors", ingest_priors, "prior requests per user");
  ingest->add_option("--incoming", ingest_incoming, "incoming requests per user");
  ingest->add_option("--min-responses", ingest_min, "eligibility threshold");

  // gen-ontologies
  auto* gen = app.add_subcommand("gen-ontologies", "generate per-user ontologies from priors");
  std::string gen_dataset, gen_splits;
  int gen_limit = 0;
  gen->add_option("--dataset", gen_dataset, "spa|education")->required();
  gen->add_option("--splits", gen_splits, "split directory from ingest")->required();
  gen->add_option("--users", gen_limit, "generate for the first N users only");

  // judge
  auto* judge = app.add_subcommand("judge", "judge one incoming request against a knowledge base");
  std::string judge_kb, judge_ontologies, judge_dataset = "spa";
  std::string judge_conflict = "majority";
  bool judge_json = false;
  ariel::Request judge_request;
  judge->add_option("--kb", judge_kb, "knowledge-base record file")->required();
  judge->add_option("--ontologies", judge_ontologies, "ontology text file")->required();
  judge->add_option("--data-type", judge_request.data_type)->required();
  judge->add_option("--data-subject", judge_request.data_subject)->required();
  judge->add_option("--data-sender", judge_request.data_sender)->required();
  judge->add_option("--data-recipient", judge_request.data_recipient)->required();
  judge->add_option("--transmission-principle", judge_request.transmission_principle,
                    "may be empty: no purpose/condition");
  judge->add_option("--dataset", judge_dataset, "template set to use (spa|education)");
  judge->add_option("--conflict-policy", judge_conflict, "majority|escalate-on-conflict");
  judge->add_flag("--json", judge_json, "print the structured judgment record");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "run one method over a split directory");
  std::string eval_method, eval_dataset, eval_splits, eval_ontologies;
  std::string eval_conflict = "majority";
  bool eval_cot = false;
  evaluate->add_option("--method", eval_method, "zero-shot|norms|icl|icl-undet|ariel")->required();
  evaluate->add_option("--dataset", eval_dataset, "spa|education")->required();
  evaluate->add_option("--splits", eval_splits, "split directory from ingest")->required();
  evaluate->add_option("--ontologies-dir", eval_ontologies, "per-user ontology directory");
  evaluate->add_flag("--cot", eval_cot, "reasoning-first prompt variant (non-canonical wording)");
  evaluate->add_option("--conflict-policy", eval_conflict, "majority|escalate-on-conflict");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "re-run methods at reduced prior counts");
  std::string ablate_dataset, ablate_splits, ablate_ontologies;
  std::string ablate_conflict = "majority";
  std::vector<int> ablate_counts{60, 50, 40, 30, 20};
  std::vector<std::string> ablate_methods{"ariel"};
  ablate->add_option("--dataset", ablate_dataset, "spa|education")->required();
  ablate->add_option("--splits", ablate_splits, "split directory from ingest")->required();
  ablate->add_option("--ontologies-dir", ablate_ontologies, "per-user ontology directory");
  ablate->add_option("--counts", ablate_counts, "prior counts to evaluate")->delimiter(',');
  ablate->add_option("--methods", ablate_methods, "methods to rerun")->delimiter(',');
  ablate->add_option("--conflict-policy", ablate_conflict, "majority|escalate-on-conflict");

  // subset-analysis
  auto* subset = app.add_subcommand("subset-analysis",
                                    "re-score a baseline log on the entailed/not-entailed partition");
  std::string subset_baseline, subset_entailment, subset_out;
  subset->add_option("--icl-log", subset_baseline, "baseline report JSON")->required();
  subset->add_option("--ariel-log", subset_entailment, "entailment report JSON")->required();
  subset->add_option("--out", subset_out, "output path");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_environment(g);
    PassedFlags passed;
    passed.retry_budget = retry_opt->count() > 0;
    passed.backoff_ms = backoff_opt->count() > 0;
    passed.max_in_flight = in_flight_opt->count() > 0;
    apply_config_file(g, passed);

    if (ingest->parsed()) {
      if (ingest_users < 0) {
        ingest_users = parse_dataset(ingest_dataset) == ariel::DatasetId::Spa ? 500 : 0;
      }
      return cmd_ingest(g, ingest_dataset, ingest_input, ingest_mapping,
                        ingest_users, ingest_priors, ingest_incoming, ingest_min);
    }
    if (gen->parsed()) {
      return cmd_gen_ontologies(g, gen_dataset, gen_splits, gen_limit);
    }
    if (judge->parsed()) {
      return cmd_judge(g, judge_kb, judge_ontologies, judge_request,
                       judge_dataset, judge_conflict, judge_json);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(g, eval_method, eval_dataset, eval_splits,
                          eval_ontologies, eval_cot, eval_conflict);
    }
    if (ablate->parsed()) {
      return cmd_ablate(g, ablate_dataset, ablate_splits, ablate_ontologies,
                        ablate_counts, ablate_methods, ablate_conflict);
    }
    if (subset->parsed()) {
      return cmd_subset_analysis(g, subset_baseline, subset_entailment, subset_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
