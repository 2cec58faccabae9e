#include "ariel/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#ifndef ARIEL_DEFAULT_DATA_DIR
#define ARIEL_DEFAULT_DATA_DIR "data"
#endif

namespace ariel::llm {

namespace fs = std::filesystem;

const char* prompt_kind_name(PromptKind k) noexcept {
  switch (k) {
    case PromptKind::ZeroShot: return "zero_shot";
    case PromptKind::PrivacyNorms: return "privacy_norms";
    case PromptKind::Icl: return "icl";
    case PromptKind::IclWithUndet: return "icl_undet";
    case PromptKind::OntologyGeneration: return "ontology_generation";
    case PromptKind::OntologyMapping: return "ontology_mapping";
  }
  return "?";
}

UnknownTemplate::UnknownTemplate(PromptKind kind, DatasetId dataset)
    : TemplateError(std::string("no template for (") + prompt_kind_name(kind) +
                    ", " + dataset_name(dataset) + ")") {}

MissingSlot::MissingSlot(const std::string& n)
    : TemplateError("template slot '{" + n + "}' has no value"), name(n) {}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

bool is_slot_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Walks the template once; on_slot may return nullptr to keep the
// placeholder text (used by the slot scanner).
template <typename OnSlot>
std::string walk_template(const std::string& tmpl, OnSlot on_slot) {
  std::string out;
  out.reserve(tmpl.size());
  for (size_t i = 0; i < tmpl.size(); ++i) {
    char c = tmpl[i];
    if (c == '{') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      size_t j = i + 1;
      while (j < tmpl.size() && is_slot_char(tmpl[j])) ++j;
      if (j == i + 1 || j >= tmpl.size() || tmpl[j] != '}') {
        throw TemplateError("malformed placeholder near offset " +
                            std::to_string(i));
      }
      out += on_slot(tmpl.substr(i + 1, j - i - 1));
      i = j;
      continue;
    }
    if (c == '}') {
      if (i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
        out.push_back('}');
        ++i;
        continue;
      }
      throw TemplateError("unmatched '}' at offset " + std::to_string(i));
    }
    out.push_back(c);
  }
  return out;
}

constexpr std::string_view kOutputFormatHeading = "Required Output Format";
constexpr std::string_view kCotInstruction =
    "First provide your step-by-step reasoning, then output the JSON object.";

// Non-canonical reasoning-first variant: one instruction inserted as its own
// paragraph before the output-format section.
std::string inject_cot(const std::string& tmpl) {
  size_t pos = tmpl.find(kOutputFormatHeading);
  if (pos == std::string::npos) {
    throw TemplateError("template has no output-format section to anchor the "
                        "reasoning instruction");
  }
  std::string out = tmpl;
  out.insert(pos, std::string(kCotInstruction) + "\n\n");
  return out;
}

}  // namespace

std::string render_template(const std::string& tmpl, const SlotMap& slots) {
  return walk_template(tmpl, [&](const std::string& name) -> std::string {
    auto it = slots.find(name);
    if (it == slots.end()) throw MissingSlot(name);
    return it->second;
  });
}

std::vector<std::string> template_slots(const std::string& tmpl) {
  std::vector<std::string> names;
  walk_template(tmpl, [&](const std::string& name) -> std::string {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      names.push_back(name);
    }
    return {};
  });
  return names;
}

TemplateStore::TemplateStore(std::string dir) : dir_(std::move(dir)) {
  if (dir_.empty()) {
    if (const char* env = std::getenv("ARIEL_DATA_DIR")) {
      dir_ = fs::path(env) / "prompts";
    } else {
      dir_ = fs::path(ARIEL_DEFAULT_DATA_DIR) / "prompts";
    }
  }
}

const std::string& TemplateStore::raw_template(PromptKind kind,
                                               DatasetId dataset) const {
  // The mapping prompt is dataset-independent; everything else has one file
  // per (kind, dataset).
  std::string stem = prompt_kind_name(kind);
  if (kind != PromptKind::OntologyMapping) {
    stem += std::string(".") + dataset_name(dataset);
  }
  std::lock_guard lock(mutex_);
  auto it = loaded_.find(stem);
  if (it != loaded_.end()) return it->second;

  const fs::path path = fs::path(dir_) / (stem + ".txt");
  std::ifstream in(path);
  if (!in) throw UnknownTemplate(kind, dataset);
  std::ostringstream buf;
  buf << in.rdbuf();
  return loaded_.emplace(stem, buf.str()).first->second;
}

std::string TemplateStore::version() const {
  std::ifstream in(fs::path(dir_) / "VERSION");
  std::string v;
  if (in) std::getline(in, v);
  return v.empty() ? "unversioned" : v;
}

std::string render_prompt(const TemplateStore& store, PromptSpec spec,
                          DatasetId dataset, const SlotMap& slots) {
  std::string tmpl = store.raw_template(spec.kind, dataset);
  const bool judgment_prompt =
      spec.kind == PromptKind::ZeroShot || spec.kind == PromptKind::PrivacyNorms ||
      spec.kind == PromptKind::Icl || spec.kind == PromptKind::IclWithUndet;
  if (spec.cot && judgment_prompt) {
    tmpl = inject_cot(tmpl);
  }
  return render_template(tmpl, slots);
}

// ---------------------------------------------------------------------------
// Slot-block formatting
// ---------------------------------------------------------------------------

std::string format_request_block(const Request& r) {
  std::string out;
  for (Field f : kAllFields) {
    out += field_name(f);
    out += ": ";
    out += r.field(f);
    out += '\n';
  }
  out.pop_back();
  return out;
}

std::string format_prior_block(const PriorRequest& p) {
  return format_request_block(p.request) + "\njudgment: " + to_string(p.judgment);
}

std::string format_icl_examples(std::span<const PriorRequest> priors) {
  std::string out;
  for (size_t i = 0; i < priors.size(); ++i) {
    if (i) out += "\n\n";
    out += format_prior_block(priors[i]);
  }
  return out;
}

std::string format_flow_lines(DatasetId dataset,
                              std::span<const PriorRequest> priors) {
  std::string out;
  for (size_t i = 0; i < priors.size(); ++i) {
    const Request& r = priors[i].request;
    if (i) out += '\n';
    out += '(';
    out += r.data_type;
    out += ", ";
    if (dataset == DatasetId::Education) {
      out += r.data_sender;
      out += ", ";
    }
    out += r.data_recipient;
    out += ", ";
    out += r.transmission_principle;
    out += ") -> ";
    out += to_string(priors[i].judgment);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

namespace {

std::string excerpt_of(std::string_view raw) {
  constexpr size_t kMax = 120;
  std::string e(raw.substr(0, kMax));
  for (char& c : e) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  if (raw.size() > kMax) e += "...";
  return e;
}

// Every balanced {...} span in the text, string-aware.
std::vector<std::string> candidate_objects(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while ((i = text.find('{', i)) != std::string::npos) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t j = i; j < text.size(); ++j) {
      char c = text[j];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          out.push_back(text.substr(i, j - i + 1));
          break;
        }
      }
    }
    ++i;
  }
  return out;
}

// The mapping prompt's bad example shows a list hyphen in front of a key;
// drop such hyphens before JSON parsing.
std::string strip_list_hyphens(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    size_t i = line.find_first_not_of(" \t");
    if (i != std::string::npos && line[i] == '-' &&
        line.find_first_not_of(" \t", i + 1) != std::string::npos &&
        line[line.find_first_not_of(" \t", i + 1)] == '"') {
      line.erase(i, 1);
    }
    out += line;
    out += '\n';
  }
  return out;
}

std::optional<nlohmann::json> first_object_with_keys(
    const std::string& text, std::span<const char* const> keys) {
  for (const std::string& candidate : candidate_objects(text)) {
    nlohmann::json j = nlohmann::json::parse(candidate, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    bool any = false;
    for (const char* key : keys) {
      if (j.contains(key)) any = true;
    }
    if (any) return j;
  }
  return std::nullopt;
}

}  // namespace

Unparseable::Unparseable(std::string_view raw)
    : ReplyError("no judgment object found in reply: \"" + excerpt_of(raw) +
                 "\"") {}

IllegalValue::IllegalValue(const std::string& v)
    : ReplyError("illegal judgment value '" + v + "'"), value(v) {}

MissingKey::MissingKey(const std::string& n)
    : ReplyError("mapping reply missing key '" + n + "'"), name(n) {}

Decision parse_judgment(const std::string& raw, bool allow_undetermined) {
  constexpr const char* keys[] = {"judgment"};
  auto obj = first_object_with_keys(raw, keys);
  if (!obj || !(*obj)["judgment"].is_string()) throw Unparseable(raw);
  const std::string value = (*obj)["judgment"].get<std::string>();
  auto decision = decision_from_string(value);
  if (!decision) throw IllegalValue(value);
  if (*decision == Decision::Undetermined && !allow_undetermined) {
    throw IllegalValue(value);
  }
  return *decision;
}

MappingReply parse_mapping(const std::string& raw, const Ontology& ontology) {
  const std::string cleaned = strip_list_hyphens(raw);
  constexpr const char* keys[] = {"mapped_prior_A", "mapped_incoming_B"};
  auto obj = first_object_with_keys(cleaned, keys);
  if (!obj) throw Unparseable(raw);
  for (const char* key :
       {"prior_A", "incoming_B", "mapped_prior_A", "mapped_incoming_B"}) {
    if (!obj->contains(key) || !(*obj)[key].is_string()) throw MissingKey(key);
  }
  MappingReply reply;
  reply.prior_a = (*obj)["prior_A"].get<std::string>();
  reply.incoming_b = (*obj)["incoming_B"].get<std::string>();
  reply.mapped_prior_a =
      parse_level_ref((*obj)["mapped_prior_A"].get<std::string>(), ontology);
  reply.mapped_incoming_b =
      parse_level_ref((*obj)["mapped_incoming_B"].get<std::string>(), ontology);
  return reply;
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

ScriptedProvider ScriptedProvider::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scripted fixture '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

ScriptedProvider ScriptedProvider::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad scripted fixture: ") + e.what());
  }
  ScriptedProvider p;
  p.fixture_hash_ = to_hex(fnv1a64(text));
  p.model_id_ = j.value("model_id", std::string("scripted"));
  for (const auto& rule_json : j.at("rules")) {
    Rule rule;
    rule.prompt_hash = rule_json.value("prompt_hash", std::string{});
    if (rule_json.contains("contains")) {
      if (rule_json["contains"].is_string()) {
        rule.contains.push_back(rule_json["contains"].get<std::string>());
      } else {
        for (const auto& s : rule_json["contains"]) {
          rule.contains.push_back(s.get<std::string>());
        }
      }
    }
    rule.is_default = rule_json.value("default", false);
    rule.response = rule_json.at("response").get<std::string>();
    p.rules_.push_back(std::move(rule));
  }
  return p;
}

std::string ScriptedProvider::complete(const std::string& prompt) {
  const std::string hash = to_hex(fnv1a64(prompt));
  for (const Rule& rule : rules_) {
    if (!rule.prompt_hash.empty()) {
      if (rule.prompt_hash == hash) return rule.response;
      continue;
    }
    if (!rule.contains.empty()) {
      bool all = true;
      for (const std::string& needle : rule.contains) {
        if (prompt.find(needle) == std::string::npos) {
          all = false;
          break;
        }
      }
      if (all) return rule.response;
      continue;
    }
    if (rule.is_default) return rule.response;
  }
  throw ProviderError("no scripted response matches prompt (hash " + hash + ")");
}

HttpProvider::HttpProvider(Config config) : config_(std::move(config)) {}

// Defined in http_provider.cpp to keep httplib out of this TU.

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

ExhaustedRetries::ExhaustedRetries(int n, const std::string& last)
    : Error("provider failed after " + std::to_string(n) + " attempt(s): " + last),
      attempts(n),
      last_error(last) {}

Gateway::Gateway(std::shared_ptr<ChatProvider> provider)
    : Gateway(std::move(provider), Options{}) {}

Gateway::Gateway(std::shared_ptr<ChatProvider> provider, Options options)
    : provider_(std::move(provider)), options_(std::move(options)) {
  model_id_ = provider_->model_id();
  if (options_.retry_budget < 1) {
    throw PreconditionError("retry budget must be at least 1");
  }
  if (!options_.cache_dir.empty()) {
    fs::create_directories(options_.cache_dir);
  }
}

std::optional<std::string> Gateway::cache_lookup(const std::string& key) {
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ++cache_hits_;
      return it->second;
    }
  }
  if (options_.cache_dir.empty()) return std::nullopt;
  std::ifstream in(fs::path(options_.cache_dir) / (key + ".txt"));
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  std::lock_guard lock(mutex_);
  ++cache_hits_;
  return cache_.emplace(key, buf.str()).first->second;
}

void Gateway::cache_store(const std::string& key, const std::string& response) {
  {
    std::lock_guard lock(mutex_);
    cache_[key] = response;
  }
  if (options_.cache_dir.empty()) return;
  // temp + rename so concurrent writers of one key cannot tear the file
  const fs::path final_path = fs::path(options_.cache_dir) / (key + ".txt");
  const fs::path tmp_path =
      final_path.string() + "." + std::to_string(std::random_device{}()) + ".tmp";
  {
    std::ofstream out(tmp_path);
    out << response;
  }
  std::error_code ec;
  fs::rename(tmp_path, final_path, ec);
  if (ec) fs::remove(tmp_path, ec);
}

ChatExchange Gateway::complete(const std::string& prompt) {
  return complete(prompt, options_.retry_budget);
}

ChatExchange Gateway::complete(const std::string& prompt, int retry_budget) {
  if (retry_budget < 1) throw PreconditionError("retry budget must be at least 1");

  ChatExchange exchange;
  exchange.rendered_prompt = prompt;
  exchange.model_id = model_id_;

  const std::string key = to_hex(fnv1a64(model_id_ + '\x1f' + prompt));
  if (auto cached = cache_lookup(key)) {
    exchange.raw_response = *cached;
    exchange.cache_hit = true;
    return exchange;
  }

  {
    std::unique_lock lock(mutex_);
    slot_free_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
  }

  std::string last_error;
  const auto start = std::chrono::steady_clock::now();
  for (int attempt = 1; attempt <= retry_budget; ++attempt) {
    exchange.attempt = attempt;
    try {
      std::string response;
      {
        std::lock_guard lock(mutex_);
        ++provider_calls_;
      }
      response = provider_->complete(prompt);
      if (response.empty()) throw ProviderError("empty response");
      exchange.raw_response = std::move(response);
      exchange.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start);
      {
        std::unique_lock lock(mutex_);
        --in_flight_;
      }
      slot_free_.notify_one();
      cache_store(key, exchange.raw_response);
      return exchange;
    } catch (const std::exception& e) {
      last_error = e.what();
      if (attempt < retry_budget && options_.backoff_base.count() > 0) {
        std::this_thread::sleep_for(options_.backoff_base * (1 << (attempt - 1)));
      }
    }
  }
  {
    std::unique_lock lock(mutex_);
    --in_flight_;
  }
  slot_free_.notify_one();
  throw ExhaustedRetries(retry_budget, last_error);
}

size_t Gateway::cache_hits() const {
  std::lock_guard lock(mutex_);
  return cache_hits_;
}

size_t Gateway::provider_calls() const {
  std::lock_guard lock(mutex_);
  return provider_calls_;
}

// ---------------------------------------------------------------------------
// LLM-backed level mapper
// ---------------------------------------------------------------------------

LlmLevelMapper::LlmLevelMapper(std::shared_ptr<Gateway> gateway,
                               const TemplateStore& templates, DatasetId dataset,
                               const OntologySet& ontologies)
    : gateway_(std::move(gateway)),
      templates_(templates),
      dataset_(dataset),
      ontologies_block_(serialize_ontology_set(ontologies)) {}

LevelMapper::Levels LlmLevelMapper::map_pair(const Request& prior,
                                             const Request& incoming,
                                             const Ontology& ontology,
                                             const std::string& /*prior_value*/,
                                             const std::string& /*incoming_value*/) {
  const SlotMap slots{
      {"ontologies", ontologies_block_},
      {"prior_request", format_request_block(prior)},
      {"incoming_request", format_request_block(incoming)},
      {"differing_field", dimension_name(ontology.dimension())},
  };
  const std::string prompt = render_prompt(
      templates_, {PromptKind::OntologyMapping, false}, dataset_, slots);
  const ChatExchange exchange = gateway_->complete(prompt);
  MappingReply reply = parse_mapping(exchange.raw_response, ontology);
  return Levels{reply.mapped_prior_a, reply.mapped_incoming_b};
}

}  // namespace ariel::llm
