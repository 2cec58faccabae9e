#pragma once
// Prompt rendering, chat-completion providers, and reply parsing.
//
// Templates ship as versioned data files and are substituted with
// format-string semantics: {name} is a slot, {{ and }} are literal braces.
// Reply parsing is lenient about wrapping (code fences, prose, stray
// hyphens) but strict about vocabulary.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "ariel/core.hpp"
#include "ariel/entailment.hpp"
#include "ariel/ontology.hpp"

namespace ariel::llm {

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

enum class PromptKind {
  ZeroShot,
  PrivacyNorms,
  Icl,
  IclWithUndet,
  OntologyGeneration,
  OntologyMapping,
};

const char* prompt_kind_name(PromptKind k) noexcept;

struct PromptSpec {
  PromptKind kind;
  // Inserts a reasoning-first instruction into the four judgment prompts
  // and tolerates a "reasoning" field in replies. Ignored for ontology
  // generation/mapping.
  bool cot = false;
};

struct TemplateError : Error {
  using Error::Error;
};
struct UnknownTemplate final : TemplateError {
  UnknownTemplate(PromptKind kind, DatasetId dataset);
};
struct MissingSlot final : TemplateError {
  explicit MissingSlot(const std::string& name);
  std::string name;
};

using SlotMap = std::map<std::string, std::string>;

// Substitutes {name} slots; {{ and }} unescape to literal braces. Throws
// MissingSlot for a slot absent from `slots`; unused slots are ignored.
std::string render_template(const std::string& tmpl, const SlotMap& slots);

// Placeholder names a template declares, in order of first appearance.
std::vector<std::string> template_slots(const std::string& tmpl);

class TemplateStore {
 public:
  // dir defaults to $ARIEL_DATA_DIR/prompts, falling back to the build-time
  // data directory.
  explicit TemplateStore(std::string dir = {});

  const std::string& raw_template(PromptKind kind, DatasetId dataset) const;
  std::string version() const;  // contents of <dir>/VERSION, trimmed
  const std::string& dir() const noexcept { return dir_; }

 private:
  std::string dir_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::string> loaded_;
};

std::string render_prompt(const TemplateStore& store, PromptSpec spec,
                          DatasetId dataset, const SlotMap& slots);

// ---------------------------------------------------------------------------
// Slot-block formatting
// ---------------------------------------------------------------------------

// Five "name: value" lines, in canonical field order.
std::string format_request_block(const Request& r);
// Request block plus a trailing "judgment: ..." line.
std::string format_prior_block(const PriorRequest& p);
// Prior blocks separated by blank lines.
std::string format_icl_examples(std::span<const PriorRequest> priors);
// "(v1, v2, ...) -> judgment" lines in the tuple shape the generation
// prompt declares for the dataset (spa omits the fixed sender).
std::string format_flow_lines(DatasetId dataset, std::span<const PriorRequest> priors);

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

struct ReplyError : Error {
  using Error::Error;
};
struct Unparseable final : ReplyError {
  explicit Unparseable(std::string_view raw);
};
struct IllegalValue final : ReplyError {
  explicit IllegalValue(const std::string& value);
  std::string value;
};
struct MissingKey final : ReplyError {
  explicit MissingKey(const std::string& name);
  std::string name;
};

// Extracts the "judgment" field from the first JSON object found in `raw`,
// tolerating code fences and surrounding prose. Values match
// case-insensitively; "undetermined" is legal only when allowed.
Decision parse_judgment(const std::string& raw, bool allow_undetermined);

struct MappingReply {
  std::string prior_a;
  std::string incoming_b;
  OntologyLevel mapped_prior_a;
  OntologyLevel mapped_incoming_b;
};

// Parses the four-key mapping object and resolves both level labels against
// the ontology. Strips fences and the stray list hyphens the prompt warns
// about.
MappingReply parse_mapping(const std::string& raw, const Ontology& ontology);

// ---------------------------------------------------------------------------
// Providers and the gateway
// ---------------------------------------------------------------------------

struct ProviderError : Error {
  using Error::Error;
};
struct ExhaustedRetries final : Error {
  ExhaustedRetries(int attempts, const std::string& last_error);
  int attempts;
  std::string last_error;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string model_id() const = 0;
};

// Deterministic provider backed by a fixture file:
//   {"model_id": "...", "rules": [
//     {"prompt_hash": "<fnv1a64 hex>", "response": "..."},
//     {"contains": "substring" | ["s1","s2"], "response": "..."},
//     {"default": true, "response": "..."}]}
// Rules match in order; no match is a ProviderError.
class ScriptedProvider final : public ChatProvider {
 public:
  static ScriptedProvider from_file(const std::string& path);
  static ScriptedProvider from_json(const std::string& text);

  std::string complete(const std::string& prompt) override;
  std::string model_id() const override { return model_id_; }
  std::string fixture_hash() const { return fixture_hash_; }

 private:
  struct Rule {
    std::string prompt_hash;
    std::vector<std::string> contains;
    bool is_default = false;
    std::string response;
  };
  std::string model_id_ = "scripted";
  std::string fixture_hash_;
  std::vector<Rule> rules_;
};

// Test/mock provider over an arbitrary prompt -> response function.
class CallbackProvider final : public ChatProvider {
 public:
  CallbackProvider(std::string model_id,
                   std::function<std::string(const std::string&)> fn)
      : model_id_(std::move(model_id)), fn_(std::move(fn)) {}

  std::string complete(const std::string& prompt) override { return fn_(prompt); }
  std::string model_id() const override { return model_id_; }

 private:
  std::string model_id_;
  std::function<std::string(const std::string&)> fn_;
};

// OpenAI-style chat-completions endpoint over HTTP.
class HttpProvider final : public ChatProvider {
 public:
  struct Config {
    std::string endpoint;  // e.g. "http://localhost:8000/v1/chat/completions"
    std::string model_id;
    std::string api_key;       // resolved by the caller (env var)
    double temperature = 0.0;  // most deterministic setting by default
    int timeout_seconds = 120;
  };

  explicit HttpProvider(Config config);
  std::string complete(const std::string& prompt) override;
  std::string model_id() const override { return config_.model_id; }

 private:
  Config config_;
};

struct ChatExchange {
  std::string rendered_prompt;
  std::string raw_response;
  std::string model_id;
  std::chrono::milliseconds latency{0};
  int attempt = 1;  // provider attempts consumed; >= 1
  bool cache_hit = false;
};

// Retry, backoff, bounded concurrency, and a response cache keyed by
// hash(model_id, prompt). The cache persists to disk when cache_dir is set.
class Gateway {
 public:
  struct Options {
    int retry_budget = 3;
    std::chrono::milliseconds backoff_base{250};  // doubles per attempt
    int max_in_flight = 4;
    std::string cache_dir;  // empty disables persistence
  };

  explicit Gateway(std::shared_ptr<ChatProvider> provider);
  Gateway(std::shared_ptr<ChatProvider> provider, Options options);

  ChatExchange complete(const std::string& prompt);
  ChatExchange complete(const std::string& prompt, int retry_budget);

  const std::string& model_id() const noexcept { return model_id_; }
  size_t cache_hits() const;
  size_t provider_calls() const;

 private:
  std::optional<std::string> cache_lookup(const std::string& key);
  void cache_store(const std::string& key, const std::string& response);

  std::shared_ptr<ChatProvider> provider_;
  Options options_;
  std::string model_id_;

  mutable std::mutex mutex_;
  std::map<std::string, std::string> cache_;
  size_t cache_hits_ = 0;
  size_t provider_calls_ = 0;
  int in_flight_ = 0;
  std::condition_variable slot_free_;
};

// LevelMapper backed by the ontology-mapping prompt. One instance per
// ontology set; wrap in CachingMapper to dedupe repeated values.
class LlmLevelMapper final : public LevelMapper {
 public:
  LlmLevelMapper(std::shared_ptr<Gateway> gateway, const TemplateStore& templates,
                 DatasetId dataset, const OntologySet& ontologies);

  Levels map_pair(const Request& prior, const Request& incoming,
                  const Ontology& ontology, const std::string& prior_value,
                  const std::string& incoming_value) override;

 private:
  std::shared_ptr<Gateway> gateway_;
  const TemplateStore& templates_;
  DatasetId dataset_;
  std::string ontologies_block_;
};

}  // namespace ariel::llm
