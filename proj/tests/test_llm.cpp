#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ariel/llm.hpp"
#include "ariel/ontology.hpp"

using namespace ariel;
using namespace ariel::llm;

namespace {

const std::string kTemplateDir = std::string(ARIEL_SOURCE_DIR) + "/data/prompts";

struct TemplateCase {
  PromptKind kind;
  DatasetId dataset;
  std::vector<std::string> slots;
};

const std::vector<TemplateCase> kAllTemplates = {
    {PromptKind::ZeroShot, DatasetId::Spa, {"incoming_request"}},
    {PromptKind::ZeroShot, DatasetId::Education, {"incoming_request"}},
    {PromptKind::PrivacyNorms, DatasetId::Spa, {"incoming_request"}},
    {PromptKind::PrivacyNorms, DatasetId::Education, {"incoming_request"}},
    {PromptKind::Icl, DatasetId::Spa, {"icl_examples", "incoming_request"}},
    {PromptKind::Icl, DatasetId::Education, {"icl_examples", "incoming_request"}},
    {PromptKind::IclWithUndet, DatasetId::Spa, {"icl_examples", "incoming_request"}},
    {PromptKind::IclWithUndet, DatasetId::Education,
     {"icl_examples", "incoming_request"}},
    {PromptKind::OntologyGeneration, DatasetId::Spa, {"privacy_preferences"}},
    {PromptKind::OntologyGeneration, DatasetId::Education, {"privacy_preferences"}},
    {PromptKind::OntologyMapping, DatasetId::Spa,
     {"ontologies", "prior_request", "incoming_request", "differing_field"}},
};

// Independent check that rendering only touched slot regions: walk the
// template and the rendered text together, consuming escapes and slots by
// the declared syntax rather than through the production renderer.
void check_render_fidelity(const std::string& tmpl, const std::string& rendered,
                           const std::map<std::string, std::string>& slots) {
  size_t ti = 0, ri = 0;
  while (ti < tmpl.size()) {
    if (tmpl[ti] == '{' && ti + 1 < tmpl.size() && tmpl[ti + 1] == '{') {
      REQUIRE(rendered[ri] == '{');
      ti += 2;
      ri += 1;
      continue;
    }
    if (tmpl[ti] == '}' && ti + 1 < tmpl.size() && tmpl[ti + 1] == '}') {
      REQUIRE(rendered[ri] == '}');
      ti += 2;
      ri += 1;
      continue;
    }
    if (tmpl[ti] == '{') {
      const size_t end = tmpl.find('}', ti);
      REQUIRE(end != std::string::npos);
      const std::string name = tmpl.substr(ti + 1, end - ti - 1);
      REQUIRE(slots.count(name) == 1);
      const std::string& value = slots.at(name);
      REQUIRE(rendered.compare(ri, value.size(), value) == 0);
      ti = end + 1;
      ri += value.size();
      continue;
    }
    REQUIRE(ri < rendered.size());
    REQUIRE(tmpl[ti] == rendered[ri]);
    ++ti;
    ++ri;
  }
  REQUIRE(ri == rendered.size());
}

Ontology six_level_ontology() {
  return Ontology(Dimension::DataType,
                  {{1, "level one"},
                   {2, "level two"},
                   {3, "level three"},
                   {4, "level four"},
                   {5, "level five"},
                   {6, "level six"}});
}

}  // namespace

TEST_CASE("every template renders byte-exactly outside its slots") {
  TemplateStore store(kTemplateDir);
  for (const TemplateCase& tc : kAllTemplates) {
    CAPTURE(prompt_kind_name(tc.kind));
    CAPTURE(dataset_name(tc.dataset));
    const std::string& tmpl = store.raw_template(tc.kind, tc.dataset);

    std::map<std::string, std::string> slots;
    for (const std::string& name : tc.slots) {
      slots[name] = "<<" + name + "-sentinel>>";
    }
    const std::string rendered =
        render_prompt(store, {tc.kind, false}, tc.dataset, slots);
    check_render_fidelity(tmpl, rendered, slots);

    // the declared slots are exactly the ones the template names
    CHECK(template_slots(tmpl) == tc.slots);
  }
}

TEST_CASE("templates carry the published instruction lines verbatim") {
  TemplateStore store(kTemplateDir);
  const SlotMap empty_request{{"incoming_request", ""}};

  const std::string zero_shot =
      render_prompt(store, {PromptKind::ZeroShot, false}, DatasetId::Spa,
                    empty_request);
  CHECK(zero_shot.find("judge if it is \"appropriate\" or \"inappropriate\" "
                       "based on your knowledge of general privacy norms") !=
        std::string::npos);
  CHECK(zero_shot.find("{\n  \"judgment\": \"appropriate or inappropriate\"\n}") !=
        std::string::npos);

  const std::string icl_undet = render_prompt(
      store, {PromptKind::IclWithUndet, false}, DatasetId::Education,
      {{"icl_examples", ""}, {"incoming_request", ""}});
  CHECK(icl_undet.find("then your judgment should be \"undetermined\"") !=
        std::string::npos);

  const std::string norms = render_prompt(
      store, {PromptKind::PrivacyNorms, false}, DatasetId::Spa, empty_request);
  CHECK(norms.find("N3. data_type: 'voice command history', judgment: "
                   "'inappropriate'") != std::string::npos);
  CHECK(norms.find("N4 transmission_principle: 'no purpose/condition', "
                   "judgment: 'inappropriate'") != std::string::npos);

  const std::string education_norms = render_prompt(
      store, {PromptKind::PrivacyNorms, false}, DatasetId::Education,
      empty_request);
  CHECK(education_norms.find(
            "N1. data_sender: 'professor', data_recipient: 'graduate schools', "
            "data_type: 'attendance', transmission_principle: 'with subject's "
            "consent'") != std::string::npos);

  const std::string mapping = render_prompt(
      store, {PromptKind::OntologyMapping, false}, DatasetId::Spa,
      {{"ontologies", ""},
       {"prior_request", ""},
       {"incoming_request", ""},
       {"differing_field", ""}});
  CHECK(mapping.find("Your output must be a single, raw JSON object.") !=
        std::string::npos);
  CHECK(mapping.find("\"mapped_prior_A\": \"L3\"") != std::string::npos);
  CHECK(mapping.find("DO NOT ADD A HYPHEN") != std::string::npos);

  const std::string generation = render_prompt(
      store, {PromptKind::OntologyGeneration, false}, DatasetId::Spa,
      {{"privacy_preferences", ""}});
  CHECK(generation.find("data_type Ontology") != std::string::npos);
  CHECK(generation.find("Mutually Exclusive (The \"No Overlap\" Rule)") !=
        std::string::npos);
}

TEST_CASE("the fixture mapping prompt matches its frozen golden rendering") {
  TemplateStore store(kTemplateDir);
  const auto parsed = load_ontology_set(
      std::string(ARIEL_SOURCE_DIR) + "/data/fixtures/example_ontologies.txt",
      "demo-user");
  const Request prior{"full SSN", "user", "agent", "bank",
                      "open checking account"};
  const Request incoming{"partial SSN", "user", "agent", "bank",
                         "open checking account"};
  const SlotMap slots{
      {"ontologies", serialize_ontology_set(parsed.set)},
      {"prior_request", format_request_block(prior)},
      {"incoming_request", format_request_block(incoming)},
      {"differing_field", "data_type"},
  };
  const std::string rendered = render_prompt(
      store, {PromptKind::OntologyMapping, false}, DatasetId::Spa, slots);

  std::ifstream golden(std::string(ARIEL_SOURCE_DIR) +
                       "/tests/golden/mapping_prompt_ssn.golden");
  REQUIRE(golden.good());
  std::ostringstream expected;
  expected << golden.rdbuf();
  CHECK(rendered == expected.str());
}

TEST_CASE("rendering rejects missing slots and unknown templates") {
  TemplateStore store(kTemplateDir);
  CHECK_THROWS_AS((void)render_prompt(store, {PromptKind::OntologyMapping, false},
                                      DatasetId::Spa,
                                      {{"ontologies", ""},
                                       {"prior_request", ""},
                                       {"incoming_request", ""}}),
                  MissingSlot);

  TemplateStore missing_dir("/nonexistent/prompts");
  CHECK_THROWS_AS((void)missing_dir.raw_template(PromptKind::ZeroShot,
                                                 DatasetId::Spa),
                  UnknownTemplate);
}

TEST_CASE("template escapes and malformed placeholders") {
  CHECK(render_template("{{\"k\": \"v\"}}", {}) == "{\"k\": \"v\"}");
  CHECK(render_template("a {x} b", {{"x", "X"}}) == "a X b");
  CHECK(render_template("{x}{x}", {{"x", "1"}}) == "11");  // repeats substitute
  CHECK_THROWS_AS((void)render_template("{bad name}", {}), TemplateError);
  CHECK_THROWS_AS((void)render_template("lone }", {}), TemplateError);
}

TEST_CASE("the reasoning-first variant inserts one instruction before the output format") {
  TemplateStore store(kTemplateDir);
  for (DatasetId dataset : {DatasetId::Spa, DatasetId::Education}) {
    for (PromptKind kind : {PromptKind::ZeroShot, PromptKind::PrivacyNorms,
                            PromptKind::Icl, PromptKind::IclWithUndet}) {
      SlotMap slots{{"incoming_request", "R"}};
      if (kind == PromptKind::Icl || kind == PromptKind::IclWithUndet) {
        slots["icl_examples"] = "E";
      }
      const std::string plain = render_prompt(store, {kind, false}, dataset, slots);
      const std::string cot = render_prompt(store, {kind, true}, dataset, slots);
      const std::string instruction =
          "First provide your step-by-step reasoning, then output the JSON "
          "object.\n\nRequired Output Format";
      CHECK(plain.find(instruction) == std::string::npos);
      CHECK(cot.find(instruction) != std::string::npos);
      CHECK(cot.size() > plain.size());
    }
  }
}

TEST_CASE("parse_judgment is total over the value/wrapping matrix") {
  const std::vector<std::pair<std::string, Decision>> values = {
      {"appropriate", Decision::Appropriate},
      {"inappropriate", Decision::Inappropriate},
      {"undetermined", Decision::Undetermined},
  };
  for (const auto& [value, expected] : values) {
    const std::string object = "{\"judgment\": \"" + value + "\"}";
    const std::vector<std::string> wrappings = {
        object,
        "```json\n" + object + "\n```",
        "Here is my judgment.\n\n" + object + "\n\nLet me know.",
    };
    for (const std::string& raw : wrappings) {
      CAPTURE(raw);
      CHECK(parse_judgment(raw, true) == expected);
    }
  }
}

TEST_CASE("parse_judgment vocabulary and failure modes") {
  CHECK(parse_judgment("{\"judgment\": \"APPROPRIATE\"}", false) ==
        Decision::Appropriate);
  CHECK(parse_judgment("{\"reasoning\": \"because\", \"judgment\": "
                       "\"inappropriate\"}",
                       false) == Decision::Inappropriate);
  CHECK_THROWS_AS((void)parse_judgment("{\"judgment\": \"maybe\"}", true),
                  IllegalValue);
  CHECK_THROWS_AS((void)parse_judgment("{\"judgment\": \"undetermined\"}", false),
                  IllegalValue);
  CHECK_THROWS_AS((void)parse_judgment("no json here", true), Unparseable);
  CHECK_THROWS_AS((void)parse_judgment("{\"other\": 1}", true), Unparseable);
}

TEST_CASE("parse_mapping handles the published example and its pitfalls") {
  const Ontology o = six_level_ontology();

  const MappingReply reply = parse_mapping(
      R"({"prior_A":"credit card information","incoming_B":"birth date",)"
      R"("mapped_prior_A":"L3","mapped_incoming_B":"L1"})",
      o);
  CHECK(reply.prior_a == "credit card information");
  CHECK(reply.incoming_b == "birth date");
  CHECK(reply.mapped_prior_a.index == 3);
  CHECK(reply.mapped_incoming_b.index == 1);

  CHECK_THROWS_AS(
      (void)parse_mapping(
          R"({"prior_A":"a","incoming_B":"b","mapped_prior_A":"L2"})", o),
      MissingKey);
  CHECK_THROWS_AS(
      (void)parse_mapping(R"({"prior_A":"a","incoming_B":"b",)"
                          R"("mapped_prior_A":"L9","mapped_incoming_B":"L1"})",
                          o),
      LevelOutOfRange);
  CHECK_THROWS_AS((void)parse_mapping("nothing", o), Unparseable);

  // the stray list hyphen the prompt explicitly warns about
  const std::string hyphenated = "{\n"
                                 "  \"prior_A\": \"some value\",\n"
                                 "  - \"incoming_B\": \"another value\",\n"
                                 "  \"mapped_prior_A\": \"L1\",\n"
                                 "  \"mapped_incoming_B\": \"L2\"\n"
                                 "}";
  const MappingReply fixed = parse_mapping(hyphenated, o);
  CHECK(fixed.mapped_prior_a.index == 1);
  CHECK(fixed.mapped_incoming_b.index == 2);

  const MappingReply fenced = parse_mapping(
      "```json\n{\"prior_A\":\"a\",\"incoming_B\":\"b\","
      "\"mapped_prior_A\":\"L5\",\"mapped_incoming_B\":\"L6\"}\n```",
      o);
  CHECK(fenced.mapped_prior_a.index == 5);
}

TEST_CASE("request blocks and flow lines render in the documented shapes") {
  const Request r{"grades", "student", "professor", "parents",
                  "if student is performing poorly"};
  CHECK(format_request_block(r) ==
        "data_type: grades\n"
        "data_subject: student\n"
        "data_sender: professor\n"
        "data_recipient: parents\n"
        "transmission_principle: if student is performing poorly");

  const PriorRequest p{r, BinaryJudgment::Inappropriate};
  CHECK(format_prior_block(p) ==
        format_request_block(r) + "\njudgment: inappropriate");

  const std::vector<PriorRequest> priors{p, {r, BinaryJudgment::Appropriate}};
  const std::string icl = format_icl_examples(priors);
  CHECK(icl.find("judgment: inappropriate\n\ndata_type: grades") !=
        std::string::npos);

  CHECK(format_flow_lines(DatasetId::Education, priors) ==
        "(grades, professor, parents, if student is performing poorly) -> "
        "inappropriate\n"
        "(grades, professor, parents, if student is performing poorly) -> "
        "appropriate");
  // the spa corpus fixes the sender, so its tuples have three request fields
  CHECK(format_flow_lines(DatasetId::Spa, priors) ==
        "(grades, parents, if student is performing poorly) -> inappropriate\n"
        "(grades, parents, if student is performing poorly) -> appropriate");
}

TEST_CASE("scripted provider matches rules in order") {
  const std::string fixture = R"({
    "model_id": "scripted-test",
    "rules": [
      {"contains": ["alpha", "beta"], "response": "both"},
      {"contains": "alpha", "response": "just alpha"},
      {"default": true, "response": "fallback"}
    ]
  })";
  ScriptedProvider p = ScriptedProvider::from_json(fixture);
  CHECK(p.model_id() == "scripted-test");
  CHECK(p.complete("alpha and beta here") == "both");
  CHECK(p.complete("alpha only") == "just alpha");
  CHECK(p.complete("nothing relevant") == "fallback");
  CHECK_FALSE(p.fixture_hash().empty());
}

TEST_CASE("scripted provider can match on the prompt hash") {
  const std::string prompt = "the exact prompt";
  const std::string hash = to_hex(fnv1a64(prompt));
  ScriptedProvider p = ScriptedProvider::from_json(
      R"({"rules": [{"prompt_hash": ")" + hash + R"(", "response": "hit"}]})");
  CHECK(p.complete(prompt) == "hit");
  CHECK_THROWS_AS((void)p.complete("a different prompt"), ProviderError);
}

TEST_CASE("gateway retries with attempt accounting") {
  auto failures_left = std::make_shared<int>(2);
  auto flaky = std::make_shared<CallbackProvider>(
      "flaky", [failures_left](const std::string&) -> std::string {
        if (*failures_left > 0) {
          --*failures_left;
          throw ProviderError("transient");
        }
        return "{\"judgment\": \"appropriate\"}";
      });

  Gateway::Options options;
  options.retry_budget = 3;
  options.backoff_base = std::chrono::milliseconds(0);
  Gateway gateway(flaky, options);

  const ChatExchange exchange = gateway.complete("p");
  CHECK(exchange.attempt == 3);
  CHECK(exchange.raw_response == "{\"judgment\": \"appropriate\"}");
  CHECK_FALSE(exchange.cache_hit);
}

TEST_CASE("gateway exhausts its retry budget") {
  auto always_failing = std::make_shared<CallbackProvider>(
      "dead", [](const std::string&) -> std::string {
        throw ProviderError("down");
      });
  Gateway::Options options;
  options.retry_budget = 2;
  options.backoff_base = std::chrono::milliseconds(0);
  Gateway gateway(always_failing, options);
  CHECK_THROWS_AS((void)gateway.complete("p"), ExhaustedRetries);

  auto empty_reply = std::make_shared<CallbackProvider>(
      "empty", [](const std::string&) { return std::string{}; });
  Gateway empty_gateway(empty_reply, options);
  CHECK_THROWS_AS((void)empty_gateway.complete("p"), ExhaustedRetries);

  CHECK_THROWS_AS((void)gateway.complete("p", 0), PreconditionError);
}

TEST_CASE("scripted happy path answers on the first attempt") {
  ScriptedProvider scripted = ScriptedProvider::from_json(
      R"({"rules": [{"default": true, "response": "fixed"}]})");
  Gateway gateway(std::make_shared<ScriptedProvider>(scripted));
  const ChatExchange exchange = gateway.complete("anything");
  CHECK(exchange.attempt == 1);
  CHECK(exchange.raw_response == "fixed");
}

TEST_CASE("response cache dedupes identical prompts within and across gateways") {
  namespace fs = std::filesystem;
  const fs::path cache_dir =
      fs::temp_directory_path() / ("ariel-cache-" + std::to_string(::getpid()));
  fs::remove_all(cache_dir);

  auto counter = std::make_shared<std::atomic<int>>(0);
  auto provider = std::make_shared<CallbackProvider>(
      "counted", [counter](const std::string&) {
        ++*counter;
        return std::string("reply");
      });

  Gateway::Options options;
  options.cache_dir = cache_dir.string();
  {
    Gateway gateway(provider, options);
    CHECK(gateway.complete("p1").raw_response == "reply");
    CHECK(gateway.complete("p1").cache_hit);
    CHECK(gateway.complete("p2").raw_response == "reply");
    CHECK(*counter == 2);
    CHECK(gateway.cache_hits() == 1);
  }
  {
    // a fresh gateway reads the persisted entries
    Gateway gateway(provider, options);
    CHECK(gateway.complete("p1").cache_hit);
    CHECK(*counter == 2);
  }
  fs::remove_all(cache_dir);
}

TEST_CASE("http provider speaks the chat-completions wire format") {
  httplib::Server server;
  std::string seen_auth, seen_model, seen_prompt;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                seen_auth = req.get_header_value("Authorization");
                const auto body = nlohmann::json::parse(req.body);
                seen_model = body.at("model").get<std::string>();
                seen_prompt =
                    body.at("messages").at(0).at("content").get<std::string>();
                res.set_content(
                    nlohmann::json{
                        {"choices",
                         {{{"message",
                            {{"role", "assistant"},
                             {"content", "{\"judgment\": \"appropriate\"}"}}}}}}}
                        .dump(),
                    "application/json");
              });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&server] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpProvider::Config config;
  config.endpoint =
      "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.model_id = "test-model";
  config.api_key = "secret-token";
  HttpProvider provider(config);

  Gateway gateway(std::make_shared<HttpProvider>(provider));
  const ChatExchange exchange = gateway.complete("judge this");
  CHECK(exchange.raw_response == "{\"judgment\": \"appropriate\"}");
  CHECK(seen_auth == "Bearer secret-token");
  CHECK(seen_model == "test-model");
  CHECK(seen_prompt == "judge this");

  server.stop();
  server_thread.join();
}

TEST_CASE("gateway bounds concurrent in-flight calls") {
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  auto provider = std::make_shared<CallbackProvider>(
      "slow", [&](const std::string& p) {
        const int now = ++active;
        int expected = peak.load();
        while (now > expected && !peak.compare_exchange_weak(expected, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return "ok:" + p;
      });

  Gateway::Options options;
  options.max_in_flight = 2;
  Gateway gateway(provider, options);

  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&gateway, i] {
      (void)gateway.complete("prompt-" + std::to_string(i));
    });
  }
  for (auto& t : threads) t.join();
  CHECK(peak.load() <= 2);
  CHECK(gateway.provider_calls() == 6);
}
