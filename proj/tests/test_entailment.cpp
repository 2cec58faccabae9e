#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "ariel/entailment.hpp"
#include "support/oracle.hpp"
#include "support/synthetic_universe.hpp"

using namespace ariel;

namespace {

// Banking fixture around the full/partial SSN pair: the data-type chain puts
// the partial identifier at L3 and the full identifier at L5.
struct BankingFixture {
  OntologySet ontologies;
  std::shared_ptr<TableMapper> mapper;
  Request full_ssn;
  Request partial_ssn;

  BankingFixture() {
    std::vector<Ontology> sets;
    sets.emplace_back(
        Dimension::DataType,
        std::vector<OntologyLevel>{{1, "public information"},
                                   {2, "routine account metadata"},
                                   {3, "partially redacted identifiers"},
                                   {4, "contact information"},
                                   {5, "full government identifiers"},
                                   {6, "health and biometric data"}});
    sets.emplace_back(Dimension::DataRecipient,
                      std::vector<OntologyLevel>{{1, "account-holding bank"},
                                                 {2, "other institutions"},
                                                 {3, "unverified third parties"}});
    sets.emplace_back(Dimension::TransmissionPrinciple,
                      std::vector<OntologyLevel>{{1, "user-initiated service"},
                                                 {2, "marketing with safeguards"},
                                                 {3, "no stated purpose"}});
    sets.emplace_back(Dimension::DataSender,
                      std::vector<OntologyLevel>{{1, "the user's own agent"},
                                                 {2, "third-party agent"}});
    ontologies = OntologySet("demo-user", std::move(sets));

    mapper = std::make_shared<TableMapper>();
    mapper->set(Dimension::DataType, "full SSN", 5);
    mapper->set(Dimension::DataType, "partial SSN", 3);

    full_ssn = Request{"full SSN", "user", "agent", "bank",
                       "open checking account"};
    partial_ssn = full_ssn;
    partial_ssn.data_type = "partial SSN";
  }
};

KnowledgeBase kb_of(std::vector<PriorRequest> priors) {
  KnowledgeBase kb;
  kb.user_id = "demo-user";
  kb.priors = std::move(priors);
  return kb;
}

// Mapper that always fails, for degradation paths.
struct FailingMapper final : LevelMapper {
  Levels map_pair(const Request&, const Request&, const Ontology&,
                  const std::string&, const std::string&) override {
    throw Error("mapper offline");
  }
};

}  // namespace

TEST_CASE("select_neighbors keeps priors within distance one, in order") {
  BankingFixture fx;
  CHECK(select_neighbors(kb_of({}), fx.partial_ssn).empty());

  const PriorRequest full_prior{fx.full_ssn, BinaryJudgment::Appropriate};
  auto neighbors = select_neighbors(kb_of({full_prior}), fx.partial_ssn);
  REQUIRE(neighbors.size() == 1);
  CHECK(neighbors[0].request == fx.full_ssn);

  Request far = fx.full_ssn;
  far.data_recipient = "advertising agency";
  far.data_type = "email content";
  CHECK(select_neighbors(kb_of({PriorRequest{far, BinaryJudgment::Appropriate}}),
                         fx.partial_ssn)
            .empty());
}

TEST_CASE("approval of the more sensitive value covers the less sensitive one") {
  BankingFixture fx;
  const PriorRequest prior{fx.full_ssn, BinaryJudgment::Appropriate};
  const EntailmentTrace trace =
      entail_pair(prior, fx.partial_ssn, *fx.mapper, fx.ontologies);
  CHECK(trace.vote == Vote::Appropriate);
  CHECK(trace.dimension == Dimension::DataType);
  CHECK(trace.prior_level == "L5");
  CHECK(trace.incoming_level == "L3");
}

TEST_CASE("identical prior votes its own judgment without mapping") {
  BankingFixture fx;
  const PriorRequest prior{fx.partial_ssn, BinaryJudgment::Inappropriate};
  FailingMapper broken;  // must not be consulted at distance zero
  const EntailmentTrace trace =
      entail_pair(prior, fx.partial_ssn, broken, fx.ontologies);
  CHECK(trace.vote == Vote::Inappropriate);
  CHECK_FALSE(trace.dimension.has_value());
  CHECK_FALSE(trace.prior_level.has_value());
}

TEST_CASE("denial to a trusted recipient extends to a less trusted one") {
  // parents at L1, friends at L4 on a recipient chain; denied to parents
  // entails denied to friends (1 <= 4), confirmed by the oracle below.
  std::vector<Ontology> sets;
  sets.emplace_back(Dimension::DataRecipient,
                    std::vector<OntologyLevel>{{1, "parents"},
                                               {2, "siblings"},
                                               {3, "close friends"},
                                               {4, "friends"}});
  OntologySet ontologies("edu-user", std::move(sets));
  TableMapper mapper;
  mapper.set(Dimension::DataRecipient, "parents", 1);
  mapper.set(Dimension::DataRecipient, "friends", 4);

  Request to_parents{"grades", "student", "professor", "parents",
                     "if student is performing poorly"};
  Request to_friends = to_parents;
  to_friends.data_recipient = "friends";

  const EntailmentTrace trace =
      entail_pair(PriorRequest{to_parents, BinaryJudgment::Inappropriate},
                  to_friends, mapper, ontologies);
  CHECK(trace.vote == Vote::Inappropriate);
  CHECK(trace.prior_level == "L1");
  CHECK(trace.incoming_level == "L4");
}

TEST_CASE("levels that satisfy neither case yield no vote") {
  BankingFixture fx;
  // approval at the less sensitive L3 says nothing about sharing L5
  const PriorRequest prior{fx.partial_ssn, BinaryJudgment::Appropriate};
  const EntailmentTrace trace =
      entail_pair(prior, fx.full_ssn, *fx.mapper, fx.ontologies);
  CHECK(trace.vote == Vote::None);  // approval at L3 cannot cover L5
}

TEST_CASE("mapper failure degrades to no vote with a note") {
  BankingFixture fx;
  FailingMapper broken;
  const PriorRequest prior{fx.full_ssn, BinaryJudgment::Appropriate};
  const EntailmentTrace trace =
      entail_pair(prior, fx.partial_ssn, broken, fx.ontologies);
  CHECK(trace.vote == Vote::None);
  CHECK(trace.note.find("mapper offline") != std::string::npos);
}

TEST_CASE("a differing data subject cannot vote") {
  BankingFixture fx;
  Request other_subject = fx.partial_ssn;
  other_subject.data_subject = "spouse";
  const PriorRequest prior{fx.partial_ssn, BinaryJudgment::Appropriate};
  const EntailmentTrace trace =
      entail_pair(prior, other_subject, *fx.mapper, fx.ontologies);
  CHECK(trace.vote == Vote::None);
  CHECK_FALSE(trace.dimension.has_value());
}

TEST_CASE("a missing ontology for the differing dimension is a hard error") {
  BankingFixture fx;
  std::vector<Ontology> only_recipient;
  only_recipient.emplace_back(
      Dimension::DataRecipient,
      std::vector<OntologyLevel>{{1, "bank"}, {2, "others"}});
  OntologySet incomplete("demo-user", std::move(only_recipient));
  const PriorRequest prior{fx.full_ssn, BinaryJudgment::Appropriate};
  CHECK_THROWS_AS(
      (void)entail_pair(prior, fx.partial_ssn, *fx.mapper, incomplete),
      MissingOntology);
}

TEST_CASE("entail_pair requires distance at most one") {
  BankingFixture fx;
  Request far = fx.partial_ssn;
  far.data_recipient = "advertising agency";
  CHECK_THROWS_AS((void)entail_pair(PriorRequest{fx.full_ssn,
                                                 BinaryJudgment::Appropriate},
                                    far, *fx.mapper, fx.ontologies),
                  PreconditionError);
}

TEST_CASE("judge: empty knowledge base escalates") {
  BankingFixture fx;
  const JudgmentResult r =
      judge(kb_of({}), fx.partial_ssn, *fx.mapper, fx.ontologies);
  CHECK(r.decision == Decision::Undetermined);
  CHECK(r.appropriate_votes == 0);
  CHECK(r.inappropriate_votes == 0);
  CHECK(r.traces.empty());
}

TEST_CASE("judge: the full-SSN precedent approves the partial-SSN request") {
  BankingFixture fx;
  const JudgmentResult r =
      judge(kb_of({PriorRequest{fx.full_ssn, BinaryJudgment::Appropriate}}),
            fx.partial_ssn, *fx.mapper, fx.ontologies);
  CHECK(r.decision == Decision::Appropriate);
  CHECK(r.appropriate_votes == 1);
  CHECK(r.inappropriate_votes == 0);
  REQUIRE(r.traces.size() == 1);
  CHECK(r.traces[0].prior.request == fx.full_ssn);
}

TEST_CASE("judge: contradictory votes tie into undetermined") {
  BankingFixture fx;
  // two identical priors with opposite labels: one vote each way
  const JudgmentResult r = judge(
      kb_of({PriorRequest{fx.partial_ssn, BinaryJudgment::Appropriate},
             PriorRequest{fx.partial_ssn, BinaryJudgment::Inappropriate}}),
      fx.partial_ssn, *fx.mapper, fx.ontologies);
  CHECK(r.decision == Decision::Undetermined);
  CHECK(r.appropriate_votes == 1);
  CHECK(r.inappropriate_votes == 1);
}

TEST_CASE("escalate-on-conflict turns any opposition into undetermined") {
  BankingFixture fx;
  const auto kb = kb_of(
      {PriorRequest{fx.partial_ssn, BinaryJudgment::Appropriate},
       PriorRequest{fx.partial_ssn, BinaryJudgment::Appropriate},
       PriorRequest{fx.partial_ssn, BinaryJudgment::Inappropriate}});
  const JudgmentResult majority =
      judge(kb, fx.partial_ssn, *fx.mapper, fx.ontologies,
            JudgeOptions{ConflictPolicy::Majority});
  CHECK(majority.decision == Decision::Appropriate);
  const JudgmentResult escalate =
      judge(kb, fx.partial_ssn, *fx.mapper, fx.ontologies,
            JudgeOptions{ConflictPolicy::EscalateOnConflict});
  CHECK(escalate.decision == Decision::Undetermined);
}

TEST_CASE("caching mapper never delegates more than once per value pair") {
  BankingFixture fx;
  struct CountingMapper final : LevelMapper {
    std::shared_ptr<TableMapper> inner;
    int calls = 0;
    Levels map_pair(const Request& p, const Request& i, const Ontology& o,
                    const std::string& a, const std::string& b) override {
      ++calls;
      return inner->map_pair(p, i, o, a, b);
    }
  };
  auto counting = std::make_shared<CountingMapper>();
  counting->inner = fx.mapper;
  CachingMapper cache(counting);

  const auto kb = kb_of({PriorRequest{fx.full_ssn, BinaryJudgment::Appropriate},
                         PriorRequest{fx.full_ssn, BinaryJudgment::Appropriate},
                         PriorRequest{fx.full_ssn, BinaryJudgment::Inappropriate}});
  for (int round = 0; round < 3; ++round) {
    (void)judge(kb, fx.partial_ssn, cache, fx.ontologies);
  }
  // one distinct (dimension, value) pair: {full SSN, partial SSN} on data_type
  CHECK(counting->calls == 1);
  CHECK(cache.delegate_calls() == 1);
  CHECK(cache.cached_values() == 2);
}

TEST_CASE("oracle equivalence on randomized synthetic instances") {
  std::mt19937_64 rng(20240817);
  int undetermined = 0, determined = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const synthetic::Universe u = synthetic::make_universe(rng);
    const KnowledgeBase kb =
        synthetic::random_kb(u, rng, 1 + static_cast<int>(rng() % 40));
    const Request incoming = synthetic::random_request(u, rng);

    const JudgmentResult engine = judge(kb, incoming, *u.mapper, u.ontologies);
    const synthetic::OracleVerdict oracle = synthetic::oracle_judge(u, kb, incoming);

    REQUIRE(engine.decision == oracle.decision);
    REQUIRE(engine.appropriate_votes == oracle.appropriate_votes);
    REQUIRE(engine.inappropriate_votes == oracle.inappropriate_votes);
    (engine.decision == Decision::Undetermined ? undetermined : determined)++;
  }
  // the generator must exercise both outcomes
  CHECK(undetermined > 0);
  CHECK(determined > 0);
}

TEST_CASE("vote counts equal the per-trace tallies") {
  std::mt19937_64 rng(5150);
  for (int trial = 0; trial < 100; ++trial) {
    const synthetic::Universe u = synthetic::make_universe(rng);
    const KnowledgeBase kb = synthetic::random_kb(u, rng, 25);
    const Request incoming = synthetic::random_request(u, rng);
    const JudgmentResult r = judge(kb, incoming, *u.mapper, u.ontologies);

    const long pos = std::count_if(
        r.traces.begin(), r.traces.end(),
        [](const EntailmentTrace& t) { return t.vote == Vote::Appropriate; });
    const long neg = std::count_if(
        r.traces.begin(), r.traces.end(),
        [](const EntailmentTrace& t) { return t.vote == Vote::Inappropriate; });
    CHECK(r.appropriate_votes == pos);
    CHECK(r.inappropriate_votes == neg);
    CHECK(pos + neg <= r.neighbors_considered);
    CHECK(static_cast<int>(r.traces.size()) == r.neighbors_considered);
  }
}

TEST_CASE("permuting the knowledge base changes nothing but trace order") {
  std::mt19937_64 rng(6789);
  for (int trial = 0; trial < 50; ++trial) {
    const synthetic::Universe u = synthetic::make_universe(rng);
    KnowledgeBase kb = synthetic::random_kb(u, rng, 30);
    const Request incoming = synthetic::random_request(u, rng);
    const JudgmentResult before = judge(kb, incoming, *u.mapper, u.ontologies);

    std::shuffle(kb.priors.begin(), kb.priors.end(), rng);
    const JudgmentResult after = judge(kb, incoming, *u.mapper, u.ontologies);

    CHECK(before.decision == after.decision);
    CHECK(before.appropriate_votes == after.appropriate_votes);
    CHECK(before.inappropriate_votes == after.inappropriate_votes);
  }
}

TEST_CASE("priors at distance two or more never affect the decision") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const synthetic::Universe u = synthetic::make_universe(rng);
    KnowledgeBase kb = synthetic::random_kb(u, rng, 20);
    const Request incoming = synthetic::random_request(u, rng);
    const JudgmentResult before = judge(kb, incoming, *u.mapper, u.ontologies);

    // build a far prior: flip at least two parameters to different values
    Request far = incoming;
    int flipped = 0;
    for (size_t d = 0; d < 4 && flipped < 2; ++d) {
      const Field f = field_for_dimension(synthetic::Universe::dims[d]);
      for (const std::string& v : u.values[d]) {
        if (v != incoming.field(f)) {
          far.field(f) = v;
          ++flipped;
          break;
        }
      }
    }
    REQUIRE(hamming_distance(far, incoming) >= 2);
    kb.priors.push_back(PriorRequest{far, (rng() % 2)
                                              ? BinaryJudgment::Appropriate
                                              : BinaryJudgment::Inappropriate});
    const JudgmentResult after = judge(kb, incoming, *u.mapper, u.ontologies);
    CHECK(before.decision == after.decision);
    CHECK(before.appropriate_votes == after.appropriate_votes);
    CHECK(before.inappropriate_votes == after.inappropriate_votes);
  }
}

TEST_CASE("appropriateness is downward closed along the order") {
  // single appropriate prior; incoming B differs on one dimension at a level
  // <= prior; A sits at a level <= B on that same dimension
  std::mt19937_64 rng(31337);
  int exercised = 0;
  for (int trial = 0; trial < 400 && exercised < 100; ++trial) {
    const synthetic::Universe u = synthetic::make_universe(rng);
    const size_t d = rng() % 4;
    const Dimension dim = synthetic::Universe::dims[d];
    const Field f = field_for_dimension(dim);
    const auto& vals = u.values[d];
    if (vals.size() < 3) continue;

    Request prior_request = synthetic::random_request(u, rng);
    prior_request.field(f) = vals[vals.size() - 1];  // highest level
    Request b = prior_request;
    b.field(f) = vals[1];
    Request a = prior_request;
    a.field(f) = vals[0];

    const KnowledgeBase kb =
        kb_of({PriorRequest{prior_request, BinaryJudgment::Appropriate}});
    const JudgmentResult rb = judge(kb, b, *u.mapper, u.ontologies);
    REQUIRE(rb.decision == Decision::Appropriate);
    const JudgmentResult ra = judge(kb, a, *u.mapper, u.ontologies);
    CHECK(ra.decision == Decision::Appropriate);
    ++exercised;
  }
  CHECK(exercised == 100);
}

TEST_CASE("parallel batch equals the serial reference") {
  std::mt19937_64 rng(2718);
  const synthetic::Universe u = synthetic::make_universe(rng);
  std::vector<KnowledgeBase> kbs;
  for (int i = 0; i < 20; ++i) kbs.push_back(synthetic::random_kb(u, rng, 40));
  std::vector<JudgeJob> jobs;
  for (int i = 0; i < 400; ++i) {
    jobs.push_back(JudgeJob{&kbs[static_cast<size_t>(i) % kbs.size()],
                            &u.ontologies, synthetic::random_request(u, rng)});
  }
  const auto serial = judge_batch_serial(jobs, *u.mapper);
  const auto parallel = judge_batch(jobs, *u.mapper);
  const auto parallel2 = judge_batch(jobs, *u.mapper, {}, 2);
  REQUIRE(serial.size() == parallel.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].decision == parallel[i].decision);
    CHECK(serial[i].appropriate_votes == parallel[i].appropriate_votes);
    CHECK(serial[i].inappropriate_votes == parallel[i].inappropriate_votes);
    CHECK(parallel2[i].decision == serial[i].decision);
  }
}

TEST_CASE("judgment serializes to a structured audit record") {
  BankingFixture fx;
  const JudgmentResult r =
      judge(kb_of({PriorRequest{fx.full_ssn, BinaryJudgment::Appropriate}}),
            fx.partial_ssn, *fx.mapper, fx.ontologies);
  const std::string json = judgment_to_json(r);
  CHECK(json.find("\"decision\":\"appropriate\"") != std::string::npos);
  CHECK(json.find("\"appropriate_votes\":1") != std::string::npos);
  CHECK(json.find("full SSN") != std::string::npos);
}
