// Benchmark: serial reference vs OpenMP batch judgment on a synthetic
// universe. Verifies both paths produce identical results before timing.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ariel/entailment.hpp"
#include "support/synthetic_universe.hpp"

using namespace ariel;
using Clock = std::chrono::steady_clock;

namespace {

double run_ms(const std::vector<JudgeJob>& jobs, LevelMapper& mapper,
              bool parallel, std::vector<JudgmentResult>& out) {
  const auto start = Clock::now();
  out = parallel ? judge_batch(jobs, mapper) : judge_batch_serial(jobs, mapper);
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool same_results(const std::vector<JudgmentResult>& a,
                  const std::vector<JudgmentResult>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].decision != b[i].decision ||
        a[i].appropriate_votes != b[i].appropriate_votes ||
        a[i].inappropriate_votes != b[i].inappropriate_votes ||
        a[i].neighbors_considered != b[i].neighbors_considered) {
      return false;
    }
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  int users = argc > 1 ? std::atoi(argv[1]) : 200;
  int priors = argc > 2 ? std::atoi(argv[2]) : 60;
  int incoming = argc > 3 ? std::atoi(argv[3]) : 10;
  const std::uint64_t seed = argc > 4 ? std::strtoull(argv[4], nullptr, 10) : 7;

  std::mt19937_64 rng(seed);
  const synthetic::Universe universe = synthetic::make_universe(rng);

  std::vector<KnowledgeBase> kbs;
  kbs.reserve(static_cast<size_t>(users));
  std::vector<Request> requests;
  for (int u = 0; u < users; ++u) {
    kbs.push_back(synthetic::random_kb(universe, rng, priors));
    for (int i = 0; i < incoming; ++i) {
      requests.push_back(synthetic::random_request(universe, rng));
    }
  }
  std::vector<JudgeJob> jobs;
  jobs.reserve(requests.size());
  for (int u = 0; u < users; ++u) {
    for (int i = 0; i < incoming; ++i) {
      jobs.push_back(JudgeJob{&kbs[static_cast<size_t>(u)], &universe.ontologies,
                              requests[static_cast<size_t>(u * incoming + i)]});
    }
  }

#ifdef _OPENMP
  const int max_threads = omp_get_max_threads();
#else
  const int max_threads = 1;
#endif
  std::printf("judging %zu requests against %d-prior knowledge bases "
              "(%d thread(s) available)\n",
              jobs.size(), priors, max_threads);

  std::vector<JudgmentResult> serial_results, parallel_results;
  // warm the mapper cache so both timings see identical cache states
  { std::vector<JudgmentResult> warm; run_ms(jobs, *universe.mapper, false, warm); }

  const double serial_ms = run_ms(jobs, *universe.mapper, false, serial_results);
  const double parallel_ms = run_ms(jobs, *universe.mapper, true, parallel_results);

  if (!same_results(serial_results, parallel_results)) {
    std::printf("FAIL: parallel results diverge from the serial reference\n");
    return 1;
  }

  long undetermined = 0;
  for (const JudgmentResult& r : serial_results) {
    if (r.decision == Decision::Undetermined) ++undetermined;
  }

  std::printf("serial:   %8.2f ms\n", serial_ms);
  std::printf("parallel: %8.2f ms  (speedup %.2fx)\n", parallel_ms,
              serial_ms / parallel_ms);
  std::printf("results identical; %ld of %zu undetermined\n", undetermined,
              jobs.size());
  return 0;
}
