#pragma once
// Synthetic survey exports shaped like the two public corpora: delimited
// text with per-corpus column names, Likert-coded answers, and fixed
// subjects. Eligibility counts are constructed exactly, so split totals are
// predictable.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ariel/core.hpp"
#include "ariel/datasets.hpp"

namespace synthetic {

namespace fs = std::filesystem;

struct CorpusFiles {
  std::string csv_path;
  std::string mapping_path;
};

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out.push_back(c);
  }
  out += "\"";
  return out;
}

// Distinct (combination index) draws without replacement.
inline std::vector<size_t> distinct_draws(std::mt19937_64& rng, size_t space,
                                          size_t n) {
  std::vector<size_t> all(space);
  for (size_t i = 0; i < space; ++i) all[i] = i;
  for (size_t i = 0; i < n; ++i) {
    const size_t j = i + rng() % (space - i);
    std::swap(all[i], all[j]);
  }
  all.resize(n);
  return all;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace detail

// Voice-assistant-flavored corpus: three varying fields, subject and sender
// fixed by the mapping's constants. Each user gets `convertible` rows with
// scores in {1,2,4,5} plus `neutral` rows scored 3.
inline CorpusFiles write_spa_corpus(const std::string& dir, int users,
                                    int convertible, int neutral,
                                    std::uint64_t seed,
                                    int appropriate_percent = 35) {
  static const std::vector<std::string> data_types = {
      "sleeping hours",  "contacts",       "voice command history",
      "email content",   "bank account details", "shopping lists",
      "music playlists", "calendar events", "smart lock codes",
      "thermostat settings", "video calls", "streaming history"};
  static const std::vector<std::string> recipients = {
      "parents",       "partner",        "siblings",
      "children",      "housemates",     "close friends",
      "neighbours",    "visitors in general", "advertising agencies",
      "third party skills/actions"};
  static const std::vector<std::string> principles = {
      "",  // no purpose/condition
      "to personalize recommendations, in an anonymized form",
      "to complete a purchase, with explicit user consent",
      "for troubleshooting, retained for 30 days",
      "to share availability",
      "for targeted advertising"};

  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::string csv = "respondent_id,data,receiver,principle,acceptability\n";
  const size_t space = data_types.size() * recipients.size() * principles.size();

  for (int u = 0; u < users; ++u) {
    const std::string user_id = "spa-u" + std::to_string(1000 + u);
    const auto combos = detail::distinct_draws(
        rng, space, static_cast<size_t>(convertible + neutral));
    for (size_t i = 0; i < combos.size(); ++i) {
      const size_t c = combos[i];
      const std::string& dt = data_types[c % data_types.size()];
      const std::string& rc = recipients[(c / data_types.size()) % recipients.size()];
      const std::string& tp =
          principles[c / (data_types.size() * recipients.size())];
      int score;
      if (i < static_cast<size_t>(convertible)) {
        const bool appropriate =
            static_cast<int>(rng() % 100) < appropriate_percent;
        score = appropriate ? (rng() % 2 ? 4 : 5) : (rng() % 2 ? 1 : 2);
      } else {
        score = 3;
      }
      csv += user_id + "," + detail::csv_quote(dt) + "," + detail::csv_quote(rc) +
             "," + detail::csv_quote(tp) + "," + std::to_string(score) + "\n";
    }
  }

  const std::string mapping = R"({
  "delimiter": ",",
  "columns": {
    "user_id": "respondent_id",
    "data_type": "data",
    "data_recipient": "receiver",
    "transmission_principle": "principle",
    "score": "acceptability"
  },
  "constants": {
    "data_subject": "user",
    "data_sender": "assistant provider"
  }
})";

  CorpusFiles files{(fs::path(dir) / "spa_survey.csv").string(),
                    (fs::path(dir) / "spa_mapping.json").string()};
  detail::write_file(files.csv_path, csv);
  detail::write_file(files.mapping_path, mapping);
  return files;
}

// Education-flavored corpus: four varying fields, subject fixed to the
// student. `eligible` users get 75 yes/no rows; `ineligible` users get fewer
// convertible rows than the threshold.
inline CorpusFiles write_education_corpus(const std::string& dir, int eligible,
                                          int ineligible, std::uint64_t seed,
                                          int appropriate_percent = 46) {
  static const std::vector<std::string> senders = {
      "professor", "TA", "registrar", "advisor", "librarian", "department chair"};
  static const std::vector<std::string> data_types = {
      "grades", "transcript", "attendance", "term papers",
      "participation", "photo", "disciplinary record", "contact details"};
  static const std::vector<std::string> recipients = {
      "parents",        "classmates", "graduate schools", "department chair",
      "future employers", "registrar", "librarian",        "advisor"};
  static const std::vector<std::string> principles = {
      "with subject's consent", "if student is performing poorly",
      "with the requirement of confidentiality", "with a request from the subject",
      "as required by an audit"};

  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::string csv = "respondent,sender,attribute,receiver,condition,answer\n";
  const size_t space =
      senders.size() * data_types.size() * recipients.size() * principles.size();

  const int total_users = eligible + ineligible;
  for (int u = 0; u < total_users; ++u) {
    const std::string user_id = "edu-u" + std::to_string(2000 + u);
    const int convertible = u < eligible ? 75 : 40;
    const int nonsense = 13;
    const auto combos = detail::distinct_draws(
        rng, space, static_cast<size_t>(convertible + nonsense));
    for (size_t i = 0; i < combos.size(); ++i) {
      size_t c = combos[i];
      const std::string& sd = senders[c % senders.size()];
      c /= senders.size();
      const std::string& dt = data_types[c % data_types.size()];
      c /= data_types.size();
      const std::string& rc = recipients[c % recipients.size()];
      c /= recipients.size();
      const std::string& tp = principles[c % principles.size()];
      int score;
      if (i < static_cast<size_t>(convertible)) {
        score = static_cast<int>(rng() % 100) < appropriate_percent ? 1 : 2;
      } else {
        score = 3 + static_cast<int>(rng() % 3);
      }
      csv += user_id + "," + detail::csv_quote(sd) + "," + detail::csv_quote(dt) +
             "," + detail::csv_quote(rc) + "," + detail::csv_quote(tp) + "," +
             std::to_string(score) + "\n";
    }
  }

  const std::string mapping = R"({
  "delimiter": ",",
  "columns": {
    "user_id": "respondent",
    "data_type": "attribute",
    "data_sender": "sender",
    "data_recipient": "receiver",
    "transmission_principle": "condition",
    "score": "answer"
  },
  "constants": {
    "data_subject": "student"
  }
})";

  CorpusFiles files{(fs::path(dir) / "education_survey.csv").string(),
                    (fs::path(dir) / "education_mapping.json").string()};
  detail::write_file(files.csv_path, csv);
  detail::write_file(files.mapping_path, mapping);
  return files;
}

}  // namespace synthetic
