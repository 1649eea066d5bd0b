#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "saferoad/classifier.hpp"

namespace saferoad::evalreport {

// Candidate id meaning "keep the original image".
inline constexpr const char* kOriginalCandidate = "original";

struct RedesignSession {
  std::string session_id;
  int revision = 0;
  std::string image_id;
  nlohmann::json cam = nlohmann::json::object();
  std::string mask_id;
  nlohmann::json inpaint_request = nlohmann::json::object();
  std::string job_id;
  std::string candidate_id;
  // Paths relative to the workspace root.
  std::string original_path;
  std::string candidate_path;
  std::optional<double> p_before;
  std::optional<double> p_after;
  std::string notes;
  double operator_seconds = 0.0;

  bool scored() const noexcept { return p_before.has_value() && p_after.has_value(); }
};

nlohmann::json to_json(const RedesignSession& s);
RedesignSession session_from_json(const nlohmann::json& j);

// Fills p_before and p_after from the original and the chosen candidate
// (the original itself when candidate_id is "original"). Throws
// MissingCandidate.
std::pair<double, double> score_session(const classifier::ClassifierModel& model, RedesignSession& session,
                                        const std::filesystem::path& root);

struct EvalReport {
  nlohmann::json model = nlohmann::json::object();
  std::vector<RedesignSession> sessions;  // scored sessions, by id
  double mean_p_before = 0.0;
  double mean_p_after = 0.0;
  // Mean over sessions of 100 (p_before - p_after) / p_before; sessions with
  // p_before = 0 are excluded and counted.
  std::optional<double> mean_relative_drop_percent;
  std::size_t zero_before_excluded = 0;
  // 100 (mean p_before - mean p_after) / mean p_before.
  std::optional<double> drop_of_means_percent;
};

// Unscored sessions are ignored; results do not depend on input order.
// Throws NoScoredSessions.
EvalReport aggregate(std::span<const RedesignSession> sessions, const nlohmann::json& model_identity = {});

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
// One summary row plus one row per session.
std::string report_csv(const EvalReport& r);

// Append-only JSON Lines store. Saving a session again appends a new
// revision; readers see the latest revision of each session.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path path) : path_(std::move(path)) {}

  // Assigns and returns the revision number.
  int append(RedesignSession session);
  std::vector<RedesignSession> latest() const;
  std::optional<RedesignSession> find(const std::string& session_id) const;
  std::vector<RedesignSession> history(const std::string& session_id) const;

 private:
  std::vector<RedesignSession> read_all() const;

  std::filesystem::path path_;
  mutable std::mutex mu_;
};

}  // namespace saferoad::evalreport
