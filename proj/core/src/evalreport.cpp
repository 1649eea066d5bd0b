#include "saferoad/evalreport.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "saferoad/error.hpp"
#include "saferoad/util.hpp"

namespace saferoad::evalreport {

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json to_json(const RedesignSession& s) {
  return {{"session_id", s.session_id},
          {"revision", s.revision},
          {"image_id", s.image_id},
          {"cam", s.cam},
          {"mask_id", s.mask_id},
          {"inpaint_request", s.inpaint_request},
          {"job_id", s.job_id},
          {"candidate_id", s.candidate_id},
          {"original_path", s.original_path},
          {"candidate_path", s.candidate_path},
          {"p_before", opt(s.p_before)},
          {"p_after", opt(s.p_after)},
          {"notes", s.notes},
          {"operator_seconds", s.operator_seconds}};
}

RedesignSession session_from_json(const nlohmann::json& j) {
  RedesignSession s;
  s.session_id = j.at("session_id").get<std::string>();
  s.revision = j.value("revision", 0);
  s.image_id = j.value("image_id", std::string{});
  s.cam = j.value("cam", nlohmann::json::object());
  s.mask_id = j.value("mask_id", std::string{});
  s.inpaint_request = j.value("inpaint_request", nlohmann::json::object());
  s.job_id = j.value("job_id", std::string{});
  s.candidate_id = j.value("candidate_id", std::string{});
  s.original_path = j.value("original_path", std::string{});
  s.candidate_path = j.value("candidate_path", std::string{});
  s.p_before = opt_from(j, "p_before");
  s.p_after = opt_from(j, "p_after");
  s.notes = j.value("notes", std::string{});
  s.operator_seconds = j.value("operator_seconds", 0.0);
  return s;
}

std::pair<double, double> score_session(const classifier::ClassifierModel& model, RedesignSession& session,
                                        const std::filesystem::path& root) {
  const Image original = read_image(root / session.original_path);
  Image candidate;
  if (session.candidate_id == kOriginalCandidate) {
    candidate = original;
  } else {
    try {
      if (session.candidate_path.empty()) throw Error(ErrorCode::IoError, "no candidate path");
      candidate = read_image(root / session.candidate_path);
    } catch (const Error& e) {
      throw Error(ErrorCode::MissingCandidate,
                  "candidate '" + session.candidate_id + "' unreadable: " + std::string(e.what()));
    }
  }
  session.p_before = classifier::predict_proba(model, original);
  session.p_after = classifier::predict_proba(model, candidate);
  return {*session.p_before, *session.p_after};
}

EvalReport aggregate(std::span<const RedesignSession> sessions, const nlohmann::json& model_identity) {
  EvalReport r;
  r.model = model_identity.is_null() ? nlohmann::json::object() : model_identity;
  for (const auto& s : sessions) {
    if (s.scored()) r.sessions.push_back(s);
  }
  if (r.sessions.empty()) throw Error(ErrorCode::NoScoredSessions, "no scored sessions");
  std::sort(r.sessions.begin(), r.sessions.end(), [](const RedesignSession& a, const RedesignSession& b) {
    return std::tie(a.session_id, a.revision) < std::tie(b.session_id, b.revision);
  });

  double sum_before = 0.0, sum_after = 0.0, sum_rel = 0.0;
  std::size_t n_rel = 0;
  for (const auto& s : r.sessions) {
    sum_before += *s.p_before;
    sum_after += *s.p_after;
    if (*s.p_before > 0.0) {
      sum_rel += 100.0 * (*s.p_before - *s.p_after) / *s.p_before;
      ++n_rel;
    } else {
      ++r.zero_before_excluded;
    }
  }
  const double n = static_cast<double>(r.sessions.size());
  r.mean_p_before = sum_before / n;
  r.mean_p_after = sum_after / n;
  if (n_rel > 0) r.mean_relative_drop_percent = sum_rel / static_cast<double>(n_rel);
  if (r.mean_p_before > 0.0) {
    r.drop_of_means_percent = 100.0 * (r.mean_p_before - r.mean_p_after) / r.mean_p_before;
  }
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& s : r.sessions) sessions.push_back(to_json(s));
  return {{"model", r.model},
          {"session_count", r.sessions.size()},
          {"mean_p_before", r.mean_p_before},
          {"mean_p_after", r.mean_p_after},
          {"mean_relative_drop_percent", opt(r.mean_relative_drop_percent)},
          {"zero_before_excluded", r.zero_before_excluded},
          {"drop_of_means_percent", opt(r.drop_of_means_percent)},
          {"sessions", sessions}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.model = j.value("model", nlohmann::json::object());
  for (const auto& s : j.at("sessions")) r.sessions.push_back(session_from_json(s));
  r.mean_p_before = j.at("mean_p_before").get<double>();
  r.mean_p_after = j.at("mean_p_after").get<double>();
  r.mean_relative_drop_percent = opt_from(j, "mean_relative_drop_percent");
  r.zero_before_excluded = j.value("zero_before_excluded", std::size_t{0});
  r.drop_of_means_percent = opt_from(j, "drop_of_means_percent");
  return r;
}

std::string report_csv(const EvalReport& r) {
  auto num = [](const std::optional<double>& v) { return v ? format_fixed(*v, 6) : std::string{}; };
  const std::string model = r.model.is_object() ? r.model.value("name", std::string{}) : std::string{};
  std::string out =
      "row,model,session_id,p_before,p_after,percentage_change,drop_of_means_percent\n";
  out += "summary," + model + ",," + format_fixed(r.mean_p_before, 6) + "," + format_fixed(r.mean_p_after, 6) +
         "," + num(r.mean_relative_drop_percent) + "," + num(r.drop_of_means_percent) + "\n";
  for (const auto& s : r.sessions) {
    std::optional<double> change;
    if (*s.p_before > 0.0) change = 100.0 * (*s.p_before - *s.p_after) / *s.p_before;
    out += "session," + model + "," + s.session_id + "," + format_fixed(*s.p_before, 6) + "," +
           format_fixed(*s.p_after, 6) + "," + num(change) + ",\n";
  }
  return out;
}

// ---- store -----------------------------------------------------------------

std::vector<RedesignSession> SessionStore::read_all() const {
  std::vector<RedesignSession> out;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(session_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IoError, "corrupt session store " + path_.string() + ": " + e.what());
    }
  }
  return out;
}

int SessionStore::append(RedesignSession session) {
  std::lock_guard lock(mu_);
  int rev = 0;
  for (const auto& s : read_all()) {
    if (s.session_id == session.session_id) rev = std::max(rev, s.revision);
  }
  session.revision = rev + 1;
  append_line(path_, to_json(session).dump());
  return session.revision;
}

std::vector<RedesignSession> SessionStore::latest() const {
  std::lock_guard lock(mu_);
  std::map<std::string, RedesignSession> by_id;
  for (auto& s : read_all()) {
    auto it = by_id.find(s.session_id);
    if (it == by_id.end() || it->second.revision < s.revision) by_id[s.session_id] = std::move(s);
  }
  std::vector<RedesignSession> out;
  for (auto& [id, s] : by_id) out.push_back(std::move(s));
  return out;
}

std::optional<RedesignSession> SessionStore::find(const std::string& session_id) const {
  auto h = history(session_id);
  if (h.empty()) return std::nullopt;
  return h.back();
}

std::vector<RedesignSession> SessionStore::history(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  std::vector<RedesignSession> out;
  for (auto& s : read_all()) {
    if (s.session_id == session_id) out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.revision < b.revision; });
  return out;
}

}  // namespace saferoad::evalreport
