#include "saferoad/jobs.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "saferoad/error.hpp"
#include "saferoad/events.hpp"
#include "saferoad/util.hpp"

namespace saferoad::jobs {

namespace {

std::string now_iso() {
  return events::format_timestamp(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  const auto v = rng();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string("job-") + buf;
}

}  // namespace

std::string kind_name(JobKind k) {
  switch (k) {
    case JobKind::Train: return "train";
    case JobKind::Cam: return "cam";
    case JobKind::Inpaint: return "inpaint";
    case JobKind::Saliency: return "saliency";
    case JobKind::Report: return "report";
  }
  return "inpaint";
}

JobKind kind_from_name(const std::string& name) {
  for (JobKind k : {JobKind::Train, JobKind::Cam, JobKind::Inpaint, JobKind::Saliency, JobKind::Report}) {
    if (kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown job kind: " + name);
}

std::string state_name(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "queued";
}

JobState state_from_name(const std::string& name) {
  for (JobState s : {JobState::Queued, JobState::Running, JobState::Done, JobState::Failed}) {
    if (state_name(s) == name) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown job state: " + name);
}

bool legal_transition(JobState from, JobState to) noexcept {
  return (from == JobState::Queued && to == JobState::Running) ||
         (from == JobState::Running && (to == JobState::Done || to == JobState::Failed));
}

void Job::transition(JobState to) {
  if (!legal_transition(state, to)) {
    throw Error(ErrorCode::IllegalTransition,
                "job " + job_id + " cannot go from " + state_name(state) + " to " + state_name(to));
  }
  state = to;
  if (to == JobState::Running) started_at = now_iso();
  else finished_at = now_iso();
}

nlohmann::json to_json(const Job& j) {
  nlohmann::json out = {{"job_id", j.job_id},         {"kind", kind_name(j.kind)},
                        {"state", state_name(j.state)}, {"payload", j.payload},
                        {"result", j.result},           {"created_at", j.created_at},
                        {"started_at", j.started_at},   {"finished_at", j.finished_at}};
  if (j.state == JobState::Failed) out["error"] = {{"code", j.error_code}, {"message", j.error_message}};
  return out;
}

Job job_from_json(const nlohmann::json& j) {
  Job job;
  job.job_id = j.at("job_id").get<std::string>();
  job.kind = kind_from_name(j.at("kind").get<std::string>());
  job.state = state_from_name(j.at("state").get<std::string>());
  job.payload = j.value("payload", nlohmann::json::object());
  job.result = j.value("result", nlohmann::json::object());
  job.created_at = j.value("created_at", std::string{});
  job.started_at = j.value("started_at", std::string{});
  job.finished_at = j.value("finished_at", std::string{});
  if (j.contains("error")) {
    job.error_code = j["error"].value("code", std::string{});
    job.error_message = j["error"].value("message", std::string{});
  }
  return job;
}

JobQueue::JobQueue(std::filesystem::path dir, std::map<JobKind, Handler> handlers)
    : dir_(std::move(dir)), handlers_(std::move(handlers)) {
  std::filesystem::create_directories(dir_);
  std::vector<Job> loaded;
  for (const auto& f : std::filesystem::directory_iterator(dir_)) {
    if (f.path().extension() != ".json") continue;
    const auto bytes = read_file(f.path());
    loaded.push_back(job_from_json(nlohmann::json::parse(bytes.begin(), bytes.end())));
  }
  std::sort(loaded.begin(), loaded.end(), [](const Job& a, const Job& b) {
    return std::tie(a.created_at, a.job_id) < std::tie(b.created_at, b.job_id);
  });
  for (auto& job : loaded) {
    if (job.state == JobState::Running) {
      job.transition(JobState::Failed);
      job.error_code = std::string(code_name(ErrorCode::BackendUnavailable));
      job.error_message = "interrupted by a restart";
      persist(job);
    }
    if (job.state == JobState::Queued) pending_.push_back(job.job_id);
    jobs_[job.job_id] = std::move(job);
  }
  worker_ = std::thread([this] { run(); });
}

JobQueue::~JobQueue() { stop(); }

void JobQueue::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void JobQueue::persist(const Job& job) const {
  write_file_atomic(dir_ / (job.job_id + ".json"), to_json(job).dump(2));
}

std::string JobQueue::submit(JobKind kind, nlohmann::json payload) {
  if (!handlers_.count(kind)) throw Error(ErrorCode::BackendUnavailable, "no worker for " + kind_name(kind) + " jobs");
  Job job;
  job.job_id = new_id();
  job.kind = kind;
  job.payload = std::move(payload);
  job.created_at = now_iso();
  {
    std::lock_guard lock(mu_);
    persist(job);
    pending_.push_back(job.job_id);
    jobs_[job.job_id] = job;
  }
  cv_.notify_all();
  return job.job_id;
}

std::optional<Job> JobQueue::get(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::optional<Job> JobQueue::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] {
    const auto it = jobs_.find(job_id);
    return it == jobs_.end() || it->second.state == JobState::Done || it->second.state == JobState::Failed;
  });
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void JobQueue::run() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
      if (stopping_) return;
      const auto id = pending_.front();
      pending_.pop_front();
      auto& stored = jobs_.at(id);
      stored.transition(JobState::Running);
      persist(stored);
      job = stored;
    }
    cv_.notify_all();

    nlohmann::json result;
    std::string code, message;
    bool ok = true;
    try {
      const auto h = handlers_.find(job.kind);
      if (h == handlers_.end()) throw Error(ErrorCode::BackendUnavailable, "no worker for " + kind_name(job.kind) + " jobs");
      result = h->second(job);
    } catch (const Error& e) {
      ok = false;
      code = std::string(code_name(e.code()));
      message = e.what();
    } catch (const std::exception& e) {
      ok = false;
      code = "INTERNAL";
      message = e.what();
    }
    {
      std::lock_guard lock(mu_);
      auto& stored = jobs_.at(job.job_id);
      stored.transition(ok ? JobState::Done : JobState::Failed);
      if (ok) stored.result = std::move(result);
      stored.error_code = code;
      stored.error_message = message;
      persist(stored);
    }
    cv_.notify_all();
  }
}

}  // namespace saferoad::jobs
