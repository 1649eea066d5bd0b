#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

namespace saferoad::jobs {

enum class JobKind { Train, Cam, Inpaint, Saliency, Report };
enum class JobState { Queued, Running, Done, Failed };

std::string kind_name(JobKind k);
JobKind kind_from_name(const std::string& name);
std::string state_name(JobState s);
JobState state_from_name(const std::string& name);

// queued -> running -> done | failed.
bool legal_transition(JobState from, JobState to) noexcept;

struct Job {
  std::string job_id;
  JobKind kind = JobKind::Inpaint;
  JobState state = JobState::Queued;
  nlohmann::json payload = nlohmann::json::object();
  nlohmann::json result = nlohmann::json::object();
  std::string error_code;
  std::string error_message;
  std::string created_at;
  std::string started_at;
  std::string finished_at;

  // Throws IllegalTransition.
  void transition(JobState to);
};

nlohmann::json to_json(const Job& j);
Job job_from_json(const nlohmann::json& j);

// Returns the job result; exceptions mark the job failed.
using Handler = std::function<nlohmann::json(const Job&)>;

// Single-consumer FIFO queue. Every transition is persisted to
// `<dir>/<job_id>.json`; on construction, persisted jobs are reloaded, queued
// ones are re-enqueued and interrupted running ones are marked failed.
class JobQueue {
 public:
  JobQueue(std::filesystem::path dir, std::map<JobKind, Handler> handlers);
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  // Safe from any thread.
  std::string submit(JobKind kind, nlohmann::json payload);
  std::optional<Job> get(const std::string& job_id) const;
  // Blocks until the job is done or failed, or the timeout passes.
  std::optional<Job> wait(const std::string& job_id, std::chrono::milliseconds timeout) const;

  void stop();

 private:
  void run();
  void persist(const Job& job) const;

  std::filesystem::path dir_;
  std::map<JobKind, Handler> handlers_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> pending_;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace saferoad::jobs
