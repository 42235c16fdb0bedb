#pragma once

// Parameter-sweep resource broker: enumerates one job per point of the
// parameter cross product, wraps each into an abstract job (stage-in ->
// script portfolio -> execute -> result portfolio -> save chain), schedules
// across compute servers, monitors remote status, and collects renamed
// outputs. The broker sees servers only through the ComputeServer
// abstraction; it never talks middleware specifics itself.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "minigrid/ajo.hpp"
#include "minigrid/ajo_codec.hpp"
#include "minigrid/client.hpp"
#include "minigrid/engine.hpp"
#include "minigrid/errors.hpp"
#include "minigrid/outcome.hpp"
#include "minigrid/plan.hpp"

namespace minigrid {

enum class SchedulePolicy { ROUND_ROBIN, LEAST_LOADED };

enum class BrokerJobState { UNSUBMITTED, SUBMITTED, ACTIVE, DONE, FAILED_SUBMIT };

inline std::string to_string(BrokerJobState s) {
  switch (s) {
    case BrokerJobState::UNSUBMITTED: return "UNSUBMITTED";
    case BrokerJobState::SUBMITTED: return "SUBMITTED";
    case BrokerJobState::ACTIVE: return "ACTIVE";
    case BrokerJobState::DONE: return "DONE";
    case BrokerJobState::FAILED_SUBMIT: return "FAILED_SUBMIT";
  }
  return "?";
}

struct BrokerJob {
  std::size_t index = 0;
  std::map<std::string, std::string> bindings;
  BrokerJobState state = BrokerJobState::UNSUBMITTED;
  CompletionCode final_code = CompletionCode::NOT_SUCCESSFUL;
  std::string server_id;
  std::string remote_job_id;
  int attempts = 0;
  int poll_failures = 0;
  std::vector<std::string> collected; // local paths written by collect_output
};

// One job per element of the cartesian product, in lexicographic order of
// value indices. No parameters means exactly one job with empty bindings.
inline std::vector<BrokerJob> enumerate_jobs(const PlanDocument& plan) {
  std::vector<BrokerJob> jobs;
  std::size_t total = 1;
  for (const auto& p : plan.parameters) total *= p.values.size();
  for (std::size_t i = 0; i < total; ++i) {
    BrokerJob job;
    job.index = i;
    std::size_t rest = i;
    for (auto it = plan.parameters.rbegin(); it != plan.parameters.rend(); ++it) {
      job.bindings[it->name] = it->values[rest % it->values.size()];
      rest /= it->values.size();
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

// ---------------------------------------------------------------------------
// Wrapping a sweep point into an abstract job

struct WrapContext {
  std::string local_dir = ".";        // where plan-relative files are read
  ScriptType script_type = ScriptType::SH;
  ResourceRequest resources;          // applied to the execute task
};

namespace broker_detail {

inline std::string read_local(const std::string& dir, const std::string& rel) {
  namespace fs = std::filesystem;
  fs::path p = fs::path(dir) / rel;
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingLocalFile(p.string());
  std::string bytes(std::istreambuf_iterator<char>(in), {});
  if (bytes.size() > kInlineFileCap) throw FileTooLarge(p.string());
  return bytes;
}

} // namespace broker_detail

inline constexpr const char* kExitMarkerFile = "job.exit";

// Builds the staging-chain job for one sweep point: a single stage-in action
// carries the rendered script plus every substituted/copied input, the
// execute task runs the script, and the result portfolio is copied into the
// outcome. The script records its own exit code into a marker file so the
// result portfolio is never empty.
inline AbstractJob wrap(const BrokerJob& job, const PlanDocument& plan,
                        const WrapContext& ctx = {}) {
  std::map<std::string, std::string> staged; // uspace name -> bytes
  std::vector<std::string> results{kExitMarkerFile};
  std::string script;
  for (const auto& cmd : plan.commands) {
    if (const auto* sub = std::get_if<SubstituteCommand>(&cmd)) {
      staged[sub->dest] =
          substitute(broker_detail::read_local(ctx.local_dir, sub->src), job.bindings);
    } else if (const auto* cp = std::get_if<CopyCommand>(&cmd)) {
      if (cp->direction == CopyDirection::TO_NODE)
        staged[cp->dest] = broker_detail::read_local(ctx.local_dir, cp->src);
      else
        results.push_back(substitute(cp->src, job.bindings));
    } else {
      script += substitute(std::get<ExecuteCommand>(cmd).command_line, job.bindings);
      script += "\n";
    }
  }
  script += "rc=$?\necho $rc > " + std::string(kExitMarkerFile) + "\nexit $rc\n";

  AbstractJob ajo = new_job("sweep-" + std::to_string(job.index), "", "");
  IncarnateFiles inf;
  inf.name = "stage-in";
  inf.files["script"] = script;
  for (auto& [name, bytes] : staged) {
    if (bytes.size() > kInlineFileCap) throw FileTooLarge(name);
    inf.files[name] = std::move(bytes);
  }
  ActionId inf_id = add_action(ajo.group, std::move(inf));

  MakePortfolio mp;
  mp.name = "script-portfolio";
  mp.file_names.push_back("script");
  for (const auto& [name, bytes] : std::get<IncarnateFiles>(
           *find_action(ajo.group, inf_id)).files)
    if (name != "script") mp.file_names.push_back(name);
  ActionId mp_id = add_action(ajo.group, std::move(mp));

  ExecuteScriptTask est;
  est.name = "execute";
  est.script_portfolio = mp_id;
  est.script_type = ctx.script_type;
  est.resources = ctx.resources;
  ActionId est_id = add_action(ajo.group, std::move(est));

  MakePortfolio mp2;
  mp2.name = "result-portfolio";
  mp2.file_names = results;
  ActionId mp2_id = add_action(ajo.group, std::move(mp2));

  CopyPortfolioToOutcome cpto;
  cpto.name = "save-results";
  cpto.target = mp2_id;
  ActionId cpto_id = add_action(ajo.group, std::move(cpto));

  add_dependency(ajo.group, inf_id, mp_id);
  add_dependency(ajo.group, mp_id, est_id);
  add_dependency(ajo.group, est_id, mp2_id);
  add_dependency(ajo.group, mp2_id, cpto_id);
  return ajo;
}

// ---------------------------------------------------------------------------
// Compute servers

class ComputeServer {
public:
  virtual ~ComputeServer() = default;
  virtual std::string id() const = 0;
  // returns the remote job id; throws on connection failure
  virtual std::string consign_async(AbstractJob job) = 0;
  virtual msg::StatusReply poll(const std::string& remote_job_id) = 0;
  virtual Outcome outcome(const std::string& remote_job_id) = 0;
  virtual void probe() = 0; // throws if the server is unreachable
};

class GatewayComputeServer : public ComputeServer {
public:
  GatewayComputeServer(std::string gateway_addr, std::string vsite, std::string token)
      : addr_(std::move(gateway_addr)), vsite_(std::move(vsite)),
        token_(std::move(token)) {}

  std::string id() const override { return addr_ + "/" + vsite_; }

  std::string consign_async(AbstractJob job) override {
    job.target_vsite = vsite_;
    job.identity = token_;
    GatewayClient client(addr_); // one connection per call: failures stay local
    return client.consign_async(encode(job));
  }

  msg::StatusReply poll(const std::string& remote_job_id) override {
    GatewayClient client(addr_);
    return client.poll(remote_job_id);
  }

  Outcome outcome(const std::string& remote_job_id) override {
    GatewayClient client(addr_);
    return client.outcome(remote_job_id);
  }

  void probe() override {
    GatewayClient client(addr_);
    client.list_vsites();
  }

private:
  std::string addr_;
  std::string vsite_;
  std::string token_;
};

// ---------------------------------------------------------------------------
// Output collection

inline std::vector<std::string> collect_output(const Outcome& outcome,
                                               std::size_t job_index,
                                               const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  std::string suffix = "." + std::to_string(job_index);

  std::string all_out, all_err;
  for (const auto& [name, rec] : outcome.records) {
    all_out += rec.stdout_bytes;
    all_err += rec.stderr_bytes;
  }
  auto write = [&](const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    written.push_back(p.string());
  };
  write(fs::path(out_dir) / ("stdout" + suffix), all_out);
  write(fs::path(out_dir) / ("stderr" + suffix), all_err);
  for (const auto& [cpto, byname] : outcome.files)
    for (const auto& [fname, bytes] : byname)
      write(fs::path(out_dir) / (fs::path(fname).filename().string() + suffix), bytes);
  return written;
}

// ---------------------------------------------------------------------------
// Broker

struct BrokerOptions {
  SchedulePolicy policy = SchedulePolicy::ROUND_ROBIN;
  std::chrono::milliseconds poll_interval{500};
  std::chrono::milliseconds probe_interval{5000};
  int max_retries = 3;          // resubmissions after a failed consign
  int max_poll_failures = 10;   // consecutive failures before local NOT_SUCCESSFUL
  std::string output_dir = "sweep-out";
  WrapContext wrap;
  std::function<void(const std::string&)> progress; // optional line sink
};

struct SweepResult {
  std::vector<BrokerJob> jobs;
  bool all_successful = false;
  bool all_servers_unhealthy = false;
};

class Broker {
public:
  Broker(std::vector<std::shared_ptr<ComputeServer>> servers, BrokerOptions options)
      : options_(std::move(options)) {
    if (servers.empty()) throw ConfigError("broker needs at least one server");
    for (auto& s : servers) servers_.push_back({std::move(s), true, {}});
  }

  SweepResult run(const PlanDocument& plan) {
    jobs_ = enumerate_jobs(plan);
    plan_ = &plan;
    done_.store(false);
    std::thread scheduler([this] { scheduler_loop(); });
    std::thread monitor([this] { monitor_loop(); });
    scheduler.join();
    monitor.join();

    SweepResult result;
    {
      std::lock_guard<std::mutex> lk(mu_);
      result.jobs = jobs_;
      result.all_servers_unhealthy = all_unhealthy_flag_;
    }
    result.all_successful = true;
    for (const auto& j : result.jobs)
      if (j.state != BrokerJobState::DONE ||
          j.final_code != CompletionCode::SUCCESSFUL)
        result.all_successful = false;
    return result;
  }

private:
  struct ServerSlot {
    std::shared_ptr<ComputeServer> server;
    bool healthy = true;
    std::chrono::steady_clock::time_point last_probe{};
  };

  void emit(const std::string& line) {
    if (options_.progress) options_.progress(line);
  }

  bool terminal(const BrokerJob& j) const {
    return j.state == BrokerJobState::DONE ||
           (j.state == BrokerJobState::FAILED_SUBMIT && j.attempts > options_.max_retries);
  }

  bool all_terminal_locked() const {
    for (const auto& j : jobs_)
      if (!terminal(j)) return false;
    return true;
  }

  std::size_t active_on_locked(const std::string& server_id) const {
    std::size_t n = 0;
    for (const auto& j : jobs_)
      if (j.server_id == server_id && (j.state == BrokerJobState::SUBMITTED ||
                                       j.state == BrokerJobState::ACTIVE))
        ++n;
    return n;
  }

  // nullptr when no healthy server exists
  ServerSlot* pick_server_locked(const BrokerJob& job) {
    std::vector<ServerSlot*> healthy;
    for (auto& s : servers_)
      if (s.healthy) healthy.push_back(&s);
    if (healthy.empty()) return nullptr;
    if (options_.policy == SchedulePolicy::ROUND_ROBIN)
      return healthy[job.index % healthy.size()];
    ServerSlot* best = healthy.front();
    std::size_t best_load = active_on_locked(best->server->id());
    for (auto* s : healthy) {
      std::size_t load = active_on_locked(s->server->id());
      if (load < best_load ||
          (load == best_load && s->server->id() < best->server->id())) {
        best = s;
        best_load = load;
      }
    }
    return best;
  }

  void mark_unhealthy_locked(const std::string& server_id) {
    for (auto& s : servers_)
      if (s.server->id() == server_id && s.healthy) {
        s.healthy = false;
        s.last_probe = std::chrono::steady_clock::now();
        emit("server " + server_id + " unhealthy");
      }
  }

  void reprobe_locked() {
    auto now = std::chrono::steady_clock::now();
    for (auto& s : servers_) {
      if (s.healthy || now - s.last_probe < options_.probe_interval) continue;
      s.last_probe = now;
      try {
        s.server->probe();
        s.healthy = true;
        emit("server " + s.server->id() + " healthy again");
      } catch (...) {
      }
    }
  }

  void scheduler_loop() {
    for (;;) {
      std::size_t target = SIZE_MAX;
      std::shared_ptr<ComputeServer> server;
      {
        std::lock_guard<std::mutex> lk(mu_);
        reprobe_locked();
        if (all_terminal_locked()) break;
        for (std::size_t i = 0; i < jobs_.size(); ++i) {
          BrokerJob& j = jobs_[i];
          bool wants_submit = j.state == BrokerJobState::UNSUBMITTED ||
                              (j.state == BrokerJobState::FAILED_SUBMIT &&
                               j.attempts <= options_.max_retries);
          if (!wants_submit) continue;
          ServerSlot* slot = pick_server_locked(j);
          if (!slot) {
            // one forced probe round before giving up on everything
            for (auto& s : servers_) s.last_probe = {};
            reprobe_locked();
            slot = pick_server_locked(j);
          }
          if (!slot) {
            all_unhealthy_flag_ = true;
            for (auto& job : jobs_)
              if (job.state == BrokerJobState::UNSUBMITTED ||
                  job.state == BrokerJobState::FAILED_SUBMIT) {
                job.state = BrokerJobState::FAILED_SUBMIT;
                job.attempts = options_.max_retries + 1;
              }
            break;
          }
          target = i;
          server = slot->server;
          break;
        }
      }
      if (target == SIZE_MAX) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        continue;
      }
      submit_one(target, std::move(server));
    }
    done_.store(true);
  }

  void submit_one(std::size_t index, std::shared_ptr<ComputeServer> server) {
    AbstractJob ajo;
    {
      std::lock_guard<std::mutex> lk(mu_);
      BrokerJob& j = jobs_[index];
      ++j.attempts;
      j.server_id = server->id();
      try {
        ajo = wrap(j, *plan_, options_.wrap);
      } catch (const Error& e) {
        j.state = BrokerJobState::FAILED_SUBMIT;
        j.attempts = options_.max_retries + 1; // wrapping errors do not retry
        emit("job " + std::to_string(j.index) + " wrap failed: " + e.what());
        return;
      }
    }
    std::string remote_id;
    bool ok = false;
    std::string error;
    try {
      remote_id = server->consign_async(std::move(ajo));
      ok = true;
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard<std::mutex> lk(mu_);
    BrokerJob& j = jobs_[index];
    if (ok) {
      j.remote_job_id = remote_id;
      j.state = BrokerJobState::SUBMITTED;
      emit("job " + std::to_string(j.index) + " submitted to " + j.server_id +
           " as " + remote_id);
    } else {
      mark_unhealthy_locked(j.server_id);
      j.state = BrokerJobState::FAILED_SUBMIT;
      emit("job " + std::to_string(j.index) + " submit failed (" + error + ")" +
           (j.attempts <= options_.max_retries ? ", will retry" : ", giving up"));
    }
  }

  void monitor_loop() {
    while (true) {
      {
        std::lock_guard<std::mutex> lk(mu_);
        if (done_.load() && all_terminal_locked()) break;
      }
      poll_round();
      std::this_thread::sleep_for(options_.poll_interval);
    }
  }

  void poll_round() {
    std::vector<std::size_t> watched;
    {
      std::lock_guard<std::mutex> lk(mu_);
      for (std::size_t i = 0; i < jobs_.size(); ++i)
        if (jobs_[i].state == BrokerJobState::SUBMITTED ||
            jobs_[i].state == BrokerJobState::ACTIVE)
          watched.push_back(i);
    }
    for (std::size_t i : watched) {
      std::shared_ptr<ComputeServer> server;
      std::string remote_id;
      {
        std::lock_guard<std::mutex> lk(mu_);
        const BrokerJob& j = jobs_[i];
        remote_id = j.remote_job_id;
        for (auto& s : servers_)
          if (s.server->id() == j.server_id) server = s.server;
      }
      if (!server) continue;
      try {
        msg::StatusReply reply = server->poll(remote_id);
        std::string root = reply.root;
        if (root == "ACTIVE") {
          std::lock_guard<std::mutex> lk(mu_);
          BrokerJob& j = jobs_[i];
          j.poll_failures = 0;
          if (j.state == BrokerJobState::SUBMITTED) {
            j.state = BrokerJobState::ACTIVE;
            emit("job " + std::to_string(j.index) + " active");
          }
          continue;
        }
        // remote is done: fetch the outcome, collect, finish
        CompletionCode code = root == "DONE(SUCCESSFUL)"
                                  ? CompletionCode::SUCCESSFUL
                                  : CompletionCode::NOT_SUCCESSFUL;
        std::vector<std::string> written;
        if (code == CompletionCode::SUCCESSFUL || true) {
          try {
            Outcome outcome = server->outcome(remote_id);
            written = collect_output(outcome, jobs_[i].index, options_.output_dir);
          } catch (const Error& e) {
            emit("job " + std::to_string(i) + " outcome unavailable: " + e.what());
          }
        }
        std::lock_guard<std::mutex> lk(mu_);
        BrokerJob& j = jobs_[i];
        j.state = BrokerJobState::DONE;
        j.final_code = code;
        j.collected = std::move(written);
        emit("job " + std::to_string(j.index) + " done " + to_string(code));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(mu_);
        BrokerJob& j = jobs_[i];
        mark_unhealthy_locked(j.server_id);
        if (j.attempts <= options_.max_retries) {
          // the server died under the job: resubmit it elsewhere
          j.state = BrokerJobState::FAILED_SUBMIT;
          j.remote_job_id.clear();
          j.poll_failures = 0;
          emit("job " + std::to_string(j.index) + " lost (" + e.what() +
               "), resubmitting");
          continue;
        }
        ++j.poll_failures;
        if (j.poll_failures >= options_.max_poll_failures) {
          j.state = BrokerJobState::DONE;
          j.final_code = CompletionCode::NOT_SUCCESSFUL;
          emit("job " + std::to_string(j.index) + " unreachable for too long (" +
               e.what() + "), marked NOT_SUCCESSFUL");
        }
      }
    }
  }

  BrokerOptions options_;
  std::vector<ServerSlot> servers_;
  std::vector<BrokerJob> jobs_;
  const PlanDocument* plan_ = nullptr;
  std::mutex mu_;
  std::atomic<bool> done_{false};
  bool all_unhealthy_flag_ = false;
};

} // namespace minigrid
