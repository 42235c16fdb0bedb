#pragma once

// Server tier for one virtual site: authorizes identities against the user
// database, checks requests against the site resource description,
// incarnates abstract script tasks into concrete commands via the
// incarnation database, runs the job DAG inside a per-job uspace and
// assembles the Outcome.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "minigrid/ajo.hpp"
#include "minigrid/engine.hpp"
#include "minigrid/errors.hpp"
#include "minigrid/outcome.hpp"
#include "minigrid/tsi.hpp"
#include "minigrid/uspace.hpp"

namespace minigrid {

struct UserDatabase {
  std::map<std::string, std::string> logins; // auth token -> local login
};

struct IncarnationDatabase {
  std::map<std::string, std::string> interpreters; // script type -> executable
  std::map<std::string, std::map<std::string, std::string>> packages; // name -> env
};

struct ResourceDescription {
  std::uint32_t max_processors = 1;
  std::uint64_t max_memory_mib = 0;
  std::uint64_t max_wall_time_s = 0;
  std::set<std::string> software_packages;
};

inline void check_resources(const ResourceRequest& req, const ResourceDescription& site) {
  if (req.processors > site.max_processors) throw UnsupportedResource("processors");
  if (req.memory_mib > site.max_memory_mib) throw UnsupportedResource("memory");
  if (req.wall_time_s > site.max_wall_time_s) throw UnsupportedResource("wall_time");
  for (const auto& p : req.software_packages)
    if (!site.software_packages.count(p))
      throw UnsupportedResource("software_packages");
}

struct IncarnatedCommand {
  std::vector<std::string> argv;
  std::map<std::string, std::string> env;
  std::string workdir;
  std::string script_rel; // uspace-relative script path
};

// Map the seamless task onto this site's concrete interpreter and package
// environment. The script is the first file of the task's portfolio.
inline IncarnatedCommand incarnate(const ExecuteScriptTask& task,
                                   const IncarnationDatabase& idb,
                                   const Uspace& uspace,
                                   const std::vector<std::string>& portfolio_files) {
  auto interp = idb.interpreters.find(to_string(task.script_type));
  if (interp == idb.interpreters.end())
    throw UnknownScriptType(to_string(task.script_type));
  if (portfolio_files.empty()) throw MissingScript("(empty portfolio)");
  const std::string& script = portfolio_files.front();
  if (!uspace.exists(script)) throw MissingScript(script);
  IncarnatedCommand cmd;
  cmd.argv = {interp->second, script};
  cmd.workdir = uspace.root().string();
  cmd.script_rel = script;
  for (const auto& pkg : task.resources.software_packages) {
    auto it = idb.packages.find(pkg);
    if (it == idb.packages.end()) continue;
    for (const auto& [k, v] : it->second) cmd.env[k] = v;
  }
  return cmd;
}

// Hooks the gateway installs so in-AJO service actions can reach the job
// registry. Without them, service actions fail with a log note.
struct ServiceHooks {
  std::function<bool(const JobId&)> kill_job;
  std::function<std::map<std::string, std::string>(const JobId&)> job_status;
};

struct VsiteConfig {
  std::string name;
  std::string uspace_root;
  std::string spool_root;
  std::string outcome_root;
  std::string xspace_root; // empty: no site store, imports/exports fail
  UserDatabase udb;
  IncarnationDatabase idb;
  ResourceDescription resources;
  std::string tsi_kind = "subprocess"; // or "simulated"
  std::string response_table;          // simulated only
};

// The executor the engine drives: performs one leaf action inside the job's
// uspace and reports a completion code plus outcome record.
class VsiteExecutor : public ActionExecutor {
public:
  VsiteExecutor(Uspace& uspace, TsiBackend& tsi, const VsiteConfig& cfg,
                const std::string& job_key, ServiceHooks* hooks)
      : uspace_(uspace), tsi_(tsi), cfg_(cfg), job_key_(job_key), hooks_(hooks) {}

  ExecResult execute(ActionId id, const AbstractAction& action,
                     const std::string& instance_name) override {
    ExecResult r;
    r.record.action_name = instance_name;
    try {
      r.code = perform(id, action, instance_name, r.record);
    } catch (const std::exception& e) {
      r.code = CompletionCode::NOT_SUCCESSFUL;
      r.record.log.push_back(e.what());
    }
    r.record.code = r.code;
    persist_record(instance_name, r.record);
    return r;
  }

  bool uspace_file_exists(const std::string& rel) override {
    try {
      return uspace_.exists(rel);
    } catch (const Error&) {
      return false;
    }
  }

  void cancel_all() override {
    std::lock_guard<std::mutex> lk(mu_);
    for (auto& [name, flag] : cancels_) flag->store(true);
  }

  // cpto name -> (file name -> bytes), filled as copy actions run
  std::map<std::string, std::map<std::string, std::string>> collected_files() {
    std::lock_guard<std::mutex> lk(mu_);
    return collected_;
  }

private:
  CompletionCode perform(ActionId id, const AbstractAction& action,
                         const std::string& instance, OutcomeRecord& rec) {
    if (const auto* inf = std::get_if<IncarnateFiles>(&action)) {
      for (const auto& [fname, bytes] : inf->files) {
        uspace_.write(fname, bytes);
        rec.log.push_back("incarnated " + fname + " (" + std::to_string(bytes.size()) +
                          " bytes)");
      }
      return CompletionCode::SUCCESSFUL;
    }
    if (const auto* mp = std::get_if<MakePortfolio>(&action)) {
      // registration is lazy: existence is checked when the portfolio is used
      std::lock_guard<std::mutex> lk(mu_);
      portfolios_[id] = mp->file_names;
      rec.log.push_back("registered portfolio with " +
                        std::to_string(mp->file_names.size()) + " file(s)");
      return CompletionCode::SUCCESSFUL;
    }
    if (const auto* est = std::get_if<ExecuteScriptTask>(&action))
      return run_script(id, *est, instance, rec);
    if (const auto* cpto = std::get_if<CopyPortfolioToOutcome>(&action))
      return copy_to_outcome(*cpto, instance, rec);
    if (const auto* imp = std::get_if<ImportFile>(&action)) {
      if (cfg_.xspace_root.empty()) {
        rec.log.push_back("no site store configured");
        return CompletionCode::NOT_SUCCESSFUL;
      }
      fs::path src = safe_join(cfg_.xspace_root, imp->source);
      if (!fs::exists(src)) {
        rec.log.push_back("site-store file missing: " + imp->source);
        return CompletionCode::NOT_SUCCESSFUL;
      }
      fs::path dst = uspace_.resolve(imp->dest);
      fs::create_directories(dst.parent_path());
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
      rec.log.push_back("imported " + imp->source + " -> " + imp->dest);
      return CompletionCode::SUCCESSFUL;
    }
    if (const auto* exp = std::get_if<ExportFile>(&action)) {
      if (cfg_.xspace_root.empty()) {
        rec.log.push_back("no site store configured");
        return CompletionCode::NOT_SUCCESSFUL;
      }
      fs::path src = uspace_.resolve(exp->source);
      if (!fs::exists(src)) {
        rec.log.push_back("uspace file missing: " + exp->source);
        return CompletionCode::NOT_SUCCESSFUL;
      }
      fs::path dst = safe_join(cfg_.xspace_root, exp->dest);
      fs::create_directories(dst.parent_path());
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
      rec.log.push_back("exported " + exp->source + " -> " + exp->dest);
      return CompletionCode::SUCCESSFUL;
    }
    if (const auto* sp = std::get_if<SpoolFile>(&action)) {
      fs::path src = uspace_.resolve(sp->source);
      if (!fs::exists(src)) {
        rec.log.push_back("uspace file missing: " + sp->source);
        return CompletionCode::NOT_SUCCESSFUL;
      }
      fs::path dir = fs::path(cfg_.spool_root) / job_key_;
      fs::create_directories(dir);
      fs::copy_file(src, dir / fs::path(sp->source).filename(),
                    fs::copy_options::overwrite_existing);
      rec.log.push_back("spooled " + sp->source);
      return CompletionCode::SUCCESSFUL;
    }
    if (const auto* ks = std::get_if<KillService>(&action)) {
      if (!hooks_ || !hooks_->kill_job) {
        rec.log.push_back("no service endpoint available");
        return CompletionCode::NOT_SUCCESSFUL;
      }
      bool ok = hooks_->kill_job(ks->target_job);
      rec.log.push_back(ok ? "killed " + ks->target_job
                           : "kill failed for " + ks->target_job);
      return ok ? CompletionCode::SUCCESSFUL : CompletionCode::NOT_SUCCESSFUL;
    }
    if (const auto* ss = std::get_if<StatusService>(&action)) {
      if (!hooks_ || !hooks_->job_status) {
        rec.log.push_back("no service endpoint available");
        return CompletionCode::NOT_SUCCESSFUL;
      }
      auto statuses = hooks_->job_status(ss->target_job);
      for (const auto& [name, st] : statuses)
        rec.stdout_bytes += name + " " + st + "\n";
      return CompletionCode::SUCCESSFUL;
    }
    rec.log.push_back("action kind not executable here");
    return CompletionCode::NOT_SUCCESSFUL;
  }

  CompletionCode run_script(ActionId, const ExecuteScriptTask& task,
                            const std::string& instance, OutcomeRecord& rec) {
    std::vector<std::string> files;
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = portfolios_.find(task.script_portfolio);
      if (it == portfolios_.end()) {
        rec.log.push_back("script portfolio not registered");
        return CompletionCode::NOT_SUCCESSFUL;
      }
      files = it->second;
    }
    IncarnatedCommand cmd = incarnate(task, cfg_.idb, uspace_, files);
    TsiRequest req;
    req.argv = cmd.argv;
    req.workdir = cmd.workdir;
    req.env = cmd.env;
    req.wall_time_s = task.resources.wall_time_s;
    req.script_bytes = uspace_.read(cmd.script_rel);
    req.cancel = std::make_shared<std::atomic<bool>>(false);
    {
      std::lock_guard<std::mutex> lk(mu_);
      cancels_[instance] = req.cancel;
    }
    TsiResult r = tsi_.run(req);
    {
      std::lock_guard<std::mutex> lk(mu_);
      cancels_.erase(instance);
    }
    rec.has_exit_code = true;
    rec.exit_code = r.exit_code;
    rec.stdout_bytes = r.stdout_bytes;
    rec.stderr_bytes = r.stderr_bytes;
    if (r.timed_out) rec.log.push_back("wall time limit exceeded, task killed");
    if (r.cancelled) rec.log.push_back("task killed by request");
    rec.log.push_back("exit code " + std::to_string(r.exit_code));
    return (r.exit_code == 0 && !r.timed_out && !r.cancelled)
               ? CompletionCode::SUCCESSFUL
               : CompletionCode::NOT_SUCCESSFUL;
  }

  CompletionCode copy_to_outcome(const CopyPortfolioToOutcome& cpto,
                                 const std::string& instance, OutcomeRecord& rec) {
    std::vector<std::string> files;
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = portfolios_.find(cpto.target);
      if (it == portfolios_.end()) {
        rec.log.push_back("target portfolio not registered");
        return CompletionCode::NOT_SUCCESSFUL;
      }
      files = it->second;
    }
    fs::path dir = action_dir(instance);
    bool all_ok = true;
    for (const auto& fname : files) {
      if (!uspace_.exists(fname)) {
        rec.log.push_back("portfolio file missing: " + fname);
        all_ok = false;
        continue;
      }
      std::string bytes = uspace_.read(fname);
      fs::path dst = safe_join(dir, fname);
      fs::create_directories(dst.parent_path());
      std::ofstream out(dst, std::ios::binary);
      out.write(bytes.data(), std::streamsize(bytes.size()));
      rec.saved_files.push_back(fname);
      std::lock_guard<std::mutex> lk(mu_);
      collected_[instance][fname] = std::move(bytes);
    }
    return all_ok ? CompletionCode::SUCCESSFUL : CompletionCode::NOT_SUCCESSFUL;
  }

  fs::path action_dir(const std::string& instance) {
    fs::path dir = fs::path(cfg_.outcome_root) / job_key_ / instance;
    fs::create_directories(dir);
    return dir;
  }

  void persist_record(const std::string& instance, const OutcomeRecord& rec) {
    try {
      fs::path dir = action_dir(instance);
      std::ofstream(dir / "stdout", std::ios::binary)
          << rec.stdout_bytes;
      std::ofstream(dir / "stderr", std::ios::binary)
          << rec.stderr_bytes;
      std::ofstream log(dir / "log");
      for (const auto& line : rec.log) log << line << "\n";
    } catch (...) {
      // outcome-store write failures must not abort the engine
    }
  }

  Uspace& uspace_;
  TsiBackend& tsi_;
  const VsiteConfig& cfg_;
  std::string job_key_;
  ServiceHooks* hooks_;
  std::mutex mu_;
  std::map<ActionId, std::vector<std::string>> portfolios_;
  std::map<std::string, CancelFlag> cancels_;
  std::map<std::string, std::map<std::string, std::string>> collected_;
};

class Vsite {
public:
  explicit Vsite(VsiteConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.uspace_root.empty() || cfg_.spool_root.empty() || cfg_.outcome_root.empty())
      throw ConfigError("vsite " + cfg_.name + ": uspace, spool and outcome roots required");
    if (cfg_.uspace_root == cfg_.spool_root)
      throw ConfigError("vsite " + cfg_.name + ": uspace and spool roots must differ");
    fs::create_directories(cfg_.uspace_root);
    fs::create_directories(cfg_.spool_root);
    fs::create_directories(cfg_.outcome_root);
    if (!cfg_.xspace_root.empty()) fs::create_directories(cfg_.xspace_root);
    if (cfg_.tsi_kind == "subprocess") {
      tsi_ = std::make_unique<SubprocessTsi>();
    } else if (cfg_.tsi_kind == "simulated") {
      tsi_ = cfg_.response_table.empty()
                 ? std::make_unique<SimulatedTsi>()
                 : std::make_unique<SimulatedTsi>(SimulatedTsi::from_file(cfg_.response_table));
    } else {
      throw ConfigError("unknown TSI kind: " + cfg_.tsi_kind);
    }
  }

  const std::string& name() const { return cfg_.name; }
  const VsiteConfig& config() const { return cfg_; }
  const ResourceDescription& resources() const { return cfg_.resources; }
  TsiBackend& tsi() { return *tsi_; }
  void set_service_hooks(ServiceHooks hooks) { hooks_ = std::move(hooks); }

  std::string authorize(const std::string& identity) const {
    auto it = cfg_.udb.logins.find(identity);
    if (identity.empty() || it == cfg_.udb.logins.end()) throw NotAuthorized();
    return it->second;
  }

  // Pre-execution scan: the whole job is refused before any file is written
  // if any task over-asks.
  void scan_resources(const ActionGroup& group) const {
    for (const auto& [id, action] : group.actions) {
      if (const auto* est = std::get_if<ExecuteScriptTask>(&action))
        check_resources(est->resources, cfg_.resources);
      else if (const auto* c = std::get_if<ConditionalAction>(&action)) {
        scan_resources(c->then_group);
        scan_resources(c->else_group);
      } else if (const auto* r = std::get_if<RepeatGroup>(&action))
        scan_resources(r->body);
      else if (const auto* j = std::get_if<AbstractJob>(&action))
        scan_resources(j->group);
    }
  }

  Outcome consign_local(const AbstractJob& job, unsigned parallelism = 0,
                        std::shared_ptr<KillSwitch> kill = nullptr,
                        StatusObserver observer = nullptr,
                        std::string job_key = "") {
    std::string login = authorize(job.identity);
    auto violations = validate(job);
    if (!violations.empty())
      throw Error("INVALID_AJO", "job does not validate: " + violations.front());
    scan_resources(job.group);
    if (job_key.empty()) job_key = next_job_id(cfg_.name);
    if (parallelism == 0) parallelism = cfg_.resources.max_processors;

    Uspace uspace(cfg_.uspace_root, job_key);
    VsiteExecutor executor(uspace, *tsi_, cfg_, job_key, hooks_ ? &*hooks_ : nullptr);
    RunResult run_result;
    try {
      run_result = run(job.group, executor, parallelism, kill, observer);
    } catch (...) {
      uspace.finalize();
      throw;
    }
    uspace.finalize();

    Outcome outcome;
    outcome.job_id = job.job_id;
    outcome.root = run_result.root;
    outcome.statuses = run_result.statuses;
    outcome.records = run_result.records;
    outcome.files = executor.collected_files();
    for (const auto& [name, rec] : outcome.records)
      if (!rec.saved_files.empty()) outcome.files_mapping[name] = rec.saved_files;
    (void)login; // recorded implicitly: the token mapped; OS-level switching is out of scope
    return outcome;
  }

private:
  VsiteConfig cfg_;
  std::unique_ptr<TsiBackend> tsi_;
  std::optional<ServiceHooks> hooks_;
};

} // namespace minigrid
