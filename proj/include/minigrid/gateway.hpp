#pragma once

// Single entry point for a usite: accepts framed protocol requests over TCP,
// routes them to the registered vsites and keeps the job registry. A
// malformed frame costs only its own connection.

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "minigrid/ajo_codec.hpp"
#include "minigrid/framing.hpp"
#include "minigrid/net.hpp"
#include "minigrid/outcome.hpp"
#include "minigrid/protocol.hpp"
#include "minigrid/vsite.hpp"

namespace minigrid {

class Gateway {
public:
  explicit Gateway(std::vector<std::shared_ptr<Vsite>> vsites) {
    for (auto& v : vsites) {
      if (vsites_.count(v->name()))
        throw ConfigError("duplicate vsite name: " + v->name());
      ServiceHooks hooks;
      hooks.kill_job = [this](const JobId& id) {
        try {
          kill(id);
          return true;
        } catch (const Error&) {
          return false;
        }
      };
      hooks.job_status = [this](const JobId& id) {
        auto reply = poll(id);
        return reply.statuses;
      };
      v->set_service_hooks(std::move(hooks));
      vsites_[v->name()] = std::move(v);
    }
  }

  ~Gateway() { stop(); }

  // ----- in-process API (the connection handler is a thin shim over this) --

  std::vector<std::string> list_vsites() const {
    std::vector<std::string> names;
    for (const auto& [n, v] : vsites_) names.push_back(n);
    return names; // map order: sorted
  }

  Vsite& route(const std::string& vsite_name) {
    auto it = vsites_.find(vsite_name);
    if (it == vsites_.end()) throw UnknownVsite(vsite_name);
    return *it->second;
  }

  msg::ResourceReply describe(const std::string& vsite_name) {
    const ResourceDescription& r = route(vsite_name).resources();
    msg::ResourceReply reply;
    reply.max_processors = r.max_processors;
    reply.max_memory_mib = r.max_memory_mib;
    reply.max_wall_time_s = r.max_wall_time_s;
    reply.software_packages.assign(r.software_packages.begin(),
                                   r.software_packages.end());
    return reply;
  }

  std::string consign_async(const std::string& ajo_bytes) {
    return consign_start(ajo_bytes);
  }

  Outcome consign_sync(const std::string& ajo_bytes) {
    std::string job_id = consign_start(ajo_bytes);
    std::unique_lock<std::mutex> lock(mu_);
    auto& entry = jobs_.at(job_id);
    done_cv_.wait(lock, [&] { return entry->done; });
    return entry->outcome;
  }

  msg::StatusReply poll(const std::string& job_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw UnknownJob(job_id);
    return snapshot_locked(job_id, *it->second);
  }

  msg::StatusReply kill(const std::string& job_id) {
    std::unique_lock<std::mutex> lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw UnknownJob(job_id);
    JobEntry& entry = *it->second;
    if (!entry.done) {
      entry.kill->trigger();
      done_cv_.wait(lock, [&] { return entry.done; });
    }
    return snapshot_locked(job_id, entry);
  }

  Outcome outcome(const std::string& job_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw UnknownJob(job_id);
    if (!it->second->done)
      throw Error("JOB_ACTIVE", "job still executing: " + job_id);
    return it->second->outcome;
  }

  // ----- server -------------------------------------------------------------

  std::uint16_t start(const net::Endpoint& ep) {
    auto [sock, port] = net::listen_on(ep);
    listener_ = std::move(sock);
    port_ = port;
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    return port;
  }

  std::uint16_t port() const { return port_; }

  void stop() {
    bool was_running = running_.exchange(false);
    if (was_running) {
      listener_.shutdown_both();
      if (accept_thread_.joinable()) accept_thread_.join();
      {
        std::lock_guard<std::mutex> lock(conn_mu_);
        for (auto& [id, sock] : conns_) sock->shutdown_both();
      }
    }
    // kill anything still in flight, then wait for workers
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& [id, entry] : jobs_)
        if (!entry->done) entry->kill->trigger();
    }
    std::vector<std::thread> workers;
    {
      std::lock_guard<std::mutex> lock(mu_);
      workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
    std::vector<std::thread> conns;
    {
      std::lock_guard<std::mutex> lock(conn_mu_);
      conns.swap(conn_threads_);
    }
    for (auto& t : conns) t.join();
  }

private:
  struct JobEntry {
    std::string vsite;
    std::chrono::system_clock::time_point submitted;
    std::shared_ptr<KillSwitch> kill = std::make_shared<KillSwitch>();
    std::map<std::string, ActionStatus> statuses;
    bool done = false;
    Outcome outcome;
  };

  std::string consign_start(const std::string& ajo_bytes) {
    AbstractJob job;
    try {
      job = decode(ajo_bytes);
    } catch (const MalformedEncoding& e) {
      throw Error("INVALID_AJO", e.what());
    }
    Vsite& vsite = route(job.target_vsite);
    vsite.authorize(job.identity);
    auto violations = validate(job);
    if (!violations.empty())
      throw Error("INVALID_AJO", "job does not validate: " + violations.front());
    vsite.scan_resources(job.group);

    std::string job_id =
        job.target_vsite + "-" + std::to_string(next_job_.fetch_add(1));
    auto entry = std::make_unique<JobEntry>();
    entry->vsite = job.target_vsite;
    entry->submitted = std::chrono::system_clock::now();
    for (const auto& [id, action] : job.group.actions)
      entry->statuses[action.name()] = ActionStatus::pending();
    auto kill_switch = entry->kill;
    {
      std::lock_guard<std::mutex> lock(mu_);
      jobs_[job_id] = std::move(entry);
      workers_.emplace_back([this, job_id, job = std::move(job), kill_switch,
                             &vsite] {
        StatusObserver observer = [this, job_id](const TraceEntry& e) {
          std::lock_guard<std::mutex> lock(mu_);
          auto it = jobs_.find(job_id);
          if (it != jobs_.end()) it->second->statuses[e.action] = e.to;
        };
        Outcome outcome;
        try {
          outcome = vsite.consign_local(job, 0, kill_switch, observer, job_id);
        } catch (const std::exception& e) {
          outcome.job_id = job.job_id;
          outcome.root = CompletionCode::NOT_SUCCESSFUL;
          OutcomeRecord rec;
          rec.action_name = "(consign)";
          rec.code = CompletionCode::NOT_SUCCESSFUL;
          rec.log.push_back(e.what());
          outcome.records["(consign)"] = rec;
        }
        std::lock_guard<std::mutex> lock(mu_);
        auto it = jobs_.find(job_id);
        if (it != jobs_.end()) {
          it->second->outcome = std::move(outcome);
          it->second->done = true;
        }
        done_cv_.notify_all();
      });
    }
    return job_id;
  }

  msg::StatusReply snapshot_locked(const std::string& job_id, const JobEntry& entry) {
    msg::StatusReply reply;
    reply.job_id = job_id;
    if (entry.done) {
      reply.root = "DONE(" + to_string(entry.outcome.root) + ")";
      for (const auto& [name, st] : entry.outcome.statuses)
        reply.statuses[name] = st.str();
    } else {
      reply.root = "ACTIVE";
      for (const auto& [name, st] : entry.statuses) reply.statuses[name] = st.str();
    }
    return reply;
  }

  void accept_loop() {
    while (running_) {
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (running_ && (errno == EINTR || errno == ECONNABORTED)) continue;
        break;
      }
      auto sock = std::make_shared<net::Socket>(fd);
      std::uint64_t conn_id;
      {
        std::lock_guard<std::mutex> lock(conn_mu_);
        conn_id = next_conn_++;
        conns_[conn_id] = sock;
        conn_threads_.emplace_back(
            [this, conn_id, sock] { serve_connection(conn_id, *sock); });
      }
    }
  }

  void serve_connection(std::uint64_t conn_id, net::Socket& sock) {
    FrameDecoder decoder;
    char buf[16384];
    try {
      for (;;) {
        std::size_t n = sock.recv_some(buf, sizeof buf);
        if (n == 0) break;
        for (const auto& payload : decoder.feed(buf, n)) {
          std::string reply = message_encode(handle(message_decode(payload)));
          sock.send_all(frame_encode(reply));
        }
      }
    } catch (const Error& e) {
      // best-effort error reply, then drop only this connection
      try {
        sock.send_all(frame_encode(
            message_encode(msg::ErrorReply{e.code(), e.what()})));
      } catch (...) {
      }
    } catch (...) {
    }
    std::lock_guard<std::mutex> lock(conn_mu_);
    conns_.erase(conn_id);
  }

  UplMessage handle(const UplMessage& request) {
    try {
      if (const auto* c = std::get_if<msg::Consign>(&request)) {
        if (c->mode == ConsignMode::ASYNC) return msg::Consigned{consign_async(c->ajo_bytes)};
        return msg::OutcomeReply{encode_outcome(consign_sync(c->ajo_bytes))};
      }
      if (const auto* p = std::get_if<msg::Poll>(&request)) return poll(p->job_id);
      if (const auto* r = std::get_if<msg::RetrieveOutcome>(&request))
        return msg::OutcomeReply{encode_outcome(outcome(r->job_id))};
      if (const auto* k = std::get_if<msg::Kill>(&request)) return kill(k->job_id);
      if (std::get_if<msg::ListVsites>(&request)) return msg::VsiteList{list_vsites()};
      if (const auto* d = std::get_if<msg::DescribeResources>(&request))
        return describe(d->vsite);
      return msg::ErrorReply{"BAD_REQUEST", "not a request message"};
    } catch (const Error& e) {
      return msg::ErrorReply{e.code(), e.what()};
    } catch (const std::exception& e) {
      return msg::ErrorReply{"INTERNAL", e.what()};
    }
  }

  std::map<std::string, std::shared_ptr<Vsite>> vsites_;

  mutable std::mutex mu_;
  std::condition_variable done_cv_;
  std::map<std::string, std::unique_ptr<JobEntry>> jobs_;
  std::vector<std::thread> workers_;
  std::atomic<std::uint64_t> next_job_{1};

  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::map<std::uint64_t, std::shared_ptr<net::Socket>> conns_;
  std::vector<std::thread> conn_threads_;
  std::uint64_t next_conn_ = 0;
};

} // namespace minigrid
