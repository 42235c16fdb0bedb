#pragma once

// Target-system interface: how incarnated commands actually run. Subprocess
// runs real OS processes; Simulated replays a scripted response table keyed
// by the hash of the script content, for deterministic tests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "minigrid/errors.hpp"
#include "minigrid/subprocess.hpp"

namespace minigrid {

struct TsiRequest {
  std::vector<std::string> argv;
  std::string workdir;
  std::map<std::string, std::string> env;
  std::uint64_t wall_time_s = 0;
  std::string script_bytes; // content of the script being run
  CancelFlag cancel;
};

struct TsiResult {
  int exit_code = -1;
  bool timed_out = false;
  bool cancelled = false;
  std::string stdout_bytes;
  std::string stderr_bytes;
};

class TsiBackend {
public:
  virtual ~TsiBackend() = default;
  virtual TsiResult run(const TsiRequest& req) = 0;
  virtual std::string kind() const = 0;
};

class SubprocessTsi : public TsiBackend {
public:
  TsiResult run(const TsiRequest& req) override {
    SubprocessResult r =
        run_subprocess(req.argv, req.workdir, req.env, req.wall_time_s, req.cancel);
    return {r.exit_code, r.timed_out, r.cancelled, std::move(r.stdout_bytes),
            std::move(r.stderr_bytes)};
  }
  std::string kind() const override { return "subprocess"; }
};

// FNV-1a, hex. Keys the simulated response table.
inline std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

struct SimulatedResponse {
  int exit_code = 0;
  std::string stdout_bytes;
  std::string stderr_bytes;
};

class SimulatedTsi : public TsiBackend {
public:
  SimulatedTsi() = default;
  explicit SimulatedTsi(std::map<std::string, SimulatedResponse> table)
      : table_(std::move(table)) {}

  static std::map<std::string, SimulatedResponse> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open response table: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad response table " + path + ": " + e.what());
    }
    std::map<std::string, SimulatedResponse> table;
    for (const auto& [key, v] : j.items()) {
      SimulatedResponse r;
      r.exit_code = v.value("exit", 0);
      r.stdout_bytes = v.value("stdout", "");
      r.stderr_bytes = v.value("stderr", "");
      table[key] = r;
    }
    return table;
  }

  void add_response(const std::string& script_bytes, SimulatedResponse r) {
    std::lock_guard<std::mutex> lk(mu_);
    table_[content_hash(script_bytes)] = std::move(r);
  }

  TsiResult run(const TsiRequest& req) override {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = table_.find(content_hash(req.script_bytes));
    if (it == table_.end()) {
      auto dflt = table_.find("default");
      if (dflt == table_.end())
        return {127, false, false, "", "simulated TSI: no response for script"};
      it = dflt;
    }
    return {it->second.exit_code, false, false, it->second.stdout_bytes,
            it->second.stderr_bytes};
  }

  std::string kind() const override { return "simulated"; }

private:
  std::mutex mu_;
  std::map<std::string, SimulatedResponse> table_;
};

} // namespace minigrid
