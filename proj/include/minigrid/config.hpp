#pragma once

// JSON configuration files for the server and broker command lines.
//
// Testbed config (one file describes the whole gateway + its vsites):
//   {
//     "listen": "127.0.0.1:7000",
//     "vsites": [ { ...vsite object... }, ... ]
//   }
//
// Vsite object:
//   {
//     "name": "alpha",
//     "uspace_root": "/tmp/alpha/uspace",
//     "spool_root": "/tmp/alpha/spool",
//     "outcome_root": "/tmp/alpha/outcomes",
//     "xspace_root": "/tmp/alpha/xspace",          (optional)
//     "interpreters": {"SH": "/bin/sh", "CSH": "/bin/csh"},
//     "users": {"token": "login", ...},
//     "resources": {"max_processors": 4, "max_memory_mib": 1024,
//                   "max_wall_time_s": 3600, "software_packages": ["gauss"]},
//     "packages": {"gauss": {"GAUSS_HOME": "/opt/gauss"}},  (optional env)
//     "tsi": {"kind": "subprocess"}                (or "simulated" +
//                                                   "response_table": path)
//   }
//
// Broker config:
//   {
//     "servers": [{"gateway": "127.0.0.1:7000", "vsite": "alpha",
//                  "token": "secret"}, ...],
//     "policy": "ROUND_ROBIN" | "LEAST_LOADED",
//     "poll_interval_ms": 500,
//     "probe_interval_ms": 5000,
//     "max_retries": 3,
//     "max_poll_failures": 10,
//     "local_dir": ".",
//     "script_type": "SH"
//   }

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "minigrid/broker.hpp"
#include "minigrid/errors.hpp"
#include "minigrid/vsite.hpp"

namespace minigrid {

namespace config_detail {

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

} // namespace config_detail

inline VsiteConfig vsite_config_from_json(const nlohmann::json& j) {
  try {
    VsiteConfig cfg;
    cfg.name = j.at("name").get<std::string>();
    cfg.uspace_root = j.at("uspace_root").get<std::string>();
    cfg.spool_root = j.at("spool_root").get<std::string>();
    cfg.outcome_root = j.at("outcome_root").get<std::string>();
    cfg.xspace_root = j.value("xspace_root", std::string());
    for (const auto& [k, v] : j.at("interpreters").items())
      cfg.idb.interpreters[k] = v.get<std::string>();
    for (const auto& [k, v] : j.at("users").items())
      cfg.udb.logins[k] = v.get<std::string>();
    const auto& r = j.at("resources");
    cfg.resources.max_processors = r.value("max_processors", 1u);
    cfg.resources.max_memory_mib = r.value("max_memory_mib", std::uint64_t(1024));
    cfg.resources.max_wall_time_s = r.value("max_wall_time_s", std::uint64_t(3600));
    if (r.contains("software_packages"))
      for (const auto& p : r.at("software_packages"))
        cfg.resources.software_packages.insert(p.get<std::string>());
    if (j.contains("packages"))
      for (const auto& [pkg, env] : j.at("packages").items())
        for (const auto& [k, v] : env.items())
          cfg.idb.packages[pkg][k] = v.get<std::string>();
    if (j.contains("tsi")) {
      cfg.tsi_kind = j.at("tsi").value("kind", std::string("subprocess"));
      cfg.response_table = j.at("tsi").value("response_table", std::string());
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("vsite config: ") + e.what());
  }
}

struct TestbedConfig {
  std::string listen = "127.0.0.1:0";
  std::vector<VsiteConfig> vsites;
};

inline TestbedConfig load_testbed_config(const std::string& path) {
  nlohmann::json j = config_detail::load_json(path);
  TestbedConfig cfg;
  try {
    cfg.listen = j.value("listen", cfg.listen);
    if (!j.contains("vsites") || j.at("vsites").empty())
      throw ConfigError(path + ": at least one vsite required");
    for (const auto& v : j.at("vsites")) cfg.vsites.push_back(vsite_config_from_json(v));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

struct BrokerServerConfig {
  std::string gateway;
  std::string vsite;
  std::string token;
};

struct BrokerConfig {
  std::vector<BrokerServerConfig> servers;
  BrokerOptions options;
};

inline BrokerConfig load_broker_config(const std::string& path) {
  nlohmann::json j = config_detail::load_json(path);
  BrokerConfig cfg;
  try {
    for (const auto& s : j.at("servers"))
      cfg.servers.push_back({s.at("gateway").get<std::string>(),
                             s.at("vsite").get<std::string>(),
                             s.at("token").get<std::string>()});
    if (cfg.servers.empty()) throw ConfigError(path + ": at least one server required");
    std::string policy = j.value("policy", std::string("ROUND_ROBIN"));
    if (policy == "ROUND_ROBIN")
      cfg.options.policy = SchedulePolicy::ROUND_ROBIN;
    else if (policy == "LEAST_LOADED")
      cfg.options.policy = SchedulePolicy::LEAST_LOADED;
    else
      throw ConfigError(path + ": policy must be ROUND_ROBIN or LEAST_LOADED");
    cfg.options.poll_interval =
        std::chrono::milliseconds(j.value("poll_interval_ms", 500));
    cfg.options.probe_interval =
        std::chrono::milliseconds(j.value("probe_interval_ms", 5000));
    cfg.options.max_retries = j.value("max_retries", 3);
    cfg.options.max_poll_failures = j.value("max_poll_failures", 10);
    cfg.options.wrap.local_dir = j.value("local_dir", std::string("."));
    std::string st = j.value("script_type", std::string("SH"));
    if (st == "SH")
      cfg.options.wrap.script_type = ScriptType::SH;
    else if (st == "CSH")
      cfg.options.wrap.script_type = ScriptType::CSH;
    else
      throw ConfigError(path + ": script_type must be SH or CSH");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

} // namespace minigrid
