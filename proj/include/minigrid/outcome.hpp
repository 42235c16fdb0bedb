#pragma once

// Collected results of one job: per-action completion codes, stdout/stderr,
// logs, and the files saved by copy-portfolio-to-outcome actions. Encodes to
// the same canonical JSON notation as the AJO document; the encoding carries
// no timestamps so identical runs encode byte-identically.

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "minigrid/base64.hpp"
#include "minigrid/engine.hpp"

namespace minigrid {

struct Outcome {
  JobId job_id; // the AJO's own job id
  CompletionCode root = CompletionCode::SUCCESSFUL;
  std::map<std::string, ActionStatus> statuses;        // instance name -> status
  std::map<std::string, OutcomeRecord> records;        // instance name -> record
  std::map<std::string, std::vector<std::string>> files_mapping; // cpto -> file names
  std::map<std::string, std::map<std::string, std::string>> files; // cpto -> name -> bytes
};

inline std::string encode_outcome(const Outcome& o) {
  nlohmann::json j;
  j["job_id"] = o.job_id;
  j["root"] = to_string(o.root);
  nlohmann::json actions = nlohmann::json::object();
  for (const auto& [name, rec] : o.records) {
    nlohmann::json a;
    a["status"] = o.statuses.count(name) ? o.statuses.at(name).str()
                                         : ActionStatus::done_as(rec.code).str();
    a["code"] = to_string(rec.code);
    if (rec.has_exit_code) a["exit_code"] = rec.exit_code;
    a["stdout"] = base64::encode(rec.stdout_bytes);
    a["stderr"] = base64::encode(rec.stderr_bytes);
    a["log"] = rec.log;
    actions[name] = a;
  }
  j["actions"] = actions;
  nlohmann::json mapping = nlohmann::json::object();
  for (const auto& [cpto, names] : o.files_mapping) mapping[cpto] = names;
  j["files_mapping"] = mapping;
  nlohmann::json files = nlohmann::json::object();
  for (const auto& [cpto, byname] : o.files) {
    nlohmann::json inner = nlohmann::json::object();
    for (const auto& [fname, bytes] : byname) inner[fname] = base64::encode(bytes);
    files[cpto] = inner;
  }
  j["files"] = files;
  return j.dump();
}

inline Outcome decode_outcome(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
    Outcome o;
    o.job_id = j.at("job_id").get<std::string>();
    o.root = j.at("root").get<std::string>() == "SUCCESSFUL"
                 ? CompletionCode::SUCCESSFUL
                 : CompletionCode::NOT_SUCCESSFUL;
    for (const auto& [name, a] : j.at("actions").items()) {
      OutcomeRecord rec;
      rec.action_name = name;
      std::string code = a.at("code").get<std::string>();
      rec.code = code == "SUCCESSFUL"       ? CompletionCode::SUCCESSFUL
                 : code == "NOT_SUCCESSFUL" ? CompletionCode::NOT_SUCCESSFUL
                 : code == "NEVER_TAKEN"    ? CompletionCode::NEVER_TAKEN
                                            : CompletionCode::NEVER_RUN;
      if (a.contains("exit_code")) {
        rec.has_exit_code = true;
        rec.exit_code = a.at("exit_code").get<int>();
      }
      rec.stdout_bytes = base64::decode(a.at("stdout").get<std::string>());
      rec.stderr_bytes = base64::decode(a.at("stderr").get<std::string>());
      for (const auto& line : a.at("log")) rec.log.push_back(line.get<std::string>());
      o.statuses[name] = ActionStatus::parse(a.at("status").get<std::string>());
      o.records[name] = std::move(rec);
    }
    for (const auto& [cpto, names] : j.at("files_mapping").items())
      for (const auto& n : names) o.files_mapping[cpto].push_back(n.get<std::string>());
    for (const auto& [cpto, byname] : j.at("files").items())
      for (const auto& [fname, b64] : byname.items())
        o.files[cpto][fname] = base64::decode(b64.get<std::string>());
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedEncoding(e.what());
  }
}

} // namespace minigrid
