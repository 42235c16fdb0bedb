#pragma once

// Gateway protocol messages. Payloads are the same canonical JSON notation
// as the AJO document, with a `type` field discriminating variants. Every
// request gets exactly one reply on the same connection.

#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "minigrid/engine.hpp"
#include "minigrid/errors.hpp"

namespace minigrid {

enum class ConsignMode { SYNC, ASYNC };

namespace msg {

struct Consign {
  std::string ajo_bytes; // canonical AJO document
  ConsignMode mode = ConsignMode::SYNC;
};
struct Poll {
  std::string job_id;
};
struct RetrieveOutcome {
  std::string job_id;
};
struct Kill {
  std::string job_id;
};
struct ListVsites {};
struct DescribeResources {
  std::string vsite;
};

struct Consigned {
  std::string job_id;
};
struct OutcomeReply {
  std::string outcome_bytes; // encoded Outcome document
};
struct StatusReply {
  std::string job_id;
  std::string root; // "ACTIVE" or a DONE(...) string
  std::map<std::string, std::string> statuses; // instance name -> status string
};
struct VsiteList {
  std::vector<std::string> names; // sorted
};
struct ResourceReply {
  std::uint32_t max_processors = 0;
  std::uint64_t max_memory_mib = 0;
  std::uint64_t max_wall_time_s = 0;
  std::vector<std::string> software_packages;
};
struct ErrorReply {
  std::string code;
  std::string message;
};

} // namespace msg

using UplMessage =
    std::variant<msg::Consign, msg::Poll, msg::RetrieveOutcome, msg::Kill,
                 msg::ListVsites, msg::DescribeResources, msg::Consigned,
                 msg::OutcomeReply, msg::StatusReply, msg::VsiteList,
                 msg::ResourceReply, msg::ErrorReply>;

inline std::string message_encode(const UplMessage& m) {
  nlohmann::json j;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, msg::Consign>) {
          j["type"] = "consign";
          j["ajo"] = v.ajo_bytes;
          j["mode"] = v.mode == ConsignMode::SYNC ? "SYNC" : "ASYNC";
        } else if constexpr (std::is_same_v<T, msg::Poll>) {
          j["type"] = "poll";
          j["job_id"] = v.job_id;
        } else if constexpr (std::is_same_v<T, msg::RetrieveOutcome>) {
          j["type"] = "retrieve_outcome";
          j["job_id"] = v.job_id;
        } else if constexpr (std::is_same_v<T, msg::Kill>) {
          j["type"] = "kill";
          j["job_id"] = v.job_id;
        } else if constexpr (std::is_same_v<T, msg::ListVsites>) {
          j["type"] = "list_vsites";
        } else if constexpr (std::is_same_v<T, msg::DescribeResources>) {
          j["type"] = "describe_resources";
          j["vsite"] = v.vsite;
        } else if constexpr (std::is_same_v<T, msg::Consigned>) {
          j["type"] = "consigned";
          j["job_id"] = v.job_id;
        } else if constexpr (std::is_same_v<T, msg::OutcomeReply>) {
          j["type"] = "outcome_reply";
          j["outcome"] = v.outcome_bytes;
        } else if constexpr (std::is_same_v<T, msg::StatusReply>) {
          j["type"] = "status_reply";
          j["job_id"] = v.job_id;
          j["root"] = v.root;
          j["statuses"] = v.statuses;
        } else if constexpr (std::is_same_v<T, msg::VsiteList>) {
          j["type"] = "vsite_list";
          j["names"] = v.names;
        } else if constexpr (std::is_same_v<T, msg::ResourceReply>) {
          j["type"] = "resource_reply";
          j["max_processors"] = v.max_processors;
          j["max_memory_mib"] = v.max_memory_mib;
          j["max_wall_time_s"] = v.max_wall_time_s;
          j["software_packages"] = v.software_packages;
        } else if constexpr (std::is_same_v<T, msg::ErrorReply>) {
          j["type"] = "error";
          j["code"] = v.code;
          j["message"] = v.message;
        }
      },
      m);
  return j.dump();
}

inline UplMessage message_decode(const std::string& payload) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(payload);
    std::string type = j.at("type").get<std::string>();
    if (type == "consign") {
      msg::Consign m;
      m.ajo_bytes = j.at("ajo").get<std::string>();
      std::string mode = j.at("mode").get<std::string>();
      if (mode == "SYNC")
        m.mode = ConsignMode::SYNC;
      else if (mode == "ASYNC")
        m.mode = ConsignMode::ASYNC;
      else
        throw MalformedPayload("bad consign mode: " + mode);
      return m;
    }
    if (type == "poll") return msg::Poll{j.at("job_id").get<std::string>()};
    if (type == "retrieve_outcome")
      return msg::RetrieveOutcome{j.at("job_id").get<std::string>()};
    if (type == "kill") return msg::Kill{j.at("job_id").get<std::string>()};
    if (type == "list_vsites") return msg::ListVsites{};
    if (type == "describe_resources")
      return msg::DescribeResources{j.at("vsite").get<std::string>()};
    if (type == "consigned") return msg::Consigned{j.at("job_id").get<std::string>()};
    if (type == "outcome_reply")
      return msg::OutcomeReply{j.at("outcome").get<std::string>()};
    if (type == "status_reply") {
      msg::StatusReply m;
      m.job_id = j.at("job_id").get<std::string>();
      m.root = j.at("root").get<std::string>();
      for (const auto& [k, v] : j.at("statuses").items())
        m.statuses[k] = v.get<std::string>();
      return m;
    }
    if (type == "vsite_list") {
      msg::VsiteList m;
      for (const auto& n : j.at("names")) m.names.push_back(n.get<std::string>());
      return m;
    }
    if (type == "resource_reply") {
      msg::ResourceReply m;
      m.max_processors = j.at("max_processors").get<std::uint32_t>();
      m.max_memory_mib = j.at("max_memory_mib").get<std::uint64_t>();
      m.max_wall_time_s = j.at("max_wall_time_s").get<std::uint64_t>();
      for (const auto& p : j.at("software_packages"))
        m.software_packages.push_back(p.get<std::string>());
      return m;
    }
    if (type == "error")
      return msg::ErrorReply{j.at("code").get<std::string>(),
                             j.at("message").get<std::string>()};
    throw MalformedPayload("unknown message type: " + type);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedPayload(e.what());
  }
}

} // namespace minigrid
