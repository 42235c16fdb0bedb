#pragma once

// Canonical AJO document encoding. One fixed JSON layout, keys in sorted
// order, byte contents base64: equal jobs encode to identical bytes, so the
// encoding doubles as the structural-equality witness. Actions are referenced
// by name on the wire; ActionIds are regenerated on decode.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "minigrid/ajo.hpp"
#include "minigrid/base64.hpp"
#include "minigrid/errors.hpp"

namespace minigrid {

namespace codec_detail {

using nlohmann::json;

inline json condition_to_json(const ActionGroup& group, const Condition& cond) {
  json j;
  if (const auto* e = std::get_if<ExitStatusEquals>(&cond)) {
    j["kind"] = "exit_status_equals";
    const AbstractAction* ref = find_action(group, e->action);
    j["action"] = ref ? ref->name() : "";
    j["code"] = e->code;
  } else if (const auto* f = std::get_if<FileExists>(&cond)) {
    j["kind"] = "file_exists";
    j["path"] = f->uspace_path;
  } else {
    j["kind"] = "iteration_less_than";
    j["bound"] = std::get<IterationLessThan>(cond).bound;
  }
  return j;
}

inline json group_to_json(const ActionGroup& group);

inline json action_to_json(const ActionGroup& group, const AbstractAction& action) {
  json j;
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ExecuteScriptTask>) {
          j["type"] = "execute_script_task";
          j["name"] = a.name;
          const AbstractAction* ref = find_action(group, a.script_portfolio);
          j["script_portfolio"] = ref ? ref->name() : "";
          j["script_type"] = to_string(a.script_type);
          json r;
          r["processors"] = a.resources.processors;
          r["memory_mib"] = a.resources.memory_mib;
          r["wall_time_s"] = a.resources.wall_time_s;
          r["software_packages"] = a.resources.software_packages;
          j["resources"] = r;
        } else if constexpr (std::is_same_v<T, IncarnateFiles>) {
          j["type"] = "incarnate_files";
          j["name"] = a.name;
          json files = json::object();
          for (const auto& [fname, bytes] : a.files) files[fname] = base64::encode(bytes);
          j["files"] = files;
        } else if constexpr (std::is_same_v<T, MakePortfolio>) {
          j["type"] = "make_portfolio";
          j["name"] = a.name;
          j["file_names"] = a.file_names;
        } else if constexpr (std::is_same_v<T, CopyPortfolioToOutcome>) {
          j["type"] = "copy_portfolio_to_outcome";
          j["name"] = a.name;
          const AbstractAction* ref = find_action(group, a.target);
          j["target"] = ref ? ref->name() : "";
        } else if constexpr (std::is_same_v<T, ImportFile>) {
          j["type"] = "import_file";
          j["name"] = a.name;
          j["source"] = a.source;
          j["dest"] = a.dest;
        } else if constexpr (std::is_same_v<T, ExportFile>) {
          j["type"] = "export_file";
          j["name"] = a.name;
          j["source"] = a.source;
          j["dest"] = a.dest;
        } else if constexpr (std::is_same_v<T, SpoolFile>) {
          j["type"] = "spool_file";
          j["name"] = a.name;
          j["source"] = a.source;
        } else if constexpr (std::is_same_v<T, KillService>) {
          j["type"] = "kill_service";
          j["name"] = a.name;
          j["target_job"] = a.target_job;
        } else if constexpr (std::is_same_v<T, StatusService>) {
          j["type"] = "status_service";
          j["name"] = a.name;
          j["target_job"] = a.target_job;
        } else if constexpr (std::is_same_v<T, ConditionalAction>) {
          j["type"] = "conditional";
          j["name"] = a.name;
          j["condition"] = condition_to_json(group, a.condition);
          j["then"] = group_to_json(a.then_group);
          j["else"] = group_to_json(a.else_group);
        } else if constexpr (std::is_same_v<T, RepeatGroup>) {
          j["type"] = "repeat";
          j["name"] = a.name;
          j["condition"] = condition_to_json(group, a.condition);
          j["body"] = group_to_json(a.body);
          j["max_iterations"] = a.max_iterations;
        } else if constexpr (std::is_same_v<T, AbstractJob>) {
          j["type"] = "job";
          j["name"] = a.name;
          j["job_id"] = a.job_id;
          j["vsite"] = a.target_vsite;
          j["identity"] = a.identity;
          j["group"] = group_to_json(a.group);
        }
      },
      static_cast<const ActionVariant&>(action));
  return j;
}

inline json group_to_json(const ActionGroup& group) {
  json j;
  json actions = json::array();
  for (ActionId id : topo_order(group))
    actions.push_back(action_to_json(group, *find_action(group, id)));
  j["actions"] = actions;
  json edges = json::array();
  // sorted (pred name, succ name) pairs for a canonical byte stream
  std::vector<std::pair<std::string, std::string>> named;
  for (const auto& [p, s] : group.edges)
    named.emplace_back(find_action(group, p)->name(), find_action(group, s)->name());
  std::sort(named.begin(), named.end());
  for (const auto& [p, s] : named) edges.push_back(json::array({p, s}));
  j["edges"] = edges;
  return j;
}

inline const json& need(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw MalformedEncoding(std::string("missing field '") + key + "'");
  return *it;
}

inline std::string need_string(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_string()) throw MalformedEncoding(std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

inline ActionGroup group_from_json(const json& j);

inline ActionId resolve_name(const ActionGroup& group, const std::string& name,
                             const char* what) {
  auto id = find_by_name(group, name);
  if (!id) throw MalformedEncoding(std::string(what) + " references unknown action '" + name + "'");
  return *id;
}

inline Condition condition_from_json(const ActionGroup& group, const json& j) {
  std::string kind = need_string(j, "kind");
  if (kind == "exit_status_equals") {
    ExitStatusEquals c;
    c.action = resolve_name(group, need_string(j, "action"), "condition");
    c.code = need(j, "code").get<int>();
    return c;
  }
  if (kind == "file_exists") return FileExists{need_string(j, "path")};
  if (kind == "iteration_less_than")
    return IterationLessThan{need(j, "bound").get<std::uint32_t>()};
  throw MalformedEncoding("unknown condition kind: " + kind);
}

inline AbstractAction action_from_json(const ActionGroup& group, const json& j) {
  std::string type = need_string(j, "type");
  std::string name = need_string(j, "name");
  if (type == "execute_script_task") {
    ExecuteScriptTask a;
    a.name = name;
    a.script_portfolio = resolve_name(group, need_string(j, "script_portfolio"), "script task");
    a.script_type = script_type_from_string(need_string(j, "script_type"));
    const json& r = need(j, "resources");
    a.resources.processors = need(r, "processors").get<std::uint32_t>();
    a.resources.memory_mib = need(r, "memory_mib").get<std::uint64_t>();
    a.resources.wall_time_s = need(r, "wall_time_s").get<std::uint64_t>();
    for (const auto& p : need(r, "software_packages"))
      a.resources.software_packages.insert(p.get<std::string>());
    return a;
  }
  if (type == "incarnate_files") {
    IncarnateFiles a;
    a.name = name;
    const json& files = need(j, "files");
    if (!files.is_object()) throw MalformedEncoding("'files' is not an object");
    for (const auto& [fname, b64] : files.items())
      a.files[fname] = base64::decode(b64.get<std::string>());
    return a;
  }
  if (type == "make_portfolio") {
    MakePortfolio a;
    a.name = name;
    for (const auto& f : need(j, "file_names")) a.file_names.push_back(f.get<std::string>());
    return a;
  }
  if (type == "copy_portfolio_to_outcome") {
    CopyPortfolioToOutcome a;
    a.name = name;
    a.target = resolve_name(group, need_string(j, "target"), "copy-to-outcome");
    return a;
  }
  if (type == "import_file")
    return ImportFile{name, need_string(j, "source"), need_string(j, "dest")};
  if (type == "export_file")
    return ExportFile{name, need_string(j, "source"), need_string(j, "dest")};
  if (type == "spool_file") return SpoolFile{name, need_string(j, "source")};
  if (type == "kill_service") return KillService{name, need_string(j, "target_job")};
  if (type == "status_service") return StatusService{name, need_string(j, "target_job")};
  if (type == "conditional") {
    ConditionalAction a;
    a.name = name;
    a.condition = condition_from_json(group, need(j, "condition"));
    a.then_group = group_from_json(need(j, "then"));
    a.else_group = group_from_json(need(j, "else"));
    return a;
  }
  if (type == "repeat") {
    RepeatGroup a;
    a.name = name;
    a.condition = condition_from_json(group, need(j, "condition"));
    a.body = group_from_json(need(j, "body"));
    a.max_iterations = need(j, "max_iterations").get<std::uint32_t>();
    return a;
  }
  if (type == "job") {
    AbstractJob a;
    a.name = name;
    a.job_id = need_string(j, "job_id");
    a.target_vsite = need_string(j, "vsite");
    a.identity = need_string(j, "identity");
    a.group = group_from_json(need(j, "group"));
    return a;
  }
  throw MalformedEncoding("unknown action type: " + type);
}

inline ActionGroup group_from_json(const json& j) {
  ActionGroup group;
  const json& actions = need(j, "actions");
  if (!actions.is_array()) throw MalformedEncoding("'actions' is not an array");
  for (const auto& aj : actions) add_action(group, action_from_json(group, aj));
  const json& edges = need(j, "edges");
  if (!edges.is_array()) throw MalformedEncoding("'edges' is not an array");
  for (const auto& e : edges) {
    if (!e.is_array() || e.size() != 2)
      throw MalformedEncoding("edge is not a [pred, succ] pair");
    ActionId p = resolve_name(group, e[0].get<std::string>(), "edge");
    ActionId s = resolve_name(group, e[1].get<std::string>(), "edge");
    try {
      add_dependency(group, p, s);
    } catch (const Error& err) {
      throw MalformedEncoding(err.what());
    }
  }
  return group;
}

} // namespace codec_detail

inline std::string encode(const AbstractJob& job) {
  nlohmann::json j;
  j["job_id"] = job.job_id;
  j["name"] = job.name;
  j["vsite"] = job.target_vsite;
  j["identity"] = job.identity;
  nlohmann::json g = codec_detail::group_to_json(job.group);
  j["actions"] = g["actions"];
  j["edges"] = g["edges"];
  return j.dump();
}

inline AbstractJob decode(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedEncoding(e.what()); // carries byte position
  }
  if (!j.is_object()) throw MalformedEncoding("top level is not an object");
  try {
    AbstractJob job;
    job.job_id = codec_detail::need_string(j, "job_id");
    job.name = codec_detail::need_string(j, "name");
    job.target_vsite = codec_detail::need_string(j, "vsite");
    job.identity = codec_detail::need_string(j, "identity");
    nlohmann::json g;
    g["actions"] = codec_detail::need(j, "actions");
    g["edges"] = codec_detail::need(j, "edges");
    job.group = codec_detail::group_from_json(g);
    return job;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedEncoding(e.what());
  }
}

// Structural equality: equal canonical encodings.
inline bool structurally_equal(const AbstractJob& a, const AbstractJob& b) {
  return encode(a) == encode(b);
}

} // namespace minigrid
