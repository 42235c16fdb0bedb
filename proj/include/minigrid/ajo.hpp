#pragma once

// Abstract job model: a job is a DAG of abstract actions that can be shipped
// to a remote site and incarnated there. Actions are identified internally by
// generated ActionIds; the user-facing identity is the action name, which is
// unique within its group.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "minigrid/errors.hpp"

namespace minigrid {

inline constexpr std::size_t kInlineFileCap = 4 * 1024 * 1024;

struct ActionId {
  std::uint64_t value = 0;
  auto operator<=>(const ActionId&) const = default;
};

using JobId = std::string;

inline ActionId next_action_id() {
  static std::atomic<std::uint64_t> counter{1};
  return ActionId{counter.fetch_add(1)};
}

enum class ScriptType { SH, CSH };

inline std::string to_string(ScriptType t) {
  return t == ScriptType::SH ? "SH" : "CSH";
}

inline ScriptType script_type_from_string(const std::string& s) {
  if (s == "SH") return ScriptType::SH;
  if (s == "CSH") return ScriptType::CSH;
  throw MalformedEncoding("unknown script type: " + s);
}

struct ResourceRequest {
  std::uint32_t processors = 1;
  std::uint64_t memory_mib = 0;
  std::uint64_t wall_time_s = 0;
  std::set<std::string> software_packages;

  bool operator==(const ResourceRequest&) const = default;
};

struct Portfolio {
  std::string portfolio_id;
  std::vector<std::string> file_names;
};

// Condition language for conditionals and loops. The three predicates cover
// branch-on-exit-code, branch-on-file and bounded iteration.
struct ExitStatusEquals {
  ActionId action;
  int code = 0;
  bool operator==(const ExitStatusEquals&) const = default;
};
struct FileExists {
  std::string uspace_path;
  bool operator==(const FileExists&) const = default;
};
struct IterationLessThan {
  std::uint32_t bound = 0;
  bool operator==(const IterationLessThan&) const = default;
};
using Condition = std::variant<ExitStatusEquals, FileExists, IterationLessThan>;

struct AbstractAction;

struct ActionGroup {
  std::map<ActionId, AbstractAction> actions;
  std::set<std::pair<ActionId, ActionId>> edges;

  ActionGroup() = default;
  ActionGroup(const ActionGroup&);
  ActionGroup(ActionGroup&&) noexcept;
  ActionGroup& operator=(const ActionGroup&);
  ActionGroup& operator=(ActionGroup&&) noexcept;
  ~ActionGroup();

  bool operator==(const ActionGroup&) const;
};

struct ExecuteScriptTask {
  std::string name;
  ActionId script_portfolio;
  ScriptType script_type = ScriptType::SH;
  ResourceRequest resources;
  bool operator==(const ExecuteScriptTask&) const = default;
};

struct IncarnateFiles {
  std::string name;
  std::map<std::string, std::string> files; // file name -> raw bytes
  bool operator==(const IncarnateFiles&) const = default;
};

struct MakePortfolio {
  std::string name;
  std::vector<std::string> file_names;
  bool operator==(const MakePortfolio&) const = default;
};

struct CopyPortfolioToOutcome {
  std::string name;
  ActionId target; // a MakePortfolio in the same group
  bool operator==(const CopyPortfolioToOutcome&) const = default;
};

struct ImportFile {
  std::string name;
  std::string source; // site-store (Xspace) path
  std::string dest;   // uspace file name
  bool operator==(const ImportFile&) const = default;
};

struct ExportFile {
  std::string name;
  std::string source; // uspace file name
  std::string dest;   // site-store path
  bool operator==(const ExportFile&) const = default;
};

struct SpoolFile {
  std::string name;
  std::string source; // uspace file name
  bool operator==(const SpoolFile&) const = default;
};

struct KillService {
  std::string name;
  JobId target_job;
  bool operator==(const KillService&) const = default;
};

struct StatusService {
  std::string name;
  JobId target_job;
  bool operator==(const StatusService&) const = default;
};

struct ConditionalAction {
  std::string name;
  Condition condition;
  ActionGroup then_group;
  ActionGroup else_group;
  bool operator==(const ConditionalAction&) const = default;
};

struct RepeatGroup {
  std::string name;
  ActionGroup body;
  Condition condition;
  std::uint32_t max_iterations = 1;
  bool operator==(const RepeatGroup&) const = default;
};

struct AbstractJob {
  JobId job_id;
  std::string name;
  ActionGroup group;
  std::string target_vsite;
  std::string identity;
  bool operator==(const AbstractJob&) const = default;
};

using ActionVariant =
    std::variant<ExecuteScriptTask, IncarnateFiles, MakePortfolio,
                 CopyPortfolioToOutcome, ImportFile, ExportFile, SpoolFile,
                 KillService, StatusService, ConditionalAction, RepeatGroup,
                 AbstractJob>;

struct AbstractAction : ActionVariant {
  using ActionVariant::ActionVariant;

  const std::string& name() const {
    return std::visit([](const auto& a) -> const std::string& {
      if constexpr (std::is_same_v<std::decay_t<decltype(a)>, AbstractJob>)
        return a.name;
      else
        return a.name;
    }, static_cast<const ActionVariant&>(*this));
  }
};

inline ActionGroup::ActionGroup(const ActionGroup&) = default;
inline ActionGroup::ActionGroup(ActionGroup&&) noexcept = default;
inline ActionGroup& ActionGroup::operator=(const ActionGroup&) = default;
inline ActionGroup& ActionGroup::operator=(ActionGroup&&) noexcept = default;
inline ActionGroup::~ActionGroup() = default;
inline bool ActionGroup::operator==(const ActionGroup& o) const {
  return actions == o.actions && edges == o.edges;
}

inline JobId next_job_id(const std::string& hint = "job") {
  static std::atomic<std::uint64_t> counter{1};
  return hint + "-" + std::to_string(counter.fetch_add(1));
}

inline AbstractJob new_job(const std::string& name, const std::string& target_vsite,
                           const std::string& identity) {
  AbstractJob job;
  job.job_id = next_job_id();
  job.name = name;
  job.target_vsite = target_vsite;
  job.identity = identity;
  return job;
}

inline const AbstractAction* find_action(const ActionGroup& group, ActionId id) {
  auto it = group.actions.find(id);
  return it == group.actions.end() ? nullptr : &it->second;
}

inline std::optional<ActionId> find_by_name(const ActionGroup& group,
                                            const std::string& name) {
  for (const auto& [id, action] : group.actions)
    if (action.name() == name) return id;
  return std::nullopt;
}

inline ActionId add_action(ActionGroup& group, AbstractAction action) {
  if (find_by_name(group, action.name())) throw DuplicateName(action.name());
  ActionId id = next_action_id();
  group.actions.emplace(id, std::move(action));
  return id;
}

namespace detail {

// True if `to` is reachable from `from` along existing edges.
inline bool reachable(const ActionGroup& group, ActionId from, ActionId to) {
  if (from == to) return true;
  std::vector<ActionId> stack{from};
  std::set<ActionId> seen;
  while (!stack.empty()) {
    ActionId cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    for (const auto& [p, s] : group.edges) {
      if (p == cur) {
        if (s == to) return true;
        stack.push_back(s);
      }
    }
  }
  return false;
}

} // namespace detail

inline void add_dependency(ActionGroup& group, ActionId pred, ActionId succ) {
  auto pit = group.actions.find(pred);
  auto sit = group.actions.find(succ);
  if (pit == group.actions.end()) throw UnknownAction("predecessor id");
  if (sit == group.actions.end()) throw UnknownAction("successor id");
  if (pred == succ) throw SelfEdge(pit->second.name());
  if (detail::reachable(group, succ, pred))
    throw CycleDetected(pit->second.name(), sit->second.name());
  group.edges.emplace(pred, succ);
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline bool path_is_safe(const std::string& path) {
  if (path.empty()) return false;
  if (path.front() == '/') return false;
  if (path.find('\0') != std::string::npos) return false;
  // reject any ".." segment
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t end = path.find('/', start);
    if (end == std::string::npos) end = path.size();
    std::string seg = path.substr(start, end - start);
    if (seg == "..") return false;
    start = end + 1;
  }
  return true;
}

inline bool precedes(const ActionGroup& group, ActionId before, ActionId after) {
  return before != after && reachable(group, before, after);
}

inline void validate_condition(const ActionGroup& group, ActionId holder,
                               const Condition& cond, const std::string& where,
                               std::vector<std::string>& out) {
  if (const auto* ese = std::get_if<ExitStatusEquals>(&cond)) {
    if (!group.actions.count(ese->action))
      out.push_back(where + ": condition references an unknown action");
    else if (!precedes(group, ese->action, holder))
      out.push_back(where + ": condition references an action that does not precede it");
  }
}

inline void validate_group(const ActionGroup& group, const std::string& where,
                           std::vector<std::string>& out);

inline void validate_action(const ActionGroup& group, ActionId id,
                            const AbstractAction& action, const std::string& where,
                            std::vector<std::string>& out) {
  if (action.name().empty()) out.push_back(where + ": empty action name");
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ExecuteScriptTask>) {
          if (a.resources.processors < 1)
            out.push_back(where + ": processors must be >= 1");
          const AbstractAction* ref = find_action(group, a.script_portfolio);
          if (!ref || !std::holds_alternative<MakePortfolio>(*ref))
            out.push_back(where + ": dangling portfolio reference");
          else if (!precedes(group, a.script_portfolio, id))
            out.push_back(where + ": dangling portfolio reference (portfolio does not precede task)");
          else if (std::get<MakePortfolio>(*ref).file_names.empty())
            out.push_back(where + ": referenced portfolio names no files");
        } else if constexpr (std::is_same_v<T, CopyPortfolioToOutcome>) {
          const AbstractAction* ref = find_action(group, a.target);
          if (!ref || !std::holds_alternative<MakePortfolio>(*ref))
            out.push_back(where + ": dangling portfolio reference");
          else if (!precedes(group, a.target, id))
            out.push_back(where + ": dangling portfolio reference (portfolio does not precede copy)");
          else if (std::get<MakePortfolio>(*ref).file_names.empty())
            out.push_back(where + ": referenced portfolio names no files");
        } else if constexpr (std::is_same_v<T, IncarnateFiles>) {
          for (const auto& [fname, bytes] : a.files) {
            if (!path_is_safe(fname))
              out.push_back(where + ": unsafe file name '" + fname + "'");
            if (bytes.size() > kInlineFileCap)
              out.push_back(where + ": inline file '" + fname + "' exceeds 4 MiB cap");
          }
        } else if constexpr (std::is_same_v<T, MakePortfolio>) {
          for (const auto& fname : a.file_names)
            if (!path_is_safe(fname))
              out.push_back(where + ": unsafe file name '" + fname + "'");
        } else if constexpr (std::is_same_v<T, ImportFile>) {
          if (!path_is_safe(a.dest))
            out.push_back(where + ": unsafe uspace path '" + a.dest + "'");
        } else if constexpr (std::is_same_v<T, ExportFile>) {
          if (!path_is_safe(a.source))
            out.push_back(where + ": unsafe uspace path '" + a.source + "'");
        } else if constexpr (std::is_same_v<T, SpoolFile>) {
          if (!path_is_safe(a.source))
            out.push_back(where + ": unsafe uspace path '" + a.source + "'");
        } else if constexpr (std::is_same_v<T, ConditionalAction>) {
          validate_condition(group, id, a.condition, where, out);
          if (const auto* fe = std::get_if<FileExists>(&a.condition); fe && !path_is_safe(fe->uspace_path))
            out.push_back(where + ": unsafe uspace path in condition");
          validate_group(a.then_group, where + "/then", out);
          validate_group(a.else_group, where + "/else", out);
        } else if constexpr (std::is_same_v<T, RepeatGroup>) {
          if (a.max_iterations < 1)
            out.push_back(where + ": max_iterations must be >= 1");
          validate_condition(group, id, a.condition, where, out);
          validate_group(a.body, where + "/body", out);
        } else if constexpr (std::is_same_v<T, AbstractJob>) {
          if (a.name.empty()) out.push_back(where + ": empty job name");
          validate_group(a.group, where + "/" + a.name, out);
        }
      },
      static_cast<const ActionVariant&>(action));
}

inline void validate_group(const ActionGroup& group, const std::string& where,
                           std::vector<std::string>& out) {
  std::set<std::string> names;
  for (const auto& [id, action] : group.actions) {
    if (!names.insert(action.name()).second)
      out.push_back(where + ": duplicate action name '" + action.name() + "'");
  }
  for (const auto& [p, s] : group.edges) {
    if (!group.actions.count(p) || !group.actions.count(s)) {
      out.push_back(where + ": edge endpoint not in group");
      continue;
    }
    if (p == s) out.push_back(where + ": self edge on '" + find_action(group, p)->name() + "'");
  }
  // cycle check via Kahn's algorithm
  std::map<ActionId, int> indeg;
  for (const auto& [id, a] : group.actions) indeg[id] = 0;
  for (const auto& [p, s] : group.edges)
    if (indeg.count(p) && indeg.count(s)) ++indeg[s];
  std::vector<ActionId> queue;
  for (const auto& [id, d] : indeg)
    if (d == 0) queue.push_back(id);
  std::size_t removed = 0;
  while (!queue.empty()) {
    ActionId cur = queue.back();
    queue.pop_back();
    ++removed;
    for (const auto& [p, s] : group.edges)
      if (p == cur && indeg.count(s) && --indeg[s] == 0) queue.push_back(s);
  }
  if (removed != group.actions.size()) out.push_back(where + ": dependency cycle");

  for (const auto& [id, action] : group.actions)
    validate_action(group, id, action, where + "/" + action.name(), out);
}

} // namespace detail

inline std::vector<std::string> validate(const AbstractJob& job) {
  std::vector<std::string> out;
  if (job.name.empty()) out.push_back("job: empty name");
  if (job.job_id.empty()) out.push_back("job: empty job_id");
  detail::validate_group(job.group, job.name.empty() ? "job" : job.name, out);
  return out;
}

// Deterministic topological order: Kahn's algorithm with ties broken by
// action name. Throws CycleDetected on cyclic input.
inline std::vector<ActionId> topo_order(const ActionGroup& group) {
  std::map<ActionId, int> indeg;
  for (const auto& [id, a] : group.actions) indeg[id] = 0;
  for (const auto& [p, s] : group.edges) ++indeg.at(s);
  auto by_name = [&](ActionId a, ActionId b) {
    return find_action(group, a)->name() < find_action(group, b)->name();
  };
  std::vector<ActionId> ready;
  for (const auto& [id, d] : indeg)
    if (d == 0) ready.push_back(id);
  std::sort(ready.begin(), ready.end(), by_name);
  std::vector<ActionId> order;
  while (!ready.empty()) {
    ActionId cur = ready.front();
    ready.erase(ready.begin());
    order.push_back(cur);
    std::vector<ActionId> newly;
    for (const auto& [p, s] : group.edges)
      if (p == cur && --indeg.at(s) == 0) newly.push_back(s);
    std::sort(newly.begin(), newly.end(), by_name);
    ready.insert(ready.end(), newly.begin(), newly.end());
    std::inplace_merge(ready.begin(), ready.end() - newly.size(), ready.end(), by_name);
  }
  if (order.size() != group.actions.size())
    throw CycleDetected("group", "group");
  return order;
}

} // namespace minigrid
