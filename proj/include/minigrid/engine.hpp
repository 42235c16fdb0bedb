#pragma once

// DAG execution with completion-code propagation. A node starts only when
// all its predecessors are DONE(SUCCESSFUL); a failure poisons every
// transitive successor with NEVER_RUN; the untaken branch of a conditional
// is NEVER_TAKEN. Conditionals, repeat groups and nested jobs expand into
// child nodes at dispatch time; their own completion code reflects their
// children.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "minigrid/ajo.hpp"
#include "minigrid/errors.hpp"

namespace minigrid {

enum class CompletionCode { SUCCESSFUL, NOT_SUCCESSFUL, NEVER_RUN, NEVER_TAKEN };

inline std::string to_string(CompletionCode c) {
  switch (c) {
    case CompletionCode::SUCCESSFUL: return "SUCCESSFUL";
    case CompletionCode::NOT_SUCCESSFUL: return "NOT_SUCCESSFUL";
    case CompletionCode::NEVER_RUN: return "NEVER_RUN";
    case CompletionCode::NEVER_TAKEN: return "NEVER_TAKEN";
  }
  return "?";
}

struct ActionStatus {
  enum class Phase { PENDING, READY, EXECUTING, DONE };
  Phase phase = Phase::PENDING;
  CompletionCode code = CompletionCode::NEVER_RUN; // valid when DONE

  bool done() const { return phase == Phase::DONE; }
  bool done_with(CompletionCode c) const { return done() && code == c; }

  static ActionStatus pending() { return {}; }
  static ActionStatus ready() { return {Phase::READY, CompletionCode::NEVER_RUN}; }
  static ActionStatus executing() { return {Phase::EXECUTING, CompletionCode::NEVER_RUN}; }
  static ActionStatus done_as(CompletionCode c) { return {Phase::DONE, c}; }

  bool operator==(const ActionStatus& o) const {
    if (phase != o.phase) return false;
    return phase != Phase::DONE || code == o.code;
  }

  std::string str() const {
    switch (phase) {
      case Phase::PENDING: return "PENDING";
      case Phase::READY: return "READY";
      case Phase::EXECUTING: return "EXECUTING";
      case Phase::DONE: return "DONE(" + to_string(code) + ")";
    }
    return "?";
  }

  static ActionStatus parse(const std::string& s) {
    if (s == "PENDING") return pending();
    if (s == "READY") return ready();
    if (s == "EXECUTING") return executing();
    if (s.rfind("DONE(", 0) == 0 && s.back() == ')') {
      std::string c = s.substr(5, s.size() - 6);
      if (c == "SUCCESSFUL") return done_as(CompletionCode::SUCCESSFUL);
      if (c == "NOT_SUCCESSFUL") return done_as(CompletionCode::NOT_SUCCESSFUL);
      if (c == "NEVER_RUN") return done_as(CompletionCode::NEVER_RUN);
      if (c == "NEVER_TAKEN") return done_as(CompletionCode::NEVER_TAKEN);
    }
    throw MalformedEncoding("bad status string: " + s);
  }
};

inline bool transition_legal(const ActionStatus& from, const ActionStatus& to) {
  using P = ActionStatus::Phase;
  using C = CompletionCode;
  if (from.phase == P::PENDING && to.phase == P::READY) return true;
  if (from.phase == P::READY && to.phase == P::EXECUTING) return true;
  if (from.phase == P::EXECUTING && to.phase == P::DONE)
    return to.code == C::SUCCESSFUL || to.code == C::NOT_SUCCESSFUL;
  if (from.phase == P::PENDING && to.phase == P::DONE)
    return to.code == C::NEVER_RUN || to.code == C::NEVER_TAKEN;
  if (from.phase == P::READY && to.phase == P::DONE) return to.code == C::NEVER_RUN;
  return false;
}

struct TraceEntry {
  std::string action;
  ActionStatus from;
  ActionStatus to;
  std::chrono::system_clock::time_point at;
};

inline std::string format_timestamp(std::chrono::system_clock::time_point tp) {
  std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string format_trace(const std::vector<TraceEntry>& trace,
                                bool deterministic = false) {
  std::string out;
  for (const auto& e : trace) {
    auto tp = deterministic ? std::chrono::system_clock::time_point{} : e.at;
    out += format_timestamp(tp) + " " + e.action + " " + e.from.str() + " -> " +
           e.to.str() + "\n";
  }
  return out;
}

struct OutcomeRecord {
  std::string action_name;
  CompletionCode code = CompletionCode::NEVER_RUN;
  bool has_exit_code = false;
  int exit_code = 0;
  std::string stdout_bytes;
  std::string stderr_bytes;
  std::vector<std::string> log;
  std::vector<std::string> saved_files; // copy-to-outcome results
};

struct ExecResult {
  CompletionCode code = CompletionCode::NOT_SUCCESSFUL; // SUCCESSFUL or NOT_SUCCESSFUL only
  OutcomeRecord record;
};

// Seam between the engine and whatever actually performs leaf actions.
class ActionExecutor {
public:
  virtual ~ActionExecutor() = default;
  // Leaf actions only; the engine resolves conditionals, loops and nested
  // jobs itself. instance_name disambiguates repeat iterations.
  virtual ExecResult execute(ActionId id, const AbstractAction& action,
                             const std::string& instance_name) = 0;
  virtual bool uspace_file_exists(const std::string&) { return false; }
  virtual void cancel_all() {}
};

struct KillSwitch {
  std::atomic<bool> requested{false};
  void trigger() { requested.store(true); }
  bool triggered() const { return requested.load(); }
};

struct RunResult {
  std::map<std::string, ActionStatus> statuses; // by instance name
  std::map<std::string, OutcomeRecord> records;
  std::vector<TraceEntry> trace;
  CompletionCode root = CompletionCode::SUCCESSFUL;
};

using StatusObserver = std::function<void(const TraceEntry&)>;

// ---------------------------------------------------------------------------
// Flat-group helpers (also used stand-alone in tests)

using StatusMap = std::map<ActionId, ActionStatus>;

inline std::set<ActionId> ready_set(const ActionGroup& group, const StatusMap& statuses) {
  std::set<ActionId> out;
  for (const auto& [id, action] : group.actions) {
    if (statuses.at(id).phase != ActionStatus::Phase::PENDING) continue;
    bool all_ok = true;
    for (const auto& [p, s] : group.edges)
      if (s == id && !statuses.at(p).done_with(CompletionCode::SUCCESSFUL)) {
        all_ok = false;
        break;
      }
    if (all_ok) out.insert(id);
  }
  return out;
}

inline StatusMap apply_completion(const ActionGroup& group, StatusMap statuses,
                                  ActionId action, CompletionCode code) {
  if (code != CompletionCode::SUCCESSFUL && code != CompletionCode::NOT_SUCCESSFUL)
    throw IllegalTransition("completion code must be SUCCESSFUL or NOT_SUCCESSFUL");
  auto it = statuses.find(action);
  if (it == statuses.end() || it->second.phase != ActionStatus::Phase::EXECUTING)
    throw IllegalTransition("apply_completion on a non-executing action");
  it->second = ActionStatus::done_as(code);
  if (code == CompletionCode::NOT_SUCCESSFUL) {
    std::vector<ActionId> stack{action};
    while (!stack.empty()) {
      ActionId cur = stack.back();
      stack.pop_back();
      for (const auto& [p, s] : group.edges) {
        if (p != cur) continue;
        auto& st = statuses.at(s);
        if (st.phase == ActionStatus::Phase::PENDING) {
          st = ActionStatus::done_as(CompletionCode::NEVER_RUN);
          stack.push_back(s);
        } else if (st.done()) {
          stack.push_back(s); // already poisoned further down
        }
      }
    }
  }
  return statuses;
}

// ---------------------------------------------------------------------------
// Engine

class Engine {
public:
  Engine(const ActionGroup& group, ActionExecutor& executor, unsigned parallelism,
         std::shared_ptr<KillSwitch> kill = nullptr, StatusObserver observer = nullptr)
      : group_(group), executor_(executor),
        parallelism_(parallelism < 1 ? 1 : parallelism), kill_(std::move(kill)),
        observer_(std::move(observer)) {}

  RunResult run() {
    build_group(group_, kNoParent, 0, "");
    std::unique_lock<std::mutex> lock(mu_);
    for (;;) {
      if (kill_ && kill_->triggered() && !kill_applied_) apply_kill();
      advance(lock);
      if (open_nodes_ == 0 && executing_ == 0) break;
      if (executing_ == 0 && dispatchable_empty()) {
        // nothing running and nothing to do: only possible mid-kill teardown
        if (open_nodes_ == 0) break;
        apply_kill();
        continue;
      }
      // kill may be triggered from another thread without a notification,
      // so wake periodically to observe it
      cv_.wait_for(lock, std::chrono::milliseconds(20), [&] {
        return !completions_.empty() || (kill_ && kill_->triggered() && !kill_applied_);
      });
      drain_completions();
    }
    for (auto& t : workers_) t.join();
    workers_.clear();

    RunResult result;
    result.trace = trace_;
    bool failed = false;
    for (const auto& n : nodes_) {
      result.statuses[n.name] = n.status;
      OutcomeRecord rec = n.record;
      rec.action_name = n.name;
      rec.code = n.status.code;
      result.records[n.name] = std::move(rec);
      if (n.parent == kNoParent &&
          (n.status.done_with(CompletionCode::NOT_SUCCESSFUL) ||
           n.status.done_with(CompletionCode::NEVER_RUN)))
        failed = true;
    }
    result.root = failed ? CompletionCode::NOT_SUCCESSFUL : CompletionCode::SUCCESSFUL;
    return result;
  }

private:
  static constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

  enum class Kind { Leaf, Conditional, Repeat, NestedJob };

  struct Node {
    std::string name;
    ActionId id{};
    const AbstractAction* action = nullptr;
    Kind kind = Kind::Leaf;
    std::vector<std::size_t> preds, succs;
    std::size_t parent = kNoParent;
    int depth = 0;
    ActionStatus status;
    std::size_t children_open = 0;
    bool child_failed = false;
    std::uint32_t iteration = 0; // repeat groups
    OutcomeRecord record;
  };

  static Kind kind_of(const AbstractAction& a) {
    if (std::holds_alternative<ConditionalAction>(a)) return Kind::Conditional;
    if (std::holds_alternative<RepeatGroup>(a)) return Kind::Repeat;
    if (std::holds_alternative<AbstractJob>(a)) return Kind::NestedJob;
    return Kind::Leaf;
  }

  // Instantiates all actions of `g` as nodes under `parent`. Returns the
  // indices of the new nodes.
  std::vector<std::size_t> build_group(const ActionGroup& g, std::size_t parent,
                                       int base_depth, const std::string& prefix,
                                       const std::string& name_suffix = "") {
    std::map<ActionId, std::size_t> index;
    std::vector<std::size_t> created;
    for (ActionId id : topo_order(g)) {
      const AbstractAction& action = *find_action(g, id);
      Node n;
      n.id = id;
      n.action = &action;
      n.kind = kind_of(action);
      n.name = prefix + action.name() + name_suffix;
      n.parent = parent;
      int depth = base_depth;
      for (const auto& [p, s] : g.edges)
        if (s == id && index.count(p)) depth = std::max(depth, nodes_[index[p]].depth + 1);
      n.depth = depth;
      std::size_t ni = nodes_.size();
      for (const auto& [p, s] : g.edges)
        if (s == id && index.count(p)) {
          n.preds.push_back(index[p]);
          nodes_[index[p]].succs.push_back(ni);
        }
      nodes_.push_back(std::move(n));
      index[id] = ni;
      created.push_back(ni);
      ++open_nodes_;
    }
    return created;
  }

  void record_transition(std::size_t ni, ActionStatus to) {
    Node& n = nodes_[ni];
    TraceEntry e{n.name, n.status, to, std::chrono::system_clock::now()};
    n.status = to;
    trace_.push_back(e);
    if (observer_) observer_(e);
  }

  void mark_done(std::size_t ni, CompletionCode code) {
    record_transition(ni, ActionStatus::done_as(code));
    --open_nodes_;
    if (code == CompletionCode::NOT_SUCCESSFUL) poison_successors(ni);
    std::size_t parent = nodes_[ni].parent;
    if (parent != kNoParent) child_finished(parent, code);
  }

  void poison_successors(std::size_t ni) {
    std::vector<std::size_t> stack{ni};
    std::set<std::size_t> seen;
    while (!stack.empty()) {
      std::size_t cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      for (std::size_t s : nodes_[cur].succs) {
        Node& succ = nodes_[s];
        if (succ.status.phase == ActionStatus::Phase::PENDING) {
          record_transition(s, ActionStatus::done_as(CompletionCode::NEVER_RUN));
          --open_nodes_;
          std::size_t parent = succ.parent;
          if (parent != kNoParent) child_finished(parent, CompletionCode::NEVER_RUN);
        }
        stack.push_back(s);
      }
    }
  }

  void child_finished(std::size_t gi, CompletionCode code) {
    Node& g = nodes_[gi];
    if (code == CompletionCode::NOT_SUCCESSFUL || code == CompletionCode::NEVER_RUN)
      g.child_failed = true;
    if (--g.children_open > 0) return;
    if (g.child_failed) {
      mark_done(gi, CompletionCode::NOT_SUCCESSFUL);
      return;
    }
    if (g.kind == Kind::Repeat) {
      ++g.iteration;
      advance_repeat(gi);
      return;
    }
    mark_done(gi, CompletionCode::SUCCESSFUL);
  }

  // ----- condition evaluation -------------------------------------------

  bool eval_condition(std::size_t holder, const Condition& cond, std::uint32_t iteration) {
    if (const auto* it = std::get_if<IterationLessThan>(&cond)) return iteration < it->bound;
    if (const auto* fe = std::get_if<FileExists>(&cond))
      return executor_.uspace_file_exists(fe->uspace_path);
    const auto& ese = std::get<ExitStatusEquals>(cond);
    std::size_t parent = nodes_[holder].parent;
    // scan newest-first: repeat iterations re-instantiate the same ActionId
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.parent != parent || !(n.id == ese.action)) continue;
      if (!n.status.done() || !n.record.has_exit_code)
        throw ConditionUnevaluable("referenced action has no exit status: " + n.name);
      return n.record.exit_code == ese.code;
    }
    throw ConditionUnevaluable("condition references an action outside this group");
  }

  // ----- group-node expansion ---------------------------------------------

  void mark_never_taken(const ActionGroup& g, const std::string& prefix) {
    // Untaken branches never materialize as scheduler nodes; they are
    // recorded straight to DONE(NEVER_TAKEN), recursively.
    for (ActionId id : topo_order(g)) {
      const AbstractAction& action = *find_action(g, id);
      Node n;
      n.id = id;
      n.kind = kind_of(action);
      n.name = prefix + action.name();
      n.parent = kNoParent; // no effect on any group bookkeeping
      n.status = ActionStatus::done_as(CompletionCode::NEVER_TAKEN);
      nodes_.push_back(std::move(n));
      TraceEntry e{nodes_.back().name, ActionStatus::pending(),
                   nodes_.back().status, std::chrono::system_clock::now()};
      trace_.push_back(e);
      if (observer_) observer_(e);
      if (const auto* c = std::get_if<ConditionalAction>(&action)) {
        mark_never_taken(c->then_group, prefix + action.name() + "/then/");
        mark_never_taken(c->else_group, prefix + action.name() + "/else/");
      } else if (const auto* r = std::get_if<RepeatGroup>(&action)) {
        mark_never_taken(r->body, prefix + action.name() + "/");
      } else if (const auto* j = std::get_if<AbstractJob>(&action)) {
        mark_never_taken(j->group, prefix + action.name() + "/");
      }
    }
  }

  void expand_conditional(std::size_t ni) {
    const auto& cond = std::get<ConditionalAction>(*nodes_[ni].action);
    bool taken_then;
    try {
      taken_then = eval_condition(ni, cond.condition, 0);
    } catch (const ConditionUnevaluable& e) {
      nodes_[ni].record.log.push_back(e.what());
      record_transition(ni, ActionStatus::executing());
      mark_done(ni, CompletionCode::NOT_SUCCESSFUL);
      return;
    }
    const ActionGroup& taken = taken_then ? cond.then_group : cond.else_group;
    const ActionGroup& untaken = taken_then ? cond.else_group : cond.then_group;
    std::string base = nodes_[ni].name;
    mark_never_taken(untaken, base + (taken_then ? "/else/" : "/then/"));
    record_transition(ni, ActionStatus::executing());
    if (taken.actions.empty()) {
      mark_done(ni, CompletionCode::SUCCESSFUL);
      return;
    }
    auto children = build_group(taken, ni, nodes_[ni].depth + 1,
                                base + (taken_then ? "/then/" : "/else/"));
    nodes_[ni].children_open = children.size();
  }

  void advance_repeat(std::size_t ni) {
    Node& n = nodes_[ni];
    const auto& rg = std::get<RepeatGroup>(*n.action);
    bool more;
    try {
      more = n.iteration < rg.max_iterations && eval_condition(ni, rg.condition, n.iteration);
    } catch (const ConditionUnevaluable& e) {
      nodes_[ni].record.log.push_back(e.what());
      mark_done(ni, CompletionCode::NOT_SUCCESSFUL);
      return;
    }
    if (!more || rg.body.actions.empty()) {
      mark_done(ni, CompletionCode::SUCCESSFUL);
      return;
    }
    std::uint32_t iter = n.iteration;
    auto children = build_group(rg.body, ni, n.depth + 1, n.name + "/",
                                "#" + std::to_string(iter));
    nodes_[ni].children_open = children.size();
  }

  void expand_nested_job(std::size_t ni) {
    const auto& job = std::get<AbstractJob>(*nodes_[ni].action);
    record_transition(ni, ActionStatus::executing());
    if (job.group.actions.empty()) {
      mark_done(ni, CompletionCode::SUCCESSFUL);
      return;
    }
    auto children =
        build_group(job.group, ni, nodes_[ni].depth + 1, nodes_[ni].name + "/");
    nodes_[ni].children_open = children.size();
  }

  // ----- scheduling ---------------------------------------------------------

  bool preds_successful(const Node& n) const {
    for (std::size_t p : n.preds)
      if (!nodes_[p].status.done_with(CompletionCode::SUCCESSFUL)) return false;
    return true;
  }

  bool dispatchable_empty() const {
    for (const auto& n : nodes_)
      if (n.status.phase == ActionStatus::Phase::PENDING ||
          n.status.phase == ActionStatus::Phase::READY)
        return false;
    return true;
  }

  void advance(std::unique_lock<std::mutex>& lock) {
    bool progressed = true;
    while (progressed) {
      progressed = false;
      // promote pending nodes whose predecessors all succeeded
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].status.phase != ActionStatus::Phase::PENDING) continue;
        if (!preds_successful(nodes_[i])) continue;
        record_transition(i, ActionStatus::ready());
        progressed = true;
      }
      if (kill_ && kill_->triggered() && !kill_applied_) apply_kill();
      // expand group nodes immediately; queue leaves by (depth, name)
      std::vector<std::size_t> ready_leaves;
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].status.phase != ActionStatus::Phase::READY) continue;
        switch (nodes_[i].kind) {
          case Kind::Conditional:
            expand_conditional(i);
            progressed = true;
            break;
          case Kind::Repeat:
            record_transition(i, ActionStatus::executing());
            advance_repeat(i);
            progressed = true;
            break;
          case Kind::NestedJob:
            expand_nested_job(i);
            progressed = true;
            break;
          case Kind::Leaf:
            ready_leaves.push_back(i);
            break;
        }
      }
      std::sort(ready_leaves.begin(), ready_leaves.end(), [&](std::size_t a, std::size_t b) {
        if (nodes_[a].depth != nodes_[b].depth) return nodes_[a].depth < nodes_[b].depth;
        return nodes_[a].name < nodes_[b].name;
      });
      for (std::size_t i : ready_leaves) {
        if (executing_ >= parallelism_) break;
        dispatch(i, lock);
        progressed = true;
      }
      if (!completions_.empty()) {
        drain_completions();
        progressed = true;
      }
    }
  }

  void dispatch(std::size_t ni, std::unique_lock<std::mutex>&) {
    record_transition(ni, ActionStatus::executing());
    ++executing_;
    ActionId id = nodes_[ni].id;
    const AbstractAction* action = nodes_[ni].action;
    std::string name = nodes_[ni].name;
    workers_.emplace_back([this, ni, id, action, name] {
      ExecResult r;
      try {
        r = executor_.execute(id, *action, name);
        if (r.code != CompletionCode::SUCCESSFUL && r.code != CompletionCode::NOT_SUCCESSFUL)
          r.code = CompletionCode::NOT_SUCCESSFUL;
      } catch (const std::exception& e) {
        r.code = CompletionCode::NOT_SUCCESSFUL;
        r.record.log.push_back(std::string("executor error: ") + e.what());
      } catch (...) {
        r.code = CompletionCode::NOT_SUCCESSFUL;
        r.record.log.push_back("executor error: unknown");
      }
      std::lock_guard<std::mutex> lk(mu_);
      completions_.push_back({ni, std::move(r)});
      cv_.notify_all();
    });
  }

  void drain_completions() {
    while (!completions_.empty()) {
      auto [ni, r] = std::move(completions_.front());
      completions_.pop_front();
      --executing_;
      nodes_[ni].record = std::move(r.record);
      mark_done(ni, r.code);
    }
  }

  void apply_kill() {
    kill_applied_ = true;
    executor_.cancel_all();
    // Undispatched work becomes NEVER_RUN; executing actions get cancelled
    // by the executor and complete NOT_SUCCESSFUL on their own.
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      auto ph = nodes_[i].status.phase;
      if (ph == ActionStatus::Phase::PENDING || ph == ActionStatus::Phase::READY) {
        record_transition(i, ActionStatus::done_as(CompletionCode::NEVER_RUN));
        --open_nodes_;
        std::size_t parent = nodes_[i].parent;
        if (parent != kNoParent) child_finished(parent, CompletionCode::NEVER_RUN);
      }
    }
  }

  const ActionGroup& group_;
  ActionExecutor& executor_;
  unsigned parallelism_;
  std::shared_ptr<KillSwitch> kill_;
  StatusObserver observer_;

  std::vector<Node> nodes_;
  std::size_t open_nodes_ = 0;
  unsigned executing_ = 0;
  bool kill_applied_ = false;
  std::vector<TraceEntry> trace_;
  std::deque<std::pair<std::size_t, ExecResult>> completions_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_;
};

inline RunResult run(const ActionGroup& group, ActionExecutor& executor,
                     unsigned parallelism, std::shared_ptr<KillSwitch> kill = nullptr,
                     StatusObserver observer = nullptr) {
  Engine engine(group, executor, parallelism, std::move(kill), std::move(observer));
  return engine.run();
}

} // namespace minigrid
