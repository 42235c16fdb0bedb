#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "minigrid/ajo_codec.hpp"
#include "minigrid/base64.hpp"

#include "testutil.hpp"

using namespace minigrid;

namespace {

std::string random_bytes(std::mt19937& rng, std::size_t max_len = 64) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> byte(0, 255);
  std::string out;
  for (std::size_t i = len(rng); i-- > 0;) out += char(byte(rng));
  return out;
}

// Random action group with every action kind, optionally nesting one level.
ActionGroup random_group(std::mt19937& rng, int depth);

// Adds one random action to g. Reference-holding kinds (script task,
// copy-to-outcome) also get the precedence edge the model requires, so the
// result decodes in topological order.
ActionId add_random_action(std::mt19937& rng, ActionGroup& g, const std::string& name,
                           int depth, const std::vector<ActionId>& earlier) {
  std::uniform_int_distribution<int> kind(0, depth > 0 ? 11 : 8);
  switch (kind(rng)) {
    case 0: {
      IncarnateFiles a;
      a.name = name;
      std::uniform_int_distribution<int> nfiles(0, 3);
      for (int i = nfiles(rng); i-- > 0;)
        a.files["file" + std::to_string(i)] = random_bytes(rng);
      return add_action(g, a);
    }
    case 1: {
      MakePortfolio a;
      a.name = name;
      a.file_names = {"f1", "f2"};
      return add_action(g, a);
    }
    case 2:
      if (!earlier.empty()) {
        ExecuteScriptTask a;
        a.name = name;
        a.script_portfolio = earlier[rng() % earlier.size()];
        a.script_type = rng() % 2 ? ScriptType::SH : ScriptType::CSH;
        a.resources.processors = 1 + rng() % 4;
        a.resources.memory_mib = rng() % 2048;
        a.resources.wall_time_s = rng() % 600;
        if (rng() % 2) a.resources.software_packages.insert("pkg");
        ActionId ref = a.script_portfolio;
        ActionId id = add_action(g, a);
        add_dependency(g, ref, id);
        return id;
      }
      return add_action(g, SpoolFile{name, "s"});
    case 3:
      if (!earlier.empty()) {
        CopyPortfolioToOutcome a;
        a.name = name;
        a.target = earlier[rng() % earlier.size()];
        ActionId ref = a.target;
        ActionId id = add_action(g, a);
        add_dependency(g, ref, id);
        return id;
      }
      return add_action(g, SpoolFile{name, "s"});
    case 4: return add_action(g, ImportFile{name, "store/in", "local"});
    case 5: return add_action(g, ExportFile{name, "local", "store/out"});
    case 6: return add_action(g, SpoolFile{name, "keep.dat"});
    case 7: return add_action(g, KillService{name, "site-42"});
    case 8: return add_action(g, StatusService{name, "site-43"});
    case 9: {
      ConditionalAction a;
      a.name = name;
      a.condition = FileExists{"marker"};
      a.then_group = random_group(rng, depth - 1);
      a.else_group = random_group(rng, depth - 1);
      return add_action(g, a);
    }
    case 10: {
      RepeatGroup a;
      a.name = name;
      a.condition = IterationLessThan{std::uint32_t(rng() % 5)};
      a.max_iterations = 1 + rng() % 5;
      a.body = random_group(rng, depth - 1);
      return add_action(g, a);
    }
    default: {
      AbstractJob a;
      a.name = name;
      a.job_id = "nested-" + std::to_string(rng() % 1000);
      a.target_vsite = "inner";
      a.identity = "tok";
      a.group = random_group(rng, depth - 1);
      return add_action(g, a);
    }
  }
}

ActionGroup random_group(std::mt19937& rng, int depth) {
  ActionGroup g;
  std::uniform_int_distribution<int> nactions(0, 5);
  std::vector<ActionId> ids;
  int n = nactions(rng);
  for (int i = 0; i < n; ++i)
    ids.push_back(add_random_action(rng, g, "n" + std::to_string(i), depth, ids));
  std::bernoulli_distribution edge(0.4);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j)
      if (edge(rng) && !g.edges.count({ids[i], ids[j]}))
        add_dependency(g, ids[i], ids[j]);
  return g;
}

AbstractJob random_job(std::mt19937& rng) {
  AbstractJob job;
  job.job_id = "job-" + std::to_string(rng() % 100000);
  job.name = "random";
  job.target_vsite = "site" + std::to_string(rng() % 3);
  job.identity = "token" + std::to_string(rng() % 3);
  job.group = random_group(rng, 2);
  return job;
}

} // namespace

TEST_CASE("base64 round trip and rejection") {
  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::string bytes = random_bytes(rng, 100);
    REQUIRE(base64::decode(base64::encode(bytes)) == bytes);
  }
  REQUIRE_THROWS_AS(base64::decode("not*valid"), MalformedEncoding);
  REQUIRE_THROWS_AS(base64::decode("abc"), MalformedEncoding); // bad length
}

TEST_CASE("encode/decode round-trips 1000 random jobs") {
  std::mt19937 rng(42);
  for (int i = 0; i < 1000; ++i) {
    AbstractJob job = random_job(rng);
    std::string bytes = encode(job);
    AbstractJob back = decode(bytes);
    REQUIRE(structurally_equal(job, back));
    // canonical form: re-encoding reproduces the exact bytes
    REQUIRE(encode(back) == bytes);
  }
}

TEST_CASE("decode diagnostics carry a position or field name") {
  try {
    decode("{\"job_id\": ");
    FAIL("expected MalformedEncoding");
  } catch (const MalformedEncoding& e) {
    REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("parse error"));
    REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("column"));
  }
  REQUIRE_THROWS_WITH(decode("{}"), Catch::Matchers::ContainsSubstring("job_id"));
  REQUIRE_THROWS_AS(decode("[1,2,3]"), MalformedEncoding);
  REQUIRE_THROWS_AS(decode(""), MalformedEncoding);
}

TEST_CASE("decode rejects structural garbage without crashing") {
  std::string good = encode(new_job("j", "v", "i"));
  // unknown action type
  REQUIRE_THROWS_AS(
      decode(R"({"actions":[{"type":"warp","name":"x"}],"edges":[],"identity":"i","job_id":"1","name":"j","vsite":"v"})"),
      MalformedEncoding);
  // edge to a nonexistent action
  REQUIRE_THROWS_AS(
      decode(R"({"actions":[{"type":"spool_file","name":"a","source":"f"}],"edges":[["a","ghost"]],"identity":"i","job_id":"1","name":"j","vsite":"v"})"),
      MalformedEncoding);
  // edge pair wrong arity
  REQUIRE_THROWS_AS(
      decode(R"({"actions":[],"edges":[["a"]],"identity":"i","job_id":"1","name":"j","vsite":"v"})"),
      MalformedEncoding);
  // bad base64 in file content
  REQUIRE_THROWS_AS(
      decode(R"({"actions":[{"type":"incarnate_files","name":"a","files":{"f":"%%%"}}],"edges":[],"identity":"i","job_id":"1","name":"j","vsite":"v"})"),
      MalformedEncoding);
  // random mutations of a valid document must throw or decode, never crash
  std::mt19937 rng(1);
  for (int i = 0; i < 500; ++i) {
    std::string mutated = good;
    mutated[rng() % mutated.size()] = char(rng() % 256);
    try {
      (void)decode(mutated);
    } catch (const MalformedEncoding&) {
    }
  }
}

TEST_CASE("structural equality ignores regenerated ids but not content") {
  AbstractJob a = new_job("j", "v", "i");
  a.job_id = "fixed";
  ActionId inf = add_action(a.group, IncarnateFiles{"inf", {{"s", "data"}}});
  ActionId mp = add_action(a.group, MakePortfolio{"mp", {"s"}});
  add_dependency(a.group, inf, mp);

  AbstractJob b = decode(encode(a));
  REQUIRE(structurally_equal(a, b));
  std::get<IncarnateFiles>(b.group.actions.begin()->second).files["s"] = "DATA";
  REQUIRE_FALSE(structurally_equal(a, b));
}
