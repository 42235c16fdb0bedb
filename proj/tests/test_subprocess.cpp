#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <fstream>
#include <thread>

#include "minigrid/subprocess.hpp"
#include "minigrid/tsi.hpp"

#include "testutil.hpp"

using namespace minigrid;

TEST_CASE("captures stdout, stderr and the exit code") {
  auto r = run_subprocess({"/bin/sh", "-c", "echo out; echo err >&2; exit 3"}, "", {}, 0);
  REQUIRE(r.exit_code == 3);
  REQUIRE(r.stdout_bytes == "out\n");
  REQUIRE(r.stderr_bytes == "err\n");
  REQUIRE_FALSE(r.timed_out);
  REQUIRE_FALSE(r.cancelled);
}

TEST_CASE("runs in the requested working directory with extra environment") {
  testutil::TempDir dir;
  auto r = run_subprocess({"/bin/sh", "-c", "pwd; printf %s \"$MARKER\""},
                          dir.str(), {{"MARKER", "hello"}}, 0);
  REQUIRE(r.exit_code == 0);
  REQUIRE_THAT(r.stdout_bytes, Catch::Matchers::StartsWith(dir.str()));
  REQUIRE_THAT(r.stdout_bytes, Catch::Matchers::EndsWith("hello"));
}

TEST_CASE("wall-time limit kills the process tree") {
  auto start = std::chrono::steady_clock::now();
  auto r = run_subprocess({"/bin/sh", "-c", "sleep 30"}, "", {}, 1);
  auto elapsed = std::chrono::steady_clock::now() - start;
  REQUIRE(r.timed_out);
  REQUIRE(r.exit_code == 128 + SIGKILL);
  REQUIRE(elapsed < std::chrono::seconds(5));
}

TEST_CASE("cancellation kills a running process") {
  CancelFlag cancel = std::make_shared<std::atomic<bool>>(false);
  std::thread trigger([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    cancel->store(true);
  });
  auto start = std::chrono::steady_clock::now();
  auto r = run_subprocess({"/bin/sh", "-c", "sleep 30"}, "", {}, 0, cancel);
  trigger.join();
  REQUIRE(r.cancelled);
  REQUIRE(r.exit_code == 128 + SIGKILL);
  REQUIRE(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
}

TEST_CASE("missing executable reports exit 127") {
  auto r = run_subprocess({"/no/such/binary"}, "", {}, 0);
  REQUIRE(r.exit_code == 127);
}

TEST_CASE("simulated TSI replays scripted responses deterministically") {
  SimulatedTsi tsi;
  tsi.add_response("date\nhostname\n", {0, "Tue Jan 1\nnode01\n", ""});
  TsiRequest req;
  req.script_bytes = "date\nhostname\n";
  for (int i = 0; i < 3; ++i) {
    auto r = tsi.run(req);
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.stdout_bytes == "Tue Jan 1\nnode01\n");
  }
  // unknown script, no default: command-not-found semantics
  TsiRequest other;
  other.script_bytes = "something else";
  REQUIRE(tsi.run(other).exit_code == 127);
  // with a default entry the fallback answers instead
  SimulatedTsi with_default{{{"default", {7, "fallback", ""}}}};
  REQUIRE(with_default.run(other).exit_code == 7);
  REQUIRE(with_default.run(other).stdout_bytes == "fallback");
}

TEST_CASE("simulated response tables load from a file") {
  testutil::TempDir dir;
  std::string script = "exit 0\n";
  {
    std::ofstream f(dir.path() / "table.json");
    f << "{\"" << content_hash(script) << "\": {\"exit\": 0, \"stdout\": \"ok\"}}";
  }
  SimulatedTsi tsi{SimulatedTsi::from_file((dir.path() / "table.json").string())};
  TsiRequest req;
  req.script_bytes = script;
  REQUIRE(tsi.run(req).stdout_bytes == "ok");
  REQUIRE_THROWS_AS(SimulatedTsi::from_file(dir.sub("nope.json")), ConfigError);
}
