#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <thread>

#include "minigrid/client.hpp"
#include "minigrid/gateway.hpp"

#include "testutil.hpp"

using namespace minigrid;
using testutil::TempDir;
using testutil::make_staging_job;
using testutil::make_vsite_config;

namespace {

struct Rig {
  TempDir dir;
  std::unique_ptr<Gateway> gateway;
  std::string addr;

  explicit Rig(int nsites = 1) {
    std::vector<std::shared_ptr<Vsite>> vsites;
    const char* names[] = {"alpha", "beta"};
    for (int i = 0; i < nsites; ++i)
      vsites.push_back(std::make_shared<Vsite>(make_vsite_config(dir, names[i])));
    gateway = std::make_unique<Gateway>(std::move(vsites));
    std::uint16_t port = gateway->start({"127.0.0.1", 0});
    addr = "127.0.0.1:" + std::to_string(port);
  }
  ~Rig() { gateway->stop(); }
};

} // namespace

TEST_CASE("vsites are listed and described over TCP") {
  Rig rig(2);
  GatewayClient client(rig.addr);
  REQUIRE(client.list_vsites() == std::vector<std::string>{"alpha", "beta"});
  auto r = client.describe("alpha");
  REQUIRE(r.max_processors == 4);
  REQUIRE(r.software_packages == std::vector<std::string>{"coreutils"});
  REQUIRE_THROWS_WITH(client.describe("gamma"),
                      Catch::Matchers::ContainsSubstring("gamma"));
}

TEST_CASE("synchronous consign returns the full outcome") {
  Rig rig;
  GatewayClient client(rig.addr);
  AbstractJob job = make_staging_job("alpha", "secret-token");
  Outcome outcome = client.consign_sync(encode(job));
  REQUIRE(outcome.root == CompletionCode::SUCCESSFUL);
  REQUIRE(outcome.files_mapping.at("cpto") == std::vector<std::string>{"out.txt"});
}

TEST_CASE("asynchronous consign: poll until done, then retrieve") {
  Rig rig;
  GatewayClient client(rig.addr);
  AbstractJob job = make_staging_job("alpha", "secret-token");
  std::string job_id = client.consign_async(encode(job));
  REQUIRE(job_id.rfind("alpha-", 0) == 0);

  msg::StatusReply st = client.poll(job_id);
  for (int i = 0; i < 200 && st.root == "ACTIVE"; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    st = client.poll(job_id);
  }
  REQUIRE(st.root == "DONE(SUCCESSFUL)");
  REQUIRE(st.statuses.at("est") == "DONE(SUCCESSFUL)");
  Outcome outcome = client.outcome(job_id);
  REQUIRE(outcome.root == CompletionCode::SUCCESSFUL);
}

TEST_CASE("retrieving the outcome of a running job is refused") {
  Rig rig;
  GatewayClient client(rig.addr);
  AbstractJob job = make_staging_job("alpha", "secret-token", "sleep 5\n", ScriptType::SH,
                                     {"script"});
  std::string job_id = client.consign_async(encode(job));
  try {
    client.outcome(job_id);
    FAIL("expected JOB_ACTIVE");
  } catch (const Error& e) {
    REQUIRE(e.code() == "JOB_ACTIVE");
  }
  client.kill(job_id);
}

TEST_CASE("consign errors map to protocol error replies") {
  Rig rig;
  GatewayClient client(rig.addr);
  SECTION("unknown vsite") {
    AbstractJob job = make_staging_job("nowhere", "secret-token");
    try {
      client.consign_sync(encode(job));
      FAIL("expected UNKNOWN_VSITE");
    } catch (const Error& e) {
      REQUIRE(e.code() == "UNKNOWN_VSITE");
    }
  }
  SECTION("bad token") {
    AbstractJob job = make_staging_job("alpha", "nope");
    try {
      client.consign_sync(encode(job));
      FAIL("expected NOT_AUTHORIZED");
    } catch (const Error& e) {
      REQUIRE(e.code() == "NOT_AUTHORIZED");
    }
  }
  SECTION("malformed document") {
    try {
      client.consign_sync("{not json");
      FAIL("expected INVALID_AJO");
    } catch (const Error& e) {
      REQUIRE(e.code() == "INVALID_AJO");
    }
  }
  SECTION("invalid job") {
    AbstractJob job = make_staging_job("alpha", "secret-token");
    job.group.edges.clear(); // portfolio references no longer preceded
    try {
      client.consign_sync(encode(job));
      FAIL("expected INVALID_AJO");
    } catch (const Error& e) {
      REQUIRE(e.code() == "INVALID_AJO");
    }
  }
  SECTION("over-asking job") {
    AbstractJob job = make_staging_job("alpha", "secret-token");
    for (auto& [id, action] : job.group.actions)
      if (auto* est = std::get_if<ExecuteScriptTask>(&action))
        est->resources.memory_mib = 1 << 30;
    try {
      client.consign_sync(encode(job));
      FAIL("expected UNSUPPORTED_RESOURCE");
    } catch (const Error& e) {
      REQUIRE(e.code() == "UNSUPPORTED_RESOURCE");
    }
  }
  SECTION("unknown job ids") {
    try {
      client.poll("alpha-999");
      FAIL("expected UNKNOWN_JOB");
    } catch (const Error& e) {
      REQUIRE(e.code() == "UNKNOWN_JOB");
    }
  }
}

TEST_CASE("kill over TCP stops a running job and is idempotent") {
  Rig rig;
  GatewayClient client(rig.addr);
  AbstractJob job = new_job("killable", "alpha", "secret-token");
  ActionId inf = add_action(job.group, IncarnateFiles{"s1-files", {{"s1", "date\n"},
                                                                   {"s2", "sleep 30\n"},
                                                                   {"s3", "date\n"}}});
  ActionId mp1 = add_action(job.group, MakePortfolio{"p1", {"s1"}});
  ActionId mp2 = add_action(job.group, MakePortfolio{"p2", {"s2"}});
  ActionId mp3 = add_action(job.group, MakePortfolio{"p3", {"s3"}});
  ExecuteScriptTask t1{"stage1", mp1, ScriptType::SH, {}};
  ExecuteScriptTask t2{"stage2", mp2, ScriptType::SH, {}};
  ExecuteScriptTask t3{"stage3", mp3, ScriptType::SH, {}};
  ActionId s1 = add_action(job.group, t1);
  ActionId s2 = add_action(job.group, t2);
  ActionId s3 = add_action(job.group, t3);
  add_dependency(job.group, inf, mp1);
  add_dependency(job.group, inf, mp2);
  add_dependency(job.group, inf, mp3);
  add_dependency(job.group, mp1, s1);
  add_dependency(job.group, mp2, s2);
  add_dependency(job.group, mp3, s3);
  add_dependency(job.group, s1, s2);
  add_dependency(job.group, s2, s3);

  std::string job_id = client.consign_async(encode(job));
  // wait for stage2 to be executing
  msg::StatusReply st = client.poll(job_id);
  for (int i = 0; i < 300 && st.statuses.at("stage2") != "EXECUTING"; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    st = client.poll(job_id);
  }
  REQUIRE(st.statuses.at("stage2") == "EXECUTING");

  msg::StatusReply after = client.kill(job_id);
  REQUIRE(after.root == "DONE(NOT_SUCCESSFUL)");
  REQUIRE(after.statuses.at("stage1") == "DONE(SUCCESSFUL)");
  REQUIRE(after.statuses.at("stage2") == "DONE(NOT_SUCCESSFUL)");
  REQUIRE(after.statuses.at("stage3") == "DONE(NEVER_RUN)");

  // idempotent: a second kill returns the same final snapshot
  msg::StatusReply again = client.kill(job_id);
  REQUIRE(again.root == after.root);
  REQUIRE(again.statuses == after.statuses);
}

TEST_CASE("a malformed frame costs only its own connection") {
  Rig rig;
  {
    net::Socket bad = net::connect_to(net::parse_endpoint(rig.addr));
    std::string huge_header = {0x7f, 0x7f, 0x7f, 0x7f};
    bad.send_all(huge_header);
    char buf[1024];
    while (bad.recv_some(buf, sizeof buf) > 0) {
    } // server replies (best effort) and closes
  }
  // the gateway still serves new connections
  GatewayClient client(rig.addr);
  REQUIRE(client.list_vsites() == std::vector<std::string>{"alpha"});
}

TEST_CASE("one connection can carry several requests") {
  Rig rig;
  GatewayClient client(rig.addr);
  for (int i = 0; i < 5; ++i)
    REQUIRE(client.list_vsites() == std::vector<std::string>{"alpha"});
  AbstractJob job = make_staging_job("alpha", "secret-token");
  std::string id1 = client.consign_async(encode(job));
  std::string id2 = client.consign_async(encode(job));
  REQUIRE(id1 != id2);
}

TEST_CASE("in-AJO status service reaches the job registry via the gateway") {
  Rig rig;
  GatewayClient client(rig.addr);
  // first, a finished job to interrogate
  AbstractJob target = make_staging_job("alpha", "secret-token");
  std::string target_id = client.consign_async(encode(target));
  msg::StatusReply st = client.poll(target_id);
  for (int i = 0; i < 300 && st.root == "ACTIVE"; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    st = client.poll(target_id);
  }
  REQUIRE(st.root == "DONE(SUCCESSFUL)");

  AbstractJob probe = new_job("probe", "alpha", "secret-token");
  add_action(probe.group, StatusService{"ss", target_id});
  Outcome outcome = client.consign_sync(encode(probe));
  REQUIRE(outcome.root == CompletionCode::SUCCESSFUL);
  REQUIRE_THAT(outcome.records.at("ss").stdout_bytes,
               Catch::Matchers::ContainsSubstring("est DONE(SUCCESSFUL)"));
}
