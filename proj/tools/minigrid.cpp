// Command-line front end: testbed server, job client and sweep broker.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "minigrid/minigrid.hpp"

namespace fs = std::filesystem;
using namespace minigrid;

namespace {

bool g_deterministic = false;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop.store(true); }

int cmd_serve(const std::string& config_path) {
  TestbedConfig cfg = load_testbed_config(config_path);
  std::vector<std::shared_ptr<Vsite>> vsites;
  for (auto& vc : cfg.vsites) vsites.push_back(std::make_shared<Vsite>(vc));
  Gateway gateway(std::move(vsites));
  net::Endpoint ep = net::parse_endpoint(cfg.listen);
  std::uint16_t port = gateway.start(ep);
  std::cout << "gateway listening on " << ep.host << ":" << port << "\n";
  for (const auto& name : gateway.list_vsites()) std::cout << "vsite " << name << "\n";
  std::cout.flush();

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::cout << "shutting down, killing in-flight jobs\n";
  gateway.stop();
  return 0;
}

void print_statuses(const msg::StatusReply& reply) {
  std::cout << reply.job_id << " " << reply.root << "\n";
  for (const auto& [name, st] : reply.statuses)
    std::cout << "  " << name << " " << st << "\n";
}

int print_outcome(const Outcome& outcome, const std::string& out_dir) {
  std::cout << outcome.job_id << " DONE(" << to_string(outcome.root) << ")\n";
  if (!out_dir.empty()) {
    for (const auto& [name, rec] : outcome.records) {
      fs::path dir = fs::path(out_dir) / name;
      fs::create_directories(dir);
      std::ofstream(dir / "stdout", std::ios::binary) << rec.stdout_bytes;
      std::ofstream(dir / "stderr", std::ios::binary) << rec.stderr_bytes;
      std::ofstream log(dir / "log");
      for (const auto& line : rec.log) log << line << "\n";
    }
    for (const auto& [cpto, byname] : outcome.files)
      for (const auto& [fname, bytes] : byname) {
        fs::path dst = fs::path(out_dir) / cpto / fname;
        fs::create_directories(dst.parent_path());
        std::ofstream(dst, std::ios::binary).write(bytes.data(),
                                                   std::streamsize(bytes.size()));
      }
    std::cout << "outcome written to " << out_dir << "\n";
  }
  for (const auto& [name, files] : outcome.files_mapping) {
    std::cout << "  " << name << ":";
    for (const auto& f : files) std::cout << " " << f;
    std::cout << "\n";
  }
  return outcome.root == CompletionCode::SUCCESSFUL ? 0 : 1;
}

int cmd_submit(const std::string& ajo_path, bool sync, const std::string& gw) {
  std::string bytes = read_file(ajo_path);
  GatewayClient client(gw);
  if (!sync) {
    std::cout << client.consign_async(bytes) << "\n";
    return 0;
  }
  return print_outcome(client.consign_sync(bytes), "");
}

int cmd_sweep(const std::string& plan_path, const std::string& broker_cfg,
              const std::string& out_dir) {
  PlanDocument plan = parse_plan(read_file(plan_path));
  BrokerConfig cfg = load_broker_config(broker_cfg);
  cfg.options.output_dir = out_dir;
  cfg.options.progress = [](const std::string& line) { std::cout << line << "\n"; };
  std::vector<std::shared_ptr<ComputeServer>> servers;
  for (const auto& s : cfg.servers)
    servers.push_back(std::make_shared<GatewayComputeServer>(s.gateway, s.vsite, s.token));
  Broker broker(std::move(servers), cfg.options);
  SweepResult result = broker.run(plan);
  for (const auto& j : result.jobs) {
    std::cout << "job " << j.index << " " << to_string(j.state);
    if (j.state == BrokerJobState::DONE) std::cout << " " << to_string(j.final_code);
    std::cout << "\n";
  }
  if (result.all_servers_unhealthy) std::cout << "error: all servers unhealthy\n";
  std::cout << (result.all_successful ? "sweep successful" : "sweep failed") << "\n";
  return result.all_successful ? 0 : 1;
}

int cmd_purge_spool(const std::string& config_path, const std::string& only_vsite) {
  TestbedConfig cfg = load_testbed_config(config_path);
  for (const auto& vc : cfg.vsites) {
    if (!only_vsite.empty() && vc.name != only_vsite) continue;
    std::error_code ec;
    std::uintmax_t n = 0;
    for (const auto& entry : fs::directory_iterator(vc.spool_root, ec))
      n += fs::remove_all(entry.path(), ec);
    std::cout << "purged " << n << " entries from spool of " << vc.name << "\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"minigrid: seamless batch job submission testbed"};
  app.require_subcommand(1);
  app.add_flag("--deterministic", g_deterministic,
               "zero all timestamps in printed traces");

  std::string config_path, gw, ajo_path, job_id, out_dir, plan_path, broker_cfg,
      only_vsite;
  bool sync = false;

  auto* serve = app.add_subcommand("serve", "run a gateway with its vsites");
  serve->add_option("-c,--config", config_path, "testbed config file")->required();

  auto* submit = app.add_subcommand("submit", "consign a job document");
  submit->add_option("ajo", ajo_path, "job document file")->required();
  submit->add_flag("--sync", sync, "wait for the outcome");
  submit->add_option("-g,--gateway", gw, "gateway host:port")->required();

  auto* status = app.add_subcommand("status", "poll a job");
  status->add_option("job_id", job_id)->required();
  status->add_option("-g,--gateway", gw)->required();

  auto* outcome = app.add_subcommand("outcome", "retrieve a finished job's outcome");
  outcome->add_option("job_id", job_id)->required();
  outcome->add_option("-o,--output", out_dir, "directory for outcome files")->required();
  outcome->add_option("-g,--gateway", gw)->required();

  auto* kill = app.add_subcommand("kill", "kill a running job");
  kill->add_option("job_id", job_id)->required();
  kill->add_option("-g,--gateway", gw)->required();

  auto* sites = app.add_subcommand("sites", "list vsites and their resources");
  sites->add_option("-g,--gateway", gw)->required();

  auto* sweep = app.add_subcommand("sweep", "run a parameter sweep plan");
  sweep->add_option("plan", plan_path, "plan document")->required();
  sweep->add_option("-b,--broker", broker_cfg, "broker config file")->required();
  sweep->add_option("-o,--output", out_dir, "directory for collected outputs")
      ->required();

  auto* purge = app.add_subcommand("purge-spool", "empty the spool directories");
  purge->add_option("-c,--config", config_path, "testbed config file")->required();
  purge->add_option("--vsite", only_vsite, "only this vsite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) return cmd_serve(config_path);
    if (*submit) return cmd_submit(ajo_path, sync, gw);
    if (*status) {
      GatewayClient client(gw);
      print_statuses(client.poll(job_id));
      return 0;
    }
    if (*outcome) {
      GatewayClient client(gw);
      return print_outcome(client.outcome(job_id), out_dir);
    }
    if (*kill) {
      GatewayClient client(gw);
      print_statuses(client.kill(job_id));
      return 0;
    }
    if (*sites) {
      GatewayClient client(gw);
      for (const auto& name : client.list_vsites()) {
        auto r = client.describe(name);
        std::cout << name << " processors=" << r.max_processors
                  << " memory_mib=" << r.max_memory_mib
                  << " wall_time_s=" << r.max_wall_time_s << " packages=";
        for (std::size_t i = 0; i < r.software_packages.size(); ++i)
          std::cout << (i ? "," : "") << r.software_packages[i];
        std::cout << "\n";
      }
      return 0;
    }
    if (*sweep) return cmd_sweep(plan_path, broker_cfg, out_dir);
    if (*purge) return cmd_purge_spool(config_path, only_vsite);
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
