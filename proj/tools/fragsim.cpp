// fragsim command line: topology generation, experiment runs, aggregation
// and the fragment-count table check.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fragsim/harness.hpp"
#include "fragsim/topology.hpp"

namespace {

using namespace fragsim;

constexpr int kConfigFailure = 2;
constexpr int kCheckFailure = 1;

int generate_topology(std::uint64_t plan_seed, std::uint64_t first_seed, unsigned max_hops,
                      std::size_t members, const std::string& out) {
  const SitePlan plan = synthetic_site_plan(plan_seed);
  BuildParams params;
  params.members = members;
  const TopologySearch found = search_topology(plan, plan.sink, max_hops, first_seed, 100000,
                                               params);
  save_topology(found.topology, std::filesystem::path(out));
  const auto& t = found.topology;
  std::size_t senders = 0;
  for (const auto& n : t.nodes) {
    senders += n.hops >= 2 ? 1 : 0;
  }
  std::printf("plan seed %llu, build seed %llu (%zu attempts)\n",
              static_cast<unsigned long long>(plan_seed),
              static_cast<unsigned long long>(found.seed), found.attempts);
  std::printf("%zu nodes, %zu links, sink degree %zu, max hops %u, %zu senders\n", t.size(),
              t.links.size(), t.children(t.sink).size(), t.max_hops(), senders);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

void print_summary(const nlohmann::json& summary) {
  std::printf("%-10s %7s %5s %7s %9s %9s %10s\n", "strategy", "payload", "frags", "pdr",
              "retx/node", "rbuf_full", "lat_ms");
  for (const auto& s : summary.at("series")) {
    const auto& lat = s.at("latency_ms");
    std::printf("%-10s %7zu %5s %7.3f %9.2f %9.1f %10.1f\n",
                s.at("strategy").get<std::string>().c_str(), s.at("payload").get<std::size_t>(),
                s.at("fragments").dump().c_str(), s.at("pdr").at("mean").get<double>(),
                s.at("l2_retransmissions_per_node").at("mean").get<double>(),
                s.at("rbuf_full_events").at("mean").get<double>(),
                lat.contains("mean") ? lat.at("mean").get<double>() : 0.0);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"6LoWPAN fragment forwarding simulator"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate-topology", "BFS-sample a topology from a site plan");
  std::uint64_t plan_seed = 1;
  std::uint64_t first_seed = 1;
  unsigned max_hops = 6;
  std::size_t members = 50;
  std::string topo_out = "topology.txt";
  gen->add_option("--plan-seed", plan_seed, "site plan jitter seed")->capture_default_str();
  gen->add_option("--first-seed", first_seed, "first BFS seed to try")->capture_default_str();
  gen->add_option("--max-hops", max_hops, "required longest path")->capture_default_str();
  gen->add_option("--members", members, "nodes including the sink")->capture_default_str();
  gen->add_option("-o,--out", topo_out, "output file")->capture_default_str();

  auto* run = app.add_subcommand("run", "run a scenario");
  std::string scenario_path;
  std::string out_dir = "results";
  std::vector<std::string> strategies;
  std::vector<std::size_t> payloads;
  std::vector<std::uint64_t> seeds;
  std::string topology_override;
  unsigned packets = 0;
  std::optional<double> link_pdr;
  bool unbounded = false;
  run->add_option("scenario", scenario_path, "scenario JSON file")->required()->check(
      CLI::ExistingFile);
  run->add_option("-o,--out", out_dir, "directory for run files")->capture_default_str();
  run->add_option("--strategy", strategies, "override strategies (hwr, ff, ff_queued)");
  run->add_option("--payload", payloads, "override payload sizes");
  run->add_option("--seed", seeds, "override seeds (one run each)");
  run->add_option("--topology", topology_override, "override topology file");
  run->add_option("--packets", packets, "override packets per source");
  run->add_option("--link-pdr", link_pdr, "force every link to this delivery ratio");
  run->add_flag("--unbounded", unbounded, "lift buffer, queue and retry bounds on an interference-free medium");

  auto* agg = app.add_subcommand("aggregate", "fold run files into summary statistics");
  std::vector<std::string> inputs;
  std::string agg_out;
  agg->add_option("files", inputs, "run CSV files")->required()->check(CLI::ExistingFile);
  agg->add_option("-o,--out", agg_out, "write JSON here instead of stdout");

  auto* t1 = app.add_subcommand("table1-check", "payload to fragment count mapping");
  FrameModel frame;
  t1->add_option("--max-psdu", frame.max_psdu)->capture_default_str();
  t1->add_option("--mac-overhead", frame.mac_overhead)->capture_default_str();
  t1->add_option("--compression-bytes", frame.compression_bytes)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      return generate_topology(plan_seed, first_seed, max_hops, members, topo_out);
    }
    if (*run) {
      Scenario s = load_scenario(scenario_path);
      if (!strategies.empty()) {
        s.strategies.clear();
        for (const auto& name : strategies) {
          auto st = parse_strategy(name);
          if (!st) {
            throw ConfigError("unknown strategy '" + name + "'");
          }
          s.strategies.push_back(*st);
        }
      }
      if (!payloads.empty()) s.payloads = payloads;
      if (!seeds.empty()) s.seeds = seeds;
      if (!topology_override.empty()) s.topology = topology_override;
      if (packets) s.packets_per_source = packets;
      if (link_pdr) s.link_pdr = link_pdr;
      if (unbounded) s.unbounded = true;
      s.validate();
      const ExperimentResult r = run_experiment(s, out_dir);
      print_summary(r.summary);
      std::uint64_t violations = 0;
      for (const auto& m : r.runs) {
        violations += m.invariants.total();
      }
      std::printf("%zu run files in %s, %llu invariant violations\n", r.files.size(),
                  out_dir.c_str(), static_cast<unsigned long long>(violations));
      return violations == 0 ? 0 : kCheckFailure;
    }
    if (*agg) {
      std::vector<RunMetrics> runs;
      for (const auto& f : inputs) {
        std::ifstream in(f, std::ios::binary);
        runs.push_back(read_run_csv(in));
      }
      const auto summary = aggregate(runs);
      if (agg_out.empty()) {
        std::cout << summary.dump(2) << '\n';
      } else {
        std::ofstream(agg_out, std::ios::binary) << summary.dump(2) << '\n';
      }
      return 0;
    }
    if (*t1) {
      bool ok = true;
      std::printf("%9s %8s %10s %13s\n", "payload", "expected", "fill_first", "minimal_first");
      for (const auto& row : table1_check(frame)) {
        std::printf("%9zu %8zu %10zu %13zu%s\n", row.payload, row.expected, row.fill_first,
                    row.minimal_first, row.ok() ? "" : "  MISMATCH");
        ok = ok && row.ok();
      }
      return ok ? 0 : kCheckFailure;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfigFailure;
  } catch (const TopologyError& e) {
    std::fprintf(stderr, "topology error: %s\n", e.what());
    return kConfigFailure;
  }
  return 0;
}
