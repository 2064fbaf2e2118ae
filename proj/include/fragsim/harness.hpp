#pragma once

// Scenario files, experiment runs, per-run metrics files and aggregation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fragsim/metrics.hpp"
#include "fragsim/node_stack.hpp"
#include "fragsim/topology.hpp"

namespace fragsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kScenarioVersion = 1;

/// Payload sizes of the 14-row fragments/payload mapping, 1..14 fragments.
inline constexpr std::size_t kTable1Payloads[] = {16,  80,  176, 272, 368,  464,  560,
                                                  656, 752, 848, 944, 1040, 1136, 1232};

struct Scenario {
  std::string name = "scenario";
  std::filesystem::path topology;  // resolved against the scenario file's directory
  std::vector<Strategy> strategies{Strategy::hwr};
  std::vector<std::size_t> payloads{80};
  SimTime interval_lo = 5s;
  SimTime interval_hi = 15s;
  unsigned packets_per_source = 100;
  std::vector<std::uint64_t> seeds{1, 2, 3};  // one run per seed

  /// Forces every in-range link to this delivery ratio when set.
  std::optional<double> link_pdr;
  /// Lifts buffer, queue and retry bounds and removes interference (sanity
  /// oracle). The reassembly timeout is kept.
  bool unbounded = false;

  std::size_t rbuf_entries = 1;
  std::size_t sink_rbuf_entries = 16;
  /// Forwarders that do not send (the sink's tree children); defaults to
  /// rbuf_entries when unset.
  std::optional<std::size_t> relay_rbuf_entries;
  std::size_t vrb_entries = 16;
  StackParams stack;
  MacParams mac;

  unsigned runs() const { return static_cast<unsigned>(seeds.size()); }
  /// Throws ConfigError on the first inconsistent field.
  void validate() const;
};

Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);

/// Node roles, routes and buffer sizes for one strategy on `topo`. Every
/// node except the sink and its tree children sends.
NetworkSpec make_network_spec(const Scenario& s, const Topology& topo, Strategy strategy,
                              std::uint64_t seed);

/// Fragment count of a datagram with `payload` UDP bytes under `policy`.
std::size_t fragment_count(std::size_t payload, const FrameModel& frame, frag::FragPolicy policy);

/// One simulation: scenario x strategy x payload x run index.
RunMetrics run_once(const Scenario& s, const Topology& topo, Strategy strategy,
                    std::size_t payload, unsigned run);

/// Long-format CSV: header `series,node,hops,key,value`.
void write_run_csv(const RunMetrics& m, std::ostream& out);
RunMetrics read_run_csv(std::istream& in);

/// Mean/median/percentiles per (strategy, payload) series. Throws
/// ConfigError when the runs come from different scenarios.
nlohmann::json aggregate(const std::vector<RunMetrics>& runs);

struct ExperimentResult {
  std::vector<RunMetrics> runs;
  std::vector<std::filesystem::path> files;
  nlohmann::json summary;
};

/// Runs every (strategy, payload, seed) and writes one CSV per run plus
/// aggregate.json into `out_dir` (created if missing).
ExperimentResult run_experiment(const Scenario& s, const std::filesystem::path& out_dir);

struct Table1Row {
  std::size_t payload = 0;
  std::size_t expected = 0;
  std::size_t fill_first = 0;
  std::size_t minimal_first = 0;
  bool ok() const { return fill_first == expected && minimal_first == expected; }
};

std::vector<Table1Row> table1_check(const FrameModel& frame = {});

/// Name of a run file: <strategy>_p<payload>_r<run>.csv
std::string run_file_name(const RunMetrics& m);

}  // namespace fragsim
