// dcc: run rate-memory experiments, replay fixtures, print allocations.
//
//   dcc run [config.json] [--files N] [--users K] [--memory M]... [--out path]
//   dcc replay fixtures/example1.fixture --scheme SGD
//   dcc allocate --files 100 --users 16 --memory 20 --alpha 0.6 --method exact
//
// Exit status: 0 success, 2 input error, 3 constraint violation.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcc/allocation.hpp"
#include "dcc/bounds.hpp"
#include "dcc/delivery.hpp"
#include "dcc/fixture.hpp"
#include "dcc/model.hpp"
#include "dcc/sim.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitConstraint = 3;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ostringstream csv_stream() {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(10);
  return out;
}

dcc::PlacementScheme placement_or_throw(const std::string& name) {
  if (auto s = dcc::parse_placement(name)) return *s;
  throw InputError("unknown placement scheme '" + name + "'");
}

dcc::DeliveryScheme delivery_or_throw(const std::string& name) {
  if (auto s = dcc::parse_delivery(name)) return *s;
  throw InputError("unknown delivery scheme '" + name + "'");
}

struct RunOptions {
  std::string config_path;
  std::optional<std::size_t> files, users, file_bits, trials, threads;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> placement;
  std::vector<std::string> delivery;
  std::vector<double> memory;
  std::string out;
};

// Keys mirror ExperimentConfig; delivery_scheme may be a name or a list.
void apply_json(const nlohmann::json& j, dcc::ExperimentConfig& c, std::vector<dcc::DeliveryScheme>& schemes) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "n_files") c.params.n_files = value.get<std::size_t>();
    else if (key == "n_users") c.params.n_users = value.get<std::size_t>();
    else if (key == "file_size_bits") c.params.file_size_bits = value.get<std::size_t>();
    else if (key == "zipf_alpha") c.zipf_alpha = value.get<double>();
    else if (key == "placement_scheme") c.placement_scheme = placement_or_throw(value.get<std::string>());
    else if (key == "delivery_scheme") {
      schemes.clear();
      if (value.is_array())
        for (const auto& v : value) schemes.push_back(delivery_or_throw(v.get<std::string>()));
      else
        schemes.push_back(delivery_or_throw(value.get<std::string>()));
    } else if (key == "memory_grid") c.memory_grid = value.get<std::vector<double>>();
    else if (key == "trials") c.trials = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "threads") c.threads = value.get<std::size_t>();
    else throw InputError("unknown config key '" + key + "'");
  }
}

int cmd_run(const RunOptions& opt) {
  dcc::ExperimentConfig config;
  std::vector<dcc::DeliveryScheme> schemes{config.delivery_scheme};
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw InputError("cannot open config '" + opt.config_path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      apply_json(j, config, schemes);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("config: ") + e.what());
    }
  }
  if (opt.files) config.params.n_files = *opt.files;
  if (opt.users) config.params.n_users = *opt.users;
  if (opt.file_bits) config.params.file_size_bits = *opt.file_bits;
  if (opt.trials) config.trials = *opt.trials;
  if (opt.threads) config.threads = *opt.threads;
  if (opt.alpha) config.zipf_alpha = *opt.alpha;
  if (opt.seed) config.seed = *opt.seed;
  if (opt.placement) config.placement_scheme = placement_or_throw(*opt.placement);
  if (!opt.delivery.empty()) {
    schemes.clear();
    for (const auto& d : opt.delivery) schemes.push_back(delivery_or_throw(d));
  }
  if (!opt.memory.empty()) config.memory_grid = opt.memory;
  config.delivery_scheme = schemes.front();

  const auto results = dcc::run_experiments(config, schemes);

  auto out = csv_stream();
  out << "memory,scheme,mean_rate,std_error,trials,bound_rate\n";
  for (std::size_t g = 0; g < config.memory_grid.size(); ++g)
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      const auto& p = results[s][g];
      out << p.memory << ',' << dcc::to_string(schemes[s]) << ',' << p.stats.mean << ',' << p.stats.std_error << ','
          << p.stats.trials << ',' << p.lower_bound << '\n';
    }
  if (opt.out.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream file(opt.out);
    if (!file) throw InputError("cannot write '" + opt.out + "'");
    file << out.str();
  }
  return 0;
}

int cmd_replay(const std::string& path, const std::string& scheme_name) {
  dcc::Fixture fx;
  try {
    fx = dcc::load_fixture(path);
  } catch (const dcc::FormatError& e) {
    throw InputError(e.what());
  }
  const auto scheme = delivery_or_throw(scheme_name);
  dcc::TransmissionLog log;
  switch (scheme) {
    case dcc::DeliveryScheme::OD: log = dcc::deliver_od(fx.bits, fx.n_users); break;
    case dcc::DeliveryScheme::SGD: log = dcc::deliver_sgd(fx.bits, fx.n_users); break;
    case dcc::DeliveryScheme::SemiSGD: log = dcc::deliver_semi_sgd(fx.bits, fx.n_users); break;
    case dcc::DeliveryScheme::BGD: log = dcc::deliver_bgd(fx.bits, fx.n_users); break;
    case dcc::DeliveryScheme::Uncoded: log = dcc::deliver_uncoded(fx.bits); break;
    case dcc::DeliveryScheme::GroupedOD: throw InputError("GROUPED_OD needs a request vector and grouping; not replayable");
  }
  std::cout << dcc::format_log(log, fx.bits, fx.labels);
  return 0;
}

struct AllocateOptions {
  std::size_t files = 0, users = 0;
  double memory = 0.0;
  std::optional<double> alpha;
  std::vector<double> popularity;
  std::string method = "exact";
};

int cmd_allocate(const AllocateOptions& opt) {
  dcc::SystemParams params{opt.files, opt.users, 1, opt.memory};
  dcc::Popularity pop;
  if (!opt.popularity.empty()) {
    pop.probs = opt.popularity;
    if (params.n_files == 0) params.n_files = pop.size();
    if (pop.size() != params.n_files) throw dcc::ParameterError("popularity length does not match --files");
  } else {
    pop = dcc::zipf_popularity(params.n_files, opt.alpha.value_or(0.0));
  }
  params.validate();

  auto out = csv_stream();
  out << "file,popularity,q,regime\n";
  auto rows = [&](const dcc::CacheAllocation& a, const std::vector<dcc::KktRegime>* regimes) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      out << i + 1 << ',' << pop[i] << ',' << a.fractions[i] << ',';
      if (regimes) out << dcc::to_string((*regimes)[i]);
      out << '\n';
    }
  };
  if (opt.method == "uniform") {
    rows(dcc::uniform_allocation(params), nullptr);
  } else if (opt.method == "exact") {
    const auto sol = dcc::solve_exact_allocation(pop, params);
    rows(sol.allocation, &sol.regimes);
  } else if (opt.method == "sqrt") {
    rows(dcc::solve_sqrt_allocation(pop, params), nullptr);
  } else if (opt.method == "grouped") {
    const auto grouping = dcc::solve_group_allocation(dcc::group_files(pop), params);
    rows(dcc::allocation_from_grouping(grouping, params.n_files, params.memory), nullptr);
    out << "\ngroup,n_files,P_l,M_l\n";
    for (std::size_t l = 0; l < grouping.size(); ++l)
      out << l + 1 << ',' << grouping.groups[l].size() << ',' << grouping.group_probs[l] << ','
          << grouping.group_memories[l] << '\n';
  } else {
    throw InputError("unknown method '" + opt.method + "' (uniform, exact, sqrt, grouped)");
  }
  std::cout << out.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized coded caching experiments"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Monte-Carlo rate curve as CSV");
  run_cmd->add_option("config", run.config_path, "JSON experiment config");
  run_cmd->add_option("--files", run.files, "number of files N");
  run_cmd->add_option("--users", run.users, "number of users K");
  run_cmd->add_option("--file-bits", run.file_bits, "bits per file F");
  run_cmd->add_option("--memory", run.memory, "memory grid point (repeatable)");
  run_cmd->add_option("--alpha", run.alpha, "Zipf exponent");
  run_cmd->add_option("--placement", run.placement, "UNIFORM, EXACT_KKT, SQRT or GROUPED");
  run_cmd->add_option("--delivery", run.delivery, "OD, SGD, SEMI_SGD, BGD, GROUPED_OD or UNCODED (repeatable)");
  run_cmd->add_option("--trials", run.trials, "trials per grid point");
  run_cmd->add_option("--seed", run.seed, "master seed");
  run_cmd->add_option("--threads", run.threads, "worker threads, 0 for all cores");
  run_cmd->add_option("--out", run.out, "write CSV here instead of stdout");

  std::string fixture_path, scheme = "SGD";
  auto* replay_cmd = app.add_subcommand("replay", "print the transmission listing for a fixture");
  replay_cmd->add_option("fixture", fixture_path, "fixture file")->required();
  replay_cmd->add_option("--scheme", scheme, "delivery scheme");

  AllocateOptions alloc;
  auto* alloc_cmd = app.add_subcommand("allocate", "per-file cache fractions as CSV");
  alloc_cmd->add_option("--files", alloc.files, "number of files N");
  alloc_cmd->add_option("--users", alloc.users, "number of users K")->required();
  alloc_cmd->add_option("--memory", alloc.memory, "cache size M in files")->required();
  alloc_cmd->add_option("--alpha", alloc.alpha, "Zipf exponent");
  alloc_cmd->add_option("--popularity", alloc.popularity, "explicit probabilities")->delimiter(',');
  alloc_cmd->add_option("--method", alloc.method, "uniform, exact, sqrt or grouped");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*replay_cmd) return cmd_replay(fixture_path, scheme);
    if (*alloc_cmd) return cmd_allocate(alloc);
  } catch (const InputError& e) {
    std::cerr << "dcc: " << e.what() << '\n';
    return kExitInput;
  } catch (const dcc::FormatError& e) {
    std::cerr << "dcc: " << e.what() << '\n';
    return kExitInput;
  } catch (const dcc::ConfigError& e) {
    std::cerr << "dcc: " << e.what() << '\n';
    return kExitConstraint;
  } catch (const dcc::ParameterError& e) {
    std::cerr << "dcc: " << e.what() << '\n';
    return kExitConstraint;
  }
  return 0;
}
