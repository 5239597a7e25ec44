#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pipescale/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pipescale: provisioning toolkit and simulator for ML inference pipelines"};
  app.require_subcommand(1);

  std::string config_path;
  std::int64_t seed_override = -1;
  std::string out_dir;

  auto* validate = app.add_subcommand("validate", "load and validate a pipeline + experiment config");
  validate->add_option("-c,--config", config_path, "experiment config JSON")->required();

  double demand = 0.0;
  std::string export_lp, dump_routes_path;
  auto* alloc = app.add_subcommand("allocate", "one-shot allocation for a demand level");
  alloc->add_option("-c,--config", config_path, "experiment config JSON")->required();
  alloc->add_option("-d,--demand", demand, "demand in qps")->required();
  alloc->add_option("--export-lp", export_lp, "write the allocation MILP in CPLEX LP format");
  alloc->add_option("--dump-routes", dump_routes_path, "write the routing tables for the plan as JSON");

  bool dump_routes = false;
  auto* simulate = app.add_subcommand("simulate", "run a trace-driven simulation");
  simulate->add_option("-c,--config", config_path, "experiment config JSON")->required();
  simulate->add_option("--seed", seed_override, "override the config seed");
  simulate->add_option("--out", out_dir, "override the output directory");
  simulate->add_flag("--dump-routes", dump_routes, "also write the final routing tables");

  std::string variable = "demand";
  double from = 0.0, to = 0.0, step = 1.0;
  auto* sweep = app.add_subcommand("sweep", "sweep demand (allocator) or slo (full simulations)");
  sweep->add_option("-c,--config", config_path, "experiment config JSON")->required();
  sweep->add_option("--variable", variable, "demand | slo")->required();
  sweep->add_option("--from", from, "range start")->required();
  sweep->add_option("--to", to, "range end")->required();
  sweep->add_option("--step", step, "range step")->required();
  sweep->add_option("--seed", seed_override, "override the config seed");
  sweep->add_option("--out", out_dir, "override the output directory");

  std::vector<std::string> policies;
  int n_seeds = 1;
  auto* compare = app.add_subcommand("compare", "paired-seed comparison of policy modes");
  compare->add_option("-c,--config", config_path, "experiment config JSON")->required();
  compare->add_option("--policies", policies, "policy modes (default: all three)")->delimiter(',');
  compare->add_option("--seeds", n_seeds, "number of paired seeds");
  compare->add_option("--seed", seed_override, "override the base seed");
  compare->add_option("--out", out_dir, "override the output directory");

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) return pipescale::cmd_validate(config_path, std::cout);
  if (alloc->parsed())
    return pipescale::cmd_allocate(config_path, demand, export_lp, dump_routes_path, std::cout);
  if (simulate->parsed())
    return pipescale::cmd_simulate(config_path, seed_override, out_dir, dump_routes, std::cout);
  if (sweep->parsed())
    return pipescale::cmd_sweep(config_path, variable, from, to, step, seed_override, out_dir, std::cout);
  if (compare->parsed())
    return pipescale::cmd_compare(config_path, policies, n_seeds, seed_override, out_dir, std::cout);
  return 1;
}
