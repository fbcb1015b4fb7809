#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "jflow/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"J-flow laboratory on flat tori and a cone analyzer for surfaces"};
  app.require_subcommand(1);

  std::string config_path;
  const char* config_commands[] = {"flow", "critical", "conditions", "functionals"};
  const char* help[] = {"run the flow to its limit", "solve the critical equation by Newton's method",
                        "check the positivity conditions for the class pair", "evaluate the energy functionals at phi0"};
  for (int i = 0; i < 4; ++i) {
    auto* sub = app.add_subcommand(config_commands[i], help[i]);
    sub->add_option("config", config_path, "JSON run config")->required();
  }

  std::string lattice_path;
  std::optional<std::string> alpha, omega, chi0;
  auto* cone = app.add_subcommand("cone", "Nakai test and divisor certificate on a surface lattice");
  cone->add_option("lattice", lattice_path, "JSON lattice file")->required();
  cone->add_option("--alpha", alpha, "class, e.g. \"3H + E\" or \"3,1\"");
  cone->add_option("--omega", omega, "Kaehler class omega (with --chi0)");
  cone->add_option("--chi0", chi0, "Kaehler class chi0 (with --omega)");

  std::uint64_t seed = 0;
  jflow::SuiteSizes sizes;
  auto* prop = app.add_subcommand("proptest", "randomized invariant suites");
  prop->add_option("--seed", seed, "64-bit seed");
  prop->add_option("--condition-samples", sizes.condition_samples, "pairs per n in 2..4")->check(CLI::PositiveNumber);
  prop->add_option("--functional-samples", sizes.functional_samples)->check(CLI::PositiveNumber);
  prop->add_option("--path-samples", sizes.path_samples)->check(CLI::PositiveNumber);
  prop->add_option("--cone-samples", sizes.cone_samples)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : jflow::exit_code::schema;
  }

  if (cone->parsed()) return jflow::run_cone_command(lattice_path, alpha, omega, chi0, std::cout, std::cerr);
  if (prop->parsed()) return jflow::run_proptest_command(seed, sizes, std::cout, std::cerr);
  for (const char* name : config_commands)
    if (app.got_subcommand(name)) return jflow::run_config_command(name, config_path, std::cout, std::cerr);
  return jflow::exit_code::schema;
}
