#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lucenet/commands.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> values;
  std::vector<std::string> sets;
};

lucenet::RunConfig resolve(const Overrides& o) {
  auto config = o.config_path.empty() ? lucenet::RunConfig{} : lucenet::RunConfig::load(o.config_path);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw lucenet::ConfigError("--set expects key=value, got '" + s + "'");
    config.set(s.substr(0, eq), s.substr(eq + 1));
  }
  // Explicit flags win over the file and --set.
  for (const auto& [key, value] : o.values) config.set(key, value);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implant loosening detection with a small DenseNet"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  std::string out, seed, jobs;
  app.add_option("--config", o.config_path, "key=value config file");
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "root seed");
  app.add_option("--jobs", jobs, "parallel folds for crossval");
  app.add_option("--set", o.sets, "override one config key, key=value (repeatable)");

  std::string checkpoint, image, layer;
  app.add_subcommand("synth", "write the synthetic dataset and manifest");
  app.add_subcommand("pretrain", "train the backbone on the pretext task");
  app.add_subcommand("crossval", "k-fold training and evaluation per regime");
  auto* sal = app.add_subcommand("saliency", "saliency map of one image");
  sal->add_option("--checkpoint", checkpoint, "full model checkpoint");
  sal->add_option("--image", image, "PGM image");
  auto* filt = app.add_subcommand("filters", "activation maximization panel of a conv layer");
  filt->add_option("--checkpoint", checkpoint, "full or backbone checkpoint");
  filt->add_option("--layer", layer, "first, last or a conv layer name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << lucenet::error_line(lucenet::ConfigError(e.what())) << '\n';
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  lucenet::RunConfig config;
  try {
    if (!out.empty()) o.values.emplace_back("out", out);
    if (!seed.empty()) o.values.emplace_back("seed", seed);
    if (!jobs.empty()) o.values.emplace_back("jobs", jobs);
    if (!checkpoint.empty()) o.values.emplace_back(command + ".checkpoint", checkpoint);
    if (!image.empty()) o.values.emplace_back("saliency.image", image);
    if (!layer.empty()) o.values.emplace_back("filters.layer", layer);
    config = resolve(o);
  } catch (const std::exception& e) {
    std::cerr << lucenet::error_line(e) << '\n';
    return lucenet::exit_code(e);
  }
  return lucenet::run_command(command, config, std::cout, std::cerr);
}
