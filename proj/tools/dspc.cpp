// Command-line pipeline: pretrain / train / eval / embed / sweep.
#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dspc/config.hpp"
#include "dspc/errors.hpp"
#include "dspc/trainer.hpp"

int main(int argc, char** argv) {
  CLI::App app{"dual-autoencoder spectral clustering pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  uint64_t seed = 0;
  bool seed_set = false, out_set = false, from_scratch = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (key = value lines)");
    sub->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--out", out_dir, "override the output directory")
        ->each([&](const std::string&) { out_set = true; });
    sub->add_option("--checkpoint", checkpoint, "resume/evaluate from this checkpoint");
    sub->add_flag("--from-scratch", from_scratch,
                  "let `train` start without a pretrained checkpoint");
  };

  CLI::App* cmd_pretrain = app.add_subcommand("pretrain", "train the dual autoencoder");
  CLI::App* cmd_train = app.add_subcommand("train", "joint clustering phase");
  CLI::App* cmd_eval = app.add_subcommand("eval", "accuracy/NMI of a checkpoint");
  CLI::App* cmd_embed = app.add_subcommand("embed", "export latent codes and embeddings");
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "grid over beta and gamma");
  for (CLI::App* sub : {cmd_pretrain, cmd_train, cmd_eval, cmd_embed, cmd_sweep}) {
    add_common(sub);
  }

  CLI11_PARSE(app, argc, argv);

  dspc::run::Options opts;
  try {
    opts.cfg = config_path.empty() ? dspc::Config{}
                                   : dspc::parse_config_file(config_path);
  } catch (const dspc::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return dspc::run::kConfigExit;
  } catch (const dspc::IoError& e) {
    std::cerr << e.what() << "\n";
    return dspc::run::kConfigExit;
  }
  if (seed_set) opts.cfg.seed = seed;
  if (out_set) opts.cfg.out = out_dir;
  opts.checkpoint = checkpoint;
  opts.from_scratch = from_scratch;

  if (app.got_subcommand(cmd_pretrain)) return dspc::run::pretrain(opts);
  if (app.got_subcommand(cmd_train)) return dspc::run::train(opts);
  if (app.got_subcommand(cmd_eval)) return dspc::run::eval(opts);
  if (app.got_subcommand(cmd_embed)) return dspc::run::embed(opts);
  return dspc::run::sweep(opts);
}
