// bridgevq: train | sample | inpaint | eval

#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "bridgevq/commands.hpp"
#include "bridgevq/error.hpp"

int main(int argc, char** argv) {
  using bridgevq::CommandOptions;
  CLI::App app{"Discrete latent diffusion with Ornstein-Uhlenbeck bridges on the toy walk domain"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::string config, out, checkpoint, mask, dataset, samples;
  std::uint64_t seed = 0;
  int count = 0, stride = 0;
  CLI::Option* seed_opt[4] = {};
  CLI::Option* mask_opt = nullptr;
  int n_sub = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
    seed_opt[n_sub++] = sub->add_option("--seed", seed, "override the configured seed");
  };
  auto add_model = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("--checkpoint", checkpoint, "checkpoint file");
    if (required) o->required();
  };

  auto* train = app.add_subcommand("train", "train the noise predictor (and codebook if end_to_end)");
  add_common(train);

  auto* sample = app.add_subcommand("sample", "unconditional samples from a checkpoint");
  add_common(sample);
  add_model(sample, true);
  sample->add_option("--count", count, "number of samples")->check(CLI::PositiveNumber);
  sample->add_option("--stride", stride, "record every stride-th reverse step")->check(CLI::PositiveNumber);

  auto* inpaint = app.add_subcommand("inpaint", "conditional samples with pinned positions");
  add_common(inpaint);
  add_model(inpaint, true);
  inpaint->add_option("--count", count, "number of samples")->check(CLI::PositiveNumber);
  inpaint->add_option("--stride", stride, "record every stride-th reverse step")->check(CLI::PositiveNumber);
  mask_opt = inpaint->add_option("--mask", mask, "pinned positions: comma list, 'all' or 'none'");

  auto* eval = app.add_subcommand("eval", "validity, positional KL and conditional NLL");
  add_common(eval);
  add_model(eval, false);
  eval->add_option("--dataset", dataset, "reference dataset CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--samples", samples, "score these sequences instead of sampling")->check(CLI::ExistingFile);
  eval->add_option("--count", count, "number of model samples for validity/KL")->check(CLI::PositiveNumber);
  eval->add_option("--metrics", opts.metrics, "comma list of validity,kl,nll");

  CLI11_PARSE(app, argc, argv);

  auto* active = app.get_subcommands().front();
  bool seed_given = false;
  for (auto* o : seed_opt) seed_given = seed_given || (o && o->count() > 0);
  if (!config.empty()) opts.config = config;
  opts.out = out;
  if (seed_given) opts.seed = seed;
  if (!checkpoint.empty()) opts.checkpoint = checkpoint;
  if (count > 0) opts.count = count;
  if (stride > 0) opts.stride = stride;
  if (mask_opt->count() > 0) opts.mask = mask;
  if (!dataset.empty()) opts.dataset = dataset;
  if (!samples.empty()) opts.samples = samples;

  try {
    if (active == train) bridgevq::cmd_train(opts);
    else if (active == sample) bridgevq::cmd_sample(opts);
    else if (active == inpaint) bridgevq::cmd_inpaint(opts);
    else bridgevq::cmd_eval(opts);
  } catch (const bridgevq::NonFiniteLoss& e) {
    std::fprintf(stderr, "bridgevq: training aborted: %s\n", e.what());
    return 3;
  } catch (const bridgevq::InvalidParameter& e) {
    std::fprintf(stderr, "bridgevq: invalid input: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bridgevq: %s\n", e.what());
    return 1;
  }
  return 0;
}
