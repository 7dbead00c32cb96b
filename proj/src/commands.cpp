#include "bridgevq/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

#include "bridgevq/checkpoint.hpp"
#include "bridgevq/config.hpp"
#include "bridgevq/error.hpp"
#include "bridgevq/evaluation.hpp"
#include "bridgevq/generation.hpp"
#include "bridgevq/svg.hpp"
#include "bridgevq/toy_domain.hpp"
#include "bridgevq/training.hpp"

namespace bridgevq {

using nlohmann::json;
namespace fs = std::filesystem;

int log_level() {
  const char* env = std::getenv("BRIDGEVQ_LOG");
  if (!env || !*env) return 1;
  const std::string v = env;
  if (v == "0" || v == "quiet" || v == "error") return 0;
  if (v == "2" || v == "debug") return 2;
  return 1;
}

namespace {

template <class... Args>
void log_at(int level, const char* fmt, Args... args) {
  if (log_level() < level) return;
  std::fprintf(stderr, "[bridgevq] ");
  if constexpr (sizeof...(Args) == 0) std::fputs(fmt, stderr);
  else std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

// Exclusive claim on an output directory for the lifetime of a command.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".bridgevq.lock") {
    if (dir.empty()) throw InvalidParameter("an output directory is required (--out)");
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw FormatError("output directory is locked by another run: " + path_.string());
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

struct Manifest {
  json doc;
  std::vector<std::string> outputs;

  Manifest(const std::string& command, const RunConfig& cfg) {
    const std::string cfg_text = to_json_text(cfg);
    doc["command"] = command;
    doc["tool_version"] = kToolVersion;
    doc["checkpoint_format"] = kCheckpointVersion;
    doc["csv_schema"] = kCsvSchemaVersion;
    doc["seed"] = cfg.seed;
    doc["config"] = json::parse(cfg_text);
    doc["config_hash"] = sha1_hex(cfg_text);
  }

  void input(const std::string& role, const fs::path& path) {
    doc["inputs"][role] = {{"path", path.string()}, {"hash", git_blob_hash(read_file(path))}};
  }

  void write(const fs::path& dir) {
    doc["outputs"] = outputs;
    write_file(dir / "manifest.json", doc.dump(2) + "\n");
  }
};

RunConfig resolve_config(const CommandOptions& opts, const RunConfig* fallback) {
  RunConfig cfg = opts.config ? load_run_config(*opts.config) : (fallback ? *fallback : RunConfig{});
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.validate();
  return cfg;
}

Checkpoint require_checkpoint(const CommandOptions& opts) {
  if (!opts.checkpoint) throw InvalidParameter("this command needs --checkpoint");
  return load_checkpoint(*opts.checkpoint);
}

// Maps quantized states to indices of the true toy centroids so that learned
// (possibly permuted) codebooks are scored against the walk structure.
std::vector<int> toy_indices(const Eigen::MatrixXd& truth, const Codebook& cb, const DiscreteState& zq) {
  return decode_to_indices(Codebook(truth), cb.lookup(zq.indices));
}

void write_samples_csv(const fs::path& path, const std::vector<ChainRecord>& chains) {
  std::ostringstream out;
  out << "sample,position,z0,z1,zq,x0,x1\n";
  for (std::size_t i = 0; i < chains.size(); ++i) {
    const ChainRecord& c = chains[i];
    for (Eigen::Index p = 0; p < c.final_z.cols(); ++p)
      out << i << ',' << p << ',' << num(c.final_z(0, p)) << ',' << num(c.final_z(1, p)) << ','
          << c.final_zq.indices[p] << ',' << num(c.final_x(0, p)) << ',' << num(c.final_x(1, p)) << '\n';
  }
  write_file(path, out.str());
}

void write_sequences_csv(const fs::path& path, const std::vector<std::vector<int>>& seqs, int K,
                         const std::vector<bool>* extra = nullptr, const char* extra_name = nullptr) {
  std::ostringstream out;
  out << "sample";
  const std::size_t n = seqs.empty() ? 0 : seqs.front().size();
  for (std::size_t p = 0; p < n; ++p) out << ",q" << p;
  out << ",valid";
  if (extra) out << ',' << extra_name;
  out << '\n';
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    out << i;
    for (int q : seqs[i]) out << ',' << q;
    out << ',' << (is_valid_sequence(seqs[i], K) ? 1 : 0);
    if (extra) out << ',' << ((*extra)[i] ? 1 : 0);
    out << '\n';
  }
  write_file(path, out.str());
}

void write_chain_svgs(const fs::path& dir, const std::string& stem, const std::vector<ChainRecord>& chains,
                      const Codebook& cb, int steps) {
  const std::size_t shown = std::min<std::size_t>(chains.size(), 20);
  std::vector<ScatterLayer> layers;
  if (shown > 0) {
    for (const ChainSnapshot& snap : chains.front().steps) {
      Eigen::MatrixXd pts(2, static_cast<Eigen::Index>(shown) * snap.z.cols());
      Eigen::Index col = 0;
      for (std::size_t i = 0; i < shown; ++i) {
        const ChainSnapshot& s = chains[i].steps[&snap - chains.front().steps.data()];
        for (Eigen::Index p = 0; p < s.z.cols(); ++p) pts.col(col++) = s.z.col(p);
      }
      layers.push_back({pts, step_color(snap.t, steps), 2.0, 0.5, false});
    }
    // Trajectory of the first chain at each position.
    const ChainRecord& first = chains.front();
    for (Eigen::Index p = 0; p < first.final_z.cols(); ++p) {
      Eigen::MatrixXd path(2, static_cast<Eigen::Index>(first.steps.size()));
      for (std::size_t k = 0; k < first.steps.size(); ++k) path.col(static_cast<Eigen::Index>(k)) = first.steps[k].z.col(p);
      layers.push_back({path, "#555555", 1.0, 0.5, true});
    }
  }
  layers.push_back({cb.vectors(), "#000000", 5.0, 0.9, false});
  write_scatter_svg(dir / (stem + "_chains.svg"), "reverse chains (blue t=T, red t=0)", layers);

  Eigen::MatrixXd finals(2, 0);
  for (const ChainRecord& c : chains) {
    finals.conservativeResize(2, finals.cols() + c.final_z.cols());
    finals.rightCols(c.final_z.cols()) = c.final_z;
  }
  write_scatter_svg(dir / (stem + "_final.svg"), "final latents z_e^0",
                    {{finals, "#d62728", 1.5, 0.3, false}, {cb.vectors(), "#000000", 5.0, 0.9, false}});
}

// Per-coordinate second moment of the training latents.
double data_second_moment(const std::vector<ToySample>& data) {
  double acc = 0.0;
  Eigen::Index count = 0;
  for (const ToySample& s : data) {
    acc += s.x.squaredNorm();
    count += s.x.size();
  }
  return acc / static_cast<double>(count);
}

}  // namespace

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("sha1 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string git_blob_hash(const std::string& bytes) {
  std::string framed = "blob " + std::to_string(bytes.size());
  framed.push_back('\0');
  framed += bytes;
  return sha1_hex(framed);
}

std::vector<std::vector<int>> read_sequences_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty file: " + path.string());
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  std::vector<int> cols;
  for (int p = 0;; ++p) {
    auto it = std::find(names.begin(), names.end(), "q" + std::to_string(p));
    if (it == names.end()) break;
    cols.push_back(static_cast<int>(it - names.begin()));
  }
  if (cols.empty()) throw FormatError("no q0.. columns in " + path.string());
  std::vector<std::vector<int>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != names.size()) throw FormatError("ragged row in " + path.string());
    std::vector<int> seq;
    for (int c : cols) {
      try {
        seq.push_back(std::stoi(cells[c]));
      } catch (const std::logic_error&) {
        throw FormatError("bad symbol '" + cells[c] + "' in " + path.string());
      }
    }
    out.push_back(std::move(seq));
  }
  if (out.empty()) throw FormatError("no rows in " + path.string());
  return out;
}

void cmd_train(const CommandOptions& opts) {
  const RunConfig cfg = resolve_config(opts, nullptr);
  OutputLock lock(opts.out);
  Manifest manifest("train", cfg);
  Rng rng(cfg.seed);

  std::vector<ToySample> data;
  if (!cfg.data.dataset.empty()) {
    data = read_dataset_csv(cfg.data.dataset);
    manifest.input("dataset", cfg.data.dataset);
  } else {
    data = generate(cfg.data.toy, cfg.data.train_size, rng);
  }
  const fs::path dataset_path = opts.out / "dataset.csv";
  write_dataset_csv(dataset_path, data);
  manifest.doc["dataset_hash"] = git_blob_hash(read_file(dataset_path));
  manifest.outputs.push_back("dataset.csv");

  Eigen::MatrixXd vectors = toy_centroids(cfg.data.toy);
  if (cfg.training.end_to_end) {
    std::normal_distribution<double> init(0.0, cfg.training.codebook_init_std);
    for (Eigen::Index i = 0; i < vectors.size(); ++i) vectors.data()[i] = init(rng);
  }
  NoisePredictor net(cfg.network, rng);
  if (cfg.precondition) {
    const double m2 = data_second_moment(data);
    net.set_input_scale(marginal_input_scale(cfg.make_schedule(), m2, cfg.network.max_step));
    // The mixture head already predicts the noise from z_t; a linear skip on
    // top would double count it.
    if (cfg.network.mixture_codes == 0)
      net.set_output_skip(marginal_output_skip(cfg.make_schedule(), m2, cfg.network.max_step));
  }
  if (cfg.network.mixture_codes > 0)
    net.set_mixture(cfg.make_schedule(), vectors, cfg.data.toy.sigma_x * cfg.data.toy.sigma_x);
  Trainer trainer(ModelState{cfg.make_schedule(), std::move(net), Codebook(vectors), cfg.make_decoder(),
                             cfg.make_temperatures()},
                  cfg.make_train_config());

  fs::create_directories(opts.out / "checkpoints");
  std::ostringstream metrics, timing;
  metrics << "step,rec,diff,reg,total\n";
  // Wall-clock times vary between runs, so they stay out of the CSV outputs.
  timing << "# step wall_ms\n";
  const auto start = std::chrono::steady_clock::now();
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<Latent> batch(cfg.training.batch_size);
  double w_rec = 0, w_diff = 0, w_reg = 0;
  long long w_count = 0;

  for (long long step = 1; step <= cfg.training.steps; ++step) {
    for (Latent& b : batch) b = data[pick(rng)].x;
    const ElboTerms terms = trainer.step(batch, rng);
    w_rec += terms.rec;
    w_diff += terms.diff;
    w_reg += terms.reg;
    ++w_count;
    if (step % cfg.training.log_every == 0 || step == cfg.training.steps) {
      const double inv = 1.0 / static_cast<double>(w_count);
      metrics << step << ',' << num(w_rec * inv) << ',' << num(w_diff * inv) << ',' << num(w_reg * inv) << ','
              << num((w_rec + w_diff + w_reg) * inv) << '\n';
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      timing << step << ' ' << num(ms) << '\n';
      log_at(1, "step %lld  rec %.4f  diff %.4f  reg %.4f  (%.1f s)", step, w_rec * inv, w_diff * inv,
             w_reg * inv, ms / 1000.0);
      w_rec = w_diff = w_reg = 0;
      w_count = 0;
    }
    if (cfg.training.checkpoint_every > 0 && step % cfg.training.checkpoint_every == 0 &&
        step != cfg.training.steps) {
      const std::string name = "checkpoints/step_" + std::to_string(step) + ".bin";
      save_checkpoint(opts.out / name, Checkpoint::capture(cfg, trainer, step, rng));
      manifest.outputs.push_back(name);
      log_at(2, "wrote %s", name.c_str());
    }
  }

  save_checkpoint(opts.out / "final.bin", Checkpoint::capture(cfg, trainer, cfg.training.steps, rng));
  manifest.outputs.push_back("final.bin");
  write_file(opts.out / "metrics.csv", metrics.str());
  write_file(opts.out / "timing.log", timing.str());
  manifest.outputs.push_back("metrics.csv");
  manifest.outputs.push_back("timing.log");
  manifest.write(opts.out);
  log_at(1, "training finished: %s", (opts.out / "final.bin").c_str());
}

void cmd_sample(const CommandOptions& opts) {
  const Checkpoint ckpt = require_checkpoint(opts);
  RunConfig cfg = resolve_config(opts, &ckpt.config);
  if (opts.count) cfg.sampling.count = *opts.count;
  if (opts.stride) cfg.sampling.stride = *opts.stride;
  cfg.validate();
  OutputLock lock(opts.out);
  Manifest manifest("sample", cfg);
  manifest.input("checkpoint", *opts.checkpoint);

  const ModelState state = ckpt.model_state();
  const SamplerOptions options = cfg.make_sampler_options();
  const Eigen::MatrixXd truth = toy_centroids(cfg.data.toy);
  Rng rng(cfg.seed);
  std::vector<ChainRecord> chains;
  std::vector<std::vector<int>> seqs;
  int valid = 0;
  for (int i = 0; i < cfg.sampling.count; ++i) {
    chains.push_back(sample(state.schedule, state.net, state.codebook, state.decoder, rng, options));
    seqs.push_back(toy_indices(truth, state.codebook, chains.back().final_zq));
    valid += is_valid_sequence(seqs.back(), cfg.data.toy.K) ? 1 : 0;
  }

  write_samples_csv(opts.out / "samples.csv", chains);
  write_sequences_csv(opts.out / "sequences.csv", seqs, cfg.data.toy.K);
  write_chains_csv(opts.out / "chains.csv", chains);
  write_chain_svgs(opts.out, "sample", chains, state.codebook, state.schedule.steps());
  const double rate = static_cast<double>(valid) / cfg.sampling.count;
  json summary = {{"count", cfg.sampling.count}, {"valid", valid}, {"validity_rate", rate}};
  write_file(opts.out / "summary.json", summary.dump(2) + "\n");
  manifest.outputs = {"samples.csv", "sequences.csv", "chains.csv", "sample_chains.svg", "sample_final.svg",
                      "summary.json"};
  manifest.write(opts.out);
  log_at(1, "%d / %d samples are valid walks (%.3f)", valid, cfg.sampling.count, rate);
}

void cmd_inpaint(const CommandOptions& opts) {
  const Checkpoint ckpt = require_checkpoint(opts);
  RunConfig cfg = resolve_config(opts, &ckpt.config);
  if (opts.count) cfg.sampling.count = *opts.count;
  if (opts.stride) cfg.sampling.stride = *opts.stride;
  if (opts.mask) cfg.sampling.inpaint_known = *opts.mask;
  cfg.validate();
  OutputLock lock(opts.out);
  Manifest manifest("inpaint", cfg);
  manifest.input("checkpoint", *opts.checkpoint);

  const int n = cfg.data.toy.N, K = cfg.data.toy.K;
  const std::vector<int> known = parse_mask_positions(cfg.sampling.inpaint_known, n);
  const std::vector<int> reference = parse_index_list(cfg.sampling.inpaint_indices, n, K);
  const Eigen::MatrixXd truth = toy_centroids(cfg.data.toy);
  const InpaintMask mask = InpaintMask::from_latent(known, Codebook(truth).lookup(reference));

  const ModelState state = ckpt.model_state();
  const SamplerOptions options = cfg.make_sampler_options();
  Rng rng(cfg.seed);
  std::vector<ChainRecord> chains;
  std::vector<std::vector<int>> seqs;
  std::vector<bool> pins_ok;
  std::map<std::vector<int>, int> solutions;
  int valid_pinned = 0;
  for (int i = 0; i < cfg.sampling.count; ++i) {
    chains.push_back(inpaint(state.schedule, state.net, state.codebook, state.decoder, mask, rng, options));
    seqs.push_back(toy_indices(truth, state.codebook, chains.back().final_zq));
    bool ok = true;
    for (int p : known) ok = ok && seqs.back()[p] == reference[p];
    pins_ok.push_back(ok);
    if (ok && is_valid_sequence(seqs.back(), K)) {
      ++valid_pinned;
      ++solutions[seqs.back()];
    }
  }

  write_samples_csv(opts.out / "samples.csv", chains);
  write_sequences_csv(opts.out / "sequences.csv", seqs, K, &pins_ok, "pins_ok");
  write_chains_csv(opts.out / "chains.csv", chains);
  write_chain_svgs(opts.out, "inpaint", chains, state.codebook, state.schedule.steps());
  std::ostringstream sol;
  sol << "sequence,count\n";
  json sol_json = json::array();
  for (const auto& [seq, c] : solutions) {
    std::string key;
    for (std::size_t p = 0; p < seq.size(); ++p) key += (p ? "-" : "") + std::to_string(seq[p]);
    sol << key << ',' << c << '\n';
    sol_json.push_back({{"sequence", seq}, {"count", c}});
  }
  write_file(opts.out / "solutions.csv", sol.str());
  const double rate = static_cast<double>(valid_pinned) / cfg.sampling.count;
  json summary = {{"count", cfg.sampling.count}, {"known", known}, {"reference", reference},
                  {"valid_with_pins", valid_pinned}, {"rate", rate}, {"solutions", sol_json}};
  write_file(opts.out / "summary.json", summary.dump(2) + "\n");
  manifest.outputs = {"samples.csv", "sequences.csv", "chains.csv", "solutions.csv", "inpaint_chains.svg",
                      "inpaint_final.svg", "summary.json"};
  manifest.write(opts.out);
  log_at(1, "%d / %d conditional samples are valid walks with the pinned symbols (%.3f)", valid_pinned,
         cfg.sampling.count, rate);
}

void cmd_eval(const CommandOptions& opts) {
  std::optional<Checkpoint> ckpt;
  if (opts.checkpoint) ckpt = load_checkpoint(*opts.checkpoint);
  RunConfig cfg = resolve_config(opts, ckpt ? &ckpt->config : nullptr);
  if (opts.count) cfg.evaluation.kl_samples = *opts.count;
  cfg.validate();
  if (!opts.dataset) throw InvalidParameter("eval needs --dataset");

  std::set<std::string> wanted;
  {
    std::stringstream ss(opts.metrics);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (m != "validity" && m != "kl" && m != "nll") throw InvalidParameter("eval: unknown metric '" + m + "'");
      wanted.insert(m);
    }
  }
  if (wanted.empty()) throw InvalidParameter("eval: empty metric list");
  if (!ckpt && (wanted.count("nll") || !opts.samples))
    throw InvalidParameter("eval: --checkpoint is required unless only validity/kl are scored from --samples");

  OutputLock lock(opts.out);
  Manifest manifest("eval", cfg);
  manifest.input("dataset", *opts.dataset);
  if (opts.checkpoint) manifest.input("checkpoint", *opts.checkpoint);
  if (opts.samples) manifest.input("samples", *opts.samples);
  manifest.doc["metrics"] = std::vector<std::string>(wanted.begin(), wanted.end());

  const int K = cfg.data.toy.K;
  const std::vector<std::vector<int>> truth_seqs = read_sequences_csv(*opts.dataset);
  Rng rng(cfg.seed);
  std::optional<ModelState> state;
  if (ckpt) state = ckpt->model_state();

  std::vector<std::vector<int>> generated;
  if (wanted.count("validity") || wanted.count("kl")) {
    if (opts.samples) {
      generated = read_sequences_csv(*opts.samples);
    } else {
      const Eigen::MatrixXd truth = toy_centroids(cfg.data.toy);
      const SamplerOptions options = cfg.make_sampler_options();
      for (int i = 0; i < cfg.evaluation.kl_samples; ++i) {
        const ChainRecord c = sample(state->schedule, state->net, state->codebook, state->decoder, rng, options);
        generated.push_back(toy_indices(truth, state->codebook, c.final_zq));
      }
    }
  }

  json results;
  std::ostringstream table;
  table << "metric,value\n";
  auto report = [&](const std::string& name, double v) {
    results[name] = v;
    table << name << ',' << num(v) << '\n';
    log_at(1, "%s = %.6g", name.c_str(), v);
  };

  if (wanted.count("validity")) {
    int valid = 0;
    for (const auto& s : generated) valid += is_valid_sequence(s, K) ? 1 : 0;
    report("validity_rate", static_cast<double>(valid) / static_cast<double>(generated.size()));
  }
  if (wanted.count("kl")) {
    const auto truth_h = PositionalHistograms::from_sequences(truth_seqs, K);
    const auto model_h = PositionalHistograms::from_sequences(generated, K);
    const PositionalKl kl = positional_kl(truth_h, model_h, cfg.evaluation.kl_pseudo_count);
    report("kl_mean", kl.mean);
    std::ostringstream per;
    per << "position,kl\n";
    for (std::size_t p = 0; p < kl.per_position.size(); ++p) per << p << ',' << num(kl.per_position[p]) << '\n';
    write_file(opts.out / "kl.csv", per.str());
    std::ostringstream hist;
    hist << "source,position,symbol,count\n";
    for (int p = 0; p < truth_h.positions(); ++p)
      for (int k = 0; k < K; ++k) hist << "data," << p << ',' << k << ',' << truth_h.counts[p][k] << '\n';
    for (int p = 0; p < model_h.positions(); ++p)
      for (int k = 0; k < K; ++k) hist << "model," << p << ',' << k << ',' << model_h.counts[p][k] << '\n';
    write_file(opts.out / "histograms.csv", hist.str());
    manifest.outputs.push_back("kl.csv");
    manifest.outputs.push_back("histograms.csv");
  }
  if (wanted.count("nll")) {
    const std::vector<ToySample> data = read_dataset_csv(*opts.dataset);
    const int n = cfg.data.toy.N;
    const std::vector<int> observed = parse_mask_positions(cfg.evaluation.observed, n);
    std::vector<int> masked;
    for (int p = 0; p < n; ++p)
      if (std::find(observed.begin(), observed.end(), p) == observed.end()) masked.push_back(p);

    // Targets are the data's own discrete codes under the model codebook.
    std::vector<std::vector<int>> codes;
    for (const ToySample& s : data) codes.push_back(nearest_assign(state->codebook, s.x).indices);
    const std::size_t scored = std::min<std::size_t>(data.size(), cfg.evaluation.nll_samples);
    std::vector<NllSample> rows;
    for (std::size_t i = 0; i < scored; ++i) rows.push_back({data[i].x, codes[i]});

    const ConditionalSampler draw = inpaint_sampler(state->schedule, state->net, state->codebook, state->decoder,
                                                    cfg.make_sampler_options());
    report("nll_diffusion", conditional_nll(rows, masked, draw, state->codebook, cfg.quantizer.logit_scale,
                                            cfg.evaluation.mc_draws, rng));
    const ArBaseline ar = ArBaseline::fit(codes, static_cast<int>(state->codebook.size()),
                                          cfg.evaluation.ar_pseudo_count);
    const std::vector<std::vector<int>> scored_codes(codes.begin(), codes.begin() + static_cast<std::ptrdiff_t>(scored));
    report("nll_ar_baseline", ar.conditional_nll(scored_codes, masked));
    results["nll_masked_positions"] = masked;
  }

  write_file(opts.out / "metrics.csv", table.str());
  json summary = {{"metrics", results}, {"config_hash", manifest.doc["config_hash"]}, {"seed", cfg.seed}};
  write_file(opts.out / "metrics.json", summary.dump(2) + "\n");
  manifest.outputs.push_back("metrics.csv");
  manifest.outputs.push_back("metrics.json");
  manifest.write(opts.out);
}

}  // namespace bridgevq
