#include "bridgevq/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "bridgevq/error.hpp"

namespace bridgevq {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object and complains about anything left over.
class StrictObject {
 public:
  StrictObject(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw InvalidParameter("config: " + where() + " must be an object");
  }

  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    bool ok;
    if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
    else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer() && (std::is_signed_v<T> || v.is_number_unsigned());
    else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
    else ok = v.is_string();
    if (!ok) throw InvalidParameter("config: " + where(key) + " has the wrong type");
    out = v.get<T>();
  }

  const json* section(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw InvalidParameter("config: unknown key '" + where(it.key()) + "'");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Fn>
void with_section(StrictObject& parent, const std::string& key, Fn&& fn) {
  if (const json* sub = parent.section(key)) {
    StrictObject obj(*sub, parent.where(key));
    fn(obj);
    obj.finish();
  }
}

std::string quantize_name(QuantizeMode m) { return m == QuantizeMode::Nearest ? "nearest" : "sample"; }

QuantizeMode parse_quantize(const std::string& s) {
  if (s == "nearest") return QuantizeMode::Nearest;
  if (s == "sample") return QuantizeMode::Sample;
  throw InvalidParameter("config: sampling.quantize must be 'nearest' or 'sample'");
}

}  // namespace

std::vector<int> parse_index_list(const std::string& text, int positions, int K) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(cell, &used);
    } catch (const std::logic_error&) {
      throw InvalidParameter("index list: malformed entry '" + cell + "'");
    }
    if (used != cell.size() || v < 0 || v >= K) throw InvalidParameter("index list: bad entry '" + cell + "'");
    out.push_back(v);
  }
  if (static_cast<int>(out.size()) != positions)
    throw InvalidParameter("index list: expected " + std::to_string(positions) + " entries");
  return out;
}

void RunConfig::validate() const {
  if (diffusion.steps < 1) throw InvalidParameter("config: diffusion.steps must be >= 1");
  if (diffusion.delta.size() != 1 && static_cast<int>(diffusion.delta.size()) != diffusion.steps)
    throw InvalidParameter("config: diffusion.delta must hold 1 or T values");
  data.toy.validate();
  if (data.train_size < 1) throw InvalidParameter("config: data.train_size must be >= 1");
  if (network.latent_dim != 2) throw InvalidParameter("config: network.latent_dim must be 2 for the toy domain");
  if (network.max_step < diffusion.steps) throw InvalidParameter("config: network.max_step is below T");
  network.validate();
  if (network.mixture_codes != 0 && network.mixture_codes != data.toy.K)
    throw InvalidParameter("config: network.mixture_codes must be 0 or K");
  if (!(training.codebook_init_std > 0.0)) throw InvalidParameter("config: training.codebook_init_std must be > 0");
  if (training.checkpoint_every < 0 || training.log_every < 1)
    throw InvalidParameter("config: checkpoint_every must be >= 0 and log_every >= 1");
  if (sampling.count < 1 || sampling.stride < 1)
    throw InvalidParameter("config: sampling.count and sampling.stride must be >= 1");
  if (evaluation.mc_draws < 1 || evaluation.kl_samples < 1 || evaluation.nll_samples < 1)
    throw InvalidParameter("config: evaluation counts must be >= 1");
  if (!(evaluation.kl_pseudo_count >= 0.0) || !(evaluation.ar_pseudo_count > 0.0))
    throw InvalidParameter("config: evaluation pseudo counts out of range");
  if (static_cast<int>(parse_mask_positions(evaluation.observed, data.toy.N).size()) == data.toy.N)
    throw InvalidParameter("config: evaluation.observed must leave at least one position masked");
  parse_mask_positions(sampling.inpaint_known, data.toy.N);
  parse_index_list(sampling.inpaint_indices, data.toy.N, data.toy.K);
  // Building these runs their own checks.
  make_schedule();
  make_temperatures();
  make_train_config().validate();
}

DiffusionSchedule RunConfig::make_schedule() const {
  std::vector<double> deltas = diffusion.delta;
  if (deltas.size() == 1) deltas.assign(diffusion.steps, deltas.front());
  Latent z_star = Latent::Constant(network.latent_dim, data.toy.N, diffusion.z_star);
  return DiffusionSchedule::make(diffusion.steps, deltas, diffusion.theta, diffusion.eta, z_star);
}

TemperatureSchedule RunConfig::make_temperatures() const {
  return TemperatureSchedule::geometric(quantizer.tau, quantizer.tau_first, quantizer.tau_last, diffusion.steps);
}

TrainConfig RunConfig::make_train_config() const {
  TrainConfig t;
  t.batch_size = training.batch_size;
  t.steps = training.steps;
  t.optimizer = training.optimizer;
  t.seed = seed;
  t.end_to_end = training.end_to_end;
  t.logit_scale = quantizer.logit_scale;
  t.reg_gamma_sign = quantizer.reg_gamma_sign;
  t.reg_weight = quantizer.reg_weight;
  return t;
}

SamplerOptions RunConfig::make_sampler_options() const {
  SamplerOptions o;
  o.record_stride = sampling.stride;
  o.stochastic_reverse = sampling.stochastic_reverse;
  o.quantize = sampling.quantize;
  o.logit_scale = quantizer.logit_scale;
  return o;
}

std::string to_json_text(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["diffusion"] = {{"steps", c.diffusion.steps}, {"delta", c.diffusion.delta}, {"theta", c.diffusion.theta},
                    {"eta", c.diffusion.eta}, {"z_star", c.diffusion.z_star}};
  j["quantizer"] = {{"tau", c.quantizer.tau}, {"tau_first", c.quantizer.tau_first},
                    {"tau_last", c.quantizer.tau_last}, {"logit_scale", c.quantizer.logit_scale},
                    {"reg_gamma_sign", c.quantizer.reg_gamma_sign}, {"reg_weight", c.quantizer.reg_weight}};
  j["data"] = {{"K", c.data.toy.K}, {"N", c.data.toy.N}, {"radius", c.data.toy.radius},
               {"sigma_x", c.data.toy.sigma_x}, {"train_size", c.data.train_size}, {"dataset", c.data.dataset}};
  j["network"] = {{"latent_dim", c.network.latent_dim}, {"hidden", c.network.hidden},
                  {"kernel", c.network.kernel}, {"time_dim", c.network.time_dim},
                  {"time_layers", c.network.time_layers}, {"film", c.network.film},
                  {"mixture_codes", c.network.mixture_codes},
                  {"max_step", c.network.max_step},
                  {"precondition", c.precondition}};
  const auto& o = c.training.optimizer;
  j["training"] = {{"optimizer", to_string(o.kind)}, {"learning_rate", o.learning_rate}, {"beta1", o.beta1},
                   {"beta2", o.beta2}, {"epsilon", o.epsilon}, {"batch_size", c.training.batch_size},
                   {"steps", c.training.steps}, {"end_to_end", c.training.end_to_end},
                   {"codebook_init_std", c.training.codebook_init_std},
                   {"checkpoint_every", c.training.checkpoint_every}, {"log_every", c.training.log_every}};
  j["sampling"] = {{"stochastic_reverse", c.sampling.stochastic_reverse},
                   {"quantize", quantize_name(c.sampling.quantize)}, {"count", c.sampling.count},
                   {"stride", c.sampling.stride}, {"inpaint_known", c.sampling.inpaint_known},
                   {"inpaint_indices", c.sampling.inpaint_indices}};
  j["evaluation"] = {{"observed", c.evaluation.observed}, {"mc_draws", c.evaluation.mc_draws},
                     {"kl_samples", c.evaluation.kl_samples}, {"nll_samples", c.evaluation.nll_samples},
                     {"kl_pseudo_count", c.evaluation.kl_pseudo_count},
                     {"ar_pseudo_count", c.evaluation.ar_pseudo_count}};
  return j.dump(2);
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidParameter(std::string("config: malformed JSON: ") + e.what());
  }
  RunConfig c;
  StrictObject top(root, "");
  top.read("seed", c.seed);
  with_section(top, "diffusion", [&](StrictObject& s) {
    s.read("steps", c.diffusion.steps);
    if (const json* d = s.section("delta")) {
      if (d->is_number()) {
        c.diffusion.delta = {d->get<double>()};
      } else if (d->is_array() && !d->empty()) {
        c.diffusion.delta.clear();
        for (const auto& v : *d) {
          if (!v.is_number()) throw InvalidParameter("config: diffusion.delta entries must be numbers");
          c.diffusion.delta.push_back(v.get<double>());
        }
      } else {
        throw InvalidParameter("config: diffusion.delta must be a number or a non-empty array");
      }
    }
    s.read("theta", c.diffusion.theta);
    s.read("eta", c.diffusion.eta);
    s.read("z_star", c.diffusion.z_star);
  });
  with_section(top, "quantizer", [&](StrictObject& s) {
    s.read("tau", c.quantizer.tau);
    s.read("tau_first", c.quantizer.tau_first);
    s.read("tau_last", c.quantizer.tau_last);
    s.read("logit_scale", c.quantizer.logit_scale);
    s.read("reg_gamma_sign", c.quantizer.reg_gamma_sign);
    s.read("reg_weight", c.quantizer.reg_weight);
  });
  with_section(top, "data", [&](StrictObject& s) {
    s.read("K", c.data.toy.K);
    s.read("N", c.data.toy.N);
    s.read("radius", c.data.toy.radius);
    s.read("sigma_x", c.data.toy.sigma_x);
    s.read("train_size", c.data.train_size);
    s.read("dataset", c.data.dataset);
  });
  with_section(top, "network", [&](StrictObject& s) {
    s.read("latent_dim", c.network.latent_dim);
    s.read("hidden", c.network.hidden);
    s.read("kernel", c.network.kernel);
    s.read("time_dim", c.network.time_dim);
    s.read("time_layers", c.network.time_layers);
    s.read("film", c.network.film);
    s.read("mixture_codes", c.network.mixture_codes);
    s.read("max_step", c.network.max_step);
    s.read("precondition", c.precondition);
  });
  with_section(top, "training", [&](StrictObject& s) {
    std::string kind = to_string(c.training.optimizer.kind);
    s.read("optimizer", kind);
    c.training.optimizer.kind = parse_optimizer_kind(kind);
    s.read("learning_rate", c.training.optimizer.learning_rate);
    s.read("beta1", c.training.optimizer.beta1);
    s.read("beta2", c.training.optimizer.beta2);
    s.read("epsilon", c.training.optimizer.epsilon);
    s.read("batch_size", c.training.batch_size);
    s.read("steps", c.training.steps);
    s.read("end_to_end", c.training.end_to_end);
    s.read("codebook_init_std", c.training.codebook_init_std);
    s.read("checkpoint_every", c.training.checkpoint_every);
    s.read("log_every", c.training.log_every);
  });
  with_section(top, "sampling", [&](StrictObject& s) {
    s.read("stochastic_reverse", c.sampling.stochastic_reverse);
    std::string q = quantize_name(c.sampling.quantize);
    s.read("quantize", q);
    c.sampling.quantize = parse_quantize(q);
    s.read("count", c.sampling.count);
    s.read("stride", c.sampling.stride);
    s.read("inpaint_known", c.sampling.inpaint_known);
    s.read("inpaint_indices", c.sampling.inpaint_indices);
  });
  with_section(top, "evaluation", [&](StrictObject& s) {
    s.read("observed", c.evaluation.observed);
    s.read("mc_draws", c.evaluation.mc_draws);
    s.read("kl_samples", c.evaluation.kl_samples);
    s.read("nll_samples", c.evaluation.nll_samples);
    s.read("kl_pseudo_count", c.evaluation.kl_pseudo_count);
    s.read("ar_pseudo_count", c.evaluation.ar_pseudo_count);
  });
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace bridgevq
