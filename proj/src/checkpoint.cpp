#include "bridgevq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bridgevq/error.hpp"

namespace bridgevq {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "bridgevq-checkpoint";

void put_f64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

void put_all(std::string& out, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put_f64(out, data[i]);
}

class PayloadReader {
 public:
  explicit PayloadReader(std::string_view bytes) : bytes_(bytes) {}

  double next() {
    if (pos_ + 8 > bytes_.size()) throw FormatError("checkpoint: payload truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }

  void fill(double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = next();
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) throw FormatError("checkpoint: trailing bytes after payload");
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::capture(const RunConfig& config, const Trainer& trainer, long long step,
                               const Rng& rng) {
  const ModelState& s = trainer.state();
  Checkpoint c;
  c.config = config;
  c.theta = s.schedule.theta();
  c.eta = s.schedule.eta();
  c.deltas = s.schedule.deltas();
  c.z_star = s.schedule.z_star();
  c.temperatures = s.temperatures;
  c.sigma_x = s.decoder.sigma_x;
  c.codebook = s.codebook.vectors();
  c.codebook_trainable = s.codebook.trainable();
  c.architecture = s.net.architecture();
  c.params.assign(s.net.params().begin(), s.net.params().end());
  c.input_scale = s.net.input_scale();
  c.output_skip = s.net.output_skip();
  c.mixture_data_var = s.net.has_mixture() ? s.net.mixture().data_var : 0.0;
  c.step = step;
  c.optimizer_steps = trainer.optimizer().step_count();
  c.adam_m = trainer.optimizer().first_moment();
  c.adam_v = trainer.optimizer().second_moment();
  std::ostringstream rs;
  rs << rng;
  c.rng_state = rs.str();
  return c;
}

ModelState Checkpoint::model_state() const {
  NoisePredictor net(architecture, params);
  net.set_input_scale(input_scale);
  net.set_output_skip(output_skip);
  DiffusionSchedule schedule = DiffusionSchedule::make(static_cast<int>(deltas.size()), deltas, theta, eta, z_star);
  if (architecture.mixture_codes > 0) net.set_mixture(schedule, codebook, mixture_data_var);
  return ModelState{std::move(schedule), std::move(net), Codebook(codebook, codebook_trainable), DecoderModel{sigma_x},
                    temperatures};
}

void Checkpoint::restore_optimizer(Trainer& trainer) const {
  trainer.optimizer().restore(optimizer_steps, adam_m, adam_v);
}

void Checkpoint::restore_rng(Rng& rng) const {
  std::istringstream rs(rng_state);
  rs >> rng;
  if (!rs) throw FormatError("checkpoint: unreadable rng state");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  json header;
  header["format_version"] = c.format_version;
  header["config"] = json::parse(to_json_text(c.config));
  header["steps"] = c.deltas.size();
  header["latent_rows"] = c.z_star.rows();
  header["latent_cols"] = c.z_star.cols();
  header["codebook_size"] = c.codebook.cols();
  header["codebook_dim"] = c.codebook.rows();
  header["codebook_trainable"] = c.codebook_trainable;
  header["architecture"] = {{"latent_dim", c.architecture.latent_dim}, {"hidden", c.architecture.hidden},
                            {"kernel", c.architecture.kernel}, {"time_dim", c.architecture.time_dim},
                            {"time_layers", c.architecture.time_layers}, {"film", c.architecture.film},
                            {"mixture_codes", c.architecture.mixture_codes},
                            {"max_step", c.architecture.max_step}};
  header["mixture_data_var"] = c.mixture_data_var;
  header["param_count"] = c.params.size();
  header["optimizer_size"] = c.adam_m.size();
  header["step"] = c.step;
  header["optimizer_steps"] = c.optimizer_steps;
  header["rng_state"] = c.rng_state;

  if (c.adam_m.size() != c.adam_v.size()) throw InvalidParameter("checkpoint: moment buffers differ in size");
  if (static_cast<int>(c.temperatures.tau_t.size()) != static_cast<int>(c.deltas.size()) + 1)
    throw InvalidParameter("checkpoint: temperature schedule length must be T + 1");

  std::string out = std::string(kMagic) + " " + std::to_string(c.format_version) + "\n" + header.dump() + "\n";
  put_f64(out, c.theta);
  put_f64(out, c.eta);
  put_all(out, c.deltas.data(), c.deltas.size());
  put_all(out, c.z_star.data(), static_cast<std::size_t>(c.z_star.size()));
  put_f64(out, c.temperatures.tau);
  put_all(out, c.temperatures.tau_t.data(), c.temperatures.tau_t.size());
  put_f64(out, c.sigma_x);
  put_all(out, c.codebook.data(), static_cast<std::size_t>(c.codebook.size()));
  put_all(out, c.params.data(), c.params.size());
  if (static_cast<int>(c.input_scale.size()) != c.architecture.max_step + 1)
    throw InvalidParameter("checkpoint: input scale needs max_step + 1 entries");
  put_all(out, c.input_scale.data(), c.input_scale.size());
  if (c.output_skip.size() != c.input_scale.size())
    throw InvalidParameter("checkpoint: output skip needs max_step + 1 entries");
  put_all(out, c.output_skip.data(), c.output_skip.size());
  put_all(out, c.adam_m.data(), c.adam_m.size());
  put_all(out, c.adam_v.data(), c.adam_v.size());

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("checkpoint: cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open " + path.string());
  std::string magic_line, header_line;
  if (!std::getline(f, magic_line) || !std::getline(f, header_line))
    throw FormatError("checkpoint: missing header in " + path.string());
  std::istringstream ms(magic_line);
  std::string magic;
  int version = -1;
  ms >> magic >> version;
  if (magic != kMagic) throw FormatError("checkpoint: not a checkpoint file: " + path.string());
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Checkpoint c;
  try {
    const json h = json::parse(header_line);
    if (h.at("format_version").get<int>() != version) throw FormatError("checkpoint: header version disagrees");
    c.format_version = version;
    c.config = parse_run_config(h.at("config").dump());
    const auto steps = h.at("steps").get<std::size_t>();
    const auto rows = h.at("latent_rows").get<Eigen::Index>();
    const auto cols = h.at("latent_cols").get<Eigen::Index>();
    const auto k = h.at("codebook_size").get<Eigen::Index>();
    const auto d = h.at("codebook_dim").get<Eigen::Index>();
    c.codebook_trainable = h.at("codebook_trainable").get<bool>();
    const json& a = h.at("architecture");
    c.architecture.latent_dim = a.at("latent_dim").get<int>();
    c.architecture.hidden = a.at("hidden").get<int>();
    c.architecture.kernel = a.at("kernel").get<int>();
    c.architecture.time_dim = a.at("time_dim").get<int>();
    c.architecture.time_layers = a.at("time_layers").get<int>();
    c.architecture.film = a.at("film").get<bool>();
    c.architecture.mixture_codes = a.at("mixture_codes").get<int>();
    c.mixture_data_var = h.at("mixture_data_var").get<double>();
    c.architecture.max_step = a.at("max_step").get<int>();
    c.architecture.validate();
    const auto p = h.at("param_count").get<std::size_t>();
    if (p != c.architecture.param_count()) throw FormatError("checkpoint: parameter count disagrees with architecture");
    const auto s = h.at("optimizer_size").get<std::size_t>();
    c.step = h.at("step").get<long long>();
    c.optimizer_steps = h.at("optimizer_steps").get<long long>();
    c.rng_state = h.at("rng_state").get<std::string>();

    PayloadReader r(payload);
    c.theta = r.next();
    c.eta = r.next();
    c.deltas.resize(steps);
    r.fill(c.deltas.data(), steps);
    c.z_star.resize(rows, cols);
    r.fill(c.z_star.data(), static_cast<std::size_t>(c.z_star.size()));
    c.temperatures.tau = r.next();
    c.temperatures.tau_t.resize(steps + 1);
    r.fill(c.temperatures.tau_t.data(), steps + 1);
    c.sigma_x = r.next();
    c.codebook.resize(d, k);
    r.fill(c.codebook.data(), static_cast<std::size_t>(c.codebook.size()));
    c.params.resize(p);
    r.fill(c.params.data(), p);
    c.input_scale.resize(static_cast<std::size_t>(c.architecture.max_step) + 1);
    r.fill(c.input_scale.data(), c.input_scale.size());
    c.output_skip.resize(c.input_scale.size());
    r.fill(c.output_skip.data(), c.output_skip.size());
    c.adam_m.resize(s);
    c.adam_v.resize(s);
    r.fill(c.adam_m.data(), s);
    r.fill(c.adam_v.data(), s);
    r.expect_end();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  return c;
}

}  // namespace bridgevq
