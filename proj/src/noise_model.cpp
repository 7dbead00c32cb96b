#include "bridgevq/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bridgevq/error.hpp"

namespace bridgevq {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Weight (o, i, j) lives at ((o * in + i) * k + j).
void conv_forward(const double* w, const double* b, const double* in, int in_ch, int out_ch,
                  int k, int n, double* out) {
  const int pad = k / 2;
  for (int o = 0; o < out_ch; ++o) {
    double* row = out + static_cast<std::ptrdiff_t>(o) * n;
    std::fill(row, row + n, b[o]);
    for (int i = 0; i < in_ch; ++i) {
      const double* src = in + static_cast<std::ptrdiff_t>(i) * n;
      const double* wk = w + (static_cast<std::ptrdiff_t>(o) * in_ch + i) * k;
      for (int j = 0; j < k; ++j) {
        const double wj = wk[j];
        const int shift = j - pad;
        const int lo = std::max(0, -shift);
        const int hi = std::min(n, n - shift);
        for (int p = lo; p < hi; ++p) row[p] += wj * src[p + shift];
      }
    }
  }
}

// Accumulates weight/bias gradients and (optionally) the input gradient.
void conv_backward(const double* w, const double* in, const double* grad_out, int in_ch, int out_ch,
                   int k, int n, double* grad_w, double* grad_b, double* grad_in) {
  const int pad = k / 2;
  for (int o = 0; o < out_ch; ++o) {
    const double* g = grad_out + static_cast<std::ptrdiff_t>(o) * n;
    double gb = 0.0;
    for (int p = 0; p < n; ++p) gb += g[p];
    grad_b[o] += gb;
    for (int i = 0; i < in_ch; ++i) {
      const double* src = in + static_cast<std::ptrdiff_t>(i) * n;
      const std::ptrdiff_t base = (static_cast<std::ptrdiff_t>(o) * in_ch + i) * k;
      double* gin = grad_in ? grad_in + static_cast<std::ptrdiff_t>(i) * n : nullptr;
      for (int j = 0; j < k; ++j) {
        const int shift = j - pad;
        const int lo = std::max(0, -shift);
        const int hi = std::min(n, n - shift);
        double gw = 0.0;
        for (int p = lo; p < hi; ++p) gw += g[p] * src[p + shift];
        grad_w[base + j] += gw;
        if (gin) {
          const double wj = w[base + j];
          for (int p = lo; p < hi; ++p) gin[p + shift] += wj * g[p];
        }
      }
    }
  }
}

}  // namespace

std::size_t NoiseArchitecture::param_count() const {
  const std::size_t d = latent_dim, h = hidden, k = kernel, e = time_dim;
  const std::size_t time_out = h * time_layers * (film ? 2 : 1);
  const std::size_t out3 = d + static_cast<std::size_t>(mixture_codes);
  return time_out * e + time_out + h * d * k + h + h * h * k + h + out3 * h * k + out3;
}

void NoiseArchitecture::validate() const {
  if (latent_dim < 1 || hidden < 1 || max_step < 1)
    throw InvalidParameter("noise architecture: sizes must be positive");
  if (kernel < 1 || kernel % 2 == 0) throw InvalidParameter("noise architecture: kernel must be odd");
  if (time_dim < 2 || time_dim % 2 != 0)
    throw InvalidParameter("noise architecture: time_dim must be even and >= 2");
  if (time_layers != 1 && time_layers != 2)
    throw InvalidParameter("noise architecture: time_layers must be 1 or 2");
  if (mixture_codes < 0) throw InvalidParameter("noise architecture: mixture_codes must be >= 0");
}

Eigen::VectorXd sinusoidal_embedding(int t, int dim) {
  const int half = dim / 2;
  Eigen::VectorXd out(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out(i) = std::sin(t * freq);
    out(half + i) = std::cos(t * freq);
  }
  return out;
}

NoisePredictor::Layout NoisePredictor::layout_for(const NoiseArchitecture& a) {
  const std::size_t d = a.latent_dim, h = a.hidden, k = a.kernel, e = a.time_dim;
  const std::size_t time_out = h * a.time_layers * (a.film ? 2 : 1);
  Layout l{};
  l.time_w = 0;
  l.time_b = l.time_w + time_out * e;
  l.conv1_w = l.time_b + time_out;
  l.conv1_b = l.conv1_w + h * d * k;
  l.conv2_w = l.conv1_b + h;
  l.conv2_b = l.conv2_w + h * h * k;
  l.conv3_w = l.conv2_b + h;
  const std::size_t out3 = d + static_cast<std::size_t>(a.mixture_codes);
  l.conv3_b = l.conv3_w + out3 * h * k;
  l.end = l.conv3_b + out3;
  return l;
}

NoisePredictor::NoisePredictor(NoiseArchitecture arch, Rng& rng) : arch_(arch) {
  arch_.validate();
  layout_ = layout_for(arch_);
  params_.assign(layout_.end, 0.0);
  const int d = arch_.latent_dim, h = arch_.hidden, k = arch_.kernel, e = arch_.time_dim;
  auto fill = [&](std::size_t offset, std::size_t count, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < count; ++i) params_[offset + i] = u(rng);
  };
  const int time_out = h * arch_.time_layers * (arch_.film ? 2 : 1);
  fill(layout_.time_w, static_cast<std::size_t>(time_out) * e, e, time_out);
  fill(layout_.conv1_w, static_cast<std::size_t>(h) * d * k, d * k, h * k);
  fill(layout_.conv2_w, static_cast<std::size_t>(h) * h * k, h * k, h * k);
  const int out3 = d + arch_.mixture_codes;
  fill(layout_.conv3_w, static_cast<std::size_t>(out3) * h * k, h * k, out3 * k);
  input_scale_.assign(arch_.max_step + 1, 1.0);
  output_skip_.assign(arch_.max_step + 1, 0.0);
}

NoisePredictor::NoisePredictor(NoiseArchitecture arch, std::vector<double> params)
    : arch_(arch), params_(std::move(params)) {
  arch_.validate();
  layout_ = layout_for(arch_);
  if (params_.size() != layout_.end)
    throw InvalidParameter("noise predictor: expected " + std::to_string(layout_.end) +
                           " parameters, got " + std::to_string(params_.size()));
  input_scale_.assign(arch_.max_step + 1, 1.0);
  output_skip_.assign(arch_.max_step + 1, 0.0);
}

void NoisePredictor::set_input_scale(std::vector<double> scale) {
  if (static_cast<int>(scale.size()) != arch_.max_step + 1)
    throw InvalidParameter("noise predictor: input scale needs max_step + 1 entries");
  for (double c : scale)
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidParameter("noise predictor: input scale must be positive");
  input_scale_ = std::move(scale);
}

void NoisePredictor::set_output_skip(std::vector<double> skip) {
  if (static_cast<int>(skip.size()) != arch_.max_step + 1)
    throw InvalidParameter("noise predictor: output skip needs max_step + 1 entries");
  for (double c : skip)
    if (!std::isfinite(c)) throw InvalidParameter("noise predictor: output skip must be finite");
  output_skip_ = std::move(skip);
}

void NoisePredictor::set_mixture(const DiffusionSchedule& s, Eigen::MatrixXd codes, double data_var) {
  if (arch_.mixture_codes == 0) throw InvalidParameter("noise predictor: architecture has no mixture head");
  if (!(data_var >= 0.0) || !std::isfinite(data_var))
    throw InvalidParameter("noise predictor: mixture data variance must be >= 0");
  if (s.steps() > arch_.max_step) throw InvalidParameter("noise predictor: schedule longer than max_step");
  Mixture m;
  m.signal.assign(arch_.max_step + 1, 0.0);
  m.noise_sd.assign(arch_.max_step + 1, 0.0);
  for (int t = 0; t <= arch_.max_step; ++t) {
    const int u = std::min(t, s.steps());
    m.signal[t] = std::sqrt(s.alpha_bar(u));
    m.noise_sd[t] = std::sqrt(s.stationary_variance() * s.one_minus_alpha_bar(u));
  }
  m.data_var = data_var;
  mixture_ = std::move(m);
  set_mixture_codes(std::move(codes));
}

void NoisePredictor::set_mixture_codes(Eigen::MatrixXd codes) {
  if (mixture_.signal.empty()) throw InvalidParameter("noise predictor: set_mixture first");
  if (codes.rows() != arch_.latent_dim || codes.cols() != arch_.mixture_codes)
    throw InvalidParameter("noise predictor: mixture codes must be latent_dim x mixture_codes");
  if (!codes.allFinite()) throw InvalidParameter("noise predictor: mixture codes must be finite");
  mixture_.codes = std::move(codes);
}

std::vector<double> marginal_input_scale(const DiffusionSchedule& s, double second_moment, int max_step) {
  if (!(second_moment > 0.0)) throw InvalidParameter("input scale: second moment must be > 0");
  if (max_step < s.steps()) throw InvalidParameter("input scale: max_step below T");
  std::vector<double> out(max_step + 1, 1.0);
  for (int t = 0; t <= s.steps(); ++t)
    out[t] = 1.0 / std::sqrt(second_moment * s.alpha_bar(t) + s.stationary_variance() * s.one_minus_alpha_bar(t));
  for (int t = s.steps() + 1; t <= max_step; ++t) out[t] = out[s.steps()];
  return out;
}

std::vector<double> marginal_output_skip(const DiffusionSchedule& s, double second_moment, int max_step) {
  if (!(second_moment > 0.0)) throw InvalidParameter("output skip: second moment must be > 0");
  if (max_step < s.steps()) throw InvalidParameter("output skip: max_step below T");
  std::vector<double> out(max_step + 1, 0.0);
  for (int t = 1; t <= s.steps(); ++t) {
    const double noise_var = s.stationary_variance() * s.one_minus_alpha_bar(t);
    out[t] = std::sqrt(noise_var) / (second_moment * s.alpha_bar(t) + noise_var);
  }
  for (int t = s.steps() + 1; t <= max_step; ++t) out[t] = out[s.steps()];
  return out;
}

void NoisePredictor::check_input(const Latent& z_t, int t) const {
  if (t < 1 || t > arch_.max_step)
    throw InvalidParameter("predict: step " + std::to_string(t) + " outside 1.." +
                           std::to_string(arch_.max_step));
  if (z_t.rows() != arch_.latent_dim) throw InvalidParameter("predict: latent dimension mismatch");
  if (z_t.cols() < 1) throw InvalidParameter("predict: empty latent");
  if (!z_t.allFinite()) throw InvalidParameter("predict: non-finite input");
  if (arch_.mixture_codes > 0 && !has_mixture())
    throw InvalidParameter("predict: the mixture head needs set_mixture");
}

// Layer `layer` (0 or 1) adds the time shift, and with film also multiplies
// by (1 + scale). Layers without time features pass through.
void NoisePredictor::modulate(const Tape& tape, int layer, const std::vector<double>& raw,
                              std::vector<double>& pre, int n) const {
  const int h = arch_.hidden;
  pre = raw;
  if (layer >= arch_.time_layers) return;
  const int width = arch_.film ? 2 * h : h;
  const double* shift = tape.temb.data() + static_cast<std::ptrdiff_t>(layer) * width;
  for (int c = 0; c < h; ++c) {
    const double gain = arch_.film ? 1.0 + shift[h + c] : 1.0;
    for (int q = 0; q < n; ++q) pre[c * n + q] = raw[c * n + q] * gain + shift[c];
  }
}

// Backward of modulate: writes d/d(raw) and accumulates d/d(time features),
// which are broadcast over positions and so sum over n.
void NoisePredictor::demodulate(const Tape& tape, int layer, const std::vector<double>& raw,
                                const std::vector<double>& g_pre, std::vector<double>& g_raw,
                                std::vector<double>& g_temb, int n) const {
  const int h = arch_.hidden;
  g_raw = g_pre;
  if (layer >= arch_.time_layers) return;
  const int width = arch_.film ? 2 * h : h;
  const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(layer) * width;
  for (int c = 0; c < h; ++c) {
    double g_shift = 0.0, g_gain = 0.0;
    for (int q = 0; q < n; ++q) {
      g_shift += g_pre[c * n + q];
      g_gain += g_pre[c * n + q] * raw[c * n + q];
    }
    g_temb[base + c] += g_shift;
    if (arch_.film) {
      g_temb[base + h + c] += g_gain;
      const double gain = 1.0 + tape.temb[base + h + c];
      for (int q = 0; q < n; ++q) g_raw[c * n + q] = g_pre[c * n + q] * gain;
    }
  }
}

Latent NoisePredictor::predict(const Latent& z_t, int t) const {
  Tape tape;
  return forward(z_t, t, tape);
}

Latent NoisePredictor::forward(const Latent& z_t, int t, Tape& tape) const {
  check_input(z_t, t);
  const int d = arch_.latent_dim, h = arch_.hidden, k = arch_.kernel, e = arch_.time_dim;
  const int n = static_cast<int>(z_t.cols());
  const double* p = params_.data();

  tape.input = z_t;
  tape.step = t;
  tape.embedding = sinusoidal_embedding(t, e);
  const int time_out = h * arch_.time_layers * (arch_.film ? 2 : 1);
  tape.temb.assign(time_out, 0.0);
  for (int o = 0; o < time_out; ++o) {
    double acc = p[layout_.time_b + o];
    const double* w = p + layout_.time_w + static_cast<std::ptrdiff_t>(o) * e;
    for (int i = 0; i < e; ++i) acc += w[i] * tape.embedding(i);
    tape.temb[o] = acc;
  }

  // Eigen stores d x N column-major; switch to channel-major rows.
  std::vector<double> x(static_cast<std::size_t>(d) * n);
  const double c_in = input_scale_[t];
  for (int c = 0; c < d; ++c)
    for (int q = 0; q < n; ++q) x[c * n + q] = c_in * z_t(c, q);

  const std::size_t hn = static_cast<std::size_t>(h) * n;
  tape.raw1.assign(hn, 0.0);
  tape.raw2.assign(hn, 0.0);
  tape.post1.assign(hn, 0.0);
  tape.post2.assign(hn, 0.0);

  conv_forward(p + layout_.conv1_w, p + layout_.conv1_b, x.data(), d, h, k, n, tape.raw1.data());
  modulate(tape, 0, tape.raw1, tape.pre1, n);
  for (std::size_t i = 0; i < hn; ++i) tape.post1[i] = tape.pre1[i] * sigmoid(tape.pre1[i]);

  conv_forward(p + layout_.conv2_w, p + layout_.conv2_b, tape.post1.data(), h, h, k, n,
               tape.raw2.data());
  modulate(tape, 1, tape.raw2, tape.pre2, n);
  for (std::size_t i = 0; i < hn; ++i) tape.post2[i] = tape.pre2[i] * sigmoid(tape.pre2[i]);

  const int out3 = d + arch_.mixture_codes;
  std::vector<double> y(static_cast<std::size_t>(out3) * n);
  conv_forward(p + layout_.conv3_w, p + layout_.conv3_b, tape.post2.data(), h, out3, k, n, y.data());

  const double skip = output_skip_[t];
  Latent out(d, n);
  for (int c = 0; c < d; ++c)
    for (int q = 0; q < n; ++q) out(c, q) = y[c * n + q] + skip * z_t(c, q);
  if (arch_.mixture_codes > 0) {
    const int K = arch_.mixture_codes;
    const double a = mixture_.signal[t], sd = mixture_.noise_sd[t];
    const double var = a * a * mixture_.data_var + sd * sd;
    const double lam = mixture_.data_var * a / var;
    tape.posterior.resize(K, n);
    for (int q = 0; q < n; ++q) {
      Eigen::VectorXd logit(K);
      for (int j = 0; j < K; ++j)
        logit(j) = -(z_t.col(q) - a * mixture_.codes.col(j)).squaredNorm() / (2.0 * var) + y[(d + j) * n + q];
      const double top = logit.maxCoeff();
      Eigen::VectorXd w = (logit.array() - top).exp().matrix();
      w /= w.sum();
      tape.posterior.col(q) = w;
      // Posterior mean of z_0: per code e_k + lam (z_t - a e_k), averaged by w.
      const Eigen::VectorXd mean_code = mixture_.codes * w;
      const Eigen::VectorXd z0 = mean_code + lam * (z_t.col(q) - a * mean_code);
      out.col(q) += (z_t.col(q) - a * z0) / sd;
    }
  }
  return out;
}

void NoisePredictor::backward(const Tape& tape, const Latent& grad_out, std::span<double> grad,
                              Latent* grad_input) const {
  if (grad.size() != params_.size()) throw InvalidParameter("backward: gradient size mismatch");
  const int d = arch_.latent_dim, h = arch_.hidden, k = arch_.kernel, e = arch_.time_dim;
  const int n = static_cast<int>(tape.input.cols());
  if (grad_out.rows() != d || grad_out.cols() != n)
    throw InvalidParameter("backward: output gradient shape mismatch");
  const double* p = params_.data();
  double* g = grad.data();

  const int out3 = d + arch_.mixture_codes;
  std::vector<double> gy(static_cast<std::size_t>(out3) * n, 0.0);
  for (int c = 0; c < d; ++c)
    for (int q = 0; q < n; ++q) gy[c * n + q] = grad_out(c, q);
  // Gradient reaching z_t through the mixture head, outside the network.
  Latent g_head = Latent::Zero(d, n);
  if (arch_.mixture_codes > 0) {
    const int K = arch_.mixture_codes;
    const int t = tape.step;
    const double a = mixture_.signal[t], sd = mixture_.noise_sd[t];
    const double var = a * a * mixture_.data_var + sd * sd;
    const double lam = mixture_.data_var * a / var;
    for (int q = 0; q < n; ++q) {
      const Eigen::VectorXd z = tape.input.col(q);
      const Eigen::VectorXd g_z0 = -(a / sd) * grad_out.col(q);
      const Eigen::VectorXd w = tape.posterior.col(q);
      Eigen::VectorXd g_w(K);
      for (int j = 0; j < K; ++j) {
        const Eigen::VectorXd comp = mixture_.codes.col(j) + lam * (z - a * mixture_.codes.col(j));
        g_w(j) = comp.dot(g_z0);
      }
      const double inner = w.dot(g_w);
      g_head.col(q) += grad_out.col(q) / sd + lam * g_z0;
      for (int j = 0; j < K; ++j) {
        const double g_logit = w(j) * (g_w(j) - inner);
        gy[(d + j) * n + q] = g_logit;
        g_head.col(q) -= g_logit * (z - a * mixture_.codes.col(j)) / var;
      }
    }
  }

  const std::size_t hn = static_cast<std::size_t>(h) * n;
  std::vector<double> g_post2(hn, 0.0), g_pre2(hn), g_post1(hn, 0.0), g_pre1(hn);

  conv_backward(p + layout_.conv3_w, tape.post2.data(), gy.data(), h, out3, k, n, g + layout_.conv3_w,
                g + layout_.conv3_b, g_post2.data());
  for (std::size_t i = 0; i < hn; ++i) {
    const double s = sigmoid(tape.pre2[i]);
    g_pre2[i] = g_post2[i] * s * (1.0 + tape.pre2[i] * (1.0 - s));
  }
  std::vector<double> g_temb(tape.temb.size(), 0.0), g_raw(hn);
  demodulate(tape, 1, tape.raw2, g_pre2, g_raw, g_temb, n);
  conv_backward(p + layout_.conv2_w, tape.post1.data(), g_raw.data(), h, h, k, n,
                g + layout_.conv2_w, g + layout_.conv2_b, g_post1.data());
  for (std::size_t i = 0; i < hn; ++i) {
    const double s = sigmoid(tape.pre1[i]);
    g_pre1[i] = g_post1[i] * s * (1.0 + tape.pre1[i] * (1.0 - s));
  }

  std::vector<double> x(static_cast<std::size_t>(d) * n);
  const double c_in = input_scale_[tape.step];
  for (int c = 0; c < d; ++c)
    for (int q = 0; q < n; ++q) x[c * n + q] = c_in * tape.input(c, q);
  std::vector<double> gx(grad_input ? x.size() : 0, 0.0);
  demodulate(tape, 0, tape.raw1, g_pre1, g_raw, g_temb, n);
  conv_backward(p + layout_.conv1_w, x.data(), g_raw.data(), d, h, k, n, g + layout_.conv1_w,
                g + layout_.conv1_b, grad_input ? gx.data() : nullptr);

  for (std::size_t o = 0; o < g_temb.size(); ++o) {
    g[layout_.time_b + o] += g_temb[o];
    double* gw = g + layout_.time_w + static_cast<std::ptrdiff_t>(o) * e;
    for (int i = 0; i < e; ++i) gw[i] += g_temb[o] * tape.embedding(i);
  }

  if (grad_input) {
    grad_input->resize(d, n);
    for (int c = 0; c < d; ++c)
      for (int q = 0; q < n; ++q)
        (*grad_input)(c, q) = c_in * gx[c * n + q] + output_skip_[tape.step] * grad_out(c, q) + g_head(c, q);
  }
}

LossAndGrad loss_and_grad(const NoisePredictor& m, const LossClosure& closure) {
  LossAndGrad out;
  out.grad.assign(m.param_count(), 0.0);
  out.loss = closure(m, out.grad);
  if (!std::isfinite(out.loss)) throw NonFiniteLoss("loss", out.loss);
  for (std::size_t i = 0; i < out.grad.size(); ++i)
    if (!std::isfinite(out.grad[i])) throw NonFiniteLoss("grad[" + std::to_string(i) + "]", out.grad[i]);
  return out;
}

}  // namespace bridgevq
