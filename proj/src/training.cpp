#include "bridgevq/training.hpp"

#include <cmath>
#include <numbers>

#include "bridgevq/error.hpp"

namespace bridgevq {

void DecoderModel::validate() const {
  if (!(sigma_x > 0.0)) throw InvalidParameter("decoder: sigma_x must be > 0");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidParameter("train: batch_size must be >= 1");
  if (steps < 0) throw InvalidParameter("train: steps must be >= 0");
  if (!(optimizer.learning_rate >= 0.0)) throw InvalidParameter("train: learning rate must be >= 0");
  if (!(logit_scale > 0.0)) throw InvalidParameter("train: logit_scale must be > 0");
  if (reg_gamma_sign != 1.0 && reg_gamma_sign != -1.0)
    throw InvalidParameter("train: reg_gamma_sign must be +1 or -1");
  if (!(reg_weight >= 0.0)) throw InvalidParameter("train: reg_weight must be >= 0");
}

double diffusion_term_weight(const DiffusionSchedule& s, int t) {
  if (t < 1 || t > s.steps()) throw InvalidParameter("diffusion term: t must lie in 1..T");
  if (t == 1) return 1.0 / (2.0 * s.alpha(1));
  return s.beta(t) / (2.0 * s.alpha(t) * s.one_minus_alpha_bar(t - 1));
}

double diffusion_term_constant(const DiffusionSchedule& s, int t) {
  if (t < 1 || t > s.steps()) throw InvalidParameter("diffusion term: t must lie in 1..T");
  if (t > 1) return 0.0;
  const double n = static_cast<double>(s.z_star().size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * final_step_variance(s));
}

double diffusion_term(const DiffusionSchedule& s, const NoisePredictor& m, const Latent& z0, int t,
                      const Latent& eps, std::span<double> grad, double grad_scale) {
  if (t < 1 || t > s.steps())
    throw InvalidParameter("diffusion term: t must lie in 1..T (t = 0 carries no diffusion term)");
  const Latent zt = marginal_from_zero(s, t, z0, eps);
  NoisePredictor::Tape tape;
  const Latent eps_pred = m.forward(zt, t, tape);

  double value;
  Latent grad_eps;
  if (t == 1) {
    // Final step: log p(z_0 | z_1) without its normalizer.
    const GaussianMoments rev = reverse_mean(s, 1, zt, eps_pred);
    const double var = final_step_variance(s);
    const Latent resid = z0 - rev.mean;
    value = -0.5 * resid.squaredNorm() / var;
    if (!grad.empty()) {
      const double noise_scale = std::sqrt(s.stationary_variance() / s.one_minus_alpha_bar(1)) *
                                 s.beta(1) / s.sqrt_alpha(1);
      grad_eps = -noise_scale / var * resid;
    }
  } else {
    const double w = diffusion_term_weight(s, t);
    const Latent resid = eps - eps_pred;
    value = -w * resid.squaredNorm();
    if (!grad.empty()) grad_eps = 2.0 * w * resid;
  }
  if (!grad.empty()) m.backward(tape, grad_scale * grad_eps, grad);
  return value;
}

double terminal_prior_term(const DiffusionSchedule& s, const Latent& z0) {
  const GaussianMoments q = marginal_moments(s, s.steps(), z0);
  const GaussianMoments prior{s.z_star(), s.stationary_variance()};
  return -gaussian_kl(q, prior);
}

double reconstruction_term(const DecoderModel& dec, const Latent& x, const DiscreteState& zq0,
                           const Codebook& cb) {
  dec.validate();
  const Latent mean = cb.lookup(zq0.indices);
  if (mean.rows() != x.rows() || mean.cols() != x.cols())
    throw InvalidParameter("reconstruction: shape mismatch");
  return gaussian_log_density(x, {mean, dec.sigma_x * dec.sigma_x});
}

double reconstruction_term_st(const DecoderModel& dec, const Latent& x, const DiscreteState& zq0,
                              const Codebook& cb, double temperature, double logit_scale,
                              Eigen::MatrixXd* grad_codebook) {
  const double value = reconstruction_term(dec, x, zq0, cb);
  if (!grad_codebook) return value;
  if (!zq0.relaxed) throw InvalidParameter("reconstruction: straight-through needs a relaxed draw");
  const double var = dec.sigma_x * dec.sigma_x;
  Eigen::MatrixXd hard = Eigen::MatrixXd::Zero(cb.size(), x.cols());
  for (Eigen::Index n = 0; n < x.cols(); ++n) hard(zq0.indices[n], n) = 1.0;
  const Latent grad_mean = (x - cb.vectors() * hard) / var;
  *grad_codebook += grad_mean * hard.transpose();
  const Eigen::MatrixXd grad_assign = cb.vectors().transpose() * grad_mean;
  const Eigen::MatrixXd grad_logits = gumbel_softmax_backward(*zq0.relaxed, temperature, grad_assign);
  categorical_logits_backward(cb, x, logit_scale, grad_logits, {nullptr, grad_codebook});
  return value;
}

double elbo_t0_reduction(const Codebook& cb, const DecoderModel& dec, const Latent& x) {
  const DiscreteState hard = nearest_assign(cb, x);
  return reconstruction_term(dec, x, hard, cb) - vqvae_reduction_loss(cb, x);
}

Trainer::Trainer(ModelState state, TrainConfig config)
    : state_(std::move(state)), config_(config),
      optimizer_(0, config.optimizer) {
  config_.validate();
  state_.decoder.validate();
  state_.codebook.set_trainable(config_.end_to_end);
  if (state_.temperatures.steps() != state_.schedule.steps())
    throw InvalidParameter("trainer: temperature schedule length must match T");
  if (state_.net.architecture().max_step < state_.schedule.steps())
    throw InvalidParameter("trainer: network max_step is below T");
  if (state_.net.architecture().latent_dim != state_.codebook.dim())
    throw InvalidParameter("trainer: latent dimension mismatch");
  if (state_.net.has_mixture() && state_.net.architecture().mixture_codes != state_.codebook.size())
    throw InvalidParameter("trainer: mixture head and codebook sizes differ");
  optimizer_ = Optimizer(trainable_size(), config_.optimizer);
}

std::size_t Trainer::trainable_size() const {
  std::size_t n = state_.net.param_count();
  if (state_.codebook.trainable()) n += static_cast<std::size_t>(state_.codebook.vectors().size());
  return n;
}

ElboTerms Trainer::step(std::span<const Latent> batch, Rng& rng) {
  if (batch.empty()) throw InvalidParameter("trainer: empty batch");
  const DiffusionSchedule& s = state_.schedule;
  const Codebook& cb = state_.codebook;
  const bool train_codebook = cb.trainable();
  const int steps = s.steps();
  const double scale = -1.0 / static_cast<double>(batch.size());
  const double tau = state_.temperatures.tau;
  const double reg_factor = config_.reg_gamma_sign * config_.reg_weight;
  const RegTermOptions reg_options{config_.logit_scale, Relaxation::StraightThrough};

  std::vector<double> grad(trainable_size(), 0.0);
  const std::span<double> net_grad(grad.data(), state_.net.param_count());
  Eigen::MatrixXd cb_grad = Eigen::MatrixXd::Zero(cb.dim(), cb.size());
  std::uniform_int_distribution<int> pick_step(0, steps);

  ElboTerms terms;
  terms.t_drawn.reserve(batch.size());
  for (const Latent& x : batch) {
    Eigen::MatrixXd local_cb = Eigen::MatrixXd::Zero(cb.dim(), cb.size());

    const Eigen::MatrixXd logits0 = categorical_logits(cb, x, config_.logit_scale);
    const DiscreteState zq0 = gumbel_softmax_sample(logits0, tau, gumbel_noise(cb.size(), x.cols(), rng));
    const double rec = reconstruction_term_st(state_.decoder, x, zq0, cb, tau, config_.logit_scale,
                                              train_codebook ? &local_cb : nullptr);

    const int t = pick_step(rng);
    const Latent eps = standard_normal(x.rows(), x.cols(), rng);
    const Latent zt = marginal_from_zero(s, t, x, eps);
    const double diff = t >= 1 ? diffusion_term(s, state_.net, x, t, eps, net_grad, scale) : 0.0;

    Eigen::MatrixXd reg_cb = Eigen::MatrixXd::Zero(cb.dim(), cb.size());
    const double reg =
        reg_factor * reg_term(cb, zt, state_.temperatures, t, gumbel_noise(cb.size(), x.cols(), rng),
                              reg_options, {nullptr, train_codebook ? &reg_cb : nullptr});

    if (!std::isfinite(rec)) throw NonFiniteLoss("rec", rec);
    if (!std::isfinite(diff)) throw NonFiniteLoss("diff", diff);
    if (!std::isfinite(reg)) throw NonFiniteLoss("reg", reg);

    if (train_codebook) cb_grad += scale * (local_cb + reg_factor * reg_cb);
    terms.rec += rec;
    terms.diff += diff;
    terms.reg += reg;
    terms.t_drawn.push_back(t);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  terms.rec *= inv;
  terms.diff *= inv;
  terms.reg *= inv;
  terms.total = terms.rec + terms.diff + terms.reg;

  std::vector<double> params(trainable_size());
  const auto net_params = state_.net.params();
  std::copy(net_params.begin(), net_params.end(), params.begin());
  if (train_codebook) {
    const std::size_t off = net_params.size();
    const Eigen::MatrixXd& e = cb.vectors();
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      params[off + i] = e.data()[i];
      grad[off + i] = cb_grad.data()[i];
    }
  }
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw NonFiniteLoss("grad[" + std::to_string(i) + "]", grad[i]);

  optimizer_.step(params, grad);

  auto dst = state_.net.mutable_params();
  std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
  if (train_codebook) {
    Eigen::MatrixXd& e = state_.codebook.mutable_vectors();
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = params[dst.size() + i];
    if (state_.net.has_mixture()) state_.net.set_mixture_codes(e);
  }
  return terms;
}

}  // namespace bridgevq
