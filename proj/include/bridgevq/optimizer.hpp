#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bridgevq {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

/// First-order optimizer over a flat parameter vector. Adam keeps bias-corrected
/// moment estimates; SGD is the plain update p -= lr * g.
class Optimizer {
 public:
  Optimizer(std::size_t size, OptimizerConfig config);

  /// One minimization step on `params` given gradient `grad`.
  void step(std::span<double> params, std::span<const double> grad);

  const OptimizerConfig& config() const { return config_; }
  long long step_count() const { return steps_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

  /// Restores moment buffers and the step counter from a checkpoint.
  void restore(long long steps, std::vector<double> m, std::vector<double> v);

 private:
  OptimizerConfig config_;
  long long steps_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace bridgevq
