#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "volres/network.hpp"
#include "volres/tensor.hpp"

namespace volres {

enum class OptKind { kSgdNesterov, kNadam };

struct OptimizerConfig {
  OptKind kind = OptKind::kNadam;
  double lr = 0.0002;
  double momentum = 0.9;  // sgd_nesterov
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double schedule_decay = 0.04;

  void validate() const;
};

// v <- mu*v - lr*g; param <- param + mu*v - lr*g (look-ahead form).
void sgd_nesterov_step(Tensor& param, const Tensor& grad, Tensor& velocity,
                       const OptimizerConfig& cfg);

// Per-step scalars shared by every parameter: the momentum schedule
// mu_t = beta1 * (1 - 0.5 * 0.96^(t * schedule_decay)) and its running
// product.
struct NadamSchedule {
  std::int64_t t = 1;
  double mu_t = 0.0;
  double mu_next = 0.0;
  double mu_product_t = 0.0;     // prod_{i<=t} mu_i
  double mu_product_next = 0.0;  // prod_{i<=t+1} mu_i
  double beta2_t = 0.0;          // beta2^t
};

NadamSchedule nadam_schedule(std::int64_t t, double mu_product_prev,
                             const OptimizerConfig& cfg);

// m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2;
// mhat = mu_{t+1}*m/(1-prod_{i<=t+1}) + (1-mu_t)*g/(1-prod_{i<=t});
// vhat = v/(1-b2^t); param <- param - lr*mhat/(sqrt(vhat)+eps).
void nadam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                const OptimizerConfig& cfg, const NadamSchedule& sched);

// Owns the moment/velocity buffers for one network's trainable parameters.
class Optimizer {
 public:
  Optimizer(Network& net, OptimizerConfig cfg);

  void step();  // consumes the gradients currently held by the network

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return t_; }

  // Reserved "opt/..." tensors for the checkpoint container.
  std::vector<std::pair<std::string, Tensor>> export_state();
  void import_state(const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  Network* net_;
  OptimizerConfig cfg_;
  std::vector<Tensor> first_;   // velocity (sgd) or first moment (nadam)
  std::vector<Tensor> second_;  // second moment (nadam only)
  std::int64_t t_ = 0;
  double mu_product_ = 1.0;
};

// Multiplicative drop after `patience` epochs without improvement beyond the
// absolute threshold; the learning rate never sinks below min_lr.
struct PlateauSchedule {
  double factor = 0.02;
  int patience = 3;
  double min_lr = 1e-7;
  double improve_threshold = 1e-4;

  double best_loss = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  void validate() const;
};

double plateau_update(PlateauSchedule& sched, double epoch_val_loss, double current_lr);

}  // namespace volres
