#include "volres/optim.hpp"

#include <cmath>

namespace volres {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorKind::kConfig, "learning rate must be > 0");
  auto in_unit = [](double v) { return v >= 0.0 && v < 1.0; };
  if (!in_unit(momentum)) throw Error(ErrorKind::kConfig, "momentum must lie in [0, 1)");
  if (!in_unit(beta1)) throw Error(ErrorKind::kConfig, "beta1 must lie in [0, 1)");
  if (!in_unit(beta2)) throw Error(ErrorKind::kConfig, "beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw Error(ErrorKind::kConfig, "eps must be > 0");
  if (schedule_decay < 0.0) {
    throw Error(ErrorKind::kConfig, "schedule_decay must be >= 0");
  }
}

namespace {

void check_update_shapes(const Tensor& param, const Tensor& grad, const Tensor& state) {
  if (!param.same_shape(grad) || param.dtype() != grad.dtype()) {
    throw Error(ErrorKind::kDimension, "optimizer update: gradient shape " +
                                           grad.shape_str() + " does not match parameter " +
                                           param.shape_str());
  }
  if (!param.same_shape(state) || param.dtype() != state.dtype()) {
    throw Error(ErrorKind::kDimension, "optimizer update: state shape " +
                                           state.shape_str() + " does not match parameter " +
                                           param.shape_str());
  }
}

// All elementwise arithmetic runs in f64 and is stored back in the
// parameter's dtype.
template <class T>
void sgd_kernel(T* p, const T* g, T* v, std::int64_t n, double mu, double lr) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double vel = mu * static_cast<double>(v[i]) - lr * static_cast<double>(g[i]);
    v[i] = static_cast<T>(vel);
    p[i] = static_cast<T>(static_cast<double>(p[i]) + mu * vel -
                          lr * static_cast<double>(g[i]));
  }
}

template <class T>
void nadam_kernel(T* p, const T* g, T* m, T* v, std::int64_t n,
                  const OptimizerConfig& cfg, const NadamSchedule& s) {
  const double bias_m_next = 1.0 - s.mu_product_next;
  const double bias_m_t = 1.0 - s.mu_product_t;
  const double bias_v = 1.0 - s.beta2_t;
  for (std::int64_t i = 0; i < n; ++i) {
    const double gi = static_cast<double>(g[i]);
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = s.mu_next * mi / bias_m_next + (1.0 - s.mu_t) * gi / bias_m_t;
    const double vhat = vi / bias_v;
    p[i] = static_cast<T>(static_cast<double>(p[i]) -
                          cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

}  // namespace

void sgd_nesterov_step(Tensor& param, const Tensor& grad, Tensor& velocity,
                       const OptimizerConfig& cfg) {
  check_update_shapes(param, grad, velocity);
  if (param.dtype() == Dtype::kF32) {
    sgd_kernel(param.data<float>().data(), grad.data<float>().data(),
               velocity.data<float>().data(), param.size(), cfg.momentum, cfg.lr);
  } else {
    sgd_kernel(param.data<double>().data(), grad.data<double>().data(),
               velocity.data<double>().data(), param.size(), cfg.momentum, cfg.lr);
  }
}

NadamSchedule nadam_schedule(std::int64_t t, double mu_product_prev,
                             const OptimizerConfig& cfg) {
  auto mu = [&cfg](std::int64_t step) {
    return cfg.beta1 *
           (1.0 - 0.5 * std::pow(0.96, static_cast<double>(step) * cfg.schedule_decay));
  };
  NadamSchedule s;
  s.t = t;
  s.mu_t = mu(t);
  s.mu_next = mu(t + 1);
  s.mu_product_t = mu_product_prev * s.mu_t;
  s.mu_product_next = s.mu_product_t * s.mu_next;
  s.beta2_t = std::pow(cfg.beta2, static_cast<double>(t));
  return s;
}

void nadam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                const OptimizerConfig& cfg, const NadamSchedule& sched) {
  check_update_shapes(param, grad, m);
  check_update_shapes(param, grad, v);
  if (param.dtype() == Dtype::kF32) {
    nadam_kernel(param.data<float>().data(), grad.data<float>().data(),
                 m.data<float>().data(), v.data<float>().data(), param.size(), cfg,
                 sched);
  } else {
    nadam_kernel(param.data<double>().data(), grad.data<double>().data(),
                 m.data<double>().data(), v.data<double>().data(), param.size(), cfg,
                 sched);
  }
}

Optimizer::Optimizer(Network& net, OptimizerConfig cfg) : net_(&net), cfg_(cfg) {
  cfg_.validate();
  for (const ParamRef& p : net.parameters()) {
    if (!p.trainable) continue;
    first_.push_back(Tensor::zeros(p.value->shape(), p.value->dtype()));
    if (cfg_.kind == OptKind::kNadam) {
      second_.push_back(Tensor::zeros(p.value->shape(), p.value->dtype()));
    }
  }
}

void Optimizer::step() {
  ++t_;
  NadamSchedule sched;
  if (cfg_.kind == OptKind::kNadam) {
    sched = nadam_schedule(t_, mu_product_, cfg_);
    mu_product_ = sched.mu_product_t;
  }
  std::size_t slot = 0;
  for (ParamRef& p : net_->parameters()) {
    if (!p.trainable) continue;
    if (cfg_.kind == OptKind::kSgdNesterov) {
      sgd_nesterov_step(*p.value, *p.grad, first_[slot], cfg_);
    } else {
      nadam_step(*p.value, *p.grad, first_[slot], second_[slot], cfg_, sched);
    }
    ++slot;
  }
}

std::vector<std::pair<std::string, Tensor>> Optimizer::export_state() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("opt/t", Tensor::from_f64({1}, {static_cast<double>(t_)}));
  out.emplace_back("opt/mu_product", Tensor::from_f64({1}, {mu_product_}));
  out.emplace_back("opt/lr", Tensor::from_f64({1}, {cfg_.lr}));
  std::size_t slot = 0;
  for (const ParamRef& p : net_->parameters()) {
    if (!p.trainable) continue;
    out.emplace_back("opt/m/" + p.name, first_[slot]);
    if (cfg_.kind == OptKind::kNadam) {
      out.emplace_back("opt/v/" + p.name, second_[slot]);
    }
    ++slot;
  }
  return out;
}

void Optimizer::import_state(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::size_t slot = 0;
  for (const ParamRef& p : net_->parameters()) {
    if (!p.trainable) continue;
    for (const auto& [name, tensor] : tensors) {
      if (name == "opt/m/" + p.name) first_[slot] = tensor.clone();
      if (cfg_.kind == OptKind::kNadam && name == "opt/v/" + p.name) {
        second_[slot] = tensor.clone();
      }
    }
    ++slot;
  }
  for (const auto& [name, tensor] : tensors) {
    if (name == "opt/t") t_ = static_cast<std::int64_t>(tensor.value_at(0));
    if (name == "opt/mu_product") mu_product_ = tensor.value_at(0);
    if (name == "opt/lr") cfg_.lr = tensor.value_at(0);
  }
}

void PlateauSchedule::validate() const {
  if (!(factor > 0.0 && factor < 1.0)) {
    throw Error(ErrorKind::kConfig, "plateau factor must lie in (0, 1)");
  }
  if (patience < 1) throw Error(ErrorKind::kConfig, "plateau patience must be >= 1");
  if (!(min_lr > 0.0)) throw Error(ErrorKind::kConfig, "plateau min_lr must be > 0");
}

double plateau_update(PlateauSchedule& sched, double epoch_val_loss, double current_lr) {
  if (!std::isfinite(epoch_val_loss)) {
    throw Error(ErrorKind::kDivergence,
                "validation loss is not finite: " + std::to_string(epoch_val_loss));
  }
  if (sched.best_loss - epoch_val_loss > sched.improve_threshold) {
    sched.best_loss = epoch_val_loss;
    sched.epochs_since_best = 0;
    return current_lr;
  }
  ++sched.epochs_since_best;
  if (sched.epochs_since_best >= sched.patience) {
    sched.epochs_since_best = 0;
    return std::max(current_lr * sched.factor, sched.min_lr);
  }
  return current_lr;
}

}  // namespace volres
