#pragma once

#include <cstddef>
#include <vector>

namespace hydro::nn {

// Flat view of one parameter block and its gradient.
struct ParamRef {
  double* param;
  const double* grad;
  std::size_t n;
};

// Adam with L2 weight decay folded into the gradient (the common
// torch.optim.Adam semantics). State is kept per parameter block in
// registration order; the block layout must not change between steps.
class Adam {
public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit Adam(Config cfg) : cfg_(cfg) {}

  void step(const std::vector<ParamRef>& refs);

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }

private:
  Config cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Halves (by `factor`) the learning rate after `patience` epochs without
// improvement of the monitored metric.
class ReduceLROnPlateau {
public:
  ReduceLROnPlateau(double factor = 0.5, int patience = 10, double min_lr = 1e-6)
      : factor_(factor), patience_(patience), min_lr_(min_lr) {}

  // feed the validation metric; returns the learning rate to use next
  double observe(double metric, double current_lr);

private:
  double factor_, min_lr_;
  int patience_;
  double best_ = 1e300;
  int bad_epochs_ = 0;
};

// Cosine annealing from base_lr down to eta_min over t_max epochs.
class CosineAnnealingLR {
public:
  CosineAnnealingLR(double base_lr, int t_max, double eta_min = 0.0)
      : base_lr_(base_lr), eta_min_(eta_min), t_max_(t_max) {}

  double lr_at(int epoch) const;

private:
  double base_lr_, eta_min_;
  int t_max_;
};

}  // namespace hydro::nn
