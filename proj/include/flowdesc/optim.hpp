#ifndef FLOWDESC_OPTIM_HPP_
#define FLOWDESC_OPTIM_HPP_

#include "flowdesc/descnet.hpp"

#include <cstdint>
#include <string>

namespace flowdesc
{

enum class OptimizerKind
{
  adam,
  momentum_sgd,
};

OptimizerKind parse_optimizer(const std::string & name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig
{
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;
  bool cosine_decay = false;
  /// Horizon of the cosine schedule in steps; ignored when decay is off.
  std::uint64_t decay_steps = 0;
};

/// Adam or heavy-ball SGD over float parameters. State round-trips through checkpoints.
class Optimizer
{
public:
  Optimizer(const OptimizerConfig & cfg, const Parameters<float> & params);

  void step(Parameters<float> & params, const Gradients<float> & grads);
  double current_learning_rate() const;
  std::uint64_t steps() const { return t_; }

  /// Adds "optim.m/<name>" (and "optim.v/<name>" for Adam) blobs and meta["optimizer"].
  void save(Checkpoint & ckpt, const Parameters<float> & params) const;
  void load(const Checkpoint & ckpt, const Parameters<float> & params);

private:
  OptimizerConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Vector<float>> m_;
  std::vector<Vector<float>> v_;
};

}  // namespace flowdesc

#endif  // FLOWDESC_OPTIM_HPP_
