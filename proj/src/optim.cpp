#include "flowdesc/optim.hpp"

#include "flowdesc/error.hpp"

#include <cmath>
#include <numbers>

namespace flowdesc
{

OptimizerKind parse_optimizer(const std::string & name)
{
  if (name == "adam" || name == "adaptive-moment") return OptimizerKind::adam;
  if (name == "momentum-sgd" || name == "sgd") return OptimizerKind::momentum_sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam | momentum-sgd)");
}

std::string to_string(OptimizerKind kind)
{
  return kind == OptimizerKind::adam ? "adam" : "momentum-sgd";
}

Optimizer::Optimizer(const OptimizerConfig & cfg, const Parameters<float> & params) : cfg_(cfg)
{
  if (cfg.learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
  for (const auto & b : params.blobs) {
    m_.push_back(Vector<float>::Zero(b.value.size()));
    if (cfg_.kind == OptimizerKind::adam) v_.push_back(Vector<float>::Zero(b.value.size()));
  }
}

double Optimizer::current_learning_rate() const
{
  if (!cfg_.cosine_decay || cfg_.decay_steps == 0) return cfg_.learning_rate;
  const double progress = std::min(1.0, static_cast<double>(t_) / static_cast<double>(cfg_.decay_steps));
  return cfg_.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void Optimizer::step(Parameters<float> & params, const Gradients<float> & grads)
{
  const double lr = current_learning_rate();
  ++t_;
  if (cfg_.kind == OptimizerKind::adam) {
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(cfg_.beta1);
    const auto b2 = static_cast<float>(cfg_.beta2);
    const auto step = static_cast<float>(lr * std::sqrt(bc2) / bc1);
    const auto eps = static_cast<float>(cfg_.epsilon * std::sqrt(bc2));
    for (std::size_t i = 0; i < params.blobs.size(); ++i) {
      const auto & g = grads.blobs[i].array();
      m_[i].array() = b1 * m_[i].array() + (1.0f - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (1.0f - b2) * g.square();
      params.blobs[i].value.array() -= step * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
    return;
  }
  const auto mu = static_cast<float>(cfg_.momentum);
  const auto rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.blobs.size(); ++i) {
    m_[i] = mu * m_[i] + grads.blobs[i];
    params.blobs[i].value -= rate * m_[i];
  }
}

void Optimizer::save(Checkpoint & ckpt, const Parameters<float> & params) const
{
  ckpt.meta["optimizer"] = {{"kind", to_string(cfg_.kind)}, {"t", t_}};
  for (std::size_t i = 0; i < params.blobs.size(); ++i) {
    const auto & b = params.blobs[i];
    ckpt.blobs.push_back({"optim.m/" + b.name, b.shape, m_[i]});
    if (cfg_.kind == OptimizerKind::adam) ckpt.blobs.push_back({"optim.v/" + b.name, b.shape, v_[i]});
  }
}

void Optimizer::load(const Checkpoint & ckpt, const Parameters<float> & params)
{
  if (!ckpt.meta.contains("optimizer")) return;
  const auto & meta = ckpt.meta.at("optimizer");
  if (parse_optimizer(meta.at("kind").get<std::string>()) != cfg_.kind) {
    throw ConfigError("checkpoint optimizer differs from the configured one");
  }
  t_ = meta.at("t").get<std::uint64_t>();
  for (std::size_t i = 0; i < params.blobs.size(); ++i) {
    const auto & name = params.blobs[i].name;
    if (const auto * m = ckpt.find("optim.m/" + name)) m_[i] = m->value;
    if (cfg_.kind == OptimizerKind::adam) {
      if (const auto * v = ckpt.find("optim.v/" + name)) v_[i] = v->value;
    }
  }
}

}  // namespace flowdesc
