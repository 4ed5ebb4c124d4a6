#pragma once

#include <vector>

#include "gradcert/dataset.hpp"
#include "gradcert/nn.hpp"
#include "gradcert/tape.hpp"

namespace gradcert::objectives {

// Per-prediction supervised loss: coordinate-wise Huber (threshold 1) of the
// residual, summed over coordinates. Huber keeps the prediction-space
// gradient globally bounded by sqrt(d_y), which is the Lipschitz constant
// the certificates rely on.
double supervised_loss(const Tensor& prediction, const Tensor& target);

// Graph for the same quantity: sum(huber(p - y)).
ad::Tape::NodeId emit_supervised_loss(ad::Tape& tape, ad::Tape::NodeId prediction,
                                      ad::Tape::NodeId target);

enum class Kind { kSupervised, kAdversarial, kAugmented };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& name);

// Full-batch objective values (means over the dataset, index order).
//   supervised:  mean_i l(f(x_i); y_i)
//   adversarial: -mean_i g(f(x_i))            (the generator's WGAN loss)
//   augmented:   mean_i [ l(f(x_i); y_i) - g(f(x_i)) ]
double batch_objective(Kind kind, const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                       const Dataset& data);

double wgan_generator_loss(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                           const Dataset& data);

// Critic's objective: mean_i g(f(x_i)) - mean_i g(y_i). The critic descends
// this (driving generated scores below real ones).
double wgan_critic_loss(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                        const Dataset& data);

double augmented_loss(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                      const Dataset& data);

// Value plus full-batch generator-parameter gradient for one objective.
// Gradient layout matches GeneratorParams::flatten().
struct BatchEval {
    double value = 0.0;
    std::vector<double> grad;
};
BatchEval batch_objective_with_grad(Kind kind, const nn::GeneratorParams& theta,
                                    const nn::CriticParams& psi, const Dataset& data);

// Value plus critic-parameter gradient of wgan_critic_loss; theta is frozen.
// Gradient layout matches CriticParams::flatten().
BatchEval critic_loss_with_grad(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                                const Dataset& data);

}  // namespace gradcert::objectives
