#include "gradcert/objectives.hpp"

#include <stdexcept>

namespace gradcert::objectives {

double supervised_loss(const Tensor& prediction, const Tensor& target) {
    if (!prediction.same_shape(target))
        throw std::invalid_argument("supervised_loss: prediction shape " +
                                    prediction.shape_str() + " vs target " + target.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < prediction.numel(); ++i)
        s += ad::huber(prediction[i] - target[i]);
    return s;
}

ad::Tape::NodeId emit_supervised_loss(ad::Tape& tape, ad::Tape::NodeId prediction,
                                      ad::Tape::NodeId target) {
    return tape.sum(tape.huber(tape.sub(prediction, target)));
}

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::kSupervised: return "supervised";
        case Kind::kAdversarial: return "adversarial";
        case Kind::kAugmented: return "augmented";
    }
    return "?";
}

Kind kind_from_name(const std::string& name) {
    if (name == "supervised") return Kind::kSupervised;
    if (name == "adversarial") return Kind::kAdversarial;
    if (name == "augmented") return Kind::kAugmented;
    throw std::invalid_argument("unknown objective '" + name + "'");
}

namespace {

// One sample's objective as a tape with the generator parameters as leaves.
// The critic, when present, rides along as constants.
ad::Tape sample_tape(Kind kind, const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                     const Tensor& x, const Tensor& y) {
    ad::Tape tape;
    nn::GeneratorGraph f = nn::emit_generator(tape, theta, x, /*wrt_params=*/true);
    ad::Tape::NodeId out;
    switch (kind) {
        case Kind::kSupervised:
            out = emit_supervised_loss(tape, f.out, tape.constant(y));
            break;
        case Kind::kAdversarial:
            out = tape.scale(nn::emit_critic(tape, psi, f.out, /*wrt_params=*/false).out, -1.0);
            break;
        case Kind::kAugmented: {
            ad::Tape::NodeId l = emit_supervised_loss(tape, f.out, tape.constant(y));
            ad::Tape::NodeId g = nn::emit_critic(tape, psi, f.out, /*wrt_params=*/false).out;
            out = tape.sub(l, g);
            break;
        }
        default:
            throw std::logic_error("unreachable objective kind");
    }
    tape.set_output(out);
    return tape;
}

}  // namespace

double batch_objective(Kind kind, const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                       const Dataset& data) {
    data.validate();
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (kind == Kind::kSupervised) {
            // No tape needed for a plain value; generator_forward shares the
            // same primitive kernels either way.
            acc += supervised_loss(nn::generator_forward(theta, data.xs[i]), data.ys[i]);
        } else {
            ad::Tape tape = sample_tape(kind, theta, psi, data.xs[i], data.ys[i]);
            acc += tape.output_value().scalar_value();
        }
    }
    return acc / static_cast<double>(data.size());
}

double wgan_generator_loss(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                           const Dataset& data) {
    return batch_objective(Kind::kAdversarial, theta, psi, data);
}

double wgan_critic_loss(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                        const Dataset& data) {
    data.validate();
    double fake = 0.0, real = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        fake += nn::critic_forward(psi, nn::generator_forward(theta, data.xs[i]));
        real += nn::critic_forward(psi, data.ys[i]);
    }
    const double n = static_cast<double>(data.size());
    return fake / n - real / n;
}

double augmented_loss(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                      const Dataset& data) {
    return batch_objective(Kind::kAugmented, theta, psi, data);
}

BatchEval batch_objective_with_grad(Kind kind, const nn::GeneratorParams& theta,
                                    const nn::CriticParams& psi, const Dataset& data) {
    data.validate();
    BatchEval out;
    out.grad.assign(theta.param_count(), 0.0);
    ad::Tape::Workspace ws;
    std::vector<double> g;
    const double seed[1] = {1.0};
    for (std::size_t i = 0; i < data.size(); ++i) {
        ad::Tape tape = sample_tape(kind, theta, psi, data.xs[i], data.ys[i]);
        out.value += tape.output_value().scalar_value();
        tape.vjp_flat(tape.output(), seed, g, ws);
        for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += g[k];
    }
    const double inv_n = 1.0 / static_cast<double>(data.size());
    out.value *= inv_n;
    for (double& v : out.grad) v *= inv_n;
    return out;
}

BatchEval critic_loss_with_grad(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                                const Dataset& data) {
    data.validate();
    BatchEval out;
    out.grad.assign(psi.param_count(), 0.0);
    ad::Tape::Workspace ws;
    std::vector<double> g;
    const double seed[1] = {1.0};
    for (std::size_t i = 0; i < data.size(); ++i) {
        // g(f(x_i)) - g(y_i) on one tape; the generator output enters as a
        // constant because the critic's update treats theta as frozen.
        ad::Tape tape;
        std::vector<ad::Tape::NodeId> params = nn::install_critic_params(tape, psi, true);
        ad::Tape::NodeId fx = tape.constant(nn::generator_forward(theta, data.xs[i]));
        ad::Tape::NodeId yr = tape.constant(data.ys[i]);
        ad::Tape::NodeId on_fake = nn::emit_critic_from(tape, psi, params, fx);
        ad::Tape::NodeId on_real = nn::emit_critic_from(tape, psi, params, yr);
        tape.set_output(tape.sub(on_fake, on_real));
        out.value += tape.output_value().scalar_value();
        tape.vjp_flat(tape.output(), seed, g, ws);
        for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] += g[k];
    }
    const double inv_n = 1.0 / static_cast<double>(data.size());
    out.value *= inv_n;
    for (double& v : out.grad) v *= inv_n;
    return out;
}

}  // namespace gradcert::objectives
