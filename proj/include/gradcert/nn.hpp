#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gradcert/tape.hpp"
#include "gradcert/tensor.hpp"

namespace gradcert::nn {

// Residual generator f(x) = omega^T h_L(x) with
//   h_0 = x,  h_l = h_{l-1} + V_l phi(U_l h_{l-1}).
// phi is elementwise tanh by default; the mlp variant inserts a shared
// one-hidden-layer bottleneck P2 tanh(P1 u).
enum class PhiKind { kTanh, kMlp };

struct GeneratorDims {
    std::size_t d_x = 4;
    std::size_t d_y = 2;
    std::size_t d_h = 8;
    std::size_t blocks = 2;
    PhiKind phi = PhiKind::kTanh;
    std::size_t d_phi = 8;  // hidden width of the mlp variant

    bool operator==(const GeneratorDims&) const = default;
};

struct GeneratorParams {
    GeneratorDims dims;
    Tensor omega;  // (d_x, d_y); applied transposed in the forward pass
    struct Block {
        Tensor u;  // (d_h, d_x)
        Tensor v;  // (d_x, d_h)
    };
    std::vector<Block> blocks;
    std::vector<Tensor> phi;  // empty for kTanh; {P1 (d_phi,d_h), P2 (d_h,d_phi)} for kMlp

    std::size_t param_count() const;
    // Flat layout: omega, then U_1, V_1, ..., U_L, V_L, then phi tensors.
    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);
    std::string digest() const;
};

GeneratorParams zero_generator(const GeneratorDims& dims);

// Critic g(y): tanh MLP with the given hidden widths and a scalar linear
// output layer. hidden may be empty, giving a single affine map.
struct CriticDims {
    std::size_t d_in = 2;
    std::vector<std::size_t> hidden = {16, 16};

    bool operator==(const CriticDims&) const = default;
};

struct CriticParams {
    CriticDims dims;
    struct Layer {
        Tensor w;  // (out, in)
        Tensor b;  // (out)
    };
    std::vector<Layer> layers;

    std::size_t param_count() const;
    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);
    std::string digest() const;
};

CriticParams zero_critic(const CriticDims& dims);
// Critic computing the constant c regardless of input: zero weights, final
// bias c.
CriticParams constant_critic(const CriticDims& dims, double c);

// Plain (untaped) evaluation. Implemented by recording a throwaway tape so
// the taped and untaped paths can never disagree.
Tensor generator_forward(const GeneratorParams& theta, const Tensor& x);
double critic_forward(const CriticParams& psi, const Tensor& y_hat);

// Graph emission, for composing generator/critic into differentiable
// programs. `wrt_params` decides whether parameters become leaves (for
// theta/psi gradients) or constants (frozen).
struct GeneratorGraph {
    ad::Tape::NodeId x = -1;
    ad::Tape::NodeId out = -1;
};
GeneratorGraph emit_generator(ad::Tape& tape, const GeneratorParams& theta, const Tensor& x,
                              bool wrt_params, bool x_as_leaf = false);

struct CriticGraph {
    ad::Tape::NodeId out = -1;
};
CriticGraph emit_critic(ad::Tape& tape, const CriticParams& psi, ad::Tape::NodeId input,
                        bool wrt_params);

// Split emission, for evaluating one critic at several inputs on a single
// tape without duplicating its parameter nodes. Node order is the flat
// layout order (w1, b1, w2, b2, ...).
std::vector<ad::Tape::NodeId> install_critic_params(ad::Tape& tape, const CriticParams& psi,
                                                    bool as_leaves);
ad::Tape::NodeId emit_critic_from(ad::Tape& tape, const CriticParams& psi,
                                  const std::vector<ad::Tape::NodeId>& params,
                                  ad::Tape::NodeId input);

// Clamps every weight entry to [-c, c]; biases are untouched. Idempotent.
CriticParams clip_critic(const CriticParams& psi, double c);

// Xavier-uniform init, bound sqrt(6 / (fan_in + fan_out)) per matrix; biases
// start at zero. The draw order is the flat layout order, so a seed pins
// every entry.
GeneratorParams init_generator(std::uint64_t seed, const GeneratorDims& dims);
CriticParams init_critic(std::uint64_t seed, const CriticDims& dims);

// Flat text serialization (versioned, lossless %.17g round-trip). The
// generator and critic halves are exposed separately so other artifacts can
// embed one of them.
void save_generator(std::ostream& os, const GeneratorParams& theta);
void save_critic(std::ostream& os, const CriticParams& psi);
GeneratorParams load_generator(std::istream& is);
CriticParams load_critic(std::istream& is);
void save_params(std::ostream& os, const GeneratorParams& theta, const CriticParams& psi);
std::pair<GeneratorParams, CriticParams> load_params(std::istream& is);

}  // namespace gradcert::nn
