#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gradcert/dataset.hpp"
#include "gradcert/nn.hpp"
#include "gradcert/objectives.hpp"

namespace gradcert::estimators {

// Implicit access to a Jacobian through its two matrix-free products.
struct JacobianAccess {
    std::function<std::vector<double>(std::span<const double>)> jvp;  // R^in  -> R^out
    std::function<std::vector<double>(std::span<const double>)> vjp;  // R^out -> R^in
};

struct PowerIterOptions {
    int max_iters = 100;
    double tol = 1e-9;
    std::uint64_t seed = 0x9a2c0ffee1ull;
};

// Largest singular value estimate by power iteration on the Gram operator,
// run in whichever of the two spaces is smaller. The returned value is a
// Rayleigh estimate ||J^T u|| (or ||J v||) at a unit vector, so it never
// exceeds the true spectral norm. A zero first Rayleigh quotient triggers
// one restart from a different start vector; a genuinely zero Jacobian
// returns 0.
double spectral_norm(const JacobianAccess& jac, std::size_t in_dim, std::size_t out_dim,
                     const PowerIterOptions& opts = {});

// Jacobian of `node` with respect to all tape leaves.
double spectral_norm(const ad::Tape& tape, ad::Tape::NodeId node,
                     const PowerIterOptions& opts = {});

// M_hat: root-mean-square over samples of the spectral norm of the
// parameter Jacobian of the generator output.
double estimate_M(const nn::GeneratorParams& theta, const Dataset& data,
                  const PowerIterOptions& opts = {});

// Same estimate, with each per-sample value lifted to at least the Rayleigh
// quotients of that Jacobian along the prediction-space directions the loss
// and the critic realize on this batch. Every quotient is itself a lower
// estimate of the sample's spectral norm, so the lift never overshoots the
// true constant, but it makes the certificate inequalities immune to the
// power iteration stopping short of convergence.
double estimate_M(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                  const Dataset& data, const PowerIterOptions& opts = {});

// lambda_hat: RMS over samples of || d l / d prediction || at the current
// predictions. Zero exactly at perfect fit.
double estimate_lambda(const nn::GeneratorParams& theta, const Dataset& data);

// delta_hat: RMS over samples of || d g / d prediction ||, the critic's
// prediction-space feedback strength. This is an operational quantity
// measured at the critic actually in hand.
double estimate_delta(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                      const Dataset& data);

// Norm of the full-batch generator-parameter gradient of one objective.
double full_gradient_norm(objectives::Kind kind, const nn::GeneratorParams& theta,
                          const nn::CriticParams& psi, const Dataset& data);

struct Check {
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

// Relative slack applied to every certificate inequality.
inline constexpr double kCheckSlack = 1e-9;

// Empirical bound certificate. The three checks chain the triangle
// inequality with Cauchy-Schwarz over the same batch:
//   T3.1  ||grad supervised||  <= lambda_hat * M_hat
//   T3.2  ||grad adversarial|| <= delta_hat * M_hat
//   T3.3  ||grad augmented||   <= (lambda_hat + delta_hat) * M_hat
// They hold on every input by construction; a failing check indicates a
// defect in the estimators, not in the data.
struct BoundCertificate {
    double lambda_hat = 0.0;
    double delta_hat = 0.0;
    double M_hat = 0.0;
    // Global Lipschitz constant of the prediction-space loss gradient,
    // sqrt(d_y) for the coordinate-wise Huber loss; lambda_hat can never
    // exceed it.
    double loss_lipschitz_K = 0.0;
    double grad_norm_sup = 0.0;
    double grad_norm_adv = 0.0;
    double grad_norm_aug = 0.0;
    double epsilon_measured = 0.0;
    std::map<std::string, Check> checks;

    bool all_pass() const {
        for (const auto& [id, c] : checks)
            if (!c.pass) return false;
        return true;
    }
};

BoundCertificate certify(const nn::GeneratorParams& theta, const nn::CriticParams& psi,
                         const Dataset& data, const PowerIterOptions& opts = {});

}  // namespace gradcert::estimators
