#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gradcert/dataset.hpp"
#include "gradcert/estimators.hpp"
#include "gradcert/nn.hpp"

namespace gradcert::experiments {

// Realizable regression task: targets are produced by a known teacher
// generator, so the optimum is exactly representable and the distance to it
// is measurable.
struct TeacherTask {
    std::uint64_t seed = 0;
    nn::GeneratorDims dims;
    nn::GeneratorParams theta_star;
    Dataset data;
};

TeacherTask make_teacher_task(std::uint64_t seed, std::size_t n_samples,
                              const nn::GeneratorDims& dims);

struct TrainingConfig {
    double eta = 1e-2;
    int iters = 50;
    double risk_threshold = 1e-3;
    // When positive, the arm stops recording once epsilon_hat falls to or
    // below this value (the crossing row is kept).
    double stop_epsilon = 0.0;
    estimators::PowerIterOptions pi;
};

struct CriticConfig {
    enum class Mode {
        kTrain,       // n_critic clipped critic steps per generator step
        kFrozen,      // critic held at its initial parameters
        kFrozenZero,  // no critic at all; the arm degenerates to supervised
    };
    std::vector<std::size_t> hidden = {16, 16};
    int n_critic = 5;
    double clip = 0.01;
    double eta = 5e-3;
    Mode mode = Mode::kTrain;
    int warmup = 200;  // critic steps for standalone critic training

    static Mode mode_from_name(const std::string& name);
    static const char* mode_name(Mode m);
};

// One record per iterate; row n describes the state before the n-th update.
struct TrajectoryRow {
    int n = 0;
    double risk = 0.0;        // full-batch supervised risk, in every arm
    double grad_norm = 0.0;   // norm of the arm's own objective gradient
    double epsilon_hat = 0.0; // mean || f(x) - y ||
    double step_size = 0.0;
    double lambda_hat = 0.0;
    double delta_hat = 0.0;
    double M_hat = 0.0;
    double wallclock_ms = 0.0;
    std::string theta_digest;
};

// First-order displacement check for the step taken from iterate n:
//   mean_i || f_{n}(x_i) - f_{n+1}(x_i) ||  <=  M_hat(n) * ||dtheta|| * 1.05
// The 5% slack absorbs the Taylor remainder at small steps.
struct StepBound {
    int n = 0;
    double displacement = 0.0;
    double step_norm = 0.0;
    double bound = 0.0;
    bool within = false;
};

struct Trajectory {
    std::string arm;  // "sup" or "aug"
    std::vector<TrajectoryRow> rows;
    std::vector<StepBound> step_bounds;
    std::vector<nn::GeneratorParams> thetas;  // snapshot per row
    std::vector<nn::CriticParams> psis;       // snapshot per row; empty in the sup arm
    bool diverged = false;
    int divergence_iteration = -1;
    long long critic_steps = 0;
    double wallclock_total_ms = 0.0;

    // First row with risk <= threshold, or -1.
    int first_risk_below(double threshold) const;
    // First row with epsilon_hat <= eps, or -1.
    int first_epsilon_below(double eps) const;
};

// Plain full-batch gradient descent on the supervised risk. Divergence
// (non-finite loss, gradient or parameter) stops the run at that iteration
// and keeps everything recorded so far.
Trajectory train_supervised(const TeacherTask& task, nn::GeneratorParams theta0,
                            const TrainingConfig& cfg);

// Adversarially augmented arm: per generator step, n_critic critic updates
// (each followed by weight clipping) and then one descent step on the
// augmented objective. Iteration count n counts generator steps only;
// critic work is tallied separately.
Trajectory train_augmented(const TeacherTask& task, nn::GeneratorParams theta0,
                           nn::CriticParams psi0, const TrainingConfig& cfg,
                           const CriticConfig& critic);

// Standalone critic training against a frozen generator (clipped WGAN
// steps); used to obtain a trained critic at a chosen iterate.
nn::CriticParams train_critic(const nn::GeneratorParams& theta, nn::CriticParams psi,
                              const Dataset& data, int steps, double eta, double clip);

// Re-certifies every recorded iterate with epsilon_hat <= epsilon. An empty
// selection is valid. The sup arm is certified against a zero critic.
std::vector<std::pair<int, estimators::BoundCertificate>> near_optimal_probe(
    const Trajectory& traj, const TeacherTask& task, double epsilon,
    const estimators::PowerIterOptions& pi = {});

// Both arms from one draw of theta_0 (and psi_0), bitwise-identical starts.
struct PairedRun {
    nn::GeneratorParams theta0;
    nn::CriticParams psi0;
    Trajectory sup;
    Trajectory aug;
};
PairedRun run_paired(const TeacherTask& task, std::uint64_t seed, const TrainingConfig& cfg,
                     const CriticConfig& critic);

struct RiskComparison {
    std::uint64_t seed = 0;
    double risk_sup = 0.0;  // min over the recorded trajectory
    double risk_aug = 0.0;
    double risk_gap = 0.0;  // risk_aug - risk_sup
    std::string theta0_digest_sup;
    std::string theta0_digest_aug;
    bool valid = false;  // false when either arm diverged
    bool sup_diverged = false;
    bool aug_diverged = false;
    estimators::BoundCertificate final_sup;
    estimators::BoundCertificate final_aug;
};
RiskComparison compare_risks(const TeacherTask& task, std::uint64_t seed, int iters,
                             TrainingConfig cfg, const CriticConfig& critic);
RiskComparison comparison_from_paired(const PairedRun& run, const TeacherTask& task,
                                      std::uint64_t seed, const TrainingConfig& cfg,
                                      const CriticConfig& critic);

struct ConvergenceReport {
    std::uint64_t seed = 0;
    int n_star_sup = -1;  // -1 when the threshold was never reached
    int n_star_aug = -1;
    bool sup_reached = false;
    bool aug_reached = false;
    // lambda_hat / (lambda_hat + delta_hat) sampled where the supervised arm
    // crosses the risk threshold (delta_hat read from the augmented arm at
    // the same iteration index).
    double predicted_ratio = 1.0;
    bool predicted_defined = false;
    double measured_ratio = 0.0;  // n_star_aug / n_star_sup
    bool measured_defined = false;
};
ConvergenceReport measure_convergence(const TeacherTask& task, std::uint64_t seed,
                                      double risk_threshold, TrainingConfig cfg,
                                      const CriticConfig& critic);
ConvergenceReport convergence_from_paired(const PairedRun& run, std::uint64_t seed,
                                          double risk_threshold);

// Gradient-versus-accuracy probe along one supervised trajectory. A fresh
// critic is trained for `warmup` steps against the deepest recorded iterate,
// then each accuracy level is examined at its first crossing row: the
// supervised gradient there against the augmented gradient under the probe
// critic, plus a full bound certificate.
struct ProbeLevel {
    double epsilon = 0.0;
    bool reached = false;
    int n = -1;  // first row with epsilon_hat <= epsilon
    double epsilon_hat = 0.0;
    double grad_sup = 0.0;
    double grad_aug = 0.0;
    estimators::BoundCertificate cert;
};

struct ProbeReport {
    std::vector<ProbeLevel> levels;
    ProbeLevel deepest;  // at the row with the smallest epsilon_hat
    bool diverged = false;
    // grad_norm <= lambda_hat * M_hat re-checked on every recorded row.
    bool sup_bound_every_row = true;
    std::string critic_digest;
};

ProbeReport probe_gradients(const Trajectory& sup, const TeacherTask& task,
                            std::uint64_t seed, const CriticConfig& critic,
                            const std::vector<double>& epsilons,
                            const estimators::PowerIterOptions& pi = {});

// Derives the paired-arm initial parameters from a seed; exposed so callers
// (and tests) can reproduce exactly what run_paired starts from.
nn::GeneratorParams paired_theta0(std::uint64_t seed, const nn::GeneratorDims& dims);
nn::CriticParams paired_psi0(std::uint64_t seed, const nn::CriticDims& dims);

}  // namespace gradcert::experiments
