#include "gradcert/experiments.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gradcert/objectives.hpp"
#include "gradcert/rng.hpp"

namespace gradcert::experiments {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double mean_distance(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < a[i].numel(); ++k) {
            const double d = a[i][k] - b[i][k];
            s += d * d;
        }
        acc += std::sqrt(s);
    }
    return acc / static_cast<double>(a.size());
}

std::vector<Tensor> predictions(const nn::GeneratorParams& theta, const Dataset& data) {
    std::vector<Tensor> out;
    out.reserve(data.size());
    for (const Tensor& x : data.xs) out.push_back(nn::generator_forward(theta, x));
    return out;
}

double supervised_risk(const std::vector<Tensor>& preds, const Dataset& data) {
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        acc += objectives::supervised_loss(preds[i], data.ys[i]);
    return acc / static_cast<double>(preds.size());
}

double epsilon_hat_of(const std::vector<Tensor>& preds, const Dataset& data) {
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < preds[i].numel(); ++k) {
            const double d = preds[i][k] - data.ys[i][k];
            s += d * d;
        }
        acc += std::sqrt(s);
    }
    return acc / static_cast<double>(preds.size());
}

// Shared training loop. The two arms differ only in the critic schedule and
// in which objective drives the generator step.
Trajectory run_arm(const TeacherTask& task, nn::GeneratorParams theta,
                   nn::CriticParams psi, const TrainingConfig& cfg, const CriticConfig& critic,
                   bool augmented) {
    Trajectory traj;
    traj.arm = augmented ? "aug" : "sup";
    const Clock::time_point run_start = Clock::now();

    const bool use_critic = augmented && critic.mode != CriticConfig::Mode::kFrozenZero;
    const objectives::Kind kind =
        (augmented && use_critic) ? objectives::Kind::kAugmented : objectives::Kind::kSupervised;
    const nn::CriticParams zero_psi = nn::zero_critic(psi.dims);

    std::vector<Tensor> prev_preds;
    std::vector<double> theta_flat = theta.flatten();

    for (int n = 0; n <= cfg.iters; ++n) {
        const Clock::time_point iter_start = Clock::now();

        if (augmented && critic.mode == CriticConfig::Mode::kTrain) {
            std::vector<double> psi_flat = psi.flatten();
            for (int k = 0; k < critic.n_critic; ++k) {
                objectives::BatchEval ce;
                try {
                    ce = objectives::critic_loss_with_grad(theta, psi, task.data);
                } catch (const std::exception&) {
                    // The generator blew up between iterates; the tape refuses
                    // non-finite values.
                    traj.diverged = true;
                    traj.divergence_iteration = n;
                    break;
                }
                if (!vec::all_finite(ce.grad)) {
                    traj.diverged = true;
                    traj.divergence_iteration = n;
                    break;
                }
                vec::axpy(-critic.eta, ce.grad, psi_flat);
                psi.unflatten(psi_flat);
                psi = nn::clip_critic(psi, critic.clip);
                psi_flat = psi.flatten();
                ++traj.critic_steps;
            }
            if (traj.diverged) break;
        }

        objectives::BatchEval eval;
        std::vector<Tensor> preds;
        try {
            eval = objectives::batch_objective_with_grad(kind, theta, use_critic ? psi : zero_psi,
                                                         task.data);
            preds = predictions(theta, task.data);
        } catch (const std::exception&) {
            // A non-finite intermediate was rejected by the tape.
            traj.diverged = true;
            traj.divergence_iteration = n;
            break;
        }
        const double risk = supervised_risk(preds, task.data);
        const double grad_norm = vec::norm(eval.grad);
        const double eps_hat = epsilon_hat_of(preds, task.data);
        // The distance overflows before the risk does (the norm squares, the
        // loss grows linearly), so it needs its own finiteness check.
        if (!std::isfinite(risk) || !std::isfinite(grad_norm) || !std::isfinite(eps_hat)) {
            traj.diverged = true;
            traj.divergence_iteration = n;
            break;
        }

        TrajectoryRow row;
        row.n = n;
        row.risk = risk;
        row.grad_norm = grad_norm;
        row.epsilon_hat = eps_hat;
        row.step_size = cfg.eta;
        try {
            row.lambda_hat = estimators::estimate_lambda(theta, task.data);
            row.delta_hat = use_critic ? estimators::estimate_delta(theta, psi, task.data) : 0.0;
            // The lifted estimate keeps grad_norm <= lambda_hat * M_hat (and
            // the delta analogue) true on every row by construction.
            row.M_hat =
                estimators::estimate_M(theta, use_critic ? psi : zero_psi, task.data, cfg.pi);
        } catch (const std::exception&) {
            traj.diverged = true;
            traj.divergence_iteration = n;
            break;
        }
        if (!std::isfinite(row.lambda_hat) || !std::isfinite(row.delta_hat) ||
            !std::isfinite(row.M_hat)) {
            traj.diverged = true;
            traj.divergence_iteration = n;
            break;
        }
        row.theta_digest = theta.digest();

        // Displacement check for the step that led here.
        if (n > 0) {
            StepBound& sb = traj.step_bounds.back();
            sb.displacement = mean_distance(prev_preds, preds);
            sb.within = sb.displacement <= sb.bound;
        }

        if (n < cfg.iters) {
            vec::axpy(-cfg.eta, eval.grad, theta_flat);
            if (!vec::all_finite(theta_flat)) {
                row.wallclock_ms = ms_since(iter_start);
                traj.rows.push_back(row);
                traj.thetas.push_back(theta);
                if (augmented) traj.psis.push_back(use_critic ? psi : zero_psi);
                traj.diverged = true;
                traj.divergence_iteration = n + 1;
                break;
            }
            StepBound sb;
            sb.n = n;
            sb.step_norm = cfg.eta * grad_norm;
            sb.bound = row.M_hat * sb.step_norm * 1.05;
            traj.step_bounds.push_back(sb);
        }

        row.wallclock_ms = ms_since(iter_start);
        traj.rows.push_back(row);
        traj.thetas.push_back(theta);
        if (augmented) traj.psis.push_back(use_critic ? psi : zero_psi);
        prev_preds = std::move(preds);

        if (n < cfg.iters) theta.unflatten(theta_flat);
        if (cfg.stop_epsilon > 0.0 && row.epsilon_hat <= cfg.stop_epsilon) break;
    }

    // A pending step bound whose end state was never reached (divergence cut
    // the run short) is dropped.
    if (traj.step_bounds.size() >= traj.rows.size() && !traj.step_bounds.empty())
        traj.step_bounds.pop_back();

    traj.wallclock_total_ms = ms_since(run_start);
    return traj;
}

}  // namespace

const char* CriticConfig::mode_name(Mode m) {
    switch (m) {
        case Mode::kTrain: return "train";
        case Mode::kFrozen: return "frozen";
        case Mode::kFrozenZero: return "frozen_zero";
    }
    return "?";
}

CriticConfig::Mode CriticConfig::mode_from_name(const std::string& name) {
    if (name == "train") return Mode::kTrain;
    if (name == "frozen") return Mode::kFrozen;
    if (name == "frozen_zero") return Mode::kFrozenZero;
    throw std::invalid_argument("unknown critic mode '" + name + "'");
}

TeacherTask make_teacher_task(std::uint64_t seed, std::size_t n_samples,
                              const nn::GeneratorDims& dims) {
    if (n_samples == 0) throw std::invalid_argument("teacher task needs at least one sample");
    TeacherTask task;
    task.seed = seed;
    task.dims = dims;
    task.theta_star = nn::init_generator(substream(seed, 0), dims);
    Rng rng(substream(seed, 1));
    task.data.xs.reserve(n_samples);
    task.data.ys.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        Tensor x({dims.d_x});
        for (double& v : x.data) v = rng.normal();
        task.data.ys.push_back(nn::generator_forward(task.theta_star, x));
        task.data.xs.push_back(std::move(x));
    }
    return task;
}

int Trajectory::first_risk_below(double threshold) const {
    for (const TrajectoryRow& r : rows)
        if (r.risk <= threshold) return r.n;
    return -1;
}

int Trajectory::first_epsilon_below(double eps) const {
    for (const TrajectoryRow& r : rows)
        if (r.epsilon_hat <= eps) return r.n;
    return -1;
}

Trajectory train_supervised(const TeacherTask& task, nn::GeneratorParams theta0,
                            const TrainingConfig& cfg) {
    task.data.validate();
    CriticConfig none;
    none.mode = CriticConfig::Mode::kFrozenZero;
    return run_arm(task, std::move(theta0), nn::zero_critic({task.dims.d_y, {}}), cfg, none,
                   /*augmented=*/false);
}

Trajectory train_augmented(const TeacherTask& task, nn::GeneratorParams theta0,
                           nn::CriticParams psi0, const TrainingConfig& cfg,
                           const CriticConfig& critic) {
    task.data.validate();
    if (psi0.dims.d_in != task.dims.d_y)
        throw std::invalid_argument("critic input width does not match generator output");
    return run_arm(task, std::move(theta0), std::move(psi0), cfg, critic, /*augmented=*/true);
}

nn::CriticParams train_critic(const nn::GeneratorParams& theta, nn::CriticParams psi,
                              const Dataset& data, int steps, double eta, double clip) {
    data.validate();
    std::vector<double> psi_flat = psi.flatten();
    for (int k = 0; k < steps; ++k) {
        objectives::BatchEval ce = objectives::critic_loss_with_grad(theta, psi, data);
        if (!vec::all_finite(ce.grad))
            throw std::runtime_error("critic training diverged at step " + std::to_string(k));
        vec::axpy(-eta, ce.grad, psi_flat);
        psi.unflatten(psi_flat);
        psi = nn::clip_critic(psi, clip);
        psi_flat = psi.flatten();
    }
    return psi;
}

std::vector<std::pair<int, estimators::BoundCertificate>> near_optimal_probe(
    const Trajectory& traj, const TeacherTask& task, double epsilon,
    const estimators::PowerIterOptions& pi) {
    std::vector<std::pair<int, estimators::BoundCertificate>> out;
    const nn::CriticParams zero_psi = nn::zero_critic({task.dims.d_y, {}});
    for (std::size_t i = 0; i < traj.rows.size(); ++i) {
        if (traj.rows[i].epsilon_hat > epsilon) continue;
        const nn::CriticParams& psi = traj.psis.empty() ? zero_psi : traj.psis[i];
        out.emplace_back(traj.rows[i].n, estimators::certify(traj.thetas[i], psi, task.data, pi));
    }
    return out;
}

nn::GeneratorParams paired_theta0(std::uint64_t seed, const nn::GeneratorDims& dims) {
    return nn::init_generator(substream(seed, 101), dims);
}

nn::CriticParams paired_psi0(std::uint64_t seed, const nn::CriticDims& dims) {
    return nn::init_critic(substream(seed, 202), dims);
}

PairedRun run_paired(const TeacherTask& task, std::uint64_t seed, const TrainingConfig& cfg,
                     const CriticConfig& critic) {
    PairedRun run;
    run.theta0 = paired_theta0(seed, task.dims);
    run.psi0 = paired_psi0(seed, {task.dims.d_y, critic.hidden});
    run.sup = train_supervised(task, run.theta0, cfg);
    run.aug = train_augmented(task, run.theta0, run.psi0, cfg, critic);
    return run;
}

namespace {

double min_risk(const Trajectory& traj) {
    double best = std::numeric_limits<double>::infinity();
    for (const TrajectoryRow& r : traj.rows) best = std::min(best, r.risk);
    return best;
}

}  // namespace

RiskComparison compare_risks(const TeacherTask& task, std::uint64_t seed, int iters,
                             TrainingConfig cfg, const CriticConfig& critic) {
    cfg.iters = iters;
    PairedRun run = run_paired(task, seed, cfg, critic);
    return comparison_from_paired(run, task, seed, cfg, critic);
}

RiskComparison comparison_from_paired(const PairedRun& run, const TeacherTask& task,
                                      std::uint64_t seed, const TrainingConfig& cfg,
                                      const CriticConfig& critic) {
    RiskComparison cmp;
    cmp.seed = seed;
    cmp.theta0_digest_sup = run.sup.rows.empty() ? run.theta0.digest() : run.sup.rows[0].theta_digest;
    cmp.theta0_digest_aug = run.aug.rows.empty() ? run.theta0.digest() : run.aug.rows[0].theta_digest;
    cmp.sup_diverged = run.sup.diverged;
    cmp.aug_diverged = run.aug.diverged;
    cmp.valid = !run.sup.diverged && !run.aug.diverged;
    if (!run.sup.rows.empty()) cmp.risk_sup = min_risk(run.sup);
    if (!run.aug.rows.empty()) cmp.risk_aug = min_risk(run.aug);
    cmp.risk_gap = cmp.risk_aug - cmp.risk_sup;
    // A diverged arm's last recorded iterate can still overflow the
    // estimators; the comparison is already invalid, so keep the empty
    // certificate rather than aborting the artifact.
    try {
        if (!run.sup.rows.empty())
            cmp.final_sup = estimators::certify(
                run.sup.thetas.back(), nn::zero_critic({task.dims.d_y, {}}), task.data, cfg.pi);
        if (!run.aug.rows.empty()) {
            const nn::CriticParams& psi =
                run.aug.psis.empty() ? nn::zero_critic({task.dims.d_y, critic.hidden})
                                     : run.aug.psis.back();
            cmp.final_aug = estimators::certify(run.aug.thetas.back(), psi, task.data, cfg.pi);
        }
    } catch (const std::exception&) {
        if (cmp.valid) throw;
    }
    return cmp;
}

ConvergenceReport convergence_from_paired(const PairedRun& run, std::uint64_t seed,
                                          double risk_threshold) {
    ConvergenceReport rep;
    rep.seed = seed;
    rep.n_star_sup = run.sup.first_risk_below(risk_threshold);
    rep.n_star_aug = run.aug.first_risk_below(risk_threshold);
    rep.sup_reached = rep.n_star_sup >= 0;
    rep.aug_reached = rep.n_star_aug >= 0;

    // lambda at the supervised crossing; delta from the augmented arm at the
    // matching iteration (clamped to its recorded length).
    if (!run.sup.rows.empty() && !run.aug.rows.empty()) {
        const std::size_t cross = rep.sup_reached
                                      ? static_cast<std::size_t>(rep.n_star_sup)
                                      : run.sup.rows.size() - 1;
        const std::size_t sidx = std::min(cross, run.sup.rows.size() - 1);
        const std::size_t aidx = std::min(cross, run.aug.rows.size() - 1);
        const double lam = run.sup.rows[sidx].lambda_hat;
        const double del = run.aug.rows[aidx].delta_hat;
        if (lam + del > 0.0) {
            rep.predicted_ratio = lam / (lam + del);
            rep.predicted_defined = true;
        }
    }
    if (rep.sup_reached && rep.aug_reached && rep.n_star_sup > 0) {
        rep.measured_ratio =
            static_cast<double>(rep.n_star_aug) / static_cast<double>(rep.n_star_sup);
        rep.measured_defined = true;
    }
    return rep;
}

ConvergenceReport measure_convergence(const TeacherTask& task, std::uint64_t seed,
                                      double risk_threshold, TrainingConfig cfg,
                                      const CriticConfig& critic) {
    cfg.risk_threshold = risk_threshold;
    PairedRun run = run_paired(task, seed, cfg, critic);
    return convergence_from_paired(run, seed, risk_threshold);
}

ProbeReport probe_gradients(const Trajectory& sup, const TeacherTask& task,
                            std::uint64_t seed, const CriticConfig& critic,
                            const std::vector<double>& epsilons,
                            const estimators::PowerIterOptions& pi) {
    ProbeReport rep;
    rep.diverged = sup.diverged;
    if (sup.rows.empty()) return rep;

    for (const TrajectoryRow& row : sup.rows) {
        const double cap = row.lambda_hat * row.M_hat;
        if (row.grad_norm > cap * (1.0 + estimators::kCheckSlack))
            rep.sup_bound_every_row = false;
    }

    std::size_t deepest = 0;
    for (std::size_t i = 1; i < sup.rows.size(); ++i)
        if (sup.rows[i].epsilon_hat < sup.rows[deepest].epsilon_hat) deepest = i;

    nn::CriticParams psi = nn::init_critic(substream(seed, 303), {task.dims.d_y, critic.hidden});
    psi = train_critic(sup.thetas[deepest], psi, task.data, critic.warmup, critic.eta,
                       critic.clip);
    rep.critic_digest = psi.digest();

    auto probe_at = [&](std::size_t idx, double eps) {
        ProbeLevel lvl;
        lvl.epsilon = eps;
        lvl.reached = true;
        lvl.n = sup.rows[idx].n;
        lvl.epsilon_hat = sup.rows[idx].epsilon_hat;
        lvl.grad_sup = sup.rows[idx].grad_norm;
        lvl.grad_aug = estimators::full_gradient_norm(objectives::Kind::kAugmented,
                                                      sup.thetas[idx], psi, task.data);
        lvl.cert = estimators::certify(sup.thetas[idx], psi, task.data, pi);
        return lvl;
    };

    for (double eps : epsilons) {
        int n = sup.first_epsilon_below(eps);
        if (n < 0) {
            ProbeLevel lvl;
            lvl.epsilon = eps;
            rep.levels.push_back(lvl);
            continue;
        }
        rep.levels.push_back(probe_at(static_cast<std::size_t>(n), eps));
    }
    rep.deepest = probe_at(deepest, sup.rows[deepest].epsilon_hat);
    return rep;
}

}  // namespace gradcert::experiments
