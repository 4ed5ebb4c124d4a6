#include <doctest.h>

#include <cmath>

#include "gradcert/experiments.hpp"
#include "gradcert/objectives.hpp"
#include "gradcert/rng.hpp"
#include "test_utils.hpp"

using namespace gradcert;
using experiments::CriticConfig;
using experiments::TrainingConfig;

namespace {

// f(x) = omega * x with a 1x1 omega and no blocks; teacher omega = 1 on the
// two-point dataset {-1, +1} gives GD the closed form
//   omega_{k+1} - 1 = (1 - eta) (omega_k - 1).
experiments::TeacherTask linear_task() {
    experiments::TeacherTask task;
    task.seed = 7;
    task.dims.d_x = 1;
    task.dims.d_y = 1;
    task.dims.d_h = 1;
    task.dims.blocks = 0;
    task.theta_star = nn::zero_generator(task.dims);
    task.theta_star.omega[0] = 1.0;
    for (double x : {1.0, -1.0}) {
        Tensor xt({1}), yt({1});
        xt[0] = x;
        yt[0] = x;
        task.data.xs.push_back(xt);
        task.data.ys.push_back(yt);
    }
    return task;
}

experiments::TeacherTask small_task(std::uint64_t seed) {
    nn::GeneratorDims dims;
    dims.d_x = 2;
    dims.d_y = 2;
    dims.d_h = 3;
    dims.blocks = 1;
    return experiments::make_teacher_task(seed, 6, dims);
}

void check_shape(const experiments::Trajectory& traj) {
    REQUIRE(!traj.rows.empty());
    CHECK(traj.step_bounds.size() == traj.rows.size() - 1);
    CHECK(traj.thetas.size() == traj.rows.size());
    for (std::size_t i = 0; i < traj.rows.size(); ++i)
        CHECK(traj.rows[i].n == static_cast<int>(i));
}

}  // namespace

TEST_SUITE_BEGIN("experiments");

TEST_CASE("teacher task is exactly realizable") {
    experiments::TeacherTask task = small_task(500);
    REQUIRE(task.data.size() == 6);
    for (std::size_t i = 0; i < task.data.size(); ++i) {
        Tensor pred = nn::generator_forward(task.theta_star, task.data.xs[i]);
        for (std::size_t k = 0; k < pred.numel(); ++k) CHECK(pred[k] == task.data.ys[i][k]);
    }
    CHECK(objectives::batch_objective(objectives::Kind::kSupervised, task.theta_star,
                                      nn::zero_critic({task.dims.d_y, {}}),
                                      task.data) == 0.0);
}

TEST_CASE("one-block scalar arm matches a hand trace") {
    experiments::TeacherTask task;
    task.dims.d_x = 1;
    task.dims.d_y = 1;
    task.dims.d_h = 1;
    task.dims.blocks = 1;
    task.theta_star = nn::zero_generator(task.dims);
    task.theta_star.omega[0] = 1.0;  // teacher: f*(x) = x
    for (double x : {1.0, -1.0}) {
        Tensor xt({1}), yt({1});
        xt[0] = x;
        yt[0] = x;
        task.data.xs.push_back(xt);
        task.data.ys.push_back(yt);
    }

    nn::GeneratorParams theta0 = nn::zero_generator(task.dims);
    theta0.omega[0] = 0.5;  // f(x) = 0.5 x while U = V = 0

    TrainingConfig cfg;
    cfg.eta = 0.1;
    cfg.iters = 1;
    experiments::Trajectory traj = experiments::train_supervised(task, theta0, cfg);
    REQUIRE(traj.rows.size() == 2);
    check_shape(traj);

    // Residuals at omega = 0.5 are -+0.5: quadratic branch of the loss.
    const experiments::TrajectoryRow& r0 = traj.rows[0];
    CHECK(r0.risk == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(r0.epsilon_hat == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r0.grad_norm == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r0.lambda_hat == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r0.M_hat == doctest::Approx(1.0).epsilon(1e-9));

    // One step of eta = 0.1 moves omega to 0.55.
    const experiments::TrajectoryRow& r1 = traj.rows[1];
    CHECK(traj.thetas[1].omega[0] == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(r1.risk == doctest::Approx(0.5 * 0.45 * 0.45).epsilon(1e-12));
    CHECK(r1.epsilon_hat == doctest::Approx(0.45).epsilon(1e-12));

    const experiments::StepBound& sb = traj.step_bounds[0];
    CHECK(sb.n == 0);
    CHECK(sb.step_norm == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(sb.displacement == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(sb.bound == doctest::Approx(0.0525).epsilon(1e-9));
    CHECK(sb.within);
}

TEST_CASE("teacher parameters are a fixed point of supervised descent") {
    experiments::TeacherTask task = small_task(501);
    TrainingConfig cfg;
    cfg.eta = 0.05;
    cfg.iters = 4;
    experiments::Trajectory traj = experiments::train_supervised(task, task.theta_star, cfg);
    REQUIRE(traj.rows.size() == 5);
    const std::string want = task.theta_star.digest();
    for (const auto& row : traj.rows) {
        CHECK(row.risk == 0.0);
        CHECK(row.grad_norm == 0.0);
        CHECK(row.epsilon_hat == 0.0);
        CHECK(row.theta_digest == want);
    }
    CHECK(traj.first_risk_below(1e-12) == 0);
    for (const auto& sb : traj.step_bounds) {
        CHECK(sb.displacement == 0.0);
        CHECK(sb.within);
    }
}

TEST_CASE("linear one-parameter descent contracts geometrically") {
    experiments::TeacherTask task = linear_task();
    nn::GeneratorParams theta0 = nn::zero_generator(task.dims);  // omega = 0

    TrainingConfig cfg;
    cfg.eta = 0.5;
    cfg.iters = 40;
    experiments::Trajectory traj = experiments::train_supervised(task, theta0, cfg);
    REQUIRE(traj.rows.size() == 41);
    check_shape(traj);

    for (std::size_t k = 0; k < traj.rows.size(); ++k) {
        const double gap = std::pow(0.5, static_cast<double>(k));  // |omega_k - 1|
        CHECK(std::abs(traj.thetas[k].omega[0] - (1.0 - gap)) <= 1e-12);
        CHECK(std::abs(traj.rows[k].risk - 0.5 * gap * gap) <= 1e-12);
        CHECK(std::abs(traj.rows[k].epsilon_hat - gap) <= 1e-10);
    }
    CHECK(traj.first_risk_below(1e-10) == 17);  // 0.5 * 4^-k <= 1e-10 first at k = 17
    CHECK(!traj.diverged);
}

TEST_CASE("frozen-zero critic reproduces the supervised arm bitwise") {
    experiments::TeacherTask task = small_task(502);
    TrainingConfig cfg;
    cfg.eta = 0.05;
    cfg.iters = 6;
    CriticConfig critic;
    critic.hidden = {4};
    critic.mode = CriticConfig::Mode::kFrozenZero;

    experiments::PairedRun run = experiments::run_paired(task, 77, cfg, critic);
    REQUIRE(run.sup.rows.size() == run.aug.rows.size());
    for (std::size_t i = 0; i < run.sup.rows.size(); ++i) {
        CHECK(run.sup.rows[i].theta_digest == run.aug.rows[i].theta_digest);
        CHECK(run.sup.rows[i].risk == run.aug.rows[i].risk);
        CHECK(run.sup.rows[i].grad_norm == run.aug.rows[i].grad_norm);
        CHECK(run.aug.rows[i].delta_hat == 0.0);
    }
    CHECK(run.aug.critic_steps == 0);
}

TEST_CASE("a frozen constant critic leaves the generator updates unchanged") {
    experiments::TeacherTask task = small_task(503);
    TrainingConfig cfg;
    cfg.eta = 0.05;
    cfg.iters = 5;

    nn::GeneratorParams theta0 = experiments::paired_theta0(9, task.dims);
    experiments::Trajectory sup = experiments::train_supervised(task, theta0, cfg);

    CriticConfig critic;
    critic.hidden = {};
    critic.mode = CriticConfig::Mode::kFrozen;
    nn::CriticParams psi0 = nn::constant_critic({task.dims.d_y, {}}, 3.25);
    experiments::Trajectory aug = experiments::train_augmented(task, theta0, psi0, cfg, critic);

    REQUIRE(sup.rows.size() == aug.rows.size());
    for (std::size_t i = 0; i < sup.rows.size(); ++i) {
        CHECK(sup.rows[i].theta_digest == aug.rows[i].theta_digest);
        CHECK(sup.rows[i].grad_norm == aug.rows[i].grad_norm);
        CHECK(aug.rows[i].delta_hat == 0.0);
        CHECK(aug.psis[i].digest() == psi0.digest());
    }
}

TEST_CASE("training the critic separates teacher targets from a wrong generator") {
    experiments::TeacherTask task = small_task(504);
    nn::GeneratorParams theta = experiments::paired_theta0(11, task.dims);
    nn::CriticParams psi = experiments::paired_psi0(11, {task.dims.d_y, {6}});

    psi = nn::clip_critic(psi, 0.1);  // start inside the feasible box
    const double before = objectives::wgan_critic_loss(theta, psi, task.data);
    nn::CriticParams trained = experiments::train_critic(theta, psi, task.data, 150, 0.01, 0.1);
    const double after = objectives::wgan_critic_loss(theta, trained, task.data);
    CHECK(after < before);
    for (const auto& layer : trained.layers)
        for (double w : layer.w.data) CHECK(std::abs(w) <= 0.1 + 1e-15);
}

TEST_CASE("augmented arm tallies the critic step budget") {
    experiments::TeacherTask task = small_task(505);
    TrainingConfig cfg;
    cfg.eta = 0.02;
    cfg.iters = 3;
    CriticConfig critic;
    critic.hidden = {4};
    critic.n_critic = 2;
    critic.eta = 1e-3;
    critic.clip = 0.05;

    experiments::PairedRun run = experiments::run_paired(task, 13, cfg, critic);
    REQUIRE(!run.aug.diverged);
    CHECK(run.aug.critic_steps == static_cast<long long>(critic.n_critic) * (cfg.iters + 1));
    check_shape(run.aug);
    for (std::size_t i = 0; i + 1 < run.aug.psis.size(); ++i)
        CHECK(run.aug.psis[i].digest() != run.aug.psis[i + 1].digest());
}

TEST_CASE("near-optimal probe selects by accuracy and certifies each pick") {
    experiments::TeacherTask task = linear_task();
    nn::GeneratorParams theta0 = nn::zero_generator(task.dims);
    TrainingConfig cfg;
    cfg.eta = 0.5;
    cfg.iters = 8;
    experiments::Trajectory traj = experiments::train_supervised(task, theta0, cfg);

    auto all = experiments::near_optimal_probe(traj, task, 1e18);
    REQUIRE(all.size() == traj.rows.size());
    for (const auto& [n, cert] : all) CHECK(cert.all_pass());

    // epsilon_hat at row k is 2^-k, so the 0.1 cut keeps rows 4..8.
    auto tail = experiments::near_optimal_probe(traj, task, 0.1);
    REQUIRE(tail.size() == 5);
    CHECK(tail.front().first == 4);
    CHECK(tail.back().first == 8);
    for (const auto& [n, cert] : tail)
        CHECK(cert.epsilon_measured == doctest::Approx(traj.rows[n].epsilon_hat).epsilon(1e-12));

    CHECK(experiments::near_optimal_probe(traj, task, -1.0).empty());
}

TEST_CASE("zero-iteration comparison is an exact tie") {
    experiments::TeacherTask task = small_task(506);
    TrainingConfig cfg;
    cfg.eta = 0.05;
    CriticConfig critic;
    critic.hidden = {4};
    experiments::RiskComparison cmp = experiments::compare_risks(task, 21, 0, cfg, critic);
    CHECK(cmp.valid);
    CHECK(cmp.theta0_digest_sup == cmp.theta0_digest_aug);
    CHECK(cmp.risk_sup == cmp.risk_aug);
    CHECK(cmp.risk_gap == 0.0);
    CHECK(cmp.final_sup.all_pass());
    CHECK(cmp.final_aug.all_pass());
}

TEST_CASE("paired runs are reproducible from the seed alone") {
    experiments::TeacherTask task = small_task(507);
    TrainingConfig cfg;
    cfg.eta = 0.05;
    cfg.iters = 4;
    CriticConfig critic;
    critic.hidden = {4};
    critic.n_critic = 2;

    experiments::PairedRun a = experiments::run_paired(task, 31, cfg, critic);
    experiments::PairedRun b = experiments::run_paired(task, 31, cfg, critic);
    REQUIRE(a.sup.rows.size() == b.sup.rows.size());
    REQUIRE(a.aug.rows.size() == b.aug.rows.size());
    for (std::size_t i = 0; i < a.sup.rows.size(); ++i) {
        CHECK(a.sup.rows[i].theta_digest == b.sup.rows[i].theta_digest);
        CHECK(a.sup.rows[i].risk == b.sup.rows[i].risk);
        CHECK(a.sup.rows[i].M_hat == b.sup.rows[i].M_hat);
    }
    for (std::size_t i = 0; i < a.aug.rows.size(); ++i) {
        CHECK(a.aug.rows[i].theta_digest == b.aug.rows[i].theta_digest);
        CHECK(a.aug.rows[i].grad_norm == b.aug.rows[i].grad_norm);
        CHECK(a.aug.psis[i].digest() == b.aug.psis[i].digest());
    }
    CHECK(experiments::paired_theta0(32, task.dims).digest() != a.theta0.digest());
}

TEST_CASE("stop epsilon keeps the crossing row and nothing after it") {
    experiments::TeacherTask task = linear_task();
    nn::GeneratorParams theta0 = nn::zero_generator(task.dims);
    TrainingConfig cfg;
    cfg.eta = 0.5;
    cfg.iters = 40;
    cfg.stop_epsilon = 0.1;  // epsilon_hat at row k is 2^-k: crossing at k = 4
    experiments::Trajectory traj = experiments::train_supervised(task, theta0, cfg);
    REQUIRE(traj.rows.size() == 5);
    check_shape(traj);
    CHECK(traj.rows.back().epsilon_hat <= 0.1);
    for (std::size_t k = 0; k + 1 < traj.rows.size(); ++k)
        CHECK(traj.rows[k].epsilon_hat > 0.1);
    CHECK(!traj.diverged);
    for (const auto& sb : traj.step_bounds) CHECK(sb.within);
}

TEST_CASE("gradient probe reports levels, the deepest iterate and the row-wise bound") {
    experiments::TeacherTask task = linear_task();
    nn::GeneratorParams theta0 = nn::zero_generator(task.dims);
    TrainingConfig cfg;
    cfg.eta = 0.5;
    cfg.iters = 10;
    experiments::Trajectory traj = experiments::train_supervised(task, theta0, cfg);

    CriticConfig critic;
    critic.hidden = {4};
    critic.warmup = 40;
    critic.eta = 0.01;
    critic.clip = 0.05;
    experiments::ProbeReport rep =
        experiments::probe_gradients(traj, task, 55, critic, {0.3, 1e-9});

    CHECK(!rep.diverged);
    CHECK(rep.sup_bound_every_row);
    CHECK(!rep.critic_digest.empty());
    REQUIRE(rep.levels.size() == 2);

    const experiments::ProbeLevel& hit = rep.levels[0];
    CHECK(hit.reached);
    CHECK(hit.n == 2);  // first 2^-k <= 0.3
    CHECK(hit.epsilon_hat == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(hit.grad_sup == traj.rows[2].grad_norm);
    CHECK(hit.cert.all_pass());

    const experiments::ProbeLevel& miss = rep.levels[1];
    CHECK(!miss.reached);
    CHECK(miss.n == -1);

    CHECK(rep.deepest.n == 10);
    CHECK(rep.deepest.reached);
    CHECK(rep.deepest.cert.all_pass());
    CHECK(rep.deepest.epsilon_hat == traj.rows.back().epsilon_hat);
}

TEST_CASE("an oversized step diverges, is flagged and keeps the prefix") {
    experiments::TeacherTask task = small_task(508);
    nn::GeneratorParams theta0 = experiments::paired_theta0(61, task.dims);
    TrainingConfig cfg;
    cfg.eta = 1e12;
    cfg.iters = 60;
    experiments::Trajectory traj = experiments::train_supervised(task, theta0, cfg);
    CHECK(traj.diverged);
    CHECK(traj.divergence_iteration >= 0);
    REQUIRE(!traj.rows.empty());
    CHECK(traj.rows.size() < 61);
    check_shape(traj);
    for (const auto& row : traj.rows) {
        CHECK(std::isfinite(row.risk));
        CHECK(std::isfinite(row.grad_norm));
    }

    CriticConfig critic;
    critic.hidden = {4};
    experiments::RiskComparison cmp =
        experiments::comparison_from_paired(experiments::run_paired(task, 61, cfg, critic), task,
                                            61, cfg, critic);
    CHECK(!cmp.valid);
    CHECK(cmp.sup_diverged);
}

TEST_CASE("lambda shrinks alongside the residuals as training converges") {
    experiments::TeacherTask task = small_task(509);
    nn::GeneratorParams theta0 = experiments::paired_theta0(71, task.dims);
    TrainingConfig cfg;
    cfg.eta = 0.2;
    cfg.iters = 400;
    experiments::Trajectory traj = experiments::train_supervised(task, theta0, cfg);
    REQUIRE(!traj.diverged);
    const experiments::TrajectoryRow& first = traj.rows.front();
    const experiments::TrajectoryRow& last = traj.rows.back();
    CHECK(last.risk < first.risk);
    CHECK(last.lambda_hat < 0.1 * first.lambda_hat);
    CHECK(last.epsilon_hat < 0.1 * first.epsilon_hat);
}

TEST_CASE("convergence report reads crossings off the paired trajectories") {
    experiments::TeacherTask task = small_task(510);
    TrainingConfig cfg;
    cfg.eta = 0.2;
    cfg.iters = 200;
    CriticConfig critic;
    critic.hidden = {4};
    critic.n_critic = 1;
    critic.eta = 1e-3;
    critic.clip = 0.02;

    experiments::PairedRun run = experiments::run_paired(task, 81, cfg, critic);
    REQUIRE(!run.sup.diverged);
    REQUIRE(!run.aug.diverged);
    const double threshold = 4.0 * run.sup.rows.back().risk + 1e-12;
    experiments::ConvergenceReport rep =
        experiments::convergence_from_paired(run, 81, threshold);
    CHECK(rep.sup_reached);
    CHECK(rep.n_star_sup == run.sup.first_risk_below(threshold));
    CHECK(rep.n_star_aug == run.aug.first_risk_below(threshold));
    if (rep.predicted_defined) {
        CHECK(rep.predicted_ratio > 0.0);
        CHECK(rep.predicted_ratio <= 1.0);
    }
    if (rep.measured_defined) CHECK(rep.measured_ratio > 0.0);

    // From the teacher itself both arms are converged at row zero.
    experiments::ConvergenceReport at_star = experiments::convergence_from_paired(
        [&] {
            experiments::PairedRun r;
            r.theta0 = task.theta_star;
            r.psi0 = experiments::paired_psi0(81, {task.dims.d_y, critic.hidden});
            TrainingConfig short_cfg = cfg;
            short_cfg.iters = 2;
            r.sup = experiments::train_supervised(task, r.theta0, short_cfg);
            r.aug = experiments::train_augmented(task, r.theta0, r.psi0, short_cfg, critic);
            return r;
        }(),
        81, 1e-9);
    CHECK(at_star.n_star_sup == 0);
    CHECK(at_star.sup_reached);
    CHECK(!at_star.measured_defined);
}

TEST_SUITE_END();
