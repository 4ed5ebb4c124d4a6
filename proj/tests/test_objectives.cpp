#include <doctest.h>

#include <cmath>

#include "gradcert/experiments.hpp"
#include "gradcert/fd.hpp"
#include "gradcert/objectives.hpp"
#include "gradcert/rng.hpp"
#include "test_utils.hpp"

using namespace gradcert;

namespace {

Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t d_x, std::size_t d_y) {
    Rng rng(seed);
    Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor x({d_x}), y({d_y});
        for (double& v : x.data) v = rng.normal();
        for (double& v : y.data) v = rng.normal();
        data.xs.push_back(std::move(x));
        data.ys.push_back(std::move(y));
    }
    return data;
}

}  // namespace

TEST_SUITE_BEGIN("objectives");

TEST_CASE("supervised loss is zero exactly at the target") {
    Tensor p = Tensor::vec({0.25, -1.75, 3.0});
    CHECK(objectives::supervised_loss(p, p) == 0.0);
}

TEST_CASE("supervised loss matches the huber closed form per coordinate") {
    // r = 0.5 -> 0.125, r = 2 -> 1.5.
    CHECK(objectives::supervised_loss(Tensor::vec({0.5}), Tensor::vec({0.0})) ==
          doctest::Approx(0.125));
    CHECK(objectives::supervised_loss(Tensor::vec({2.0}), Tensor::vec({0.0})) ==
          doctest::Approx(1.5));
    CHECK(objectives::supervised_loss(Tensor::vec({0.5, 2.0}), Tensor::vec({0.0, 0.0})) ==
          doctest::Approx(1.625));
}

TEST_CASE("plain and taped supervised loss agree bitwise") {
    Rng rng(substream(901, 0));
    for (int i = 0; i < 8; ++i) {
        Tensor p({3}), y({3});
        for (double& v : p.data) v = rng.uniform(-3.0, 3.0);
        for (double& v : y.data) v = rng.uniform(-3.0, 3.0);
        ad::Tape t;
        auto pn = t.leaf(p);
        auto yn = t.constant(y);
        t.set_output(objectives::emit_supervised_loss(t, pn, yn));
        CHECK(t.value(t.output()).scalar_value() == objectives::supervised_loss(p, y));
    }
}

TEST_CASE("prediction gradient of the loss is bounded by sqrt(d_y)") {
    Rng rng(substream(902, 0));
    for (int i = 0; i < 20; ++i) {
        const std::size_t d = 1 + i % 5;
        Tensor p({d}), y({d});
        for (double& v : p.data) v = rng.uniform(-50.0, 50.0);
        for (double& v : y.data) v = rng.uniform(-2.0, 2.0);
        ad::Tape t;
        auto pn = t.leaf(p);
        t.set_output(objectives::emit_supervised_loss(t, pn, t.constant(y)));
        auto g = t.vjp(Tensor::scalar(1.0));
        CHECK(vec::norm(g[0].data) <= std::sqrt(static_cast<double>(d)) + 1e-12);
    }
}

TEST_CASE("loss is convex along random segments") {
    Rng rng(substream(903, 0));
    Tensor y = Tensor::vec({0.5, -0.5});
    for (int i = 0; i < 10; ++i) {
        Tensor a({2}), b({2});
        for (double& v : a.data) v = rng.uniform(-4.0, 4.0);
        for (double& v : b.data) v = rng.uniform(-4.0, 4.0);
        Tensor mid({2});
        for (std::size_t k = 0; k < 2; ++k) mid[k] = 0.5 * (a[k] + b[k]);
        CHECK(objectives::supervised_loss(mid, y) <=
              0.5 * objectives::supervised_loss(a, y) +
                  0.5 * objectives::supervised_loss(b, y) + 1e-12);
    }
}

TEST_CASE("loss gradient is 1-lipschitz in the prediction") {
    // Huber curvature never exceeds 1 per coordinate.
    Rng rng(substream(904, 0));
    Tensor y = Tensor::vec({0.0, 0.0, 0.0});
    auto grad_at = [&](const Tensor& p) {
        ad::Tape t;
        auto pn = t.leaf(p);
        t.set_output(objectives::emit_supervised_loss(t, pn, t.constant(y)));
        return t.vjp(Tensor::scalar(1.0))[0];
    };
    for (int i = 0; i < 10; ++i) {
        Tensor a({3}), b({3});
        for (double& v : a.data) v = rng.uniform(-3.0, 3.0);
        for (double& v : b.data) v = rng.uniform(-3.0, 3.0);
        Tensor ga = grad_at(a), gb = grad_at(b);
        double dg = 0.0, dp = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            dg += (ga[k] - gb[k]) * (ga[k] - gb[k]);
            dp += (a[k] - b[k]) * (a[k] - b[k]);
        }
        CHECK(std::sqrt(dg) <= std::sqrt(dp) + 1e-12);
    }
}

TEST_CASE("constant critic fixes the adversarial objective") {
    nn::GeneratorDims dims;
    nn::GeneratorParams theta = nn::init_generator(substream(905, 0), dims);
    Dataset data = random_dataset(substream(905, 1), 6, dims.d_x, dims.d_y);
    nn::CriticParams psi = nn::constant_critic({dims.d_y, {4}}, 3.0);
    CHECK(objectives::wgan_generator_loss(theta, psi, data) == doctest::Approx(-3.0));
    // Generated and real scores coincide, so the critic objective is 0.
    CHECK(objectives::wgan_critic_loss(theta, psi, data) == doctest::Approx(0.0));
}

TEST_CASE("perfect generator zeroes supervised and critic objectives") {
    experiments::TeacherTask task = experiments::make_teacher_task(906, 8, {});
    CHECK(objectives::batch_objective(objectives::Kind::kSupervised, task.theta_star,
                                      nn::zero_critic({task.dims.d_y, {}}), task.data) == 0.0);
    nn::CriticParams psi = nn::init_critic(substream(906, 2), {task.dims.d_y, {8}});
    // f(x_i) = y_i exactly, so generated and real critic scores cancel.
    CHECK(objectives::wgan_critic_loss(task.theta_star, psi, task.data) ==
          doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("augmented objective is supervised minus critic score") {
    nn::GeneratorDims dims;
    nn::GeneratorParams theta = nn::init_generator(substream(907, 0), dims);
    nn::CriticParams psi = nn::init_critic(substream(907, 1), {dims.d_y, {6}});
    Dataset data = random_dataset(substream(907, 2), 5, dims.d_x, dims.d_y);
    const double sup = objectives::batch_objective(objectives::Kind::kSupervised, theta, psi, data);
    const double adv = objectives::batch_objective(objectives::Kind::kAdversarial, theta, psi, data);
    const double aug = objectives::batch_objective(objectives::Kind::kAugmented, theta, psi, data);
    CHECK(aug == doctest::Approx(sup + adv).epsilon(1e-12));
}

TEST_CASE("gradients are additive across the objective split") {
    nn::GeneratorDims dims;
    dims.d_h = 4;
    nn::GeneratorParams theta = nn::init_generator(substream(908, 0), dims);
    nn::CriticParams psi = nn::init_critic(substream(908, 1), {dims.d_y, {5}});
    Dataset data = random_dataset(substream(908, 2), 4, dims.d_x, dims.d_y);

    auto sup = objectives::batch_objective_with_grad(objectives::Kind::kSupervised, theta, psi, data);
    auto adv = objectives::batch_objective_with_grad(objectives::Kind::kAdversarial, theta, psi, data);
    auto aug = objectives::batch_objective_with_grad(objectives::Kind::kAugmented, theta, psi, data);
    REQUIRE(sup.grad.size() == aug.grad.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < aug.grad.size(); ++i)
        worst = std::max(worst, std::abs(aug.grad[i] - sup.grad[i] - adv.grad[i]));
    CHECK(worst <= 1e-12);
}

TEST_CASE("batch objective value matches its with-grad variant") {
    nn::GeneratorDims dims;
    nn::GeneratorParams theta = nn::init_generator(substream(909, 0), dims);
    nn::CriticParams psi = nn::init_critic(substream(909, 1), {dims.d_y, {4, 4}});
    Dataset data = random_dataset(substream(909, 2), 6, dims.d_x, dims.d_y);
    for (auto kind : {objectives::Kind::kSupervised, objectives::Kind::kAdversarial,
                      objectives::Kind::kAugmented}) {
        const double value = objectives::batch_objective(kind, theta, psi, data);
        CHECK(objectives::batch_objective_with_grad(kind, theta, psi, data).value ==
              doctest::Approx(value).epsilon(1e-15));
    }
}

TEST_CASE("generator gradients match finite differences for every objective") {
    nn::GeneratorDims dims;
    dims.d_x = 3;
    dims.d_y = 2;
    dims.d_h = 3;
    dims.blocks = 1;
    nn::GeneratorParams theta = nn::init_generator(substream(910, 0), dims);
    nn::CriticParams psi = nn::init_critic(substream(910, 1), {dims.d_y, {4}});
    Dataset data = random_dataset(substream(910, 2), 3, dims.d_x, dims.d_y);

    for (auto kind : {objectives::Kind::kSupervised, objectives::Kind::kAdversarial,
                      objectives::Kind::kAugmented}) {
        auto eval = objectives::batch_objective_with_grad(kind, theta, psi, data);
        std::vector<double> want = fd::gradient(
            [&](const std::vector<double>& p) {
                nn::GeneratorParams q = theta;
                q.unflatten(p);
                return objectives::batch_objective(kind, q, psi, data);
            },
            theta.flatten());
        CHECK(fd::max_rel_error(eval.grad, want) <= 1e-5);
    }
}

TEST_CASE("critic gradient matches finite differences") {
    nn::GeneratorDims dims;
    dims.d_x = 2;
    dims.d_y = 2;
    dims.d_h = 3;
    dims.blocks = 1;
    nn::GeneratorParams theta = nn::init_generator(substream(911, 0), dims);
    nn::CriticParams psi = nn::init_critic(substream(911, 1), {dims.d_y, {3}});
    Dataset data = random_dataset(substream(911, 2), 3, dims.d_x, dims.d_y);

    auto eval = objectives::critic_loss_with_grad(theta, psi, data);
    CHECK(eval.value ==
          doctest::Approx(objectives::wgan_critic_loss(theta, psi, data)).epsilon(1e-15));
    std::vector<double> want = fd::gradient(
        [&](const std::vector<double>& p) {
            nn::CriticParams q = psi;
            q.unflatten(p);
            return objectives::wgan_critic_loss(theta, q, data);
        },
        psi.flatten());
    CHECK(fd::max_rel_error(eval.grad, want) <= 1e-5);
}

TEST_CASE("kind names round-trip") {
    using objectives::Kind;
    for (Kind k : {Kind::kSupervised, Kind::kAdversarial, Kind::kAugmented})
        CHECK(objectives::kind_from_name(objectives::kind_name(k)) == k);
    CHECK_THROWS(objectives::kind_from_name("nonsense"));
}

TEST_SUITE_END();
