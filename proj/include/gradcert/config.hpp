#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradcert/experiments.hpp"
#include "gradcert/nn.hpp"

namespace gradcert {

// Run configuration. File format: flat `key = value` lines grouped under
// [section] headers; '#' starts a comment. Unknown sections or keys are
// rejected so a corrupted file fails loudly instead of half-applying.
struct RunConfig {
    struct Task {
        std::uint64_t seed = 42;
        std::size_t n_samples = 64;
        std::size_t d_x = 4;
        std::size_t d_y = 2;
        std::size_t d_h = 8;
        std::size_t blocks = 2;
        std::string phi = "tanh";  // tanh | mlp
        std::size_t d_phi = 8;
    } task;

    struct Training {
        double eta = 0.01;
        int iters = 50;
        double risk_threshold = 0.001;
        std::string init = "xavier";  // xavier | teacher (start at theta*)
    } training;

    struct Critic {
        std::vector<std::size_t> hidden = {16, 16};
        int n_critic = 5;
        double clip = 0.01;
        double eta = 0.005;
        std::string mode = "train";  // train | frozen | frozen_zero
        int warmup = 200;
    } critic;

    struct Probe {
        std::vector<double> epsilons = {0.1, 0.05, 0.01};
    } probe;

    struct Output {
        std::string dir = "out";
        std::vector<std::string> formats = {"csv", "json", "svg"};
    } output;

    nn::GeneratorDims generator_dims() const;
    nn::CriticDims critic_dims() const;
    experiments::TrainingConfig training_config() const;
    experiments::CriticConfig critic_config() const;

    // Canonical text form: every key, fixed order, %.17g numbers. Parsing
    // the result reproduces the config bit-exactly. The hash embedded in
    // artifacts covers every section except [output]: where results land
    // does not change what was computed.
    std::string serialize() const;
    std::string hash() const;

    static RunConfig parse_text(const std::string& text);
    static RunConfig parse_file(const std::string& path);

    // Applies a `section.key=value` override (the CLI flag form).
    void apply_override(const std::string& dotted_key, const std::string& value);
};

}  // namespace gradcert
