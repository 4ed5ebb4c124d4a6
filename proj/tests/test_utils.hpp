#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gradcert/rng.hpp"
#include "gradcert/tape.hpp"
#include "gradcert/tensor.hpp"

// Shared oracles and random-instance builders for the test suites. Nothing
// here calls into the estimators being tested.
namespace gradcert::testutil {

// Largest singular value of an explicit matrix via cyclic Jacobi eigenvalue
// iteration on the smaller Gram matrix. Dense and slow, but it shares no
// code path with the power iteration under test.
inline double svd_sigma_max(const std::vector<std::vector<double>>& a) {
    const std::size_t rows = a.size();
    if (rows == 0) return 0.0;
    const std::size_t cols = a[0].size();
    if (cols == 0) return 0.0;

    const bool use_cols = cols <= rows;
    const std::size_t n = use_cols ? cols : rows;
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            if (use_cols) {
                for (std::size_t k = 0; k < rows; ++k) s += a[k][i] * a[k][j];
            } else {
                for (std::size_t k = 0; k < cols; ++k) s += a[i][k] * a[j][k];
            }
            g[i][j] = s;
        }

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += g[p][q] * g[p][q];
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(g[p][q]) < 1e-300) continue;
                const double theta = (g[q][q] - g[p][p]) / (2.0 * g[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double gkp = g[k][p], gkq = g[k][q];
                    g[k][p] = c * gkp - s * gkq;
                    g[k][q] = s * gkp + c * gkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double gpk = g[p][k], gqk = g[q][k];
                    g[p][k] = c * gpk - s * gqk;
                    g[q][k] = s * gpk + c * gqk;
                }
            }
    }
    double lam = 0.0;
    for (std::size_t i = 0; i < n; ++i) lam = std::max(lam, g[i][i]);
    return std::sqrt(std::max(0.0, lam));
}

// Materializes the output
// Jacobian of a recorded tape (rows = output entries, columns = flat leaf
// entries) one jvp basis vector at a time.
inline std::vector<std::vector<double>> materialize_jacobian(const ad::Tape& tape) {
    const std::size_t in_dim = tape.leaf_numel();
    const std::size_t out_dim = tape.numel(tape.output());
    std::vector<std::vector<double>> jac(out_dim, std::vector<double>(in_dim, 0.0));
    std::vector<double> tangent(in_dim, 0.0);
    std::vector<double> col;
    ad::Tape::Workspace ws;
    for (std::size_t j = 0; j < in_dim; ++j) {
        tangent[j] = 1.0;
        tape.jvp_flat(tape.output(), tangent, col, ws);
        for (std::size_t i = 0; i < out_dim; ++i) jac[i][j] = col[i];
        tangent[j] = 0.0;
    }
    return jac;
}

inline std::vector<double> leaf_values_flat(const ad::Tape& tape) {
    std::vector<double> out;
    for (ad::Tape::NodeId id : tape.leaves())
        for (double v : tape.value(id).data) out.push_back(v);
    return out;
}

inline std::vector<Tensor> leaves_from_flat(const ad::Tape& tape, const std::vector<double>& flat) {
    std::vector<Tensor> vals;
    std::size_t k = 0;
    for (ad::Tape::NodeId id : tape.leaves()) {
        Tensor v = tape.value(id);
        for (double& x : v.data) x = flat.at(k++);
        vals.push_back(std::move(v));
    }
    return vals;
}

// Random straight-line scalar program over the full primitive set. Dims and
// values are kept in ranges where the finite-difference oracle is reliable:
// norm is only applied to vectors comfortably away from the origin, and all
// other primitives have bounded second derivatives.
struct RandomProgram {
    ad::Tape tape;
    std::size_t n_ops = 0;
};

inline RandomProgram random_program(Rng& rng) {
    RandomProgram prog;
    ad::Tape& t = prog.tape;

    auto rand_dim = [&] { return 1 + static_cast<std::size_t>(rng.uniform(0.0, 6.0)); };
    auto rand_vec = [&](std::size_t d) {
        Tensor v({d});
        for (double& x : v.data) x = rng.uniform(-0.8, 0.8);
        return v;
    };
    auto rand_mat = [&](std::size_t r, std::size_t c) {
        Tensor m({r, c});
        const double s = 1.0 / std::sqrt(static_cast<double>(std::max(r, c)));
        for (double& x : m.data) x = rng.uniform(-0.8, 0.8) * s;
        return m;
    };

    std::vector<ad::Tape::NodeId> pool;
    const int n_seed = 2 + static_cast<int>(rng.uniform(0.0, 3.0));
    for (int i = 0; i < n_seed; ++i) pool.push_back(t.leaf(rand_vec(rand_dim())));

    auto pick = [&] { return pool[static_cast<std::size_t>(rng.uniform(0.0, 1.0) * pool.size()) %
                                  pool.size()]; };

    const int n_ops = 4 + static_cast<int>(rng.uniform(0.0, 9.0));
    for (int i = 0; i < n_ops; ++i) {
        const ad::Tape::NodeId a = pick();
        const std::size_t da = t.numel(a);
        switch (static_cast<int>(rng.uniform(0.0, 7.0)) % 7) {
            case 0: pool.push_back(t.tanh(a)); break;
            case 1: pool.push_back(t.huber(a)); break;
            case 2: pool.push_back(t.scale(a, rng.uniform(-2.0, 2.0))); break;
            case 3: pool.push_back(t.add(a, t.leaf(rand_vec(da)))); break;
            case 4: pool.push_back(t.sub(a, t.leaf(rand_vec(da)))); break;
            case 5: pool.push_back(t.matvec(t.leaf(rand_mat(rand_dim(), da)), a)); break;
            case 6: pool.push_back(t.matvec_t(t.leaf(rand_mat(da, rand_dim())), a)); break;
        }
        ++prog.n_ops;
    }

    const ad::Tape::NodeId last = pool.back();
    double nrm = 0.0;
    for (double v : t.value(last).data) nrm += v * v;
    ad::Tape::NodeId root;
    if (std::sqrt(nrm) > 0.5 && rng.uniform01() < 0.3) {
        root = t.norm(last);
    } else {
        root = rng.uniform01() < 0.5 ? t.sum(last) : t.mean(last);
    }
    t.set_output(root);
    return prog;
}

}  // namespace gradcert::testutil
