#pragma once

#include <stdexcept>
#include <vector>

#include "gradcert/tensor.hpp"

namespace gradcert {

// Paired samples (x_i, y_i). All batch statistics in the project are plain
// means over this container, reduced in index order, so results are
// deterministic regardless of how the per-sample work is scheduled.
struct Dataset {
    std::vector<Tensor> xs;
    std::vector<Tensor> ys;

    std::size_t size() const { return xs.size(); }

    void validate() const {
        if (xs.size() != ys.size())
            throw std::invalid_argument("dataset: " + std::to_string(xs.size()) + " inputs vs " +
                                        std::to_string(ys.size()) + " targets");
        if (xs.empty()) throw std::invalid_argument("dataset: empty");
    }
};

}  // namespace gradcert
