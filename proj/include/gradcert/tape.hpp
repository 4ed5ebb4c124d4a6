#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "gradcert/tensor.hpp"

namespace gradcert::ad {

// The primitive set is deliberately closed: every differentiable path in the
// project is built from these ops, so the finite-difference oracle in the
// test suite covers all of them.
enum class Op : std::uint8_t {
    kLeaf,     // differentiated input
    kConst,    // non-differentiated input
    kMatVec,   // (m,n) x (n) -> (m)
    kMatVecT,  // (m,n) x (m) -> (n), i.e. W^T x
    kAdd,      // elementwise
    kSub,      // elementwise
    kScale,    // multiply by a fixed constant
    kTanh,     // elementwise
    kHuber,    // elementwise Huber with threshold 1
    kSum,      // -> (1)
    kMean,     // -> (1)
    kNorm,     // Euclidean norm -> (1)
};

const char* op_name(Op op);

// Elementwise Huber with threshold 1 and its derivative; shared with the
// plain (untaped) loss evaluations so both paths agree bitwise.
inline double huber(double r) {
    double a = std::abs(r);
    return a <= 1.0 ? 0.5 * r * r : a - 0.5;
}
inline double huber_deriv(double r) {
    if (std::abs(r) <= 1.0) return r;
    return r > 0.0 ? 1.0 : -1.0;
}

// Straight-line record of a program over the primitive set. Nodes are stored
// in execution order, so inputs always precede their consumers; reverse and
// forward sweeps are single passes over the node list. Values are committed
// at build time and the tape is immutable afterwards, which makes it safe to
// share read-only across threads and to run repeated vjp/jvp sweeps (power
// iteration) without re-recording.
class Tape {
public:
    using NodeId = std::int32_t;

    struct Node {
        Op op;
        NodeId a = -1;
        NodeId b = -1;
        double c = 0.0;  // constant factor for kScale
        Tensor value;
    };

    // Reusable flat buffer for vjp/jvp sweeps; holds one double per tensor
    // element across all nodes. Callers that run many sweeps over one tape
    // (power iteration, per-iteration estimators) should reuse a workspace
    // to avoid reallocating.
    struct Workspace {
        std::vector<double> buf;
    };

    NodeId leaf(Tensor v);
    NodeId constant(Tensor v);
    NodeId matvec(NodeId w, NodeId x);
    NodeId matvec_t(NodeId w, NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId tanh(NodeId a);
    NodeId huber(NodeId a);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId norm(NodeId a);

    void set_output(NodeId id);
    NodeId output() const { return output_; }

    std::size_t size() const { return nodes_.size(); }
    const Tensor& value(NodeId id) const { return nodes_.at(check(id)).value; }
    const Tensor& output_value() const { return value(output_); }
    const std::vector<NodeId>& leaves() const { return leaves_; }
    std::size_t numel(NodeId id) const { return nodes_.at(check(id)).value.numel(); }

    // Total number of differentiated elements, i.e. the length of a flat
    // gradient/tangent vector (leaf tensors concatenated in creation order).
    std::size_t leaf_numel() const { return leaf_numel_; }

    // Reverse sweep from `root`; the seed must match the root's shape.
    // Returns cotangents of all leaves in creation order.
    std::vector<Tensor> vjp_at(NodeId root, const Tensor& seed) const;
    std::vector<Tensor> vjp(const Tensor& seed) const { return vjp_at(output_, seed); }

    // Forward (dual-number) sweep up to `target`: every node carries a
    // tangent alongside its recorded value. Tangents are given per leaf in
    // creation order.
    Tensor jvp_at(NodeId target, const std::vector<Tensor>& tangents) const;
    Tensor jvp(const std::vector<Tensor>& tangents) const { return jvp_at(output_, tangents); }

    // Flat-vector sweeps used by power iteration and the training loops.
    void vjp_flat(NodeId root, std::span<const double> seed, std::vector<double>& grad_out,
                  Workspace& ws) const;
    void jvp_flat(NodeId target, std::span<const double> tangent, std::vector<double>& tan_out,
                  Workspace& ws) const;

    // Adjoint (after vjp_flat) or tangent (after jvp_flat) of an arbitrary
    // node, read out of the workspace of the preceding sweep.
    std::span<const double> slot(const Workspace& ws, NodeId id) const;

    // Re-executes the recorded program on fresh leaf values (constants keep
    // their recorded values). Shapes must match the recording.
    Tensor replay(const std::vector<Tensor>& leaf_values) const;

    // Digest of ops, arguments and committed values; bit-identical tapes
    // fingerprint identically.
    std::uint64_t fingerprint() const;

private:
    NodeId push(Node n);
    NodeId check(NodeId id) const;
    void require_unset_output() const;

    std::vector<Node> nodes_;
    std::vector<NodeId> leaves_;
    std::vector<std::size_t> offset_;  // workspace offset per node
    std::size_t total_elems_ = 0;
    std::size_t leaf_numel_ = 0;
    NodeId output_ = -1;
};

// A program maps input nodes (installed as leaves in builder order) to an
// output node.
using TapeBuilder = std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>;

// Records `program` applied to `inputs` and returns the committed output
// value together with the tape.
std::pair<Tensor, Tape> record(const TapeBuilder& program, const std::vector<Tensor>& inputs);

// Gradient/tangent over the flat concatenation of all leaves.
std::vector<double> flat_vjp(const Tape& tape, const Tensor& seed);
Tensor flat_jvp(const Tape& tape, std::span<const double> tangent);

}  // namespace gradcert::ad
