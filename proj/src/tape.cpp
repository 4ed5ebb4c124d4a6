#include "gradcert/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gradcert/digest.hpp"

namespace gradcert::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kConst: return "const";
        case Op::kMatVec: return "matvec";
        case Op::kMatVecT: return "matvec_t";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kScale: return "scale";
        case Op::kTanh: return "tanh";
        case Op::kHuber: return "huber";
        case Op::kSum: return "sum";
        case Op::kMean: return "mean";
        case Op::kNorm: return "norm";
    }
    return "?";
}

namespace {

[[noreturn]] void fail_shape(const char* what, std::size_t node, const std::string& detail) {
    throw std::invalid_argument("tape: " + std::string(what) + " at node " +
                                std::to_string(node) + ": " + detail);
}

}  // namespace

Tape::NodeId Tape::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::invalid_argument("tape: invalid node id " + std::to_string(id));
    return id;
}

void Tape::require_unset_output() const {
    if (output_ >= 0)
        throw std::logic_error("tape: already finalized; tapes are immutable after set_output");
}

Tape::NodeId Tape::push(Node n) {
    require_unset_output();
    if (!n.value.all_finite())
        fail_shape("non-finite result", nodes_.size(),
                   std::string(op_name(n.op)) + " produced a non-finite value");
    NodeId id = static_cast<NodeId>(nodes_.size());
    offset_.push_back(total_elems_);
    total_elems_ += n.value.numel();
    if (n.op == Op::kLeaf) {
        leaves_.push_back(id);
        leaf_numel_ += n.value.numel();
    }
    nodes_.push_back(std::move(n));
    return id;
}

Tape::NodeId Tape::leaf(Tensor v) { return push({Op::kLeaf, -1, -1, 0.0, std::move(v)}); }

Tape::NodeId Tape::constant(Tensor v) { return push({Op::kConst, -1, -1, 0.0, std::move(v)}); }

Tape::NodeId Tape::matvec(NodeId w, NodeId x) {
    const Tensor& W = value(check(w));
    const Tensor& X = value(check(x));
    if (W.rank() != 2 || X.rank() != 1 || W.cols() != X.numel())
        fail_shape("shape mismatch", nodes_.size(),
                   "matvec needs (m,n) and (n), got " + W.shape_str() + " and " + X.shape_str());
    Tensor out({W.rows()});
    for (std::size_t i = 0; i < W.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < W.cols(); ++j) s += W.at(i, j) * X[j];
        out[i] = s;
    }
    return push({Op::kMatVec, w, x, 0.0, std::move(out)});
}

Tape::NodeId Tape::matvec_t(NodeId w, NodeId x) {
    const Tensor& W = value(check(w));
    const Tensor& X = value(check(x));
    if (W.rank() != 2 || X.rank() != 1 || W.rows() != X.numel())
        fail_shape("shape mismatch", nodes_.size(),
                   "matvec_t needs (m,n) and (m), got " + W.shape_str() + " and " + X.shape_str());
    Tensor out({W.cols()});
    for (std::size_t j = 0; j < W.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < W.rows(); ++i) s += W.at(i, j) * X[i];
        out[j] = s;
    }
    return push({Op::kMatVecT, w, x, 0.0, std::move(out)});
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& A = value(check(a));
    const Tensor& B = value(check(b));
    if (!A.same_shape(B))
        fail_shape("shape mismatch", nodes_.size(),
                   "add needs equal shapes, got " + A.shape_str() + " and " + B.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
    return push({Op::kAdd, a, b, 0.0, std::move(out)});
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& A = value(check(a));
    const Tensor& B = value(check(b));
    if (!A.same_shape(B))
        fail_shape("shape mismatch", nodes_.size(),
                   "sub needs equal shapes, got " + A.shape_str() + " and " + B.shape_str());
    Tensor out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
    return push({Op::kSub, a, b, 0.0, std::move(out)});
}

Tape::NodeId Tape::scale(NodeId a, double c) {
    Tensor out = value(check(a));
    for (double& v : out.data) v *= c;
    return push({Op::kScale, a, -1, c, std::move(out)});
}

Tape::NodeId Tape::tanh(NodeId a) {
    Tensor out = value(check(a));
    for (double& v : out.data) v = std::tanh(v);
    return push({Op::kTanh, a, -1, 0.0, std::move(out)});
}

Tape::NodeId Tape::huber(NodeId a) {
    Tensor out = value(check(a));
    for (double& v : out.data) v = gradcert::ad::huber(v);
    return push({Op::kHuber, a, -1, 0.0, std::move(out)});
}

Tape::NodeId Tape::sum(NodeId a) {
    const Tensor& A = value(check(a));
    double s = 0.0;
    for (double v : A.data) s += v;
    return push({Op::kSum, a, -1, 0.0, Tensor::scalar(s)});
}

Tape::NodeId Tape::mean(NodeId a) {
    const Tensor& A = value(check(a));
    if (A.numel() == 0) fail_shape("empty input", nodes_.size(), "mean of empty tensor");
    double s = 0.0;
    for (double v : A.data) s += v;
    return push({Op::kMean, a, -1, 0.0, Tensor::scalar(s / static_cast<double>(A.numel()))});
}

Tape::NodeId Tape::norm(NodeId a) {
    const Tensor& A = value(check(a));
    double s = 0.0;
    for (double v : A.data) s += v * v;
    return push({Op::kNorm, a, -1, 0.0, Tensor::scalar(std::sqrt(s))});
}

void Tape::set_output(NodeId id) {
    require_unset_output();
    output_ = check(id);
}

std::span<const double> Tape::slot(const Workspace& ws, NodeId id) const {
    check(id);
    return {ws.buf.data() + offset_[static_cast<std::size_t>(id)],
            nodes_[static_cast<std::size_t>(id)].value.numel()};
}

void Tape::vjp_flat(NodeId root, std::span<const double> seed, std::vector<double>& grad_out,
                    Workspace& ws) const {
    check(root);
    const std::size_t r = static_cast<std::size_t>(root);
    if (seed.size() != nodes_[r].value.numel())
        throw std::invalid_argument("tape: vjp seed has " + std::to_string(seed.size()) +
                                    " elements, root has " +
                                    std::to_string(nodes_[r].value.numel()));
    ws.buf.assign(total_elems_, 0.0);
    double* adj = ws.buf.data();
    for (std::size_t i = 0; i < seed.size(); ++i) adj[offset_[r] + i] = seed[i];

    for (NodeId id = root; id >= 0; --id) {
        const std::size_t k = static_cast<std::size_t>(id);
        const Node& n = nodes_[k];
        const double* a = adj + offset_[k];
        switch (n.op) {
            case Op::kLeaf:
            case Op::kConst:
                break;
            case Op::kMatVec: {
                const Tensor& W = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& X = nodes_[static_cast<std::size_t>(n.b)].value;
                double* aw = adj + offset_[static_cast<std::size_t>(n.a)];
                double* ax = adj + offset_[static_cast<std::size_t>(n.b)];
                const std::size_t m = W.rows(), c = W.cols();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) aw[i * c + j] += a[i] * X[j];
                for (std::size_t j = 0; j < c; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < m; ++i) s += W.at(i, j) * a[i];
                    ax[j] += s;
                }
                break;
            }
            case Op::kMatVecT: {
                const Tensor& W = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& X = nodes_[static_cast<std::size_t>(n.b)].value;
                double* aw = adj + offset_[static_cast<std::size_t>(n.a)];
                double* ax = adj + offset_[static_cast<std::size_t>(n.b)];
                const std::size_t m = W.rows(), c = W.cols();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) aw[i * c + j] += X[i] * a[j];
                for (std::size_t i = 0; i < m; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < c; ++j) s += W.at(i, j) * a[j];
                    ax[i] += s;
                }
                break;
            }
            case Op::kAdd: {
                double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                double* ab = adj + offset_[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    aa[i] += a[i];
                    ab[i] += a[i];
                }
                break;
            }
            case Op::kSub: {
                double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                double* ab = adj + offset_[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    aa[i] += a[i];
                    ab[i] -= a[i];
                }
                break;
            }
            case Op::kScale: {
                double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) aa[i] += n.c * a[i];
                break;
            }
            case Op::kTanh: {
                double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    double t = n.value[i];
                    aa[i] += (1.0 - t * t) * a[i];
                }
                break;
            }
            case Op::kHuber: {
                const Tensor& X = nodes_[static_cast<std::size_t>(n.a)].value;
                double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < n.value.numel(); ++i)
                    aa[i] += huber_deriv(X[i]) * a[i];
                break;
            }
            case Op::kSum: {
                double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                const std::size_t len = nodes_[static_cast<std::size_t>(n.a)].value.numel();
                for (std::size_t i = 0; i < len; ++i) aa[i] += a[0];
                break;
            }
            case Op::kMean: {
                double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                const std::size_t len = nodes_[static_cast<std::size_t>(n.a)].value.numel();
                const double w = a[0] / static_cast<double>(len);
                for (std::size_t i = 0; i < len; ++i) aa[i] += w;
                break;
            }
            case Op::kNorm: {
                // Subgradient 0 at the origin.
                const Tensor& X = nodes_[static_cast<std::size_t>(n.a)].value;
                const double nrm = n.value[0];
                if (nrm > 0.0) {
                    double* aa = adj + offset_[static_cast<std::size_t>(n.a)];
                    for (std::size_t i = 0; i < X.numel(); ++i) aa[i] += (X[i] / nrm) * a[0];
                }
                break;
            }
        }
    }

    grad_out.resize(leaf_numel_);
    std::size_t pos = 0;
    for (NodeId lid : leaves_) {
        const std::size_t len = nodes_[static_cast<std::size_t>(lid)].value.numel();
        const double* src = adj + offset_[static_cast<std::size_t>(lid)];
        for (std::size_t i = 0; i < len; ++i) grad_out[pos++] = src[i];
    }
}

void Tape::jvp_flat(NodeId target, std::span<const double> tangent, std::vector<double>& tan_out,
                    Workspace& ws) const {
    check(target);
    if (tangent.size() != leaf_numel_)
        throw std::invalid_argument("tape: jvp tangent has " + std::to_string(tangent.size()) +
                                    " elements, leaves have " + std::to_string(leaf_numel_));
    ws.buf.assign(total_elems_, 0.0);
    double* tan = ws.buf.data();
    std::size_t pos = 0;
    for (NodeId lid : leaves_) {
        const std::size_t len = nodes_[static_cast<std::size_t>(lid)].value.numel();
        double* dst = tan + offset_[static_cast<std::size_t>(lid)];
        for (std::size_t i = 0; i < len; ++i) dst[i] = tangent[pos++];
    }

    for (NodeId id = 0; id <= target; ++id) {
        const std::size_t k = static_cast<std::size_t>(id);
        const Node& n = nodes_[k];
        double* t = tan + offset_[k];
        switch (n.op) {
            case Op::kLeaf:
            case Op::kConst:
                break;
            case Op::kMatVec: {
                const Tensor& W = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& X = nodes_[static_cast<std::size_t>(n.b)].value;
                const double* tw = tan + offset_[static_cast<std::size_t>(n.a)];
                const double* tx = tan + offset_[static_cast<std::size_t>(n.b)];
                const std::size_t m = W.rows(), c = W.cols();
                for (std::size_t i = 0; i < m; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < c; ++j)
                        s += tw[i * c + j] * X[j] + W.at(i, j) * tx[j];
                    t[i] = s;
                }
                break;
            }
            case Op::kMatVecT: {
                const Tensor& W = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& X = nodes_[static_cast<std::size_t>(n.b)].value;
                const double* tw = tan + offset_[static_cast<std::size_t>(n.a)];
                const double* tx = tan + offset_[static_cast<std::size_t>(n.b)];
                const std::size_t m = W.rows(), c = W.cols();
                for (std::size_t j = 0; j < c; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        s += tw[i * c + j] * X[i] + W.at(i, j) * tx[i];
                    t[j] = s;
                }
                break;
            }
            case Op::kAdd: {
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                const double* tb = tan + offset_[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) t[i] = ta[i] + tb[i];
                break;
            }
            case Op::kSub: {
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                const double* tb = tan + offset_[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) t[i] = ta[i] - tb[i];
                break;
            }
            case Op::kScale: {
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) t[i] = n.c * ta[i];
                break;
            }
            case Op::kTanh: {
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    double v = n.value[i];
                    t[i] = (1.0 - v * v) * ta[i];
                }
                break;
            }
            case Op::kHuber: {
                const Tensor& X = nodes_[static_cast<std::size_t>(n.a)].value;
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                for (std::size_t i = 0; i < n.value.numel(); ++i)
                    t[i] = huber_deriv(X[i]) * ta[i];
                break;
            }
            case Op::kSum: {
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                const std::size_t len = nodes_[static_cast<std::size_t>(n.a)].value.numel();
                double s = 0.0;
                for (std::size_t i = 0; i < len; ++i) s += ta[i];
                t[0] = s;
                break;
            }
            case Op::kMean: {
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                const std::size_t len = nodes_[static_cast<std::size_t>(n.a)].value.numel();
                double s = 0.0;
                for (std::size_t i = 0; i < len; ++i) s += ta[i];
                t[0] = s / static_cast<double>(len);
                break;
            }
            case Op::kNorm: {
                const Tensor& X = nodes_[static_cast<std::size_t>(n.a)].value;
                const double* ta = tan + offset_[static_cast<std::size_t>(n.a)];
                const double nrm = n.value[0];
                if (nrm > 0.0) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < X.numel(); ++i) s += X[i] * ta[i];
                    t[0] = s / nrm;
                } else {
                    t[0] = 0.0;
                }
                break;
            }
        }
    }

    const std::size_t tlen = nodes_[static_cast<std::size_t>(target)].value.numel();
    tan_out.resize(tlen);
    const double* src = tan + offset_[static_cast<std::size_t>(target)];
    for (std::size_t i = 0; i < tlen; ++i) tan_out[i] = src[i];
}

std::vector<Tensor> Tape::vjp_at(NodeId root, const Tensor& seed) const {
    check(root);
    if (!seed.same_shape(nodes_[static_cast<std::size_t>(root)].value))
        throw std::invalid_argument("tape: vjp seed shape " + seed.shape_str() +
                                    " does not match root shape " +
                                    nodes_[static_cast<std::size_t>(root)].value.shape_str());
    Workspace ws;
    std::vector<double> flat;
    vjp_flat(root, seed.data, flat, ws);
    std::vector<Tensor> out;
    out.reserve(leaves_.size());
    std::size_t pos = 0;
    for (NodeId lid : leaves_) {
        const Tensor& lv = nodes_[static_cast<std::size_t>(lid)].value;
        Tensor g(lv.shape);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = flat[pos++];
        out.push_back(std::move(g));
    }
    return out;
}

Tensor Tape::jvp_at(NodeId target, const std::vector<Tensor>& tangents) const {
    if (tangents.size() != leaves_.size())
        throw std::invalid_argument("tape: expected " + std::to_string(leaves_.size()) +
                                    " tangents, got " + std::to_string(tangents.size()));
    std::vector<double> flat;
    flat.reserve(leaf_numel_);
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        const Tensor& lv = nodes_[static_cast<std::size_t>(leaves_[i])].value;
        if (!tangents[i].same_shape(lv))
            throw std::invalid_argument("tape: tangent " + std::to_string(i) + " shape " +
                                        tangents[i].shape_str() + " does not match leaf shape " +
                                        lv.shape_str());
        flat.insert(flat.end(), tangents[i].data.begin(), tangents[i].data.end());
    }
    Workspace ws;
    std::vector<double> out;
    jvp_flat(target, flat, out, ws);
    Tensor t(nodes_[static_cast<std::size_t>(target)].value.shape);
    t.data = std::move(out);
    return t;
}

Tensor Tape::replay(const std::vector<Tensor>& leaf_values) const {
    if (leaf_values.size() != leaves_.size())
        throw std::invalid_argument("tape: replay expected " + std::to_string(leaves_.size()) +
                                    " leaf values, got " + std::to_string(leaf_values.size()));
    std::vector<Tensor> vals(nodes_.size());
    std::size_t li = 0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const Node& n = nodes_[k];
        switch (n.op) {
            case Op::kLeaf: {
                const Tensor& v = leaf_values[li++];
                if (!v.same_shape(n.value))
                    throw std::invalid_argument("tape: replay leaf shape " + v.shape_str() +
                                                " does not match recorded " + n.value.shape_str());
                vals[k] = v;
                break;
            }
            case Op::kConst:
                vals[k] = n.value;
                break;
            case Op::kMatVec: {
                const Tensor& W = vals[static_cast<std::size_t>(n.a)];
                const Tensor& X = vals[static_cast<std::size_t>(n.b)];
                Tensor out({W.rows()});
                for (std::size_t i = 0; i < W.rows(); ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < W.cols(); ++j) s += W.at(i, j) * X[j];
                    out[i] = s;
                }
                vals[k] = std::move(out);
                break;
            }
            case Op::kMatVecT: {
                const Tensor& W = vals[static_cast<std::size_t>(n.a)];
                const Tensor& X = vals[static_cast<std::size_t>(n.b)];
                Tensor out({W.cols()});
                for (std::size_t j = 0; j < W.cols(); ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < W.rows(); ++i) s += W.at(i, j) * X[i];
                    out[j] = s;
                }
                vals[k] = std::move(out);
                break;
            }
            case Op::kAdd: {
                Tensor out = vals[static_cast<std::size_t>(n.a)];
                const Tensor& B = vals[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
                vals[k] = std::move(out);
                break;
            }
            case Op::kSub: {
                Tensor out = vals[static_cast<std::size_t>(n.a)];
                const Tensor& B = vals[static_cast<std::size_t>(n.b)];
                for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
                vals[k] = std::move(out);
                break;
            }
            case Op::kScale: {
                Tensor out = vals[static_cast<std::size_t>(n.a)];
                for (double& v : out.data) v *= n.c;
                vals[k] = std::move(out);
                break;
            }
            case Op::kTanh: {
                Tensor out = vals[static_cast<std::size_t>(n.a)];
                for (double& v : out.data) v = std::tanh(v);
                vals[k] = std::move(out);
                break;
            }
            case Op::kHuber: {
                Tensor out = vals[static_cast<std::size_t>(n.a)];
                for (double& v : out.data) v = gradcert::ad::huber(v);
                vals[k] = std::move(out);
                break;
            }
            case Op::kSum: {
                double s = 0.0;
                for (double v : vals[static_cast<std::size_t>(n.a)].data) s += v;
                vals[k] = Tensor::scalar(s);
                break;
            }
            case Op::kMean: {
                const Tensor& A = vals[static_cast<std::size_t>(n.a)];
                double s = 0.0;
                for (double v : A.data) s += v;
                vals[k] = Tensor::scalar(s / static_cast<double>(A.numel()));
                break;
            }
            case Op::kNorm: {
                double s = 0.0;
                for (double v : vals[static_cast<std::size_t>(n.a)].data) s += v * v;
                vals[k] = Tensor::scalar(std::sqrt(s));
                break;
            }
        }
    }
    return vals[static_cast<std::size_t>(output_ >= 0 ? output_ : static_cast<NodeId>(nodes_.size() - 1))];
}

std::uint64_t Tape::fingerprint() const {
    Fnv1a h;
    for (const Node& n : nodes_) {
        h.update_u64(static_cast<std::uint64_t>(n.op));
        h.update_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(n.a)));
        h.update_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(n.b)));
        h.update_f64(n.c);
        for (std::size_t d : n.value.shape) h.update_u64(d);
        h.update_f64(n.value.data);
    }
    h.update_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(output_)));
    return h.value();
}

std::pair<Tensor, Tape> record(const TapeBuilder& program, const std::vector<Tensor>& inputs) {
    Tape t;
    std::vector<Tape::NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& in : inputs) ids.push_back(t.leaf(in));
    Tape::NodeId out = program(t, ids);
    t.set_output(out);
    return {t.output_value(), std::move(t)};
}

std::vector<double> flat_vjp(const Tape& tape, const Tensor& seed) {
    Tape::Workspace ws;
    std::vector<double> grad;
    tape.vjp_flat(tape.output(), seed.data, grad, ws);
    return grad;
}

Tensor flat_jvp(const Tape& tape, std::span<const double> tangent) {
    Tape::Workspace ws;
    std::vector<double> out;
    tape.jvp_flat(tape.output(), tangent, out, ws);
    Tensor t(tape.output_value().shape);
    t.data = std::move(out);
    return t;
}

}  // namespace gradcert::ad
