#include "gradcert/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "gradcert/digest.hpp"
#include "gradcert/rng.hpp"
#include "gradcert/textio.hpp"

namespace gradcert::nn {

namespace {

void append(std::vector<double>& out, const Tensor& t) {
    out.insert(out.end(), t.data.begin(), t.data.end());
}

std::size_t take(Tensor& t, const std::vector<double>& flat, std::size_t pos) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = flat.at(pos + i);
    return pos + t.numel();
}

Tensor xavier(Rng& rng, std::size_t rows, std::size_t cols) {
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t({rows, cols});
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

std::string digest_of(const std::vector<double>& flat, std::initializer_list<std::size_t> dims) {
    Fnv1a h;
    for (std::size_t d : dims) h.update_u64(d);
    h.update_f64(flat);
    return h.hex();
}

}  // namespace

std::size_t GeneratorParams::param_count() const {
    std::size_t n = omega.numel();
    for (const Block& b : blocks) n += b.u.numel() + b.v.numel();
    for (const Tensor& t : phi) n += t.numel();
    return n;
}

std::vector<double> GeneratorParams::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    append(out, omega);
    for (const Block& b : blocks) {
        append(out, b.u);
        append(out, b.v);
    }
    for (const Tensor& t : phi) append(out, t);
    return out;
}

void GeneratorParams::unflatten(const std::vector<double>& flat) {
    if (flat.size() != param_count())
        throw std::invalid_argument("generator unflatten: expected " +
                                    std::to_string(param_count()) + " values, got " +
                                    std::to_string(flat.size()));
    std::size_t pos = take(omega, flat, 0);
    for (Block& b : blocks) {
        pos = take(b.u, flat, pos);
        pos = take(b.v, flat, pos);
    }
    for (Tensor& t : phi) pos = take(t, flat, pos);
}

std::string GeneratorParams::digest() const {
    return digest_of(flatten(), {dims.d_x, dims.d_y, dims.d_h, dims.blocks,
                                 static_cast<std::size_t>(dims.phi), dims.d_phi});
}

GeneratorParams zero_generator(const GeneratorDims& dims) {
    GeneratorParams p;
    p.dims = dims;
    p.omega = Tensor({dims.d_x, dims.d_y});
    p.blocks.resize(dims.blocks);
    for (auto& b : p.blocks) {
        b.u = Tensor({dims.d_h, dims.d_x});
        b.v = Tensor({dims.d_x, dims.d_h});
    }
    if (dims.phi == PhiKind::kMlp) {
        p.phi.push_back(Tensor({dims.d_phi, dims.d_h}));
        p.phi.push_back(Tensor({dims.d_h, dims.d_phi}));
    }
    return p;
}

std::size_t CriticParams::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.w.numel() + l.b.numel();
    return n;
}

std::vector<double> CriticParams::flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const Layer& l : layers) {
        append(out, l.w);
        append(out, l.b);
    }
    return out;
}

void CriticParams::unflatten(const std::vector<double>& flat) {
    if (flat.size() != param_count())
        throw std::invalid_argument("critic unflatten: expected " +
                                    std::to_string(param_count()) + " values, got " +
                                    std::to_string(flat.size()));
    std::size_t pos = 0;
    for (Layer& l : layers) {
        pos = take(l.w, flat, pos);
        pos = take(l.b, flat, pos);
    }
}

std::string CriticParams::digest() const {
    Fnv1a h;
    h.update_u64(dims.d_in);
    for (std::size_t w : dims.hidden) h.update_u64(w);
    h.update_f64(flatten());
    return h.hex();
}

CriticParams zero_critic(const CriticDims& dims) {
    CriticParams p;
    p.dims = dims;
    std::size_t in = dims.d_in;
    for (std::size_t w : dims.hidden) {
        p.layers.push_back({Tensor({w, in}), Tensor({w})});
        in = w;
    }
    p.layers.push_back({Tensor({1, in}), Tensor({1})});
    return p;
}

CriticParams constant_critic(const CriticDims& dims, double c) {
    CriticParams p = zero_critic(dims);
    p.layers.back().b[0] = c;
    return p;
}

GeneratorGraph emit_generator(ad::Tape& tape, const GeneratorParams& theta, const Tensor& x,
                              bool wrt_params, bool x_as_leaf) {
    if (x.numel() != theta.dims.d_x)
        throw std::invalid_argument("generator input has " + std::to_string(x.numel()) +
                                    " elements, expected " + std::to_string(theta.dims.d_x));
    auto param = [&](const Tensor& t) {
        return wrt_params ? tape.leaf(t) : tape.constant(t);
    };
    // Installation order matches the flat layout so leaf gradients line up
    // with flatten()/unflatten().
    ad::Tape::NodeId omega = param(theta.omega);
    std::vector<std::pair<ad::Tape::NodeId, ad::Tape::NodeId>> blocks;
    blocks.reserve(theta.blocks.size());
    for (const auto& b : theta.blocks) {
        ad::Tape::NodeId u = param(b.u);
        ad::Tape::NodeId v = param(b.v);  // two statements: call argument order is unsequenced
        blocks.emplace_back(u, v);
    }
    std::vector<ad::Tape::NodeId> phi;
    for (const Tensor& t : theta.phi) phi.push_back(param(t));

    GeneratorGraph g;
    g.x = x_as_leaf ? tape.leaf(x) : tape.constant(x);
    ad::Tape::NodeId h = g.x;
    for (const auto& [u, v] : blocks) {
        ad::Tape::NodeId z = tape.matvec(u, h);
        ad::Tape::NodeId act;
        if (theta.dims.phi == PhiKind::kTanh) {
            act = tape.tanh(z);
        } else {
            act = tape.matvec(phi.at(1), tape.tanh(tape.matvec(phi.at(0), z)));
        }
        h = tape.add(h, tape.matvec(v, act));
    }
    g.out = tape.matvec_t(omega, h);
    return g;
}

std::vector<ad::Tape::NodeId> install_critic_params(ad::Tape& tape, const CriticParams& psi,
                                                    bool as_leaves) {
    std::vector<ad::Tape::NodeId> ids;
    ids.reserve(psi.layers.size() * 2);
    for (const auto& l : psi.layers) {
        ids.push_back(as_leaves ? tape.leaf(l.w) : tape.constant(l.w));
        ids.push_back(as_leaves ? tape.leaf(l.b) : tape.constant(l.b));
    }
    return ids;
}

ad::Tape::NodeId emit_critic_from(ad::Tape& tape, const CriticParams& psi,
                                  const std::vector<ad::Tape::NodeId>& params,
                                  ad::Tape::NodeId input) {
    if (params.size() != psi.layers.size() * 2)
        throw std::invalid_argument("critic emission: wrong number of parameter nodes");
    ad::Tape::NodeId h = input;
    for (std::size_t i = 0; i < psi.layers.size(); ++i) {
        h = tape.add(tape.matvec(params[2 * i], h), params[2 * i + 1]);
        if (i + 1 < psi.layers.size()) h = tape.tanh(h);
    }
    return h;
}

CriticGraph emit_critic(ad::Tape& tape, const CriticParams& psi, ad::Tape::NodeId input,
                        bool wrt_params) {
    CriticGraph g;
    g.out = emit_critic_from(tape, psi, install_critic_params(tape, psi, wrt_params), input);
    return g;
}

Tensor generator_forward(const GeneratorParams& theta, const Tensor& x) {
    ad::Tape tape;
    GeneratorGraph g = emit_generator(tape, theta, x, /*wrt_params=*/false);
    return tape.value(g.out);
}

double critic_forward(const CriticParams& psi, const Tensor& y_hat) {
    if (y_hat.numel() != psi.dims.d_in)
        throw std::invalid_argument("critic input has " + std::to_string(y_hat.numel()) +
                                    " elements, expected " + std::to_string(psi.dims.d_in));
    ad::Tape tape;
    ad::Tape::NodeId in = tape.constant(y_hat);
    CriticGraph g = emit_critic(tape, psi, in, /*wrt_params=*/false);
    return tape.value(g.out).scalar_value();
}

CriticParams clip_critic(const CriticParams& psi, double c) {
    if (!(c >= 0.0)) throw std::invalid_argument("clip bound must be non-negative");
    CriticParams out = psi;
    for (auto& l : out.layers)
        for (double& v : l.w.data) v = std::min(c, std::max(-c, v));
    return out;
}

GeneratorParams init_generator(std::uint64_t seed, const GeneratorDims& dims) {
    Rng rng(seed);
    GeneratorParams p = zero_generator(dims);
    p.omega = xavier(rng, dims.d_x, dims.d_y);
    for (auto& b : p.blocks) {
        b.u = xavier(rng, dims.d_h, dims.d_x);
        b.v = xavier(rng, dims.d_x, dims.d_h);
    }
    if (dims.phi == PhiKind::kMlp) {
        p.phi[0] = xavier(rng, dims.d_phi, dims.d_h);
        p.phi[1] = xavier(rng, dims.d_h, dims.d_phi);
    }
    return p;
}

CriticParams init_critic(std::uint64_t seed, const CriticDims& dims) {
    Rng rng(seed);
    CriticParams p = zero_critic(dims);
    for (auto& l : p.layers) l.w = xavier(rng, l.w.rows(), l.w.cols());
    return p;
}

namespace {

void write_tensor(std::ostream& os, const char* name, const Tensor& t) {
    os << "t " << name << " " << t.rank();
    for (std::size_t d : t.shape) os << " " << d;
    for (double v : t.data) os << " " << fmt17(v);
    os << "\n";
}

Tensor read_tensor(std::istream& is, const std::string& expect_name) {
    std::string tag, name;
    std::size_t rank;
    if (!(is >> tag >> name >> rank) || tag != "t" || name != expect_name)
        throw std::runtime_error("params: expected tensor '" + expect_name + "'");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape)
        if (!(is >> d)) throw std::runtime_error("params: truncated shape");
    Tensor t(shape);
    for (double& v : t.data)
        if (!(is >> v)) throw std::runtime_error("params: truncated values");
    return t;
}

Tensor read_tensor_shaped(std::istream& is, const std::string& name, const Tensor& like) {
    Tensor t = read_tensor(is, name);
    if (!t.same_shape(like))
        throw std::runtime_error("params: tensor '" + name + "' has shape " + t.shape_str() +
                                 ", expected " + like.shape_str());
    return t;
}

}  // namespace

void save_generator(std::ostream& os, const GeneratorParams& theta) {
    os << "generator " << theta.dims.d_x << " " << theta.dims.d_y << " " << theta.dims.d_h << " "
       << theta.dims.blocks << " " << (theta.dims.phi == PhiKind::kTanh ? "tanh" : "mlp") << " "
       << theta.dims.d_phi << "\n";
    write_tensor(os, "omega", theta.omega);
    for (std::size_t l = 0; l < theta.blocks.size(); ++l) {
        write_tensor(os, ("u" + std::to_string(l + 1)).c_str(), theta.blocks[l].u);
        write_tensor(os, ("v" + std::to_string(l + 1)).c_str(), theta.blocks[l].v);
    }
    for (std::size_t i = 0; i < theta.phi.size(); ++i)
        write_tensor(os, ("phi" + std::to_string(i + 1)).c_str(), theta.phi[i]);
}

void save_critic(std::ostream& os, const CriticParams& psi) {
    os << "critic " << psi.dims.d_in;
    os << " " << psi.dims.hidden.size();
    for (std::size_t w : psi.dims.hidden) os << " " << w;
    os << "\n";
    for (std::size_t l = 0; l < psi.layers.size(); ++l) {
        write_tensor(os, ("w" + std::to_string(l + 1)).c_str(), psi.layers[l].w);
        write_tensor(os, ("b" + std::to_string(l + 1)).c_str(), psi.layers[l].b);
    }
}

void save_params(std::ostream& os, const GeneratorParams& theta, const CriticParams& psi) {
    os << "gradcert-params v1\n";
    save_generator(os, theta);
    save_critic(os, psi);
}

GeneratorParams load_generator(std::istream& is) {
    std::string tag, phi;
    GeneratorDims gd;
    if (!(is >> tag >> gd.d_x >> gd.d_y >> gd.d_h >> gd.blocks >> phi >> gd.d_phi) ||
        tag != "generator")
        throw std::runtime_error("params: bad generator header");
    if (phi == "tanh")
        gd.phi = PhiKind::kTanh;
    else if (phi == "mlp")
        gd.phi = PhiKind::kMlp;
    else
        throw std::runtime_error("params: unknown phi kind '" + phi + "'");
    GeneratorParams theta = zero_generator(gd);
    theta.omega = read_tensor_shaped(is, "omega", theta.omega);
    for (std::size_t l = 0; l < gd.blocks; ++l) {
        theta.blocks[l].u = read_tensor_shaped(is, "u" + std::to_string(l + 1), theta.blocks[l].u);
        theta.blocks[l].v = read_tensor_shaped(is, "v" + std::to_string(l + 1), theta.blocks[l].v);
    }
    for (std::size_t i = 0; i < theta.phi.size(); ++i)
        theta.phi[i] = read_tensor_shaped(is, "phi" + std::to_string(i + 1), theta.phi[i]);
    return theta;
}

CriticParams load_critic(std::istream& is) {
    std::string tag;
    CriticDims cd;
    std::size_t nh;
    if (!(is >> tag >> cd.d_in >> nh) || tag != "critic")
        throw std::runtime_error("params: bad critic header");
    cd.hidden.resize(nh);
    for (auto& w : cd.hidden)
        if (!(is >> w)) throw std::runtime_error("params: truncated critic widths");
    CriticParams psi = zero_critic(cd);
    for (std::size_t l = 0; l < psi.layers.size(); ++l) {
        psi.layers[l].w = read_tensor_shaped(is, "w" + std::to_string(l + 1), psi.layers[l].w);
        psi.layers[l].b = read_tensor_shaped(is, "b" + std::to_string(l + 1), psi.layers[l].b);
    }
    return psi;
}

std::pair<GeneratorParams, CriticParams> load_params(std::istream& is) {
    std::string magic, version;
    if (!(is >> magic >> version) || magic != "gradcert-params" || version != "v1")
        throw std::runtime_error("params: bad header");
    GeneratorParams theta = load_generator(is);
    CriticParams psi = load_critic(is);
    return {std::move(theta), std::move(psi)};
}

}  // namespace gradcert::nn
