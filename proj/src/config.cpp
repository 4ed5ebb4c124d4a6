#include "gradcert/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gradcert/digest.hpp"
#include "gradcert/textio.hpp"

namespace gradcert {
namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
    throw std::runtime_error("config: line " + std::to_string(line_no) + ": " + what);
}

std::uint64_t parse_u64(const std::string& v, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') fail(line_no, "expected non-negative integer, got '" + v + "'");
        std::uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) fail(line_no, "trailing characters in integer '" + v + "'");
        return r;
    } catch (const std::invalid_argument&) {
        fail(line_no, "expected integer, got '" + v + "'");
    } catch (const std::out_of_range&) {
        fail(line_no, "integer out of range: '" + v + "'");
    }
}

int parse_int(const std::string& v, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) fail(line_no, "trailing characters in integer '" + v + "'");
        return r;
    } catch (const std::invalid_argument&) {
        fail(line_no, "expected integer, got '" + v + "'");
    } catch (const std::out_of_range&) {
        fail(line_no, "integer out of range: '" + v + "'");
    }
}

double parse_f64(const std::string& v, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) fail(line_no, "trailing characters in number '" + v + "'");
        return r;
    } catch (const std::invalid_argument&) {
        fail(line_no, "expected number, got '" + v + "'");
    } catch (const std::out_of_range&) {
        fail(line_no, "number out of range: '" + v + "'");
    }
}

std::vector<std::string> split_ws(const std::string& v) {
    std::vector<std::string> out;
    std::istringstream in(v);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

void apply_key(RunConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value, std::size_t line_no) {
    if (section == "task") {
        if (key == "seed") cfg.task.seed = parse_u64(value, line_no);
        else if (key == "n_samples") cfg.task.n_samples = parse_u64(value, line_no);
        else if (key == "d_x") cfg.task.d_x = parse_u64(value, line_no);
        else if (key == "d_y") cfg.task.d_y = parse_u64(value, line_no);
        else if (key == "d_h") cfg.task.d_h = parse_u64(value, line_no);
        else if (key == "blocks") cfg.task.blocks = parse_u64(value, line_no);
        else if (key == "phi") {
            if (value != "tanh" && value != "mlp") fail(line_no, "phi must be tanh or mlp");
            cfg.task.phi = value;
        } else if (key == "d_phi") cfg.task.d_phi = parse_u64(value, line_no);
        else fail(line_no, "unknown key task." + key);
    } else if (section == "training") {
        if (key == "eta") cfg.training.eta = parse_f64(value, line_no);
        else if (key == "iters") cfg.training.iters = parse_int(value, line_no);
        else if (key == "risk_threshold") cfg.training.risk_threshold = parse_f64(value, line_no);
        else if (key == "init") {
            if (value != "xavier" && value != "teacher") fail(line_no, "init must be xavier or teacher");
            cfg.training.init = value;
        } else fail(line_no, "unknown key training." + key);
    } else if (section == "critic") {
        if (key == "hidden") {
            cfg.critic.hidden.clear();
            for (const auto& t : split_ws(value)) cfg.critic.hidden.push_back(parse_u64(t, line_no));
        } else if (key == "n_critic") cfg.critic.n_critic = parse_int(value, line_no);
        else if (key == "clip") cfg.critic.clip = parse_f64(value, line_no);
        else if (key == "eta") cfg.critic.eta = parse_f64(value, line_no);
        else if (key == "mode") {
            experiments::CriticConfig::mode_from_name(value);  // validates
            cfg.critic.mode = value;
        } else if (key == "warmup") cfg.critic.warmup = parse_int(value, line_no);
        else fail(line_no, "unknown key critic." + key);
    } else if (section == "probe") {
        if (key == "epsilons") {
            cfg.probe.epsilons.clear();
            for (const auto& t : split_ws(value)) cfg.probe.epsilons.push_back(parse_f64(t, line_no));
            if (cfg.probe.epsilons.empty()) fail(line_no, "probe.epsilons must not be empty");
        } else fail(line_no, "unknown key probe." + key);
    } else if (section == "output") {
        if (key == "dir") cfg.output.dir = value;
        else if (key == "formats") {
            cfg.output.formats.clear();
            for (const auto& t : split_ws(value)) {
                if (t != "csv" && t != "json" && t != "svg") fail(line_no, "unknown format '" + t + "'");
                cfg.output.formats.push_back(t);
            }
        } else fail(line_no, "unknown key output." + key);
    } else {
        fail(line_no, "unknown section [" + section + "]");
    }
}

void validate(const RunConfig& cfg) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw std::runtime_error("config: " + what);
    };
    require(cfg.task.n_samples > 0, "task.n_samples must be positive");
    require(cfg.task.d_x > 0 && cfg.task.d_y > 0 && cfg.task.d_h > 0, "task dimensions must be positive");
    require(cfg.task.phi != "mlp" || cfg.task.d_phi > 0, "task.d_phi must be positive for mlp");
    require(cfg.training.eta > 0, "training.eta must be positive");
    require(cfg.training.iters >= 0, "training.iters must be non-negative");
    require(cfg.training.risk_threshold > 0, "training.risk_threshold must be positive");
    require(cfg.critic.n_critic >= 0, "critic.n_critic must be non-negative");
    require(cfg.critic.clip > 0, "critic.clip must be positive");
    require(cfg.critic.eta > 0, "critic.eta must be positive");
    require(cfg.critic.warmup >= 0, "critic.warmup must be non-negative");
    for (double e : cfg.probe.epsilons)
        require(e > 0, "probe.epsilons must be positive");
}

template <typename T>
std::string join_tokens(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ' ';
        if constexpr (std::is_same_v<T, double>) out += fmt17(xs[i]);
        else if constexpr (std::is_same_v<T, std::string>) out += xs[i];
        else out += std::to_string(xs[i]);
    }
    return out;
}

}  // namespace

nn::GeneratorDims RunConfig::generator_dims() const {
    nn::GeneratorDims d;
    d.d_x = task.d_x;
    d.d_y = task.d_y;
    d.d_h = task.d_h;
    d.blocks = task.blocks;
    d.phi = task.phi == "mlp" ? nn::PhiKind::kMlp : nn::PhiKind::kTanh;
    d.d_phi = task.d_phi;
    return d;
}

nn::CriticDims RunConfig::critic_dims() const {
    return nn::CriticDims{task.d_y, critic.hidden};
}

experiments::TrainingConfig RunConfig::training_config() const {
    experiments::TrainingConfig t;
    t.eta = training.eta;
    t.iters = training.iters;
    t.risk_threshold = training.risk_threshold;
    return t;
}

experiments::CriticConfig RunConfig::critic_config() const {
    experiments::CriticConfig c;
    c.hidden = critic.hidden;
    c.n_critic = critic.n_critic;
    c.clip = critic.clip;
    c.eta = critic.eta;
    c.mode = experiments::CriticConfig::mode_from_name(critic.mode);
    c.warmup = critic.warmup;
    return c;
}

namespace {

// The [output] section is where artifacts land, not what the run computes,
// so the identity hash covers everything before it.
std::string serialize_semantic(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[task]\n";
    out << "seed = " << cfg.task.seed << "\n";
    out << "n_samples = " << cfg.task.n_samples << "\n";
    out << "d_x = " << cfg.task.d_x << "\n";
    out << "d_y = " << cfg.task.d_y << "\n";
    out << "d_h = " << cfg.task.d_h << "\n";
    out << "blocks = " << cfg.task.blocks << "\n";
    out << "phi = " << cfg.task.phi << "\n";
    out << "d_phi = " << cfg.task.d_phi << "\n";
    out << "\n[training]\n";
    out << "eta = " << fmt17(cfg.training.eta) << "\n";
    out << "iters = " << cfg.training.iters << "\n";
    out << "risk_threshold = " << fmt17(cfg.training.risk_threshold) << "\n";
    out << "init = " << cfg.training.init << "\n";
    out << "\n[critic]\n";
    out << "hidden = " << join_tokens(cfg.critic.hidden) << "\n";
    out << "n_critic = " << cfg.critic.n_critic << "\n";
    out << "clip = " << fmt17(cfg.critic.clip) << "\n";
    out << "eta = " << fmt17(cfg.critic.eta) << "\n";
    out << "mode = " << cfg.critic.mode << "\n";
    out << "warmup = " << cfg.critic.warmup << "\n";
    out << "\n[probe]\n";
    out << "epsilons = " << join_tokens(cfg.probe.epsilons) << "\n";
    return out.str();
}

}  // namespace

std::string RunConfig::serialize() const {
    std::ostringstream out;
    out << serialize_semantic(*this);
    out << "\n[output]\n";
    out << "dir = " << output.dir << "\n";
    out << "formats = " << join_tokens(output.formats) << "\n";
    return out.str();
}

std::string RunConfig::hash() const { return fnv1a64_hex(serialize_semantic(*this)); }

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "task" && section != "training" && section != "critic" &&
                section != "probe" && section != "output")
                fail(line_no, "unknown section [" + section + "]");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        if (section.empty()) fail(line_no, "key outside any [section]");
        apply_key(cfg, section, key, value, line_no);
    }
    validate(cfg);
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

void RunConfig::apply_override(const std::string& dotted_key, const std::string& value) {
    auto dot = dotted_key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size())
        throw std::runtime_error("config: override key must be section.key, got '" + dotted_key + "'");
    apply_key(*this, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value, 0);
    validate(*this);
}

}  // namespace gradcert
