#include "gradcert/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gradcert/digest.hpp"
#include "gradcert/textio.hpp"

namespace gradcert::report {
namespace {

const char* kDeltaNote =
    "operational delta: RMS output-gradient of the critic in hand, not a distance to an "
    "optimal critic";
const char* kRiskNote =
    "per-arm risk is the minimum supervised risk over the recorded trajectory; the infimum "
    "over parameters is approximated by that minimum aggregated across seeds";

std::string csv_row(const std::string& arm, const experiments::TrajectoryRow& r) {
    std::ostringstream out;
    out << arm << ',' << r.n << ',' << fmt17(r.risk) << ',' << fmt17(r.grad_norm) << ','
        << fmt17(r.epsilon_hat) << ',' << fmt17(r.step_size) << ',' << fmt17(r.lambda_hat) << ','
        << fmt17(r.delta_hat) << ',' << fmt17(r.M_hat) << ',' << fmt17(r.wallclock_ms);
    return out.str();
}

void require_schema(const json& j) {
    if (!j.is_object() || !j.contains("schema_version"))
        throw std::runtime_error("artifact has no schema_version");
    if (!j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kSchemaVersion)
        throw std::runtime_error("artifact schema_version mismatch: refusing to aggregate");
}

void strip_timing(json& j) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end();) {
            if (it.key() == "timing" || it.key().find("wallclock") != std::string::npos) {
                it = j.erase(it);
            } else {
                strip_timing(it.value());
                ++it;
            }
        }
    } else if (j.is_array()) {
        for (auto& v : j) strip_timing(v);
    }
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string csv_without_wallclock(const std::string& content) {
    std::istringstream in(content);
    std::ostringstream out;
    std::string line;
    std::vector<std::size_t> keep;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!header_seen && !line.empty() && line[0] == '#') {
            out << line << '\n';
            continue;
        }
        std::vector<std::string> cells = split_csv(line);
        if (!header_seen) {
            header_seen = true;
            for (std::size_t i = 0; i < cells.size(); ++i)
                if (cells[i].find("wallclock") == std::string::npos) keep.push_back(i);
        }
        bool first = true;
        for (std::size_t i : keep) {
            if (i >= cells.size()) continue;
            if (!first) out << ',';
            out << cells[i];
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string short_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace

std::string trajectory_csv(const experiments::Trajectory& traj, const std::string& config_hash) {
    std::ostringstream out;
    out << "# gradcert trajectory schema_version=" << kSchemaVersion
        << " config_hash=" << config_hash << "\n";
    out << kTrajectoryColumns << "\n";
    for (const experiments::TrajectoryRow& r : traj.rows) out << csv_row(traj.arm, r) << "\n";
    return out.str();
}

json to_json(const estimators::Check& c) {
    return json{{"lhs", c.lhs}, {"rhs", c.rhs}, {"pass", c.pass}};
}

json to_json(const estimators::BoundCertificate& c) {
    json checks = json::object();
    for (const auto& [id, ch] : c.checks) checks[id] = to_json(ch);
    return json{
        {"lambda_hat", c.lambda_hat},
        {"delta_hat", c.delta_hat},
        {"M_hat", c.M_hat},
        {"loss_lipschitz_K", c.loss_lipschitz_K},
        {"grad_norm_sup", c.grad_norm_sup},
        {"grad_norm_adv", c.grad_norm_adv},
        {"grad_norm_aug", c.grad_norm_aug},
        {"epsilon_measured", c.epsilon_measured},
        {"checks", checks},
        {"all_pass", c.all_pass()},
        {"delta_note", kDeltaNote},
    };
}

json to_json(const experiments::StepBound& b) {
    return json{{"n", b.n},
                {"displacement", b.displacement},
                {"step_norm", b.step_norm},
                {"bound", b.bound},
                {"within", b.within}};
}

json to_json(const experiments::Trajectory& traj) {
    json sbs = json::array();
    for (const auto& b : traj.step_bounds) sbs.push_back(to_json(b));
    return json{
        {"arm", traj.arm},
        {"rows", traj.rows.size()},
        {"diverged", traj.diverged},
        {"divergence_iteration", traj.divergence_iteration},
        {"critic_steps", traj.critic_steps},
        {"step_bounds", sbs},
        {"timing", json{{"wallclock_total_ms", traj.wallclock_total_ms}}},
    };
}

json to_json(const experiments::RiskComparison& cmp) {
    return json{
        {"seed", cmp.seed},
        {"risk_sup", cmp.risk_sup},
        {"risk_aug", cmp.risk_aug},
        {"risk_gap", cmp.risk_gap},
        {"risk_note", kRiskNote},
        {"theta0_digest_sup", cmp.theta0_digest_sup},
        {"theta0_digest_aug", cmp.theta0_digest_aug},
        {"valid", cmp.valid},
        {"sup_diverged", cmp.sup_diverged},
        {"aug_diverged", cmp.aug_diverged},
        {"final_certificate_sup", to_json(cmp.final_sup)},
        {"final_certificate_aug", to_json(cmp.final_aug)},
    };
}

json to_json(const experiments::ConvergenceReport& rep) {
    return json{
        {"seed", rep.seed},
        {"n_star_sup", rep.n_star_sup},
        {"n_star_aug", rep.n_star_aug},
        {"sup_reached", rep.sup_reached},
        {"aug_reached", rep.aug_reached},
        {"predicted_ratio", rep.predicted_ratio},
        {"predicted_defined", rep.predicted_defined},
        {"measured_ratio", rep.measured_ratio},
        {"measured_defined", rep.measured_defined},
    };
}

json to_json(const experiments::ProbeLevel& lvl) {
    json j{{"epsilon", lvl.epsilon}, {"reached", lvl.reached}, {"n", lvl.n}};
    if (lvl.reached) {
        j["epsilon_hat"] = lvl.epsilon_hat;
        j["grad_sup"] = lvl.grad_sup;
        j["grad_aug"] = lvl.grad_aug;
        j["certificate"] = to_json(lvl.cert);
    }
    return j;
}

json to_json(const experiments::ProbeReport& rep) {
    json levels = json::array();
    for (const auto& lvl : rep.levels) levels.push_back(to_json(lvl));
    return json{
        {"levels", levels},
        {"deepest", to_json(rep.deepest)},
        {"diverged", rep.diverged},
        {"sup_bound_every_row", rep.sup_bound_every_row},
        {"critic_digest", rep.critic_digest},
    };
}

json artifact(const std::string& kind, const std::string& config_hash) {
    return json{{"schema_version", kSchemaVersion},
                {"kind", kind},
                {"config_hash", config_hash},
                {"timing", json::object()}};
}

void write_text(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void save_task(std::ostream& os, const experiments::TeacherTask& task) {
    os << "gradcert-task v1\n";
    os << "seed " << task.seed << "\n";
    os << "samples " << task.data.size() << "\n";
    nn::save_generator(os, task.theta_star);
    os << "data\n";
    for (std::size_t i = 0; i < task.data.size(); ++i) {
        os << "d";
        for (double v : task.data.xs[i].data) os << " " << fmt17(v);
        for (double v : task.data.ys[i].data) os << " " << fmt17(v);
        os << "\n";
    }
    os << "end\n";
}

experiments::TeacherTask load_task(std::istream& is) {
    std::string magic, version;
    if (!(is >> magic >> version) || magic != "gradcert-task" || version != "v1")
        throw std::runtime_error("task: bad header");
    experiments::TeacherTask task;
    std::string tag;
    std::size_t samples = 0;
    if (!(is >> tag >> task.seed) || tag != "seed") throw std::runtime_error("task: bad seed line");
    if (!(is >> tag >> samples) || tag != "samples")
        throw std::runtime_error("task: bad samples line");
    task.theta_star = nn::load_generator(is);
    task.dims = task.theta_star.dims;
    if (!(is >> tag) || tag != "data") throw std::runtime_error("task: missing data section");
    for (std::size_t i = 0; i < samples; ++i) {
        if (!(is >> tag) || tag != "d") throw std::runtime_error("task: missing data row");
        Tensor x({task.dims.d_x});
        Tensor y({task.dims.d_y});
        for (double& v : x.data)
            if (!(is >> v)) throw std::runtime_error("task: truncated data row");
        for (double& v : y.data)
            if (!(is >> v)) throw std::runtime_error("task: truncated data row");
        if (!x.all_finite() || !y.all_finite())
            throw std::runtime_error("task: non-finite data value");
        task.data.xs.push_back(std::move(x));
        task.data.ys.push_back(std::move(y));
    }
    if (!(is >> tag) || tag != "end") throw std::runtime_error("task: missing end marker");
    task.data.validate();
    return task;
}

void save_task_file(const std::string& path, const experiments::TeacherTask& task) {
    std::ostringstream os;
    save_task(os, task);
    write_text(path, os.str());
}

experiments::TeacherTask load_task_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open task file " + path);
    return load_task(in);
}

std::string canonical_checksum_text(const std::string& filename, const std::string& content) {
    auto dot = filename.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : filename.substr(dot);
    if (ext == ".json") {
        json j = json::parse(content);
        strip_timing(j);
        return fnv1a64_hex(j.dump());
    }
    if (ext == ".csv") return fnv1a64_hex(csv_without_wallclock(content));
    return fnv1a64_hex(content);
}

std::string canonical_checksum(const std::string& path) {
    return canonical_checksum_text(std::filesystem::path(path).filename().string(),
                                   read_text(path));
}

std::string curve_dat(const Series& s) {
    std::ostringstream out;
    out << "# " << s.label << "\n";
    for (const auto& [x, y] : s.points) out << fmt17(x) << " " << fmt17(y) << "\n";
    return out.str();
}

std::string curve_svg(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series,
                      bool log_x, bool log_y) {
    constexpr double W = 640, H = 420, ML = 70, MR = 20, MT = 40, MB = 50;
    const char* palette[] = {"#1f6f8b", "#c0392b", "#27ae60", "#8e44ad"};

    struct Pt {
        double x, y;
    };
    std::vector<std::vector<Pt>> mapped(series.size());
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool any = false;
    for (std::size_t si = 0; si < series.size(); ++si) {
        for (const auto& [px, py] : series[si].points) {
            if (!std::isfinite(px) || !std::isfinite(py)) continue;
            if (log_x && px <= 0) continue;
            if (log_y && py <= 0) continue;
            const double x = log_x ? std::log10(px) : px;
            const double y = log_y ? std::log10(py) : py;
            mapped[si].push_back({x, y});
            if (!any) {
                xmin = xmax = x;
                ymin = ymax = y;
                any = true;
            } else {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    }
    if (!any) {
        xmin = ymin = 0;
        xmax = ymax = 1;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    auto sx = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto sy = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"15\">" << xml_escape(title) << "</text>\n";

    out << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
        << H - MB << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double tx = xmin + (xmax - xmin) * i / 4.0;
        const double ty = ymin + (ymax - ymin) * i / 4.0;
        const double lx = log_x ? std::pow(10.0, tx) : tx;
        const double ly = log_y ? std::pow(10.0, ty) : ty;
        out << "<line x1=\"" << sx(tx) << "\" y1=\"" << H - MB << "\" x2=\"" << sx(tx)
            << "\" y2=\"" << H - MB + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << sx(tx) << "\" y=\"" << H - MB + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << short_num(lx) << "</text>\n";
        out << "<line x1=\"" << ML - 5 << "\" y1=\"" << sy(ty) << "\" x2=\"" << ML << "\" y2=\""
            << sy(ty) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << ML - 8 << "\" y=\"" << sy(ty) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << short_num(ly) << "</text>\n";
    }
    out << "<text x=\"" << (ML + W - MR) / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << xml_escape(x_label) << (log_x ? " (log)" : "") << "</text>\n";
    out << "<text x=\"16\" y=\"" << (MT + H - MB) / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
        << " transform=\"rotate(-90 16 " << (MT + H - MB) / 2 << ")\">" << xml_escape(y_label)
        << (log_y ? " (log)" : "") << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = palette[si % 4];
        if (mapped[si].size() > 1) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
                << " points=\"";
            for (const Pt& p : mapped[si]) out << sx(p.x) << "," << sy(p.y) << " ";
            out << "\"/>\n";
        }
        for (const Pt& p : mapped[si])
            out << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"2.5\" fill=\""
                << color << "\"/>\n";
        out << "<text x=\"" << W - MR - 6 << "\" y=\"" << MT + 14 + 16 * si
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
            << color << "\">" << xml_escape(series[si].label) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

json aggregate(const std::vector<json>& comparisons, const std::vector<json>& convergences,
               const std::vector<json>& probes) {
    for (const json& j : comparisons) require_schema(j);
    for (const json& j : convergences) require_schema(j);
    for (const json& j : probes) require_schema(j);

    std::vector<std::string> hashes;
    auto note_hash = [&](const json& j) {
        if (j.contains("config_hash")) {
            std::string h = j["config_hash"].get<std::string>();
            if (std::find(hashes.begin(), hashes.end(), h) == hashes.end()) hashes.push_back(h);
        }
    };

    int valid = 0, risk_le = 0;
    json risk_rows = json::array();
    for (const json& doc : comparisons) {
        note_hash(doc);
        const json& c = doc.at("comparison");
        json row{{"seed", c.at("seed")},
                 {"risk_sup", c.at("risk_sup")},
                 {"risk_aug", c.at("risk_aug")},
                 {"valid", c.at("valid")}};
        risk_rows.push_back(row);
        if (c.at("valid").get<bool>()) {
            ++valid;
            if (c.at("risk_aug").get<double>() <= c.at("risk_sup").get<double>()) ++risk_le;
        }
    }

    int conv_pairs = 0, n_star_le = 0;
    json ratio_rows = json::array();
    for (const json& doc : convergences) {
        note_hash(doc);
        const json& c = doc.at("convergence");
        json row{{"seed", c.at("seed")},
                 {"n_star_sup", c.at("n_star_sup")},
                 {"n_star_aug", c.at("n_star_aug")},
                 {"predicted_ratio", c.at("predicted_ratio")},
                 {"predicted_defined", c.at("predicted_defined")},
                 {"measured_ratio", c.at("measured_ratio")},
                 {"measured_defined", c.at("measured_defined")}};
        ratio_rows.push_back(row);
        if (c.at("sup_reached").get<bool>() && c.at("aug_reached").get<bool>()) {
            ++conv_pairs;
            if (c.at("n_star_aug").get<int>() <= c.at("n_star_sup").get<int>()) ++n_star_le;
        }
    }

    // Mean gradient norms per probe level across runs, keyed by target
    // epsilon; the curves read (epsilon, mean grad norm).
    std::vector<double> eps_levels;
    std::vector<double> sup_sums, aug_sums;
    std::vector<int> counts;
    for (const json& doc : probes) {
        note_hash(doc);
        for (const json& lvl : doc.at("probe").at("levels")) {
            if (!lvl.at("reached").get<bool>()) continue;
            const double eps = lvl.at("epsilon").get<double>();
            std::size_t k = 0;
            for (; k < eps_levels.size(); ++k)
                if (eps_levels[k] == eps) break;
            if (k == eps_levels.size()) {
                eps_levels.push_back(eps);
                sup_sums.push_back(0);
                aug_sums.push_back(0);
                counts.push_back(0);
            }
            sup_sums[k] += lvl.at("grad_sup").get<double>();
            aug_sums[k] += lvl.at("grad_aug").get<double>();
            counts[k] += 1;
        }
    }
    json curve_sup = json::array(), curve_aug = json::array();
    std::vector<std::size_t> order(eps_levels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return eps_levels[a] > eps_levels[b]; });
    for (std::size_t i : order) {
        curve_sup.push_back(json::array({eps_levels[i], sup_sums[i] / counts[i]}));
        curve_aug.push_back(json::array({eps_levels[i], aug_sums[i] / counts[i]}));
    }

    json rep{{"schema_version", kSchemaVersion},
             {"kind", "report"},
             {"config_hashes", hashes},
             {"runs", comparisons.size()},
             {"valid_runs", valid},
             {"risk_rows", risk_rows},
             {"risk_aug_le_sup", risk_le},
             {"fraction_risk_aug_le_sup", valid ? static_cast<double>(risk_le) / valid : 0.0},
             {"risk_note", kRiskNote},
             {"ratio_table", ratio_rows},
             {"convergence_pairs", conv_pairs},
             {"n_star_aug_le_sup", n_star_le},
             {"fraction_n_star_aug_le_sup",
              conv_pairs ? static_cast<double>(n_star_le) / conv_pairs : 0.0},
             {"curves", json{{"grad_sup_vs_eps", curve_sup}, {"grad_aug_vs_eps", curve_aug}}},
             {"timing", json::object()}};
    return rep;
}

}  // namespace gradcert::report
