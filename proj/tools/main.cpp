#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradcert/config.hpp"
#include "gradcert/experiments.hpp"
#include "gradcert/report.hpp"

namespace fs = std::filesystem;
using namespace gradcert;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSoundness = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "configuration file (key = value sections)");
    cmd->add_option("--set", args.sets,
                    "override one config entry, e.g. --set task.seed=7 (repeatable)");
    cmd->add_option("--out-dir", args.out_dir, "output directory (overrides output.dir)");
}

// Precedence: file < --set < --out-dir flag < GRADCERT_OUTPUT_DIR.
RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg =
        args.config_path.empty() ? RunConfig{} : RunConfig::parse_file(args.config_path);
    for (const std::string& kv : args.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects section.key=value, got '" + kv + "'");
        std::string key = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        cfg.apply_override(key, value);
    }
    if (!args.out_dir.empty()) cfg.output.dir = args.out_dir;
    if (const char* env = std::getenv("GRADCERT_OUTPUT_DIR"); env && *env)
        cfg.output.dir = env;
    return cfg;
}

experiments::TeacherTask resolve_task(const RunConfig& cfg, const std::string& task_path) {
    if (task_path.empty())
        return experiments::make_teacher_task(cfg.task.seed, cfg.task.n_samples,
                                              cfg.generator_dims());
    experiments::TeacherTask task = report::load_task_file(task_path);
    const nn::GeneratorDims want = cfg.generator_dims();
    if (task.dims.d_x != want.d_x || task.dims.d_y != want.d_y || task.dims.d_h != want.d_h ||
        task.dims.blocks != want.blocks)
        throw std::runtime_error("task file dimensions do not match the configuration");
    return task;
}

nn::GeneratorParams initial_theta(const RunConfig& cfg, const experiments::TeacherTask& task) {
    if (cfg.training.init == "teacher") return task.theta_star;
    return experiments::paired_theta0(cfg.task.seed, task.dims);
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.output.dir) / name).string();
}

int do_gen_data(const CommonArgs& args, const std::string& out_file) {
    RunConfig cfg = resolve_config(args);
    experiments::TeacherTask task =
        experiments::make_teacher_task(cfg.task.seed, cfg.task.n_samples, cfg.generator_dims());
    const std::string path = out_file.empty() ? out_path(cfg, "task.txt") : out_file;
    report::save_task_file(path, task);
    std::cout << path << "\n";
    return kExitOk;
}

int do_run(const CommonArgs& args, const std::string& task_path) {
    RunConfig cfg = resolve_config(args);
    const std::string hash = cfg.hash();
    experiments::TeacherTask task = resolve_task(cfg, task_path);
    const experiments::TrainingConfig tcfg = cfg.training_config();
    const experiments::CriticConfig ccfg = cfg.critic_config();

    experiments::PairedRun run;
    run.theta0 = initial_theta(cfg, task);
    run.psi0 = experiments::paired_psi0(cfg.task.seed, {task.dims.d_y, ccfg.hidden});
    run.sup = experiments::train_supervised(task, run.theta0, tcfg);
    run.aug = experiments::train_augmented(task, run.theta0, run.psi0, tcfg, ccfg);

    experiments::RiskComparison cmp =
        experiments::comparison_from_paired(run, task, cfg.task.seed, tcfg, ccfg);
    experiments::ConvergenceReport conv =
        experiments::convergence_from_paired(run, cfg.task.seed, tcfg.risk_threshold);

    report::write_text(out_path(cfg, "sup.csv"), report::trajectory_csv(run.sup, hash));
    report::write_text(out_path(cfg, "aug.csv"), report::trajectory_csv(run.aug, hash));

    report::json certs = report::artifact("certificates", hash);
    certs["sup"] = report::to_json(cmp.final_sup);
    certs["aug"] = report::to_json(cmp.final_aug);
    certs["sup_trajectory"] = report::to_json(run.sup);
    certs["aug_trajectory"] = report::to_json(run.aug);
    report::write_json(out_path(cfg, "certificates.json"), certs);

    report::json comparison = report::artifact("comparison", hash);
    comparison["comparison"] = report::to_json(cmp);
    comparison["convergence"] = report::to_json(conv);
    report::write_json(out_path(cfg, "comparison.json"), comparison);

    if (run.sup.diverged || run.aug.diverged) {
        std::cerr << "divergence: sup=" << run.sup.diverged << " aug=" << run.aug.diverged
                  << " (artifacts preserved in " << cfg.output.dir << ")\n";
        return kExitDivergence;
    }
    if (!cmp.final_sup.all_pass() || !cmp.final_aug.all_pass()) {
        std::cerr << "certificate check failed; see " << out_path(cfg, "certificates.json")
                  << "\n";
        return kExitSoundness;
    }
    std::cout << "run complete: " << cfg.output.dir << "\n";
    return kExitOk;
}

int do_probe(const CommonArgs& args, const std::string& task_path) {
    RunConfig cfg = resolve_config(args);
    const std::string hash = cfg.hash();
    experiments::TeacherTask task = resolve_task(cfg, task_path);
    const experiments::TrainingConfig tcfg = cfg.training_config();
    const experiments::CriticConfig ccfg = cfg.critic_config();

    experiments::Trajectory sup =
        experiments::train_supervised(task, initial_theta(cfg, task), tcfg);
    experiments::ProbeReport probe = experiments::probe_gradients(
        sup, task, cfg.task.seed, ccfg, cfg.probe.epsilons, tcfg.pi);

    report::write_text(out_path(cfg, "sup.csv"), report::trajectory_csv(sup, hash));
    report::json doc = report::artifact("probe", hash);
    doc["probe"] = report::to_json(probe);
    report::write_json(out_path(cfg, "probe.json"), doc);

    if (sup.diverged) {
        std::cerr << "divergence in the supervised arm (artifacts preserved)\n";
        return kExitDivergence;
    }
    bool sound = probe.sup_bound_every_row && probe.deepest.cert.all_pass();
    for (const experiments::ProbeLevel& lvl : probe.levels)
        if (lvl.reached && !lvl.cert.all_pass()) sound = false;
    if (!sound) {
        std::cerr << "certificate check failed; see " << out_path(cfg, "probe.json") << "\n";
        return kExitSoundness;
    }
    std::cout << "probe complete: " << cfg.output.dir << "\n";
    return kExitOk;
}

int do_compare(const CommonArgs& args, const std::string& task_path) {
    RunConfig cfg = resolve_config(args);
    const std::string hash = cfg.hash();
    experiments::TeacherTask task = resolve_task(cfg, task_path);
    const experiments::TrainingConfig tcfg = cfg.training_config();
    const experiments::CriticConfig ccfg = cfg.critic_config();

    experiments::PairedRun run;
    run.theta0 = initial_theta(cfg, task);
    run.psi0 = experiments::paired_psi0(cfg.task.seed, {task.dims.d_y, ccfg.hidden});
    run.sup = experiments::train_supervised(task, run.theta0, tcfg);
    run.aug = experiments::train_augmented(task, run.theta0, run.psi0, tcfg, ccfg);

    experiments::RiskComparison cmp =
        experiments::comparison_from_paired(run, task, cfg.task.seed, tcfg, ccfg);
    experiments::ConvergenceReport conv =
        experiments::convergence_from_paired(run, cfg.task.seed, tcfg.risk_threshold);

    report::json doc = report::artifact("comparison", hash);
    doc["comparison"] = report::to_json(cmp);
    doc["convergence"] = report::to_json(conv);
    report::write_json(out_path(cfg, "comparison.json"), doc);

    if (run.sup.diverged || run.aug.diverged) return kExitDivergence;
    if (!cmp.final_sup.all_pass() || !cmp.final_aug.all_pass()) return kExitSoundness;
    std::cout << "comparison written: " << out_path(cfg, "comparison.json") << "\n";
    return kExitOk;
}

int do_report(const std::string& in_dir, std::string out_dir) {
    if (out_dir.empty()) out_dir = in_dir;
    if (const char* env = std::getenv("GRADCERT_OUTPUT_DIR"); env && *env) out_dir = env;
    if (!fs::is_directory(in_dir)) throw std::runtime_error("not a directory: " + in_dir);

    std::vector<fs::path> comparison_files, probe_files;
    for (const auto& entry : fs::recursive_directory_iterator(in_dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().filename() == "comparison.json") comparison_files.push_back(entry.path());
        if (entry.path().filename() == "probe.json") probe_files.push_back(entry.path());
    }
    std::sort(comparison_files.begin(), comparison_files.end());
    std::sort(probe_files.begin(), probe_files.end());
    if (comparison_files.empty() && probe_files.empty())
        throw std::runtime_error("no run artifacts under " + in_dir);

    std::vector<report::json> comparisons, probes;
    for (const fs::path& p : comparison_files)
        comparisons.push_back(report::json::parse(report::read_text(p.string())));
    for (const fs::path& p : probe_files)
        probes.push_back(report::json::parse(report::read_text(p.string())));

    report::json rep = report::aggregate(comparisons, comparisons, probes);
    report::write_json((fs::path(out_dir) / "report.json").string(), rep);

    auto emit_curve = [&](const char* key, const char* label) {
        report::Series s;
        s.label = label;
        for (const auto& pt : rep["curves"][key])
            s.points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
        report::write_text((fs::path(out_dir) / (std::string(key) + ".dat")).string(),
                           report::curve_dat(s));
        report::write_text(
            (fs::path(out_dir) / (std::string(key) + ".svg")).string(),
            report::curve_svg(label, "epsilon", "gradient norm", {s}, true, true));
    };
    emit_curve("grad_sup_vs_eps", "supervised gradient norm vs epsilon");
    emit_curve("grad_aug_vs_eps", "augmented gradient norm vs epsilon");

    std::cout << (fs::path(out_dir) / "report.json").string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"train-and-certify harness: gradient bound certificates for a residual "
                 "generator with optional adversarial feedback"};
    app.require_subcommand(1);

    CommonArgs gen_args, run_args, probe_args, compare_args;
    std::string gen_out, run_task, probe_task, compare_task;
    std::string report_in, report_out;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a teacher task file");
    add_common(gen, gen_args);
    gen->add_option("--out", gen_out, "task file path (default <out-dir>/task.txt)");

    CLI::App* run = app.add_subcommand("run", "paired supervised/augmented run with artifacts");
    add_common(run, run_args);
    run->add_option("--task", run_task, "existing task file (default: generate from config)");

    CLI::App* probe = app.add_subcommand("probe", "gradient-vs-accuracy probe along a run");
    add_common(probe, probe_args);
    probe->add_option("--task", probe_task, "existing task file (default: generate from config)");

    CLI::App* compare = app.add_subcommand("compare", "paired run, comparison artifact only");
    add_common(compare, compare_args);
    compare->add_option("--task", compare_task,
                        "existing task file (default: generate from config)");

    CLI::App* report_cmd = app.add_subcommand("report", "aggregate run artifacts in a directory");
    report_cmd->add_option("--in", report_in, "directory containing run outputs")->required();
    report_cmd->add_option("--out", report_out, "report output directory (default --in)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return do_gen_data(gen_args, gen_out);
        if (run->parsed()) return do_run(run_args, run_task);
        if (probe->parsed()) return do_probe(probe_args, probe_task);
        if (compare->parsed()) return do_compare(compare_args, compare_task);
        if (report_cmd->parsed()) return do_report(report_in, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
