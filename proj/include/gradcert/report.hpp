#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "gradcert/estimators.hpp"
#include "gradcert/experiments.hpp"

namespace gradcert::report {

using json = nlohmann::json;

// Bumped on any change to artifact layout; aggregation refuses to mix
// artifacts produced under different versions.
inline constexpr int kSchemaVersion = 1;

inline constexpr const char* kTrajectoryColumns =
    "arm,n,risk,grad_norm,epsilon_hat,step_size,lambda_hat,delta_hat,M_hat,wallclock_ms";

// CSV with one `# key=value ...` metadata line, then the pinned column
// header, then one row per iterate. All doubles are %.17g.
std::string trajectory_csv(const experiments::Trajectory& traj, const std::string& config_hash);

json to_json(const estimators::Check& c);
json to_json(const estimators::BoundCertificate& c);
json to_json(const experiments::StepBound& b);
json to_json(const experiments::Trajectory& traj);  // summary: flags + step bounds
json to_json(const experiments::RiskComparison& cmp);
json to_json(const experiments::ConvergenceReport& rep);
json to_json(const experiments::ProbeLevel& lvl);
json to_json(const experiments::ProbeReport& rep);

// Skeleton every JSON artifact starts from: schema_version, kind,
// config_hash, and an isolated timing block callers may fill.
json artifact(const std::string& kind, const std::string& config_hash);

void write_text(const std::string& path, const std::string& content);
void write_json(const std::string& path, const json& j);
std::string read_text(const std::string& path);

// Task files pin a dataset and its teacher parameters.
void save_task(std::ostream& os, const experiments::TeacherTask& task);
experiments::TeacherTask load_task(std::istream& is);
void save_task_file(const std::string& path, const experiments::TeacherTask& task);
experiments::TeacherTask load_task_file(const std::string& path);

// Digest of an artifact with all timing stripped: wallclock columns are
// dropped from CSV rows and any key containing "wallclock" or named
// "timing" is erased from JSON. Two runs of the same configuration must
// agree on this value exactly.
std::string canonical_checksum(const std::string& path);
std::string canonical_checksum_text(const std::string& filename, const std::string& content);

// One curve on a plot: (x, y) points in draw order.
struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

std::string curve_dat(const Series& s);
// Self-contained static SVG line chart; log-scale axes drop non-positive
// points.
std::string curve_svg(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series,
                      bool log_x = false, bool log_y = false);

// Aggregates per-seed comparison/convergence/probe artifacts (as parsed
// JSON) into one summary. Throws if schema versions disagree.
json aggregate(const std::vector<json>& comparisons, const std::vector<json>& convergences,
               const std::vector<json>& probes);

}  // namespace gradcert::report
