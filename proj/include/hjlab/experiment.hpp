#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjlab/analysis.hpp"

namespace hjlab {

/// Closed-form family plus parameters, as written in a config.
struct HamiltonianConfig {
    /// "quadratic": (kappa/2)|p - b|^2 + V.  "manufactured": |p|^2/2 + f, f built from `corrector`.
    std::string family = "quadratic";
    TrigPolynomial potential;
    std::array<TrigPolynomial, 2> drift;
    double kappa = 1.0;
    TrigPolynomial corrector;
};

struct DiffusionConfig {
    /// zero | constant | sin2 | abs_sin | sigma_sigma_t
    std::string family = "zero";
    double amplitude = 1.0;
};

struct InitialConfig {
    /// zero | sawtooth | trig | corrector
    std::string kind = "sawtooth";
    double amplitude = 0.5;
    int teeth = 1;
    TrigPolynomial terms;
};

struct ProblemConfig {
    std::vector<HamiltonianConfig> hamiltonians;
    /// One shared entry or one per component.
    std::vector<DiffusionConfig> diffusions;
    std::optional<std::vector<std::vector<double>>> coupling;
    double epsilon = 1.0;
    /// Fixed eta for every epsilon; epsilon^4 when absent.
    std::optional<double> eta;
    /// Manufactured potentials are corrected at the nodes so the target solves the discrete cell problem.
    bool discrete_manufactured = true;
    Numerics numerics;
};

/// One pipeline stage. Only the fields of its kind are read or written.
struct StageConfig {
    /// validate | ergodic | forward | adjoint | energy | representation |
    /// key_estimates | estimate_sweep | rate_sweep | longtime
    std::string kind;
    std::string name;

    std::vector<double> epsilons;
    std::optional<double> known_constant;
    double tol = 1e-10;
    ErgodicOptions ergodic;

    double T = 1.0;
    std::optional<double> dt;
    /// One entry, or one per component; kind "corrector" starts from the cell-problem solution.
    std::vector<InitialConfig> initial;
    std::size_t snapshots = 5;

    std::optional<std::size_t> x0;
    std::optional<int> component;
    AdjointOptions adjoint;

    int refinements = 0;
    std::size_t samples = 10000;
    double exponent = 0.25;
    bool closeness = true;
};

struct OutputConfig {
    std::filesystem::path directory = "out";
    /// Record wall-clock times in CSV outputs (breaks byte-identical reruns).
    bool timing = false;
    bool plots = true;
};

struct ExperimentConfig {
    std::string experiment = "experiment";
    int dim = 1;
    int N = 256;
    ProblemConfig problem;
    std::vector<StageConfig> pipeline;
    OutputConfig output;
};

/// Reads and checks a config. Schema errors throw ConfigurationError naming the field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);
/// Schema, dependency and problem-hypothesis checks; nothing is computed.
void validate_config(const ExperimentConfig& c);

ProblemSpec build_problem(const ExperimentConfig& c, const PeriodicGrid& grid);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

enum class StageStatus { passed, failed, skipped };
std::string to_string(StageStatus s);

/// {quantity, epsilon, value, bound_constant, slope} record of a sweep stage.
struct QuantityRecord {
    std::string quantity;
    double epsilon = 0.0;
    double value = 0.0;
    std::optional<double> bound_constant;
    std::optional<double> slope;
};

struct StageResult {
    std::string name;
    std::string kind;
    StageStatus status = StageStatus::skipped;
    std::string message;
    std::map<std::string, double> metrics;
    std::vector<QuantityRecord> quantities;
    std::vector<std::string> outputs;
    double wall_time = 0.0;
};

struct RunManifest {
    std::string experiment;
    std::string config_hash;
    std::string version;
    std::vector<StageResult> stages;

    bool passed() const;
    const StageResult& stage(const std::string& name) const;
};

/// Runs the pipeline and writes CSV tables, plot data, summary.json and manifest.json.
RunManifest run_experiment(const ExperimentConfig& config);

/// 64-bit FNV-1a of the canonical config dump, as hex.
std::string config_hash(const ExperimentConfig& c);

}  // namespace hjlab
