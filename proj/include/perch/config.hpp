#pragma once

// Run configuration as a flat INI file:
//
//   [section]
//   key = value
//
// Every key has a default. Values resolve as command line > file > defaults,
// and the resolved set is written into each run directory.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "perch/env.hpp"
#include "perch/learner.hpp"
#include "perch/sweep.hpp"

namespace perch {

struct SweepSpec {
    double speed_min = 1.5;
    double speed_max = 3.5;
    double speed_step = 0.25;
    double angle_min = 25.0;
    double angle_max = 90.0;
    double angle_step = 5.0;
    int trials = 30;
    bool deterministic = false;

    [[nodiscard]] SweepGrid grid() const;
};

struct RunConfig {
    EnvConfig env;
    SacHyperparams sac;
    int episodes = 3000;
    int rolling_window = 100;
    int checkpoint_every = 500;
    SweepSpec sweep;
    std::string seed = "1";  // decimal, or "auto" for a random seed
    std::string out_dir = "runs/default";
    int workers = 0;         // 0: all hardware threads for sweeps, 1 for training
    std::string kernels = "auto";

    // Replaces seed = auto with a drawn value and returns the numeric seed.
    std::uint64_t resolve_seed();
    [[nodiscard]] std::uint64_t seed_value() const;
    [[nodiscard]] TrainConfig train_config() const;
    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    enum class Kind { Unreadable, Invalid };
    ConfigError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct ConfigField {
    std::string key;   // section.name
    std::string unit;
    std::string help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigField>& config_fields();

// Merges a file over `base`. Unknown keys and unparsable values are errors.
void merge_config_file(RunConfig& base, const std::filesystem::path& path);
// "section.key=value"
void apply_override(RunConfig& config, const std::string& assignment);

void write_config(std::ostream& os, const RunConfig& config);
void save_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace perch
