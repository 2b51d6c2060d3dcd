#pragma once

// Batch evaluation of a policy over a (speed, angle) grid, and the
// trigger-time observation table used to map the learned trigger region.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "perch/env.hpp"
#include "perch/policy.hpp"

namespace perch {

struct SweepGrid {
    std::vector<double> speeds;      // m/s
    std::vector<double> angles_deg;  // deg
    int trials = 30;

    // 1.5..3.5 step 0.25 and 25..90 step 5.
    static SweepGrid defaults();
    // Inclusive range; the last value is snapped to `last` when within 1e-9.
    static std::vector<double> range(double first, double last, double step);
    void validate() const;
    [[nodiscard]] std::size_t cells() const { return speeds.size() * angles_deg.size(); }
};

struct EvalOptions {
    std::uint64_t seed = 1;
    int workers = 1;
    bool deterministic = false;  // act at the distribution means
    bool keep_records = false;   // retain every EpisodeRecord
};

struct CellResult {
    double speed = 0.0;
    double angle_deg = 0.0;
    int trials = 0;
    int n_fourleg = 0;  // three or four legs attached
    int n_twoleg = 0;   // one or two legs
    int n_fail = 0;     // no leg contact
    int n_bodycontact = 0;
    [[nodiscard]] double success_rate() const { return trials > 0 ? static_cast<double>(n_fourleg) / trials : 0.0; }
};

struct LandingRateMap {
    SweepGrid grid;
    std::uint64_t seed = 0;
    bool deterministic = false;
    std::vector<CellResult> cells;        // speed-major order
    std::vector<EpisodeRecord> records;   // filled when keep_records is set

    [[nodiscard]] const CellResult& at(double speed, double angle_deg) const;
};

// Runs a single episode with the given policy on a fixed condition. The RNG
// drives domain randomization and action sampling.
EpisodeRecord run_policy_episode(const PolicyParams& policy, double threshold, const EnvConfig& config,
                                 const ApproachCondition& condition, std::mt19937_64& rng,
                                 bool deterministic = false);

// Cells and trials run concurrently; each trial draws from the stream
// (seed, cell index, trial index), so the map is independent of `workers`.
LandingRateMap run_sweep(const PolicyParams& policy, double threshold, const SweepGrid& grid,
                         const EnvConfig& config, const EvalOptions& options);

// N trials of a single condition, as a one-cell sweep.
CellResult evaluate_condition(const PolicyParams& policy, double threshold, const EnvConfig& config,
                              const ApproachCondition& condition, int trials, const EvalOptions& options,
                              std::vector<EpisodeRecord>* records = nullptr);

void write_map_csv(std::ostream& os, const LandingRateMap& map);
nlohmann::json map_to_json(const LandingRateMap& map);

enum class OutcomeFilter { Any, FourLeg, TwoLeg, Fail };
OutcomeFilter parse_outcome_filter(const std::string& text);
bool matches(const LandingOutcome& outcome, OutcomeFilter filter);
std::string outcome_label(const LandingOutcome& outcome);

struct PolicyRegionRow {
    std::uint64_t episode = 0;
    double speed = 0.0;
    double angle_deg = 0.0;
    double tau_trg = 0.0;
    double theta_x_trg = 0.0;
    double d_ceil_trg = 0.0;
    double moment = 0.0;  // N m
    int n_legs = 0;
    bool body_contact = false;
    std::string outcome;
};

// Triggered episodes only. Throws std::invalid_argument on empty input.
std::vector<PolicyRegionRow> export_policy_region(const std::vector<EpisodeRecord>& records,
                                                  OutcomeFilter filter = OutcomeFilter::Any);
void write_policy_region_csv(std::ostream& os, const std::vector<PolicyRegionRow>& rows);

// Per-step observations of a logged episode, re-simulated.
void write_observation_trace_csv(std::ostream& os, const EnvConfig& config, const EpisodeRecord& record);

}  // namespace perch
