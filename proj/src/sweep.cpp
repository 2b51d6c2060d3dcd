#include "perch/sweep.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "perch/rng.hpp"

namespace perch {

std::vector<double> SweepGrid::range(double first, double last, double step) {
    if (!(step > 0.0) || !(last >= first)) throw std::invalid_argument("grid range needs step > 0 and last >= first");
    std::vector<double> out;
    for (int i = 0;; ++i) {
        double v = first + i * step;
        if (v > last + 1e-9) break;
        if (std::abs(v - last) <= 1e-9) v = last;
        out.push_back(v);
    }
    return out;
}

SweepGrid SweepGrid::defaults() {
    return {range(1.5, 3.5, 0.25), range(25.0, 90.0, 5.0), 30};
}

void SweepGrid::validate() const {
    if (trials < 1) throw std::invalid_argument("trials per cell must be at least 1");
    if (speeds.empty() || angles_deg.empty()) throw std::invalid_argument("sweep grid is empty");
    for (double v : speeds) ApproachCondition{v, 45.0}.validate();
    for (double a : angles_deg) ApproachCondition{2.0, a}.validate();
}

const CellResult& LandingRateMap::at(double speed, double angle_deg) const {
    for (const auto& c : cells) {
        if (std::abs(c.speed - speed) < 1e-9 && std::abs(c.angle_deg - angle_deg) < 1e-9) return c;
    }
    throw std::out_of_range("no sweep cell at the requested speed and angle");
}

EpisodeRecord run_policy_episode(const PolicyParams& policy, double threshold, const EnvConfig& config,
                                 const ApproachCondition& condition, std::mt19937_64& rng,
                                 bool deterministic) {
    LandingEnv env(config);
    const VehicleParams vehicle = randomize_inertia(config.vehicle, rng, config.randomization);
    // Drawn only with noise on, so noiseless runs keep their action streams.
    if (config.sensing.noisy()) env.seed_noise(rng());
    Observation obs = env.reset(condition, vehicle);
    while (!env.done()) {
        const HeadOutputs h = policy_forward(policy, normalize(obs, config.sensing));
        const ActionSample a = deterministic ? mean_action(h, threshold) : sample_action(h, rng, threshold);
        obs = env.step(to_step_action(a)).observation;
    }
    return env.record();
}

namespace {

void tally(CellResult& c, const LandingOutcome& o) {
    ++c.trials;
    if (o.n_legs >= 3) {
        ++c.n_fourleg;
    } else if (o.n_legs >= 1) {
        ++c.n_twoleg;
    } else {
        ++c.n_fail;
    }
    if (o.body_contact) ++c.n_bodycontact;
}

// Runs every (cell, trial) job and returns records in job order.
std::vector<EpisodeRecord> run_jobs(const PolicyParams& policy, double threshold, const EnvConfig& config,
                                    const std::vector<ApproachCondition>& cells, int trials,
                                    const EvalOptions& options) {
    policy.net.check_finite("policy");
    config.validate();
    const std::size_t total = cells.size() * static_cast<std::size_t>(trials);
    std::vector<EpisodeRecord> records(total);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};

    auto worker = [&] {
        for (;;) {
            const std::size_t job = next.fetch_add(1);
            if (job >= total || failed.load()) return;
            const std::size_t cell = job / static_cast<std::size_t>(trials);
            const std::size_t trial = job % static_cast<std::size_t>(trials);
            try {
                std::mt19937_64 rng = make_stream(options.seed, {3, cell, trial});
                records[job] = run_policy_episode(policy, threshold, config, cells[cell], rng, options.deterministic);
                records[job].episode = job;
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };

    const int n = std::max(1, std::min<int>(options.workers, static_cast<int>(total)));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return records;
}

}  // namespace

LandingRateMap run_sweep(const PolicyParams& policy, double threshold, const SweepGrid& grid,
                         const EnvConfig& config, const EvalOptions& options) {
    grid.validate();
    std::vector<ApproachCondition> conds;
    for (double v : grid.speeds) {
        for (double a : grid.angles_deg) conds.push_back({v, a});
    }
    std::vector<EpisodeRecord> records = run_jobs(policy, threshold, config, conds, grid.trials, options);

    LandingRateMap map;
    map.grid = grid;
    map.seed = options.seed;
    map.deterministic = options.deterministic;
    map.cells.resize(conds.size());
    for (std::size_t c = 0; c < conds.size(); ++c) {
        map.cells[c].speed = conds[c].speed;
        map.cells[c].angle_deg = conds[c].angle_deg;
    }
    for (std::size_t j = 0; j < records.size(); ++j) {
        tally(map.cells[j / static_cast<std::size_t>(grid.trials)], records[j].outcome);
    }
    if (options.keep_records) map.records = std::move(records);
    return map;
}

CellResult evaluate_condition(const PolicyParams& policy, double threshold, const EnvConfig& config,
                              const ApproachCondition& condition, int trials, const EvalOptions& options,
                              std::vector<EpisodeRecord>* records) {
    condition.validate();
    if (trials < 1) throw std::invalid_argument("trials must be at least 1");
    std::vector<EpisodeRecord> recs = run_jobs(policy, threshold, config, {condition}, trials, options);
    CellResult c;
    c.speed = condition.speed;
    c.angle_deg = condition.angle_deg;
    for (const auto& r : recs) tally(c, r.outcome);
    if (records) *records = std::move(recs);
    return c;
}

void write_map_csv(std::ostream& os, const LandingRateMap& map) {
    os << "V,phi,trials,n_fourleg,n_twoleg,n_fail,n_bodycontact,success_rate\n";
    char buf[256];
    for (const auto& c : map.cells) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%d,%d,%d,%d,%d,%.17g\n", c.speed, c.angle_deg, c.trials,
                      c.n_fourleg, c.n_twoleg, c.n_fail, c.n_bodycontact, c.success_rate());
        os << buf;
    }
}

nlohmann::json map_to_json(const LandingRateMap& map) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : map.cells) {
        cells.push_back({{"V", c.speed},
                         {"phi", c.angle_deg},
                         {"trials", c.trials},
                         {"n_fourleg", c.n_fourleg},
                         {"n_twoleg", c.n_twoleg},
                         {"n_fail", c.n_fail},
                         {"n_bodycontact", c.n_bodycontact},
                         {"success_rate", c.success_rate()}});
    }
    return {{"grid", {{"V", map.grid.speeds}, {"phi", map.grid.angles_deg}, {"trials", map.grid.trials}}},
            {"units", {{"V", "m/s"}, {"phi", "deg"}}},
            {"seed", map.seed},
            {"deterministic", map.deterministic},
            {"cells", cells}};
}

OutcomeFilter parse_outcome_filter(const std::string& text) {
    if (text.empty() || text == "any") return OutcomeFilter::Any;
    if (text == "four-leg") return OutcomeFilter::FourLeg;
    if (text == "two-leg") return OutcomeFilter::TwoLeg;
    if (text == "fail") return OutcomeFilter::Fail;
    throw std::invalid_argument("unknown outcome filter '" + text + "' (any, four-leg, two-leg, fail)");
}

bool matches(const LandingOutcome& o, OutcomeFilter f) {
    switch (f) {
        case OutcomeFilter::Any: return true;
        case OutcomeFilter::FourLeg: return o.n_legs >= 3;
        case OutcomeFilter::TwoLeg: return o.n_legs == 1 || o.n_legs == 2;
        case OutcomeFilter::Fail: return o.n_legs == 0;
    }
    return false;
}

std::string outcome_label(const LandingOutcome& o) {
    if (o.n_legs >= 3) return "four-leg";
    if (o.n_legs >= 1) return "two-leg";
    return "fail";
}

std::vector<PolicyRegionRow> export_policy_region(const std::vector<EpisodeRecord>& records, OutcomeFilter filter) {
    if (records.empty()) throw std::invalid_argument("export_policy_region: no episodes");
    std::vector<PolicyRegionRow> rows;
    for (const auto& r : records) {
        if (!r.triggered || !matches(r.outcome, filter)) continue;
        rows.push_back({r.episode, r.condition.speed, r.condition.angle_deg, r.trigger_observation.tau,
                        r.trigger_observation.theta_x, r.trigger_observation.d_ceil, r.moment, r.outcome.n_legs,
                        r.outcome.body_contact, outcome_label(r.outcome)});
    }
    return rows;
}

void write_policy_region_csv(std::ostream& os, const std::vector<PolicyRegionRow>& rows) {
    os << "episode,V,phi,tau_trg,theta_x_trg,d_ceil_trg,My,n_legs,body_contact,outcome\n";
    char buf[384];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%llu,%.6g,%.6g,%.17g,%.17g,%.17g,%.17g,%d,%d,%s\n",
                      static_cast<unsigned long long>(r.episode), r.speed, r.angle_deg, r.tau_trg, r.theta_x_trg,
                      r.d_ceil_trg, r.moment, r.n_legs, r.body_contact ? 1 : 0, r.outcome.c_str());
        os << buf;
    }
}

void write_observation_trace_csv(std::ostream& os, const EnvConfig& config, const EpisodeRecord& record) {
    std::vector<Observation> obs;
    replay_episode(config, record, nullptr, &obs);
    os << "episode,step,tau,theta_x,d_ceil,triggered_here\n";
    char buf[256];
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const bool here = record.triggered && static_cast<int>(i) == record.trigger_step;
        std::snprintf(buf, sizeof(buf), "%llu,%zu,%.17g,%.17g,%.17g,%d\n",
                      static_cast<unsigned long long>(record.episode), i, obs[i].tau, obs[i].theta_x, obs[i].d_ceil,
                      here ? 1 : 0);
        os << buf;
    }
}

}  // namespace perch
