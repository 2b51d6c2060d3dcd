// perchlab: train, evaluate, sweep and replay inverted-landing policies.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "perch/config.hpp"
#include "perch/learner.hpp"
#include "perch/nn/kernels.hpp"
#include "perch/policy.hpp"
#include "perch/sweep.hpp"

namespace fs = std::filesystem;
using namespace perch;

namespace {

enum Exit : int {
    kOk = 0,
    kUsage = 2,
    kConfigUnreadable = 3,
    kConfigInvalid = 4,
    kCheckpoint = 5,
    kRuntime = 6,
    kDiverged = 7,
    kReplayMismatch = 8,
    kIo = 9,
};

const char* exit_name(int code) {
    switch (code) {
        case kUsage: return "usage";
        case kConfigUnreadable: return "config_unreadable";
        case kConfigInvalid: return "config_invalid";
        case kCheckpoint: return "checkpoint";
        case kRuntime: return "runtime";
        case kDiverged: return "diverged";
        case kReplayMismatch: return "replay_mismatch";
        case kIo: return "io";
        default: return "error";
    }
}

// Raised inside subcommands; mapped to a one-line error and exit code.
struct Failure {
    int code;
    std::string message;
};

int report(int code, const std::string& message) {
    std::string flat = message;
    for (char& c : flat) {
        if (c == '\n' || c == '"') c = '\'';
    }
    std::cerr << "perchlab: error code=" << code << " kind=" << exit_name(code) << " message=\"" << flat << "\"\n";
    return code;
}

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::string> seed;
    std::optional<std::string> out;
    std::optional<int> workers;
    std::optional<std::string> kernels;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_out = true) {
    cmd->add_option("--config", o.config_path, "INI run configuration; keys not given keep their defaults");
    cmd->add_option("--set", o.sets,
                    "Override one config key, e.g. --set sac.alpha=0.002 (repeatable; applied after --config)");
    cmd->add_option("--seed", o.seed, "Master seed (unsigned integer, or 'auto'); overrides run.seed");
    if (with_out) cmd->add_option("--out", o.out, "Output directory; overrides run.out_dir");
    cmd->add_option("--workers", o.workers,
                    "Worker threads (0 = all hardware threads). Sweeps and eval run episodes in parallel; "
                    "training is sequential and ignores values above 1")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--kernels", o.kernels, "Dense-layer kernels: auto, scalar or avx2");
}

RunConfig resolve(const CommonOptions& o) {
    RunConfig rc;
    try {
        if (!o.config_path.empty()) merge_config_file(rc, o.config_path);
        for (const auto& s : o.sets) apply_override(rc, s);
        if (o.seed) rc.seed = *o.seed;
        if (o.out) rc.out_dir = *o.out;
        if (o.workers) rc.workers = *o.workers;
        if (o.kernels) rc.kernels = *o.kernels;
        rc.validate();
    } catch (const ConfigError& e) {
        throw Failure{e.kind() == ConfigError::Kind::Unreadable ? kConfigUnreadable : kConfigInvalid, e.what()};
    }
    try {
        nn::set_kernel_mode(nn::parse_kernel_mode(rc.kernels));
    } catch (const std::exception& e) {
        throw Failure{kConfigInvalid, e.what()};
    }
    return rc;
}

int sweep_workers(const RunConfig& rc) {
    if (rc.workers > 0) return rc.workers;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Accepts a policy file, or a checkpoint whose sibling .pol exists.
LoadedPolicy load_policy_or_fail(const std::string& path) {
    fs::path p = path;
    if (p.extension() == ".ckpt") p.replace_extension(".pol");
    if (!fs::exists(p)) throw Failure{kCheckpoint, "checkpoint not found: " + p.string()};
    try {
        return load_policy(p);
    } catch (const std::exception& e) {
        throw Failure{kCheckpoint, "cannot load checkpoint " + p.string() + ": " + e.what()};
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Failure{kIo, "cannot create " + dir.string() + ": " + ec.message()};
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw Failure{kIo, "cannot write " + p.string()};
    return os;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
    CommonOptions common;
    std::optional<int> episodes;
};

int cmd_train(const TrainOptions& o) {
    RunConfig rc = resolve(o.common);
    if (o.episodes) {
        if (*o.episodes <= 0) throw Failure{kConfigInvalid, "--episodes must be positive"};
        rc.episodes = *o.episodes;
    }
    const std::uint64_t seed = rc.resolve_seed();
    const fs::path out = rc.out_dir;
    ensure_dir(out);
    save_config(out / "config.ini", rc);

    TrainConfig tc = rc.train_config();
    tc.out_dir = out;
    LandingTask task(rc.env);
    TrainResult result;
    try {
        result = train(tc, task);
    } catch (const TrainingDiverged& e) {
        throw Failure{kDiverged, e.what()};
    }
    save_policy(out / "policy.pol", result.agent->policy, rc.env.sensing, rc.env.trigger_threshold);

    const int reach = result.first_reaching(0.7, rc.rolling_window);
    const double final_mean = result.stats.empty() ? 0.0 : result.stats.back().rolling_mean;
    const nlohmann::json meta{
        {"command", "train"},
        {"seed", seed},
        {"kernels", nn::kernels().name},
        {"episodes", result.stats.size()},
        {"updates", result.agent->updates()},
        {"final_rolling_mean", final_mean},
        {"best_rolling_mean", result.best_rolling_mean()},
        {"best_episode", result.best_episode},
        {"first_episode_rolling_ge_0.7", reach},
        {"policy", "policy.pol"},
        {"best_policy", result.best_episode >= 0 ? "checkpoints/best.pol" : ""},
    };
    open_out(out / "run.json") << meta.dump(2) << '\n';
    std::printf("train: seed=%llu episodes=%zu final_rolling_mean=%.4f best_rolling_mean=%.4f first_ge_0.7=%d policy=%s\n",
                static_cast<unsigned long long>(seed), result.stats.size(), final_mean, result.best_rolling_mean(),
                reach, (out / "policy.pol").string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions2 {
    CommonOptions common;
    std::string checkpoint;
    double speed = 2.5;
    double angle = 40.0;
    int trials = 30;
    bool deterministic = false;
    std::string log;
};

int cmd_eval(const EvalOptions2& o) {
    RunConfig rc = resolve(o.common);
    const LoadedPolicy pol = load_policy_or_fail(o.checkpoint);
    const std::uint64_t seed = rc.resolve_seed();
    ApproachCondition cond{o.speed, o.angle};
    try {
        cond.validate();
    } catch (const std::exception& e) {
        throw Failure{kUsage, e.what()};
    }
    if (o.trials < 1) throw Failure{kUsage, "--n must be at least 1"};
    EvalOptions eo;
    eo.seed = seed;
    eo.workers = sweep_workers(rc);
    eo.deterministic = o.deterministic;
    std::vector<EpisodeRecord> records;
    const CellResult c = evaluate_condition(pol.params, pol.threshold, rc.env, cond, o.trials, eo, &records);
    if (!o.log.empty()) {
        std::ofstream os = open_out(o.log);
        for (const auto& r : records) os << nlohmann::json(r).dump() << '\n';
    }
    std::printf("eval: V=%g phi=%g seed=%llu trials=%d four_leg=%d/%d two_leg=%d fail=%d body_contact=%d success_rate=%.4f\n",
                o.speed, o.angle, static_cast<unsigned long long>(seed), c.trials, c.n_fourleg, c.trials, c.n_twoleg,
                c.n_fail, c.n_bodycontact, c.success_rate());
    return kOk;
}

// ---------------------------------------------------------------------------

struct SweepOptions {
    CommonOptions common;
    std::string checkpoint;
    std::optional<int> trials;
    bool deterministic = false;
    std::string filter = "any";
};

int cmd_sweep(const SweepOptions& o) {
    RunConfig rc = resolve(o.common);
    if (o.trials) rc.sweep.trials = *o.trials;
    if (o.deterministic) rc.sweep.deterministic = true;
    OutcomeFilter filter;
    SweepGrid grid;
    try {
        filter = parse_outcome_filter(o.filter);
        grid = rc.sweep.grid();
        grid.validate();
    } catch (const std::exception& e) {
        throw Failure{kConfigInvalid, e.what()};
    }
    const LoadedPolicy pol = load_policy_or_fail(o.checkpoint);
    const std::uint64_t seed = rc.resolve_seed();
    const fs::path out = rc.out_dir;
    ensure_dir(out);
    save_config(out / "config.ini", rc);

    EvalOptions eo;
    eo.seed = seed;
    eo.workers = sweep_workers(rc);
    eo.deterministic = rc.sweep.deterministic;
    eo.keep_records = true;
    const LandingRateMap map = run_sweep(pol.params, pol.threshold, grid, rc.env, eo);

    {
        std::ofstream csv = open_out(out / "landing_map.csv");
        write_map_csv(csv, map);
        open_out(out / "landing_map.json") << map_to_json(map).dump(2) << '\n';
        std::ofstream region = open_out(out / "policy_region.csv");
        try {
            write_policy_region_csv(region, export_policy_region(map.records, filter));
        } catch (const std::invalid_argument&) {
            // No triggered episodes matched; keep the header-only file.
            write_policy_region_csv(region, {});
        }
    }
    {
        std::ofstream os = open_out(out / "episodes.jsonl");
        for (const auto& r : map.records) os << nlohmann::json(r).dump() << '\n';
    }
    // A copy of the policy and the run metadata make the directory self-contained.
    try {
        save_policy(out / "policy.pol", pol.params, pol.sensing, pol.threshold);
    } catch (const std::exception& e) {
        throw Failure{kIo, e.what()};
    }
    const nlohmann::json meta{
        {"command", "sweep"},
        {"seed", seed},
        {"kernels", nn::kernels().name},
        {"source_policy", o.checkpoint},
        {"policy", "policy.pol"},
        {"filter", o.filter},
        {"deterministic", rc.sweep.deterministic},
        {"cells", map.cells.size()},
        {"trials", grid.trials},
    };
    open_out(out / "run.json") << meta.dump(2) << '\n';
    int four = 0, total = 0;
    for (const auto& c : map.cells) {
        four += c.n_fourleg;
        total += c.trials;
    }
    std::printf("sweep: seed=%llu cells=%zu trials=%d four_leg=%d/%d out=%s\n", static_cast<unsigned long long>(seed),
                map.cells.size(), grid.trials, four, total, out.string().c_str());
    return kOk;
}

// ---------------------------------------------------------------------------

struct ReplayOptions {
    CommonOptions common;
    std::string log;
    std::uint64_t episode = 0;
    std::string trace = "-";
    std::string observations;
};

int cmd_replay(ReplayOptions o) {
    if (o.common.config_path.empty()) {
        const fs::path sibling = fs::path(o.log).parent_path() / "config.ini";
        if (fs::exists(sibling)) o.common.config_path = sibling.string();
    }
    RunConfig rc = resolve(o.common);
    std::ifstream is(o.log);
    if (!is) throw Failure{kIo, "cannot read episode log " + o.log};
    std::optional<EpisodeRecord> logged;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        try {
            EpisodeRecord r = nlohmann::json::parse(line).get<EpisodeRecord>();
            if (r.episode == o.episode) {
                logged = r;
                break;
            }
        } catch (const std::exception& e) {
            throw Failure{kIo, "malformed episode log line: " + std::string(e.what())};
        }
    }
    if (!logged) throw Failure{kUsage, "episode " + std::to_string(o.episode) + " not found in " + o.log};

    std::vector<TracePoint> trace;
    const EpisodeRecord again = replay_episode(rc.env, *logged, &trace);

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (o.trace != "-") {
        file = open_out(o.trace);
        os = &file;
    }
    *os << "time,phase,x,z,vx,vz,pitch,pitch_rate,motor_front,motor_rear,tau,theta_x,d_ceil\n";
    char buf[512];
    for (const auto& p : trace) {
        const bool has = p.observation.has_value();
        std::snprintf(buf, sizeof(buf), "%.6f,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%s,%s\n", p.time,
                      p.phase.c_str(), p.position.x, p.position.z, p.velocity.x, p.velocity.z, p.pitch, p.pitch_rate,
                      p.motors.front, p.motors.rear, has ? std::to_string(p.observation->tau).c_str() : "",
                      has ? std::to_string(p.observation->theta_x).c_str() : "",
                      has ? std::to_string(p.observation->d_ceil).c_str() : "");
        *os << buf;
    }
    if (!o.observations.empty()) {
        std::ofstream obs = open_out(o.observations);
        write_observation_trace_csv(obs, rc.env, *logged);
    }

    const bool same = again.outcome == logged->outcome && again.reward == logged->reward;
    std::fprintf(o.trace == "-" ? stderr : stdout,
                 "replay: episode=%llu outcome=%s n_legs=%d body_contact=%d reward=%.17g matches_log=%s\n",
                 static_cast<unsigned long long>(o.episode), outcome_label(again.outcome).c_str(), again.outcome.n_legs,
                 again.outcome.body_contact ? 1 : 0, again.reward.total, same ? "true" : "false");
    if (!same) throw Failure{kReplayMismatch, "re-simulated outcome differs from the logged outcome"};
    return kOk;
}

// ---------------------------------------------------------------------------

struct ValidateOptions {
    CommonOptions common;
    bool print = false;
    bool list_keys = false;
};

int cmd_validate(const ValidateOptions& o) {
    if (o.list_keys) {
        for (const auto& f : config_fields()) {
            std::printf("%-32s %-10s %s\n", f.key.c_str(), f.unit.empty() ? "-" : f.unit.c_str(), f.help.c_str());
        }
        return kOk;
    }
    RunConfig rc = resolve(o.common);
    if (o.print) write_config(std::cout, rc);
    std::printf("config: ok\n");
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "perchlab: event-triggered inverted landing on a ceiling (planar quadrotor).\n"
        "Units: speeds m/s, angles deg, moments N m, times s.\n"
        "Exit codes: 0 ok, 2 usage, 3 unreadable config, 4 invalid config, 5 missing or bad checkpoint,\n"
        "6 runtime failure, 7 training diverged, 8 replay mismatch, 9 file output error.\n"
        "Errors print one line to stderr: perchlab: error code=<n> kind=<name> message=\"...\""};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Print help for every subcommand");

    TrainOptions train_o;
    auto* train_cmd = app.add_subcommand("train", "Train a policy; writes config.ini, train_stats.csv, episodes.jsonl, "
                                                  "checkpoints/ (periodic, final and best), policy.pol (final) and run.json into the output directory");
    add_common(train_cmd, train_o.common);
    train_cmd->add_option("--episodes", train_o.episodes, "Training episodes; overrides train.episodes");

    EvalOptions2 eval_o;
    auto* eval_cmd = app.add_subcommand("eval", "Run N episodes of one approach condition and print the outcome counts");
    add_common(eval_cmd, eval_o.common, false);
    eval_cmd->add_option("--checkpoint", eval_o.checkpoint, "Policy file (.pol), or a .ckpt with a sibling .pol")->required();
    eval_cmd->add_option("--v", eval_o.speed, "Approach speed [m/s]")->capture_default_str();
    eval_cmd->add_option("--phi", eval_o.angle, "Approach angle from horizontal [deg], in (0, 90]")->capture_default_str();
    eval_cmd->add_option("--n", eval_o.trials, "Number of episodes")->capture_default_str();
    eval_cmd->add_flag("--deterministic", eval_o.deterministic, "Act at the policy means instead of sampling");
    eval_cmd->add_option("--log", eval_o.log, "Write every episode record to this JSON-lines file");

    SweepOptions sweep_o;
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a policy over the speed/angle grid; writes landing_map.csv, "
                                                  "landing_map.json, policy_region.csv, episodes.jsonl, a copy of the policy (policy.pol) and run.json");
    add_common(sweep_cmd, sweep_o.common);
    sweep_cmd->add_option("--checkpoint", sweep_o.checkpoint, "Policy file (.pol), or a .ckpt with a sibling .pol")->required();
    sweep_cmd->add_option("--trials", sweep_o.trials, "Trials per grid cell; overrides sweep.trials");
    sweep_cmd->add_flag("--deterministic", sweep_o.deterministic, "Act at the policy means instead of sampling");
    sweep_cmd->add_option("--filter", sweep_o.filter, "Rows kept in policy_region.csv: any, four-leg, two-leg or fail")
        ->capture_default_str();

    ReplayOptions replay_o;
    auto* replay_cmd = app.add_subcommand(
        "replay", "Re-simulate one logged episode and emit its per-step state trace as CSV; fails with code 8 if "
                  "the outcome differs from the log. Uses config.ini next to the log unless --config is given");
    add_common(replay_cmd, replay_o.common, false);
    replay_cmd->add_option("--log", replay_o.log, "Episode log (JSON lines) written by train, eval or sweep")->required();
    replay_cmd->add_option("--episode", replay_o.episode, "Episode id to replay")->required();
    replay_cmd->add_option("--trace", replay_o.trace, "Trace CSV path; '-' for stdout")->capture_default_str();
    replay_cmd->add_option("--observations", replay_o.observations, "Also write the 100 Hz policy observations here");

    ValidateOptions validate_o;
    auto* validate_cmd = app.add_subcommand("validate-config", "Resolve and check a configuration");
    add_common(validate_cmd, validate_o.common, false);
    validate_cmd->add_flag("--print", validate_o.print, "Print the resolved configuration as INI");
    validate_cmd->add_flag("--list-keys", validate_o.list_keys, "List every config key with its unit and meaning");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report(kUsage, e.what());
    }

    try {
        if (*train_cmd) return cmd_train(train_o);
        if (*eval_cmd) return cmd_eval(eval_o);
        if (*sweep_cmd) return cmd_sweep(sweep_o);
        if (*replay_cmd) return cmd_replay(replay_o);
        if (*validate_cmd) return cmd_validate(validate_o);
    } catch (const Failure& f) {
        return report(f.code, f.message);
    } catch (const ConfigError& e) {
        return report(e.kind() == ConfigError::Kind::Unreadable ? kConfigUnreadable : kConfigInvalid, e.what());
    } catch (const std::exception& e) {
        return report(kRuntime, e.what());
    }
    return report(kUsage, "no subcommand");
}
