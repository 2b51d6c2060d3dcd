#include "perch/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "perch/nn/kernels.hpp"

namespace perch {

namespace {

[[noreturn]] void invalid(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError(ConfigError::Kind::Invalid,
                      "config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* expected) {
    const std::string t = trim(text);
    T v{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) invalid(key, text, expected);
    return v;
}

// Shortest text that reads back to the same double.
std::string format(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, end};
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    invalid(key, text, "a boolean");
}

template <typename Acc>
ConfigField real(std::string key, std::string unit, std::string help, Acc acc, double scale = 1.0) {
    return {key, std::move(unit), std::move(help),
            [acc, scale](const RunConfig& c) { return format(acc(const_cast<RunConfig&>(c)) / scale); },
            [acc, key, scale](RunConfig& c, const std::string& v) {
                acc(c) = parse_number<double>(key, v, "a number") * scale;
            }};
}

template <typename T, typename Acc>
ConfigField integer(std::string key, std::string unit, std::string help, Acc acc) {
    return {key, std::move(unit), std::move(help),
            [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); },
            [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_number<T>(key, v, "an integer"); }};
}

template <typename Acc>
ConfigField boolean(std::string key, std::string help, Acc acc) {
    return {key, "", std::move(help),
            [acc](const RunConfig& c) { return std::string(acc(const_cast<RunConfig&>(c)) ? "true" : "false"); },
            [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_bool(key, v); }};
}

template <typename Acc>
ConfigField text(std::string key, std::string help, Acc acc) {
    return {key, "", std::move(help), [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); },
            [acc](RunConfig& c, const std::string& v) { acc(c) = trim(v); }};
}

std::vector<ConfigField> build_fields() {
    std::vector<ConfigField> f;
    // run
    f.push_back(text("run.seed", "master seed, or 'auto'", [](RunConfig& c) -> std::string& { return c.seed; }));
    f.push_back(text("run.out_dir", "output directory", [](RunConfig& c) -> std::string& { return c.out_dir; }));
    f.push_back(integer<int>("run.workers", "threads", "worker threads (0: all cores for sweeps, 1 for training)",
                             [](RunConfig& c) -> int& { return c.workers; }));
    f.push_back(text("run.kernels", "auto, scalar or avx2", [](RunConfig& c) -> std::string& { return c.kernels; }));
    // vehicle
    f.push_back(real("vehicle.mass", "kg", "nominal mass", [](RunConfig& c) -> double& { return c.env.vehicle.mass; }));
    f.push_back(real("vehicle.inertia_yy", "kg m^2", "nominal pitch inertia",
                     [](RunConfig& c) -> double& { return c.env.vehicle.inertia_yy; }));
    f.push_back(real("vehicle.arm_length", "m", "rotor pair offset from the center of mass",
                     [](RunConfig& c) -> double& { return c.env.vehicle.arm_length; }));
    f.push_back(real("vehicle.max_thrust_per_pair", "N", "thrust of one rotor pair at full speed",
                     [](RunConfig& c) -> double& { return c.env.vehicle.max_thrust_per_pair; }));
    f.push_back(real("vehicle.motor_time_constant", "s", "first-order motor lag",
                     [](RunConfig& c) -> double& { return c.env.vehicle.motor_time_constant; }));
    // world
    f.push_back(real("world.ceiling_height", "m", "ceiling plane height",
                     [](RunConfig& c) -> double& { return c.env.world.ceiling_height; }));
    f.push_back(real("world.gravity", "m/s^2", "gravitational acceleration",
                     [](RunConfig& c) -> double& { return c.env.world.gravity; }));
    // legs
    f.push_back(real("legs.fore_attach_x", "m", "fore leg mount, body x",
                     [](RunConfig& c) -> double& { return c.env.legs.fore_attach.x; }));
    f.push_back(real("legs.fore_attach_z", "m", "fore leg mount, body z",
                     [](RunConfig& c) -> double& { return c.env.legs.fore_attach.z; }));
    f.push_back(real("legs.hind_attach_x", "m", "hind leg mount, body x",
                     [](RunConfig& c) -> double& { return c.env.legs.hind_attach.x; }));
    f.push_back(real("legs.hind_attach_z", "m", "hind leg mount, body z",
                     [](RunConfig& c) -> double& { return c.env.legs.hind_attach.z; }));
    f.push_back(real("legs.leg_length", "m", "leg length", [](RunConfig& c) -> double& { return c.env.legs.leg_length; }));
    f.push_back(real("legs.mount_angle", "deg", "leg splay from the body -z axis",
                     [](RunConfig& c) -> double& { return c.env.legs.mount_angle; }, kDeg));
    f.push_back(real("legs.body_radius", "m", "body and propeller collision radius",
                     [](RunConfig& c) -> double& { return c.env.legs.body_radius; }));
    // sensing
    f.push_back(real("sensing.tau_cap", "s", "upper clip of time-to-contact",
                     [](RunConfig& c) -> double& { return c.env.sensing.tau_cap; }));
    f.push_back(real("sensing.tau_scale", "s", "tau normalization", [](RunConfig& c) -> double& { return c.env.sensing.tau_scale; }));
    f.push_back(real("sensing.theta_x_scale", "1/s", "theta_x normalization",
                     [](RunConfig& c) -> double& { return c.env.sensing.theta_x_scale; }));
    f.push_back(real("sensing.d_ceil_scale", "m", "d_ceil normalization",
                     [](RunConfig& c) -> double& { return c.env.sensing.d_ceil_scale; }));
    f.push_back(real("sensing.tau_noise", "s", "tau noise std (0 disables)",
                     [](RunConfig& c) -> double& { return c.env.sensing.tau_noise; }));
    f.push_back(real("sensing.theta_x_noise", "1/s", "theta_x noise std (0 disables)",
                     [](RunConfig& c) -> double& { return c.env.sensing.theta_x_noise; }));
    f.push_back(real("sensing.d_ceil_noise", "m", "d_ceil noise std (0 disables)",
                     [](RunConfig& c) -> double& { return c.env.sensing.d_ceil_noise; }));
    // reward
    f.push_back(real("reward.c0", "1/m", "distance reward saturation", [](RunConfig& c) -> double& { return c.env.reward.c0; }));
    f.push_back(real("reward.c1", "1/s", "tau reward saturation", [](RunConfig& c) -> double& { return c.env.reward.c1; }));
    f.push_back(real("reward.w_d", "", "distance weight", [](RunConfig& c) -> double& { return c.env.reward.w_d; }));
    f.push_back(real("reward.w_tau", "", "tau weight", [](RunConfig& c) -> double& { return c.env.reward.w_tau; }));
    f.push_back(real("reward.w_theta", "", "impact angle weight", [](RunConfig& c) -> double& { return c.env.reward.w_theta; }));
    f.push_back(real("reward.w_legs", "", "leg count weight", [](RunConfig& c) -> double& { return c.env.reward.w_legs; }));
    f.push_back(real("reward.body_contact_divisor", "", "leg reward divisor on body contact",
                     [](RunConfig& c) -> double& { return c.env.reward.body_contact_divisor; }));
    f.push_back(real("reward.tau_target", "s", "center of the tau plateau",
                     [](RunConfig& c) -> double& { return c.env.reward.tau_target; }));
    f.push_back(real("reward.theta_saturation", "deg", "impact angle at full reward",
                     [](RunConfig& c) -> double& { return c.env.reward.theta_saturation; }));
    // randomization
    f.push_back(real("randomization.mass_sigma", "kg", "mass std", [](RunConfig& c) -> double& { return c.env.randomization.mass_sigma; }));
    f.push_back(real("randomization.inertia_sigma", "kg m^2", "pitch inertia std",
                     [](RunConfig& c) -> double& { return c.env.randomization.inertia_sigma; }));
    // approach
    f.push_back(real("approach.speed_min", "m/s", "training speed lower bound",
                     [](RunConfig& c) -> double& { return c.env.approach.speed_min; }));
    f.push_back(real("approach.speed_max", "m/s", "training speed upper bound",
                     [](RunConfig& c) -> double& { return c.env.approach.speed_max; }));
    f.push_back(real("approach.angle_min", "deg", "training angle lower bound",
                     [](RunConfig& c) -> double& { return c.env.approach.angle_min_deg; }));
    f.push_back(real("approach.angle_max", "deg", "training angle upper bound",
                     [](RunConfig& c) -> double& { return c.env.approach.angle_max_deg; }));
    // episode
    f.push_back(real("episode.physics_dt", "s", "integration step", [](RunConfig& c) -> double& { return c.env.physics_dt; }));
    f.push_back(real("episode.control_dt", "s", "policy period", [](RunConfig& c) -> double& { return c.env.control_dt; }));
    f.push_back(real("episode.trigger_threshold", "", "squashed trigger threshold, |th| < 1",
                     [](RunConfig& c) -> double& { return c.env.trigger_threshold; }));
    f.push_back(real("episode.start_min_distance", "m", "minimum start distance below the ceiling",
                     [](RunConfig& c) -> double& { return c.env.start_min_distance; }));
    f.push_back(real("episode.start_lead_time", "s", "start distance per unit vertical speed",
                     [](RunConfig& c) -> double& { return c.env.start_lead_time; }));
    f.push_back(real("episode.start_margin", "m", "start distance margin",
                     [](RunConfig& c) -> double& { return c.env.start_margin; }));
    f.push_back(real("episode.approach_timeout", "s", "episode limit without a trigger",
                     [](RunConfig& c) -> double& { return c.env.approach_timeout; }));
    f.push_back(real("episode.post_trigger_timeout", "s", "rollout limit after the trigger",
                     [](RunConfig& c) -> double& { return c.env.post_trigger_timeout; }));
    // sac
    f.push_back(real("sac.gamma", "", "discount", [](RunConfig& c) -> double& { return c.sac.gamma; }));
    f.push_back(real("sac.polyak", "", "target smoothing rate", [](RunConfig& c) -> double& { return c.sac.polyak; }));
    f.push_back(real("sac.lr_actor", "", "actor learning rate", [](RunConfig& c) -> double& { return c.sac.lr_actor; }));
    f.push_back(real("sac.lr_critic", "", "critic learning rate", [](RunConfig& c) -> double& { return c.sac.lr_critic; }));
    f.push_back(real("sac.lr_alpha", "", "entropy coefficient learning rate", [](RunConfig& c) -> double& { return c.sac.lr_alpha; }));
    f.push_back(integer<std::size_t>("sac.batch_size", "transitions", "minibatch size",
                                     [](RunConfig& c) -> std::size_t& { return c.sac.batch_size; }));
    f.push_back(integer<std::size_t>("sac.buffer_capacity", "transitions", "replay capacity",
                                     [](RunConfig& c) -> std::size_t& { return c.sac.buffer_capacity; }));
    f.push_back(integer<std::size_t>("sac.hidden", "units", "hidden layer width",
                                     [](RunConfig& c) -> std::size_t& { return c.sac.hidden; }));
    f.push_back(integer<int>("sac.warmup_episodes", "episodes", "uniform-random episodes before learning",
                             [](RunConfig& c) -> int& { return c.sac.warmup_episodes; }));
    f.push_back(integer<int>("sac.updates_per_step", "", "gradient steps per environment step",
                             [](RunConfig& c) -> int& { return c.sac.updates_per_step; }));
    f.push_back(integer<int>("sac.min_updates_per_episode", "", "top-up gradient steps so every episode gets at least this many",
                             [](RunConfig& c) -> int& { return c.sac.min_updates_per_episode; }));
    f.push_back(real("sac.trigger_bias_init", "", "offset added to the initial trigger-mean bias",
                     [](RunConfig& c) -> double& { return c.sac.trigger_bias_init; }));
    f.push_back(boolean("sac.auto_entropy", "tune the entropy coefficient", [](RunConfig& c) -> bool& { return c.sac.auto_entropy; }));
    f.push_back(real("sac.alpha", "", "entropy coefficient (initial value when tuned)",
                     [](RunConfig& c) -> double& { return c.sac.alpha; }));
    f.push_back(real("sac.target_entropy", "nats", "entropy target for tuning",
                     [](RunConfig& c) -> double& { return c.sac.target_entropy; }));
    // train
    f.push_back(integer<int>("train.episodes", "episodes", "training length", [](RunConfig& c) -> int& { return c.episodes; }));
    f.push_back(integer<int>("train.rolling_window", "episodes", "rolling mean window",
                             [](RunConfig& c) -> int& { return c.rolling_window; }));
    f.push_back(integer<int>("train.checkpoint_every", "episodes", "checkpoint interval (0 disables)",
                             [](RunConfig& c) -> int& { return c.checkpoint_every; }));
    // sweep
    f.push_back(real("sweep.speed_min", "m/s", "first grid speed", [](RunConfig& c) -> double& { return c.sweep.speed_min; }));
    f.push_back(real("sweep.speed_max", "m/s", "last grid speed", [](RunConfig& c) -> double& { return c.sweep.speed_max; }));
    f.push_back(real("sweep.speed_step", "m/s", "grid speed step", [](RunConfig& c) -> double& { return c.sweep.speed_step; }));
    f.push_back(real("sweep.angle_min", "deg", "first grid angle", [](RunConfig& c) -> double& { return c.sweep.angle_min; }));
    f.push_back(real("sweep.angle_max", "deg", "last grid angle", [](RunConfig& c) -> double& { return c.sweep.angle_max; }));
    f.push_back(real("sweep.angle_step", "deg", "grid angle step", [](RunConfig& c) -> double& { return c.sweep.angle_step; }));
    f.push_back(integer<int>("sweep.trials", "episodes", "trials per grid cell", [](RunConfig& c) -> int& { return c.sweep.trials; }));
    f.push_back(boolean("sweep.deterministic", "act at the policy means instead of sampling",
                        [](RunConfig& c) -> bool& { return c.sweep.deterministic; }));
    return f;
}

const ConfigField& find_field(const std::string& key) {
    for (const auto& f : config_fields()) {
        if (f.key == key) return f;
    }
    throw ConfigError(ConfigError::Kind::Invalid, "unknown config key '" + key + "'");
}

}  // namespace

SweepGrid SweepSpec::grid() const {
    try {
        return {SweepGrid::range(speed_min, speed_max, speed_step), SweepGrid::range(angle_min, angle_max, angle_step), trials};
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ConfigError::Kind::Invalid, std::string("sweep grid: ") + e.what());
    }
}

std::uint64_t RunConfig::resolve_seed() {
    if (trim(seed) == "auto") {
        std::random_device rd;
        const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        seed = std::to_string(s);
    }
    return seed_value();
}

std::uint64_t RunConfig::seed_value() const {
    return parse_number<std::uint64_t>("run.seed", seed, "an unsigned integer or 'auto'");
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.sac = sac;
    t.episodes = episodes;
    t.seed = seed_value();
    t.rolling_window = rolling_window;
    t.checkpoint_every = checkpoint_every;
    t.threshold = env.trigger_threshold;
    t.sensing = env.sensing;
    return t;
}

void RunConfig::validate() const {
    try {
        env.validate();
        sac.validate();
        if (trim(seed) != "auto") static_cast<void>(seed_value());
        if (workers < 0) throw std::invalid_argument("workers must be non-negative");
        if (out_dir.empty()) throw std::invalid_argument("out_dir must not be empty");
        static_cast<void>(nn::parse_kernel_mode(kernels));
        TrainConfig t;
        t.sac = sac;
        t.episodes = episodes;
        t.rolling_window = rolling_window;
        t.checkpoint_every = checkpoint_every;
        t.threshold = env.trigger_threshold;
        t.validate();
        sweep.grid().validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(ConfigError::Kind::Invalid, e.what());
    }
}

const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = build_fields();
    return fields;
}

void merge_config_file(RunConfig& base, const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(ConfigError::Kind::Unreadable, "cannot read config file " + path.string());
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(ConfigError::Kind::Invalid, "config file " + path.string() + ": " + e.message() +
                                                          " (line " + std::to_string(e.line()) + ")");
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError(ConfigError::Kind::Invalid, "config key '" + section + "' is outside any [section]");
        }
        for (const auto& [name, value] : body) {
            find_field(section + "." + name).set(base, value.data());
        }
    }
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError(ConfigError::Kind::Invalid, "override '" + assignment + "' is not of the form section.key=value");
    }
    find_field(trim(assignment.substr(0, eq))).set(config, assignment.substr(eq + 1));
}

void write_config(std::ostream& os, const RunConfig& config) {
    std::string current;
    for (const auto& f : config_fields()) {
        const auto dot = f.key.find('.');
        const std::string section = f.key.substr(0, dot);
        if (section != current) {
            if (!current.empty()) os << '\n';
            os << '[' << section << "]\n";
            current = section;
        }
        os << "; " << f.help;
        if (!f.unit.empty()) os << " [" << f.unit << ']';
        os << '\n' << f.key.substr(dot + 1) << " = " << f.get(config) << '\n';
    }
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_config(os, config);
}

}  // namespace perch
