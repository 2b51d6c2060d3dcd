#pragma once

// Soft actor-critic with twin critics, target networks, entropy auto-tuning
// and a uniform replay buffer. Episodes carry their whole reward on the
// terminal transition; the bootstrapped targets propagate it backwards.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "perch/env.hpp"
#include "perch/nn/mlp.hpp"
#include "perch/policy.hpp"

namespace perch {

struct Transition {
    NormalizedObs obs{};
    std::array<double, kActDim> action{};  // squashed (a_trg, a_my)
    double reward = 0.0;
    NormalizedObs next_obs{};
    bool done = false;
    bool trigger = false;

    friend bool operator==(const Transition&, const Transition&) = default;
};

// Structure-of-arrays minibatch.
struct Batch {
    std::size_t size = 0;
    std::vector<double> obs;       // size x 3
    std::vector<double> action;    // size x 2
    std::vector<double> reward;    // size
    std::vector<double> next_obs;  // size x 3
    std::vector<double> done;      // size, 1.0 for terminal

    void resize(std::size_t n);
    void set(std::size_t i, const Transition& t);
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    // Overwrites the oldest entry once full.
    void push(const Transition& t);

    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    // i = 0 is the oldest stored transition.
    [[nodiscard]] const Transition& at(std::size_t i) const;

    // Uniform with replacement. Throws std::logic_error if size() < n.
    void sample(std::size_t n, std::mt19937_64& rng, Batch& out) const;

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> data_;
};

struct SacHyperparams {
    double gamma = 0.999;
    double polyak = 0.005;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    double lr_alpha = 3e-4;
    std::size_t batch_size = 256;
    std::size_t buffer_capacity = 100000;
    std::size_t hidden = 64;
    int warmup_episodes = 300;
    int updates_per_step = 1;
    // Extra updates at the end of short episodes so each episode gets at least this many.
    int min_updates_per_episode = 32;
    // Added to the initial trigger-mean bias; negative values start with a low trigger rate.
    double trigger_bias_init = -2.0;
    // A small fixed weight learns the landing task; tuning toward -2 nats
    // collapses the trigger head early.
    bool auto_entropy = false;
    double alpha = 0.002;  // fixed value, or the starting value when auto-tuned
    double target_entropy = -2.0;

    void validate() const;
    friend bool operator==(const SacHyperparams&, const SacHyperparams&) = default;
};

struct UpdateStats {
    double q1_loss = 0.0;
    double q2_loss = 0.0;
    double actor_loss = 0.0;
    double entropy = 0.0;  // -mean log pi on the batch
    double alpha = 0.0;
};

class SacAgent {
public:
    SacAgent(const SacHyperparams& hp, std::mt19937_64& init_rng);

    [[nodiscard]] const SacHyperparams& hyperparams() const { return hp_; }
    [[nodiscard]] double alpha() const;

    // Bootstrapped targets y; next-state actions use the supplied noise
    // (size x 2). Throws std::domain_error on a non-finite target.
    std::vector<double> critic_targets(const Batch& b, const std::vector<double>& next_eps) const;
    std::vector<double> critic_targets(const Batch& b, std::mt19937_64& rng) const;

    // mean((Q(o, a) - y)^2) and, if grad is non-null, its gradient.
    static double critic_loss(const nn::Mlp& q, const Batch& b, const std::vector<double>& y,
                              std::vector<double>* grad);

    // mean(alpha * log pi(a|o) - min Q(o, a)) with a = tanh(mu + sigma * eps).
    // Writes the policy-parameter gradient if grad is non-null and the mean
    // log-probability to mean_log_prob.
    double actor_loss(const Batch& b, const std::vector<double>& eps, std::vector<double>* grad,
                      double* mean_log_prob = nullptr) const;

    // -log_alpha * (mean_log_prob + target_entropy) and its derivative.
    [[nodiscard]] double alpha_loss(double mean_log_prob, double* grad = nullptr) const;

    std::pair<double, double> critic_update(const Batch& b, std::mt19937_64& rng);
    // Returns (loss, entropy estimate); also steps alpha when auto-tuned.
    std::pair<double, double> actor_update(const Batch& b, std::mt19937_64& rng);
    void soft_update_targets();

    // Full gradient step on one sampled minibatch.
    UpdateStats update(const ReplayBuffer& buffer, std::mt19937_64& rng);

    [[nodiscard]] long updates() const { return updates_; }

    void save(const std::filesystem::path& path) const;
    // Throws std::runtime_error on a missing, malformed or mismatched file.
    void load(const std::filesystem::path& path);

    PolicyParams policy;
    nn::Mlp q1, q2, q1_target, q2_target;
    nn::Adam policy_opt, q1_opt, q2_opt, alpha_opt;
    double log_alpha = 0.0;

    friend bool operator==(const SacAgent&, const SacAgent&) = default;

private:
    SacHyperparams hp_;
    long updates_ = 0;
};

// Episodic task driven by the policy's sampled actions.
class Task {
public:
    virtual ~Task() = default;
    virtual NormalizedObs reset(std::mt19937_64& rng, std::uint64_t episode) = 0;

    struct Step {
        NormalizedObs obs{};
        double reward = 0.0;
        bool done = false;
    };
    virtual Step step(const ActionSample& action) = 0;
};

class LandingTask final : public Task {
public:
    explicit LandingTask(EnvConfig config);
    NormalizedObs reset(std::mt19937_64& rng, std::uint64_t episode) override;
    Step step(const ActionSample& action) override;
    [[nodiscard]] const LandingEnv& env() const { return env_; }

private:
    LandingEnv env_;
};

// One-step diagnostic: the trigger is forced and the reward is
// 1 - |a_my - 0.5|; observations are uniform on [-1, 1]^3.
class ToyTriggerTask final : public Task {
public:
    NormalizedObs reset(std::mt19937_64& rng, std::uint64_t episode) override;
    Step step(const ActionSample& action) override;
};

struct TrainConfig {
    SacHyperparams sac;
    int episodes = 3000;
    std::uint64_t seed = 1;
    int rolling_window = 100;
    int checkpoint_every = 500;   // episodes; 0 disables periodic checkpoints
    std::filesystem::path out_dir; // empty: no files written
    double threshold = 0.0;
    SensingParams sensing;  // recorded in exported policy files

    void validate() const;
};

struct EpisodeStats {
    int episode = 0;
    double reward = 0.0;
    double rolling_mean = 0.0;
    int steps = 0;
    bool triggered = false;
    int n_legs = 0;
    UpdateStats update;  // averaged over the updates made during the episode
    int updates = 0;
};

struct TrainResult {
    std::unique_ptr<SacAgent> agent;
    std::vector<EpisodeStats> stats;
    // Policy at the highest full-window rolling mean, and that episode (-1 if
    // the window never filled).
    PolicyParams best_policy;
    int best_episode = -1;
    // First episode at which the rolling mean over a full window reached the
    // requested level, or -1.
    [[nodiscard]] int first_reaching(double level, int window) const;
    [[nodiscard]] double best_rolling_mean() const;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Called after each episode; return false to stop early.
using EpisodeCallback = std::function<bool(const EpisodeStats&)>;

// Deterministic given config.seed. With out_dir set, writes train_stats.csv,
// episodes.jsonl (landing task only) and checkpoints/<name>.{ckpt,pol}
// every checkpoint_every episodes, at the end (name "final") and the best
// full-window rolling mean (name "best", policy file only).
TrainResult train(const TrainConfig& config, Task& task, const EpisodeCallback& on_episode = {});

void write_stats_header(std::ostream& os);
void write_stats_row(std::ostream& os, const EpisodeStats& s);

}  // namespace perch
