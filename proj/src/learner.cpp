#include "perch/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "perch/nn/serialize.hpp"
#include "perch/rng.hpp"

namespace perch {

namespace {

constexpr std::size_t kCriticIn = kObsDim + kActDim;

void draw_normals(std::vector<double>& out, std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    out.resize(n);
    for (double& v : out) v = n01(rng);
}

// Rows of [obs | action].
void critic_inputs(const std::vector<double>& obs, const std::vector<double>& act, std::size_t n,
                   std::vector<double>& out) {
    out.resize(n * kCriticIn);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * kCriticIn;
        std::copy_n(obs.data() + i * kObsDim, kObsDim, row);
        std::copy_n(act.data() + i * kActDim, kActDim, row + kObsDim);
    }
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<double> adam_state(const nn::Adam& a) {
    std::vector<double> out;
    out.reserve(1 + a.m.size() + a.v.size());
    out.push_back(static_cast<double>(a.step));
    out.insert(out.end(), a.m.begin(), a.m.end());
    out.insert(out.end(), a.v.begin(), a.v.end());
    return out;
}

void restore_adam(nn::Adam& a, const std::vector<double>& s, std::size_t n) {
    if (s.size() != 1 + 2 * n) throw std::runtime_error("checkpoint: optimizer state has the wrong size");
    a.step = static_cast<long>(s[0]);
    a.m.assign(s.begin() + 1, s.begin() + 1 + static_cast<std::ptrdiff_t>(n));
    a.v.assign(s.begin() + 1 + static_cast<std::ptrdiff_t>(n), s.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// Replay

void Batch::resize(std::size_t n) {
    size = n;
    obs.resize(n * kObsDim);
    action.resize(n * kActDim);
    reward.resize(n);
    next_obs.resize(n * kObsDim);
    done.resize(n);
}

void Batch::set(std::size_t i, const Transition& t) {
    std::copy(t.obs.begin(), t.obs.end(), obs.begin() + static_cast<std::ptrdiff_t>(i * kObsDim));
    std::copy(t.action.begin(), t.action.end(), action.begin() + static_cast<std::ptrdiff_t>(i * kActDim));
    reward[i] = t.reward;
    std::copy(t.next_obs.begin(), t.next_obs.end(), next_obs.begin() + static_cast<std::ptrdiff_t>(i * kObsDim));
    done[i] = t.done ? 1.0 : 0.0;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 20));
}

void ReplayBuffer::push(const Transition& t) {
    if (data_.size() < capacity_) {
        data_.push_back(t);
        return;
    }
    data_[cursor_] = t;
    cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= data_.size()) throw std::out_of_range("replay buffer index");
    return data_[(cursor_ + i) % data_.size()];
}

void ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng, Batch& out) const {
    if (data_.size() < n || n == 0) throw std::logic_error("replay buffer holds fewer transitions than the batch size");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.set(i, data_[pick(rng)]);
}

// ---------------------------------------------------------------------------
// Agent

void SacHyperparams::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (!(polyak > 0.0 && polyak <= 1.0)) throw std::invalid_argument("polyak must lie in (0, 1]");
    if (!(lr_actor > 0.0 && lr_critic > 0.0 && lr_alpha > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (batch_size == 0 || hidden == 0) throw std::invalid_argument("batch size and hidden width must be positive");
    if (buffer_capacity < batch_size) throw std::invalid_argument("buffer capacity must be at least the batch size");
    if (warmup_episodes < 0 || updates_per_step < 0 || min_updates_per_episode < 0) throw std::invalid_argument("warmup and update counts must be non-negative");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and non-negative");
    if (auto_entropy && !(alpha > 0.0)) throw std::invalid_argument("auto-tuned alpha needs a positive starting value");
    if (!std::isfinite(trigger_bias_init)) throw std::invalid_argument("trigger bias must be finite");
    if (!std::isfinite(target_entropy)) throw std::invalid_argument("target entropy must be finite");
}

SacAgent::SacAgent(const SacHyperparams& hp, std::mt19937_64& init_rng) : hp_(hp) {
    hp_.validate();
    policy = PolicyParams::create(init_rng, hp_.hidden);
    policy.net.params()[policy.net.num_params() - 4] += hp_.trigger_bias_init;
    q1 = nn::Mlp({kCriticIn, hp_.hidden, hp_.hidden, 1});
    q2 = q1;
    q1.init(init_rng);
    q2.init(init_rng);
    q1_target = q1;
    q2_target = q2;
    policy_opt.lr = hp_.lr_actor;
    q1_opt.lr = hp_.lr_critic;
    q2_opt.lr = hp_.lr_critic;
    alpha_opt.lr = hp_.lr_alpha;
    policy_opt.reset(policy.net.num_params());
    q1_opt.reset(q1.num_params());
    q2_opt.reset(q2.num_params());
    alpha_opt.reset(1);
    log_alpha = hp_.alpha > 0.0 ? std::log(hp_.alpha) : 0.0;
}

double SacAgent::alpha() const {
    if (!hp_.auto_entropy) return hp_.alpha;
    return std::exp(log_alpha);
}

std::vector<double> SacAgent::critic_targets(const Batch& b, const std::vector<double>& next_eps) const {
    const std::size_t n = b.size;
    if (next_eps.size() != n * kActDim) throw std::invalid_argument("critic_targets: noise size mismatch");
    const double a = alpha();

    nn::Mlp::Workspace wp, w1, w2;
    const double* raw = policy.net.forward(b.next_obs.data(), n, wp);
    std::vector<double> next_act(n * kActDim), next_logp(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ReparamSample s = reparam_sample(raw + 4 * i, {next_eps[2 * i], next_eps[2 * i + 1]});
        next_act[2 * i] = s.a[0];
        next_act[2 * i + 1] = s.a[1];
        next_logp[i] = s.log_prob;
    }
    std::vector<double> in;
    critic_inputs(b.next_obs, next_act, n, in);
    const double* t1 = q1_target.forward(in.data(), n, w1);
    const double* t2 = q2_target.forward(in.data(), n, w2);

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (b.done[i] != 0.0) {
            y[i] = b.reward[i];
        } else {
            y[i] = b.reward[i] + hp_.gamma * (std::min(t1[i], t2[i]) - a * next_logp[i]);
        }
        if (!std::isfinite(y[i])) {
            std::ostringstream msg;
            msg << "non-finite critic target at row " << i << ": r=" << b.reward[i] << " q1'=" << t1[i]
                << " q2'=" << t2[i] << " logp'=" << next_logp[i] << " alpha=" << a;
            throw std::domain_error(msg.str());
        }
    }
    return y;
}

std::vector<double> SacAgent::critic_targets(const Batch& b, std::mt19937_64& rng) const {
    std::vector<double> eps;
    draw_normals(eps, b.size * kActDim, rng);
    return critic_targets(b, eps);
}

double SacAgent::critic_loss(const nn::Mlp& q, const Batch& b, const std::vector<double>& y,
                             std::vector<double>* grad) {
    const std::size_t n = b.size;
    std::vector<double> in;
    critic_inputs(b.obs, b.action, n, in);
    nn::Mlp::Workspace ws;
    const double* out = q.forward(in.data(), n, ws);
    double loss = 0.0;
    std::vector<double> d(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = out[i] - y[i];
        loss += e * e;
        d[i] = 2.0 * e * inv_n;
    }
    loss *= inv_n;
    if (grad != nullptr) {
        grad->assign(q.num_params(), 0.0);
        q.backward(ws, d.data(), grad->data(), nullptr);
    }
    return loss;
}

double SacAgent::actor_loss(const Batch& b, const std::vector<double>& eps, std::vector<double>* grad,
                            double* mean_log_prob) const {
    const std::size_t n = b.size;
    if (eps.size() != n * kActDim) throw std::invalid_argument("actor_loss: noise size mismatch");
    const double a = alpha();
    const double inv_n = 1.0 / static_cast<double>(n);

    nn::Mlp::Workspace wp, w1, w2;
    const double* raw = policy.net.forward(b.obs.data(), n, wp);
    std::vector<ReparamSample> rs(n);
    std::vector<double> act(n * kActDim);
    double logp_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rs[i] = reparam_sample(raw + 4 * i, {eps[2 * i], eps[2 * i + 1]});
        act[2 * i] = rs[i].a[0];
        act[2 * i + 1] = rs[i].a[1];
        logp_sum += rs[i].log_prob;
    }
    std::vector<double> in;
    critic_inputs(b.obs, act, n, in);
    const double* o1 = q1.forward(in.data(), n, w1);
    const double* o2 = q2.forward(in.data(), n, w2);

    double loss = 0.0;
    std::vector<double> d1(n, 0.0), d2(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const bool first = o1[i] <= o2[i];
        loss += a * rs[i].log_prob - (first ? o1[i] : o2[i]);
        (first ? d1 : d2)[i] = -inv_n;
    }
    loss *= inv_n;
    if (mean_log_prob != nullptr) *mean_log_prob = logp_sum * inv_n;
    if (grad == nullptr) return loss;

    // dL/da through whichever critic was the minimum.
    std::vector<double> scratch(q1.num_params());
    std::vector<double> din1(n * kCriticIn), din2(n * kCriticIn);
    q1.backward(w1, d1.data(), scratch.data(), din1.data());
    q2.backward(w2, d2.data(), scratch.data(), din2.data());

    std::vector<double> d_raw(n * 4);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kActDim; ++j) {
            const double dl_da = din1[i * kCriticIn + kObsDim + j] + din2[i * kCriticIn + kObsDim + j];
            d_raw[4 * i + 2 * j] = a * inv_n * rs[i].dlogp_dmu[j] + dl_da * rs[i].da_dmu[j];
            d_raw[4 * i + 2 * j + 1] = a * inv_n * rs[i].dlogp_dlogstd[j] + dl_da * rs[i].da_dlogstd[j];
        }
    }
    grad->assign(policy.net.num_params(), 0.0);
    policy.net.backward(wp, d_raw.data(), grad->data(), nullptr);
    return loss;
}

double SacAgent::alpha_loss(double mean_log_prob, double* grad) const {
    const double g = -(mean_log_prob + hp_.target_entropy);
    if (grad != nullptr) *grad = g;
    return log_alpha * g;
}

std::pair<double, double> SacAgent::critic_update(const Batch& b, std::mt19937_64& rng) {
    const std::vector<double> y = critic_targets(b, rng);
    std::vector<double> g;
    const double l1 = critic_loss(q1, b, y, &g);
    if (!all_finite(g)) throw std::domain_error("non-finite gradient in critic 1");
    q1_opt.update(q1.params(), g);
    const double l2 = critic_loss(q2, b, y, &g);
    if (!all_finite(g)) throw std::domain_error("non-finite gradient in critic 2");
    q2_opt.update(q2.params(), g);
    return {l1, l2};
}

std::pair<double, double> SacAgent::actor_update(const Batch& b, std::mt19937_64& rng) {
    std::vector<double> eps;
    draw_normals(eps, b.size * kActDim, rng);
    std::vector<double> g;
    double mean_logp = 0.0;
    const double loss = actor_loss(b, eps, &g, &mean_logp);
    if (!all_finite(g)) throw std::domain_error("non-finite gradient in actor");
    policy_opt.update(policy.net.params(), g);
    if (hp_.auto_entropy) {
        double ga = 0.0;
        static_cast<void>(alpha_loss(mean_logp, &ga));
        alpha_opt.update(std::span<double>(&log_alpha, 1), std::span<const double>(&ga, 1));
    }
    return {loss, -mean_logp};
}

void SacAgent::soft_update_targets() {
    nn::soft_update(q1_target, q1, hp_.polyak);
    nn::soft_update(q2_target, q2, hp_.polyak);
}

UpdateStats SacAgent::update(const ReplayBuffer& buffer, std::mt19937_64& rng) {
    thread_local Batch batch;
    buffer.sample(hp_.batch_size, rng, batch);
    UpdateStats s;
    s.alpha = alpha();
    std::tie(s.q1_loss, s.q2_loss) = critic_update(batch, rng);
    std::tie(s.actor_loss, s.entropy) = actor_update(batch, rng);
    soft_update_targets();
    ++updates_;
    return s;
}

void SacAgent::save(const std::filesystem::path& path) const {
    nn::WeightArchive ar;
    ar.put_network("policy", policy.net);
    ar.put_network("q1", q1);
    ar.put_network("q2", q2);
    ar.put_network("q1_target", q1_target);
    ar.put_network("q2_target", q2_target);
    ar.put_vector("adam.policy", adam_state(policy_opt));
    ar.put_vector("adam.q1", adam_state(q1_opt));
    ar.put_vector("adam.q2", adam_state(q2_opt));
    ar.put_vector("adam.alpha", adam_state(alpha_opt));
    ar.put_vector("log_alpha", {log_alpha});
    ar.put_vector("updates", {static_cast<double>(updates_)});
    ar.save(path);

    const nlohmann::json side{
        {"format", "perch-checkpoint"},
        {"version", nn::kFormatVersion},
        {"updates", updates_},
        {"alpha", alpha()},
        {"gamma", hp_.gamma},
        {"hidden", hp_.hidden},
        {"auto_entropy", hp_.auto_entropy},
        {"target_entropy", hp_.target_entropy},
    };
    std::ofstream os(path.string() + ".json");
    if (!os) throw std::runtime_error("cannot write checkpoint sidecar for " + path.string());
    os << side.dump(2) << '\n';
}

void SacAgent::load(const std::filesystem::path& path) {
    const nn::WeightArchive ar = nn::WeightArchive::load(path);
    auto net = [&](const char* name, const nn::Mlp& like) {
        nn::Mlp m = ar.network(name);
        if (m.sizes() != like.sizes()) throw std::runtime_error(std::string("checkpoint: network '") + name + "' has a different shape");
        return m;
    };
    policy.net = net("policy", policy.net);
    q1 = net("q1", q1);
    q2 = net("q2", q2);
    q1_target = net("q1_target", q1_target);
    q2_target = net("q2_target", q2_target);
    restore_adam(policy_opt, ar.vector("adam.policy"), policy.net.num_params());
    restore_adam(q1_opt, ar.vector("adam.q1"), q1.num_params());
    restore_adam(q2_opt, ar.vector("adam.q2"), q2.num_params());
    restore_adam(alpha_opt, ar.vector("adam.alpha"), 1);
    log_alpha = ar.vector("log_alpha").at(0);
    updates_ = static_cast<long>(ar.vector("updates").at(0));
}

// ---------------------------------------------------------------------------
// Tasks

LandingTask::LandingTask(EnvConfig config) : env_(std::move(config)) {}

NormalizedObs LandingTask::reset(std::mt19937_64& rng, std::uint64_t episode) {
    env_.set_episode_id(episode);
    return normalize(env_.reset(rng), env_.config().sensing);
}

Task::Step LandingTask::step(const ActionSample& action) {
    const StepResult r = env_.step(to_step_action(action));
    return {normalize(r.observation, env_.config().sensing), r.reward, r.done};
}

NormalizedObs ToyTriggerTask::reset(std::mt19937_64& rng, std::uint64_t) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    NormalizedObs o{};
    for (double& v : o) v = u(rng);
    return o;
}

Task::Step ToyTriggerTask::step(const ActionSample& action) {
    return {NormalizedObs{}, 1.0 - std::abs(action.a_my - 0.5), true};
}

// ---------------------------------------------------------------------------
// Training loop

void TrainConfig::validate() const {
    sac.validate();
    if (episodes <= 0) throw std::invalid_argument("episodes must be positive");
    if (rolling_window <= 0) throw std::invalid_argument("rolling window must be positive");
    if (checkpoint_every < 0) throw std::invalid_argument("checkpoint interval must be non-negative");
    if (!(std::abs(threshold) < 1.0)) throw std::invalid_argument("trigger threshold must satisfy |th| < 1");
}

int TrainResult::first_reaching(double level, int window) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        sum += stats[i].reward;
        if (i >= static_cast<std::size_t>(window)) sum -= stats[i - window].reward;
        if (i + 1 >= static_cast<std::size_t>(window) && sum / window >= level) return stats[i].episode;
    }
    return -1;
}

double TrainResult::best_rolling_mean() const {
    if (best_episode >= 0) return stats[static_cast<std::size_t>(best_episode)].rolling_mean;
    double best = 0.0;
    for (const auto& s : stats) best = std::max(best, s.rolling_mean);
    return best;
}

void write_stats_header(std::ostream& os) {
    os << "episode,reward,rolling_mean,steps,triggered,n_legs,updates,q1_loss,q2_loss,actor_loss,entropy,alpha\n";
}

void write_stats_row(std::ostream& os, const EpisodeStats& s) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.episode,
                  s.reward, s.rolling_mean, s.steps, s.triggered ? 1 : 0, s.n_legs, s.updates, s.update.q1_loss,
                  s.update.q2_loss, s.update.actor_loss, s.update.entropy, s.update.alpha);
    os << buf;
}

TrainResult train(const TrainConfig& config, Task& task, const EpisodeCallback& on_episode) {
    config.validate();
    const SacHyperparams& hp = config.sac;

    TrainResult result;
    {
        std::mt19937_64 init_rng = make_stream(config.seed, {0});
        result.agent = std::make_unique<SacAgent>(hp, init_rng);
    }
    SacAgent& agent = *result.agent;
    ReplayBuffer buffer(hp.buffer_capacity);
    std::mt19937_64 update_rng = make_stream(config.seed, {1});

    const auto* landing = dynamic_cast<const LandingTask*>(&task);
    std::ofstream stats_os, episodes_os;
    std::filesystem::path ckpt_dir;
    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        ckpt_dir = config.out_dir / "checkpoints";
        std::filesystem::create_directories(ckpt_dir);
        stats_os.open(config.out_dir / "train_stats.csv");
        if (!stats_os) throw std::runtime_error("cannot write train_stats.csv in " + config.out_dir.string());
        write_stats_header(stats_os);
        if (landing != nullptr) episodes_os.open(config.out_dir / "episodes.jsonl");
    }
    auto checkpoint = [&](const std::string& name) {
        if (ckpt_dir.empty()) return;
        agent.save(ckpt_dir / (name + ".ckpt"));
        save_policy(ckpt_dir / (name + ".pol"), agent.policy, config.sensing, config.threshold);
    };

    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<double> window;
    double window_sum = 0.0;

    for (int ep = 0; ep < config.episodes; ++ep) {
        std::mt19937_64 rng = make_stream(config.seed, {2, static_cast<std::uint64_t>(ep)});
        const bool warm = ep < hp.warmup_episodes;
        NormalizedObs obs = task.reset(rng, static_cast<std::uint64_t>(ep));

        EpisodeStats st;
        st.episode = ep;
        UpdateStats acc;
        auto do_updates = [&](int count) {
            if (buffer.size() < hp.batch_size) return;
            for (int k = 0; k < count; ++k) {
                const UpdateStats u = agent.update(buffer, update_rng);
                if (!std::isfinite(u.q1_loss) || !std::isfinite(u.q2_loss) || !std::isfinite(u.actor_loss) ||
                    !std::isfinite(u.alpha)) {
                    throw std::domain_error("non-finite loss");
                }
                acc.q1_loss += u.q1_loss;
                acc.q2_loss += u.q2_loss;
                acc.actor_loss += u.actor_loss;
                acc.entropy += u.entropy;
                acc.alpha += u.alpha;
                ++st.updates;
            }
        };
        try {
            for (;;) {
                ActionSample a;
                if (warm) {
                    a.a_trg = uni(rng);
                    a.a_my = uni(rng);
                    a.u_trg = std::atanh(a.a_trg);
                    a.u_my = std::atanh(a.a_my);
                    a.trigger = trigger_decision(a, config.threshold);
                    a.moment = moment_from_squashed(a.a_my);
                } else {
                    a = sample_action(policy_forward(agent.policy, obs), rng, config.threshold);
                }
                const Task::Step s = task.step(a);
                buffer.push({obs, {a.a_trg, a.a_my}, s.reward, s.obs, s.done, a.trigger});
                ++st.steps;
                if (!warm) do_updates(hp.updates_per_step);
                obs = s.obs;
                if (s.done) {
                    st.reward = s.reward;
                    st.triggered = a.trigger;
                    break;
                }
            }
            if (!warm) do_updates(hp.min_updates_per_episode - st.updates);
        } catch (const std::domain_error& e) {
            checkpoint("diverged");
            throw TrainingDiverged("training diverged at episode " + std::to_string(ep) + ": " + e.what());
        }
        if (st.updates > 0) {
            const double inv = 1.0 / st.updates;
            st.update = {acc.q1_loss * inv, acc.q2_loss * inv, acc.actor_loss * inv, acc.entropy * inv, acc.alpha * inv};
        } else {
            st.update.alpha = agent.alpha();
        }
        if (landing != nullptr) {
            st.n_legs = landing->env().record().outcome.n_legs;
            st.triggered = landing->env().record().triggered;
        }

        window.push_back(st.reward);
        window_sum += st.reward;
        if (window.size() > static_cast<std::size_t>(config.rolling_window)) {
            window_sum -= window[window.size() - 1 - config.rolling_window];
        }
        const std::size_t count = std::min(window.size(), static_cast<std::size_t>(config.rolling_window));
        st.rolling_mean = window_sum / static_cast<double>(count);

        if (count == static_cast<std::size_t>(config.rolling_window) &&
            (result.best_episode < 0 || st.rolling_mean > result.stats[result.best_episode].rolling_mean)) {
            result.best_episode = ep;
            result.best_policy = agent.policy;
            if (!ckpt_dir.empty()) save_policy(ckpt_dir / "best.pol", agent.policy, config.sensing, config.threshold);
        }
        result.stats.push_back(st);
        if (stats_os.is_open()) write_stats_row(stats_os, st);
        if (episodes_os.is_open()) episodes_os << nlohmann::json(landing->env().record()).dump() << '\n';
        if (config.checkpoint_every > 0 && (ep + 1) % config.checkpoint_every == 0) {
            checkpoint("ep" + std::to_string(ep + 1));
        }
        if (on_episode && !on_episode(st)) break;
    }
    checkpoint("final");
    return result;
}

}  // namespace perch
