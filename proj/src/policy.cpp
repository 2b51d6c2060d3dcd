#include "perch/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "perch/nn/serialize.hpp"

namespace perch {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double clamp_log_std(double raw) { return std::clamp(raw, kLogStdMin, kLogStdMax); }

bool log_std_active(double raw) { return raw > kLogStdMin && raw < kLogStdMax; }

// 1 - tanh(u)^2 without the cancellation that 1 - a * a suffers once tanh saturates.
double sech2(double u) {
    const double c = std::cosh(u);
    return 1.0 / (c * c);
}

}  // namespace

PolicyParams PolicyParams::create(std::mt19937_64& rng, std::size_t hidden) {
    PolicyParams p{nn::Mlp({kObsDim, hidden, hidden, 4})};
    p.net.init(rng);
    return p;
}

PolicyParams PolicyParams::zeros(std::size_t hidden) {
    return PolicyParams{nn::Mlp({kObsDim, hidden, hidden, 4})};
}

HeadOutputs heads_from_raw(const double* raw) {
    return {raw[0], clamp_log_std(raw[1]), raw[2], clamp_log_std(raw[3])};
}

HeadOutputs policy_forward(const PolicyParams& params, const NormalizedObs& obs) {
    params.net.check_finite("policy");
    for (double v : obs) {
        if (!std::isfinite(v)) throw std::domain_error("policy_forward: non-finite observation");
    }
    thread_local nn::Mlp::Workspace ws;
    return heads_from_raw(params.net.forward(obs.data(), 1, ws));
}

double moment_from_squashed(double a_my) {
    return std::clamp(0.5 * kMaxFlipMoment * (a_my + 1.0), 0.0, kMaxFlipMoment);
}

double squashed_log_prob(const HeadOutputs& h, double u_trg, double u_my) {
    auto one = [](double u, double mu, double log_std) {
        const double z = (u - mu) / std::exp(log_std);
        return -0.5 * z * z - log_std - kHalfLog2Pi - std::log(sech2(u) + kSquashEps);
    };
    return one(u_trg, h.mu_trg, h.log_std_trg) + one(u_my, h.mu_my, h.log_std_my);
}

ActionSample action_from_noise(const HeadOutputs& h, double eps_trg, double eps_my,
                               double threshold) {
    ActionSample s;
    s.u_trg = h.mu_trg + std::exp(h.log_std_trg) * eps_trg;
    s.u_my = h.mu_my + std::exp(h.log_std_my) * eps_my;
    s.a_trg = std::tanh(s.u_trg);
    s.a_my = std::tanh(s.u_my);
    s.trigger = trigger_decision(s, threshold);
    s.moment = moment_from_squashed(s.a_my);
    s.log_prob = squashed_log_prob(h, s.u_trg, s.u_my);
    return s;
}

ActionSample sample_action(const HeadOutputs& heads, std::mt19937_64& rng, double threshold) {
    std::normal_distribution<double> n01(0.0, 1.0);
    const double e0 = n01(rng);
    const double e1 = n01(rng);
    return action_from_noise(heads, e0, e1, threshold);
}

ActionSample mean_action(const HeadOutputs& heads, double threshold) {
    return action_from_noise(heads, 0.0, 0.0, threshold);
}

bool trigger_decision(const ActionSample& sample, double threshold) {
    if (!(std::abs(threshold) < 1.0)) throw std::invalid_argument("trigger threshold must satisfy |th| < 1");
    return sample.a_trg > threshold;
}

double trigger_probability(double mu, double sigma, double threshold) {
    if (!(std::abs(threshold) < 1.0)) throw std::invalid_argument("trigger threshold must satisfy |th| < 1");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    const double z = (std::atanh(threshold) - mu) / sigma;
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

StepAction to_step_action(const ActionSample& sample) {
    return {sample.trigger, sample.moment};
}

ReparamSample reparam_sample(const double* raw, const std::array<double, kActDim>& eps) {
    ReparamSample r;
    for (std::size_t j = 0; j < kActDim; ++j) {
        const double mu = raw[2 * j];
        const double raw_ls = raw[2 * j + 1];
        const double ls = clamp_log_std(raw_ls);
        const double sigma = std::exp(ls);
        const double u = mu + sigma * eps[j];
        const double a = std::tanh(u);
        const double one_minus = sech2(u);
        const double denom = one_minus + kSquashEps;
        r.a[j] = a;
        r.log_prob += -0.5 * eps[j] * eps[j] - ls - kHalfLog2Pi - std::log(denom);

        // d/du of -log(1 - tanh(u)^2 + eps)
        const double dlogp_du = 2.0 * a * one_minus / denom;
        const double mask = log_std_active(raw_ls) ? 1.0 : 0.0;
        r.dlogp_dmu[j] = dlogp_du;
        r.dlogp_dlogstd[j] = mask * (-1.0 + dlogp_du * sigma * eps[j]);
        r.da_dmu[j] = one_minus;
        r.da_dlogstd[j] = mask * one_minus * sigma * eps[j];
    }
    return r;
}

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 const SensingParams& sensing, double threshold) {
    nn::WeightArchive ar;
    ar.put_network("policy", params.net);
    ar.save(path);

    nlohmann::json side{
        {"format", "perch-policy"},
        {"version", nn::kFormatVersion},
        {"layer_sizes", params.net.sizes()},
        {"obs_scale", {{"tau", sensing.tau_scale}, {"theta_x", sensing.theta_x_scale}, {"d_ceil", sensing.d_ceil_scale}}},
        {"tau_cap", sensing.tau_cap},
        {"trigger_threshold", threshold},
        {"moment_max", kMaxFlipMoment},
    };
    std::ofstream os(path.string() + ".json");
    if (!os) throw std::runtime_error("cannot write policy sidecar for " + path.string());
    os << side.dump(2) << '\n';
}

LoadedPolicy load_policy(const std::filesystem::path& path) {
    LoadedPolicy out;
    const nn::WeightArchive ar = nn::WeightArchive::load(path);
    out.params.net = ar.network("policy");
    if (out.params.net.input_size() != kObsDim || out.params.net.output_size() != 4) {
        throw std::runtime_error("policy network has the wrong input/output size");
    }
    const std::filesystem::path side_path = path.string() + ".json";
    std::ifstream is(side_path);
    if (!is) throw std::runtime_error("missing policy sidecar " + side_path.string());
    try {
        const nlohmann::json side = nlohmann::json::parse(is);
        const auto& sc = side.at("obs_scale");
        out.sensing.tau_scale = sc.at("tau").get<double>();
        out.sensing.theta_x_scale = sc.at("theta_x").get<double>();
        out.sensing.d_ceil_scale = sc.at("d_ceil").get<double>();
        out.sensing.tau_cap = side.at("tau_cap").get<double>();
        out.threshold = side.at("trigger_threshold").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed policy sidecar: " + std::string(e.what()));
    }
    out.sensing.validate();
    return out;
}

}  // namespace perch
