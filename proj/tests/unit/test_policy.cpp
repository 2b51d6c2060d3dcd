#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "perch/policy.hpp"
#include "oracle.hpp"

using namespace perch;

namespace {

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / (std::string("perch_test_") + name);
}

}  // namespace

TEST_CASE("zero network outputs zero heads") {
    const PolicyParams p = PolicyParams::zeros();
    const HeadOutputs h = policy_forward(p, {0.3, -0.2, 0.9});
    CHECK(h.mu_trg == 0.0);
    CHECK(h.log_std_trg == 0.0);
    CHECK(h.mu_my == 0.0);
    CHECK(h.log_std_my == 0.0);
}

TEST_CASE("policy forward is deterministic") {
    std::mt19937_64 rng(1);
    const PolicyParams p = PolicyParams::create(rng);
    const HeadOutputs a = policy_forward(p, {0.1, 0.2, 0.3});
    const HeadOutputs b = policy_forward(p, {0.1, 0.2, 0.3});
    CHECK(a.mu_trg == b.mu_trg);
    CHECK(a.log_std_trg == b.log_std_trg);
    CHECK(a.mu_my == b.mu_my);
    CHECK(a.log_std_my == b.log_std_my);
}

TEST_CASE("log standard deviations are clamped to [-20, 2]") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        PolicyParams p = PolicyParams::create(rng);
        for (double& w : p.net.params()) w *= 40.0;
        const HeadOutputs h = policy_forward(p, {u(rng), u(rng), u(rng)});
        CHECK(h.log_std_trg >= -20.0);
        CHECK(h.log_std_trg <= 2.0);
        CHECK(h.log_std_my >= -20.0);
        CHECK(h.log_std_my <= 2.0);
    }
    const double raw[4] = {0.0, 50.0, 0.0, -50.0};
    const HeadOutputs h = heads_from_raw(raw);
    CHECK(h.log_std_trg == 2.0);
    CHECK(h.log_std_my == -20.0);
}

TEST_CASE("non-finite parameters are a hard error") {
    PolicyParams p = PolicyParams::zeros();
    p.net.params()[5] = NAN;
    CHECK_THROWS_AS(policy_forward(p, {0.0, 0.0, 0.0}), std::domain_error);
}

TEST_CASE("standard heads with a zero draw") {
    const ActionSample s = action_from_noise(HeadOutputs{}, 0.0, 0.0);
    CHECK(s.a_trg == 0.0);
    CHECK(s.a_my == 0.0);
    CHECK(s.moment == doctest::Approx(4e-3).epsilon(1e-15));
    // log N(0; 0, 1) per head; the tanh correction is -log(1 + 1e-6).
    CHECK(s.log_prob == doctest::Approx(2 * -0.9189385332046727 - 2 * std::log1p(1e-6)).epsilon(1e-14));
    CHECK(s.log_prob == doctest::Approx(2 * -0.9189).epsilon(1e-4));
    CHECK_FALSE(s.trigger);
}

TEST_CASE("moment saturates at the ends of the squashed range") {
    CHECK(action_from_noise({0.0, 0.0, 40.0, 0.0}, 0.0, 0.0).moment == doctest::Approx(8e-3).epsilon(1e-15));
    CHECK(action_from_noise({0.0, 0.0, -40.0, 0.0}, 0.0, 0.0).moment == doctest::Approx(0.0));
}

TEST_CASE("moment is monotone and bounded") {
    double prev = -1.0;
    for (int i = -400; i <= 400; ++i) {
        const double m = action_from_noise({0.0, 0.0, 0.05 * i, -20.0}, 0.0, 0.0).moment;
        CHECK(m >= 0.0);
        CHECK(m <= 8e-3);
        CHECK(m >= prev);
        prev = m;
    }
}

TEST_CASE("sampled log-probability matches the tanh-Gaussian density") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        const HeadOutputs h{u(rng), u(rng) - 0.5, u(rng), u(rng) - 0.5};
        const ActionSample s = sample_action(h, rng);
        const double expected =
            oracle::squashed_head_log_prob(h.mu_trg, h.log_std_trg, s.u_trg) + oracle::squashed_head_log_prob(h.mu_my, h.log_std_my, s.u_my);
        CHECK(s.log_prob == doctest::Approx(expected).epsilon(1e-10));
        CHECK(squashed_log_prob(h, s.u_trg, s.u_my) == doctest::Approx(expected).epsilon(1e-10));
        CHECK(s.a_trg == std::tanh(s.u_trg));
    }
}

TEST_CASE("squashed density integrates to one") {
    for (const HeadOutputs h : {HeadOutputs{0.0, 0.0, 0.0, 0.0}, HeadOutputs{0.8, -0.7, -0.4, 0.3}}) {
        // Integrate over a in [-1, 1]^2 through the substitution a = tanh(u).
        const int n = 1200;
        const double lo = -12.0, hi = 12.0, du = (hi - lo) / n;
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double ut = lo + (i + 0.5) * du;
            const double jt = 1.0 - std::tanh(ut) * std::tanh(ut);
            for (int k = 0; k < n; ++k) {
                const double um = lo + (k + 0.5) * du;
                const double jm = 1.0 - std::tanh(um) * std::tanh(um);
                total += std::exp(squashed_log_prob(h, ut, um)) * jt * jm * du * du;
            }
        }
        CHECK(std::abs(total - 1.0) < 1e-3);
    }
}

TEST_CASE("trigger uses a strict comparison") {
    ActionSample s;
    s.a_trg = 0.3;
    CHECK(trigger_decision(s, 0.0));
    s.a_trg = 0.0;
    CHECK_FALSE(trigger_decision(s, 0.0));
    s.a_trg = 0.25;
    CHECK_FALSE(trigger_decision(s, 0.25));
    CHECK_THROWS_AS(trigger_decision(s, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(trigger_decision(s, -1.5), std::invalid_argument);
}

TEST_CASE("standard trigger head fires half the time") {
    std::mt19937_64 rng(4);
    int fired = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) fired += sample_action(HeadOutputs{}, rng).trigger ? 1 : 0;
    CHECK(std::abs(static_cast<double>(fired) / n - 0.5) < 0.005);
    CHECK(trigger_probability(0.0, 1.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("trigger probability closed form") {
    // 1 - Phi(x) = erfc(x / sqrt 2) / 2 evaluated by hand at a few points.
    CHECK(trigger_probability(0.0, 1.0, std::tanh(1.0)) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
    CHECK(trigger_probability(1.0, 0.5, 0.0) == doctest::Approx(0.9772498680518208).epsilon(1e-12));
}

TEST_CASE("mean action is the squashed mean") {
    const ActionSample s = mean_action({0.4, 1.0, -0.3, 1.0}, 0.0);
    CHECK(s.a_trg == std::tanh(0.4));
    CHECK(s.a_my == std::tanh(-0.3));
    CHECK(s.trigger);
}

TEST_CASE("reparameterized partials match finite differences") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    std::normal_distribution<double> n01;
    const double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        double raw[4] = {u(rng), u(rng) - 0.5, u(rng), u(rng) - 0.5};
        const std::array<double, 2> eps{n01(rng), n01(rng)};
        const ReparamSample r = reparam_sample(raw, eps);
        for (int k = 0; k < 4; ++k) {
            double plus[4], minus[4];
            std::copy(raw, raw + 4, plus);
            std::copy(raw, raw + 4, minus);
            plus[k] += h;
            minus[k] -= h;
            const ReparamSample rp = reparam_sample(plus, eps), rm = reparam_sample(minus, eps);
            const std::size_t j = k / 2;
            const bool is_mu = k % 2 == 0;
            const double fd_logp = (rp.log_prob - rm.log_prob) / (2 * h);
            const double fd_a = (rp.a[j] - rm.a[j]) / (2 * h);
            const double an_logp = is_mu ? r.dlogp_dmu[j] : r.dlogp_dlogstd[j];
            const double an_a = is_mu ? r.da_dmu[j] : r.da_dlogstd[j];
            CHECK(std::abs(fd_logp - an_logp) <= 1e-6 + 1e-4 * std::abs(an_logp));
            CHECK(std::abs(fd_a - an_a) <= 1e-7 + 1e-4 * std::abs(an_a));
        }
    }
}

TEST_CASE("clamped log standard deviations carry no gradient") {
    const double raw[4] = {0.1, 5.0, -0.2, -25.0};
    const ReparamSample r = reparam_sample(raw, {0.7, -0.4});
    CHECK(r.dlogp_dlogstd[0] == 0.0);
    CHECK(r.dlogp_dlogstd[1] == 0.0);
    CHECK(r.da_dlogstd[0] == 0.0);
    CHECK(r.da_dlogstd[1] == 0.0);
}

TEST_CASE("policy files reload bit for bit") {
    std::mt19937_64 rng(6);
    const PolicyParams p = PolicyParams::create(rng);
    SensingParams sp;
    sp.theta_x_scale = 7.5;
    const auto path = temp_path("policy.pol");
    save_policy(path, p, sp, 0.1);
    const LoadedPolicy back = load_policy(path);
    CHECK(back.params == p);
    CHECK(back.threshold == 0.1);
    CHECK(back.sensing.theta_x_scale == 7.5);
    std::ifstream side(path.string() + ".json");
    CHECK(side.good());
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".json");
}

TEST_CASE("missing or corrupt policy files are rejected") {
    CHECK_THROWS_AS(load_policy(temp_path("does_not_exist.pol")), std::runtime_error);
    const auto path = temp_path("corrupt.pol");
    {
        std::ofstream os(path, std::ios::binary);
        os << "not a policy";
    }
    CHECK_THROWS_AS(load_policy(path), std::runtime_error);
    std::filesystem::remove(path);
}
