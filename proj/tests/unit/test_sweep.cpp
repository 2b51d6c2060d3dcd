#include <doctest.h>

#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "perch/sweep.hpp"

using namespace perch;

namespace {

// Trigger mean pinned far below the threshold with a negligible spread.
PolicyParams never_triggers() {
    PolicyParams p = PolicyParams::zeros();
    auto w = p.net.params();
    w[w.size() - 4] = -50.0;
    w[w.size() - 3] = -20.0;
    return p;
}

// Trigger mean far above the threshold, moment head standard.
PolicyParams always_triggers() {
    PolicyParams p = PolicyParams::zeros();
    auto w = p.net.params();
    w[w.size() - 4] = 50.0;
    w[w.size() - 3] = -20.0;
    return p;
}

SweepGrid small_grid() { return {{2.0, 3.0}, {40.0, 90.0}, 4}; }

}  // namespace

TEST_CASE("default grid mirrors the plotted extent") {
    const SweepGrid g = SweepGrid::defaults();
    REQUIRE(g.speeds.size() == 9);
    CHECK(g.speeds.front() == 1.5);
    CHECK(g.speeds.back() == 3.5);
    CHECK(g.speeds[4] == doctest::Approx(2.5));
    REQUIRE(g.angles_deg.size() == 14);
    CHECK(g.angles_deg.front() == 25.0);
    CHECK(g.angles_deg.back() == 90.0);
    CHECK(g.trials == 30);
    CHECK(g.cells() == 126);
}

TEST_CASE("grid validation") {
    SweepGrid g = small_grid();
    g.trials = 0;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g = small_grid();
    g.angles_deg = {95.0};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    CHECK_THROWS_AS(SweepGrid::range(1.0, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("a policy that never triggers never lands") {
    EvalOptions opt;
    opt.workers = 2;
    const LandingRateMap map = run_sweep(never_triggers(), 0.0, small_grid(), EnvConfig{}, opt);
    REQUIRE(map.cells.size() == 4);
    for (const auto& c : map.cells) {
        CHECK(c.n_fourleg == 0);
        CHECK(c.success_rate() == 0.0);
        CHECK(c.trials == 4);
    }
}

TEST_CASE("sweeps are identical across worker counts") {
    EvalOptions opt;
    opt.seed = 77;
    opt.keep_records = true;
    const EnvConfig cfg;
    opt.workers = 1;
    const LandingRateMap one = run_sweep(always_triggers(), 0.0, small_grid(), cfg, opt);
    opt.workers = 3;
    const LandingRateMap three = run_sweep(always_triggers(), 0.0, small_grid(), cfg, opt);
    std::ostringstream a, b;
    write_map_csv(a, one);
    write_map_csv(b, three);
    CHECK(a.str() == b.str());
    CHECK(map_to_json(one) == map_to_json(three));
    REQUIRE(one.records.size() == three.records.size());
    for (std::size_t i = 0; i < one.records.size(); ++i) {
        CHECK(nlohmann::json(one.records[i]) == nlohmann::json(three.records[i]));
    }
}

TEST_CASE("noisy sweeps draw per-trial noise independent of worker count") {
    EvalOptions opt;
    opt.seed = 78;
    opt.keep_records = true;
    EnvConfig cfg;
    cfg.sensing.tau_noise = 0.01;
    opt.workers = 1;
    const LandingRateMap one = run_sweep(always_triggers(), 0.0, small_grid(), cfg, opt);
    opt.workers = 3;
    const LandingRateMap three = run_sweep(always_triggers(), 0.0, small_grid(), cfg, opt);
    REQUIRE(one.records.size() == three.records.size());
    REQUIRE(one.records.size() >= 2);
    for (std::size_t i = 0; i < one.records.size(); ++i) {
        CHECK(nlohmann::json(one.records[i]) == nlohmann::json(three.records[i]));
    }
    CHECK(one.records[0].noise_seed != one.records[1].noise_seed);
    CHECK(one.records[0].trigger_observation.tau != one.records[1].trigger_observation.tau);
}

TEST_CASE("cell counts partition the trials") {
    EvalOptions opt;
    opt.workers = 2;
    const LandingRateMap map = run_sweep(always_triggers(), 0.0, small_grid(), EnvConfig{}, opt);
    for (const auto& c : map.cells) {
        CHECK(c.n_fourleg + c.n_twoleg + c.n_fail == c.trials);
        CHECK(c.n_bodycontact <= c.trials);
        CHECK(c.success_rate() >= 0.0);
        CHECK(c.success_rate() <= 1.0);
    }
    CHECK(map.at(3.0, 90.0).speed == 3.0);
    CHECK_THROWS_AS(static_cast<void>(map.at(2.5, 90.0)), std::out_of_range);
}

TEST_CASE("map exports carry the documented columns") {
    EvalOptions opt;
    const LandingRateMap map = run_sweep(never_triggers(), 0.0, {{2.0}, {60.0}, 2}, EnvConfig{}, opt);
    std::ostringstream os;
    write_map_csv(os, map);
    const std::string csv = os.str();
    CHECK(csv.rfind("V,phi,trials,n_fourleg,n_twoleg,n_fail,n_bodycontact,success_rate\n", 0) == 0);
    const nlohmann::json j = map_to_json(map);
    CHECK(j.contains("grid"));
    CHECK(j.contains("cells"));
    CHECK(j["seed"] == 1);
}

TEST_CASE("sweep episodes replay to the same outcome") {
    EvalOptions opt;
    opt.keep_records = true;
    opt.seed = 5;
    const EnvConfig cfg;
    const LandingRateMap map = run_sweep(always_triggers(), 0.0, small_grid(), cfg, opt);
    for (const auto& r : map.records) {
        const EpisodeRecord again = replay_episode(cfg, r);
        CHECK(again.outcome == r.outcome);
        CHECK(again.reward == r.reward);
    }
}

namespace {

EpisodeRecord rec(std::uint64_t id, bool triggered, int legs, bool body = false) {
    EpisodeRecord r;
    r.episode = id;
    r.triggered = triggered;
    r.outcome.n_legs = legs;
    r.outcome.body_contact = body;
    r.outcome.triggered = triggered;
    r.trigger_observation = {0.2, 0.5, 0.4};
    return r;
}

}  // namespace

TEST_CASE("policy region export and filters") {
    const std::vector<EpisodeRecord> logs{rec(0, true, 4), rec(1, true, 2, true), rec(2, true, 0), rec(3, false, 0),
                                          rec(4, true, 4, true)};
    CHECK(export_policy_region(logs).size() == 4);
    const auto four = export_policy_region(logs, OutcomeFilter::FourLeg);
    REQUIRE(four.size() == 2);
    for (const auto& row : four) CHECK(row.n_legs == 4);
    CHECK(export_policy_region(logs, OutcomeFilter::TwoLeg).size() == 1);
    CHECK(export_policy_region(logs, OutcomeFilter::Fail).size() == 1);
    CHECK_THROWS_AS(export_policy_region({}), std::invalid_argument);

    CHECK(parse_outcome_filter("four-leg") == OutcomeFilter::FourLeg);
    CHECK(parse_outcome_filter("any") == OutcomeFilter::Any);
    CHECK_THROWS_AS(parse_outcome_filter("three-leg"), std::invalid_argument);

    std::ostringstream os;
    write_policy_region_csv(os, four);
    CHECK(os.str().rfind("episode,V,phi,tau_trg,theta_x_trg,d_ceil_trg,My,n_legs,body_contact,outcome\n", 0) == 0);
}

TEST_CASE("single-condition evaluation is a one-cell sweep") {
    EvalOptions opt;
    opt.seed = 9;
    opt.workers = 2;
    std::vector<EpisodeRecord> records;
    const CellResult c = evaluate_condition(always_triggers(), 0.0, EnvConfig{}, {2.5, 40.0}, 6, opt, &records);
    CHECK(c.trials == 6);
    CHECK(records.size() == 6);
    CHECK(c.n_fourleg + c.n_twoleg + c.n_fail == 6);
}

TEST_CASE("unloadable policies are rejected") {
    PolicyParams p = PolicyParams::zeros();
    p.net.params()[0] = NAN;
    CHECK_THROWS_AS(run_sweep(p, 0.0, small_grid(), EnvConfig{}, EvalOptions{}), std::domain_error);
}
