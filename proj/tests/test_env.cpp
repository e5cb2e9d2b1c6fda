#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>

#include "oat/env.hpp"

using namespace oat;
using namespace oat::env;

namespace {

EnvConfig wolf_cfg(int rows = 10, int cols = 10) {
    EnvConfig cfg;
    cfg.kind = EnvKind::wolfpack;
    cfg.rows = rows;
    cfg.cols = cols;
    cfg.open = {3, 5, 25, 35, 15, 25};
    return cfg;
}

EnvConfig lbf_cfg() {
    EnvConfig cfg;
    cfg.kind = EnvKind::lbf;
    cfg.rows = 8;
    cfg.cols = 8;
    cfg.open = {3, 5, 15, 25, 10, 20};
    return cfg;
}

EnvConfig pcn_cfg() {
    EnvConfig cfg;
    cfg.kind = EnvKind::pcn;
    cfg.rows = 12;
    cfg.cols = 12;
    cfg.open = {3, 5, 15, 25, 10, 20};
    return cfg;
}

// Clears every teammate and pins long lifetimes so scripted scenarios are not
// disturbed by the openness process.
void clear_teammates(EnvState& s) {
    for (auto& a : s.slots) {
        if (a.id == 0) continue;
        a.present = false;
        a.in_queue = false;
        a.wait = 1000;
        a.row = a.col = -1;
    }
    s.reentry.clear();
}

void place(EnvState& s, int id, int r, int c, int type = 0, int level = 1) {
    AgentSlot& a = s.slots[id];
    a.present = true;
    a.row = r;
    a.col = c;
    a.type_tag = id == 0 ? -1 : type;
    a.lifetime = 1000;
    a.level = level;
}

JointAction actions_of(const EnvState& s, const std::map<int, int>& acts) {
    JointAction ja;
    for (const auto& a : s.slots)
        if (a.present) ja.emplace_back(a.id, acts.count(a.id) ? acts.at(a.id) : kStay);
    return ja;
}

}  // namespace

TEST_CASE("reset is deterministic under a fixed seed") {
    EnvState a = reset(wolf_cfg(), 7);
    EnvState b = reset(wolf_cfg(), 7);
    CHECK(a.prey_row == b.prey_row);
    CHECK(a.prey_col == b.prey_col);
    CHECK(a.rng.save_state() == b.rng.save_state());
    REQUIRE(a.slots.size() == b.slots.size());
    for (size_t i = 0; i < a.slots.size(); ++i) {
        CHECK(a.slots[i].present == b.slots[i].present);
        CHECK(a.slots[i].row == b.slots[i].row);
        CHECK(a.slots[i].col == b.slots[i].col);
        CHECK(a.slots[i].type_tag == b.slots[i].type_tag);
        CHECK(a.slots[i].lifetime == b.slots[i].lifetime);
    }
}

TEST_CASE("initial team size respects the training cap") {
    for (uint64_t seed = 0; seed < 40; ++seed) {
        EnvState s = reset(lbf_cfg(), seed);
        CHECK(s.present_count() <= 3);
        CHECK(s.present_count() >= 2);  // learner plus at least one teammate
        CHECK(s.slots[0].present);
    }
}

TEST_CASE("pcn has exactly two destination cells") {
    EnvState s = reset(pcn_cfg(), 3);
    CHECK(s.dest_row[0] >= 0);
    CHECK(s.dest_row[1] >= 0);
    CHECK((s.dest_row[0] != s.dest_row[1] || s.dest_col[0] != s.dest_col[1]));
}

TEST_CASE("wolfpack capture pays 2|H| to a participating learner") {
    EnvState s = reset(wolf_cfg(), 1);
    clear_teammates(s);
    s.prey_row = 0;
    s.prey_col = 0;
    place(s, 0, 0, 1);
    place(s, 1, 1, 0, kChaser);
    StepResult res = step(s, actions_of(s, {{0, kStay}, {1, kStay}}));
    CHECK(res.reward == doctest::Approx(4.0));
}

TEST_CASE("wolfpack learner alone next to the prey pays -0.5") {
    EnvConfig cfg = wolf_cfg(1, 10);
    EnvState s = reset(cfg, 2);
    clear_teammates(s);
    s.prey_row = 0;
    s.prey_col = 0;
    place(s, 0, 0, 1);
    StepResult res = step(s, actions_of(s, {{0, kStay}}));
    CHECK(res.reward == doctest::Approx(-0.5));
}

TEST_CASE("wolfpack capture without the learner pays 0") {
    EnvState s = reset(wolf_cfg(), 3);
    clear_teammates(s);
    s.prey_row = 0;
    s.prey_col = 0;
    place(s, 0, 5, 5);
    place(s, 1, 0, 1, kChaser);
    place(s, 2, 1, 0, kChaser);
    StepResult res = step(s, actions_of(s, {{1, kStay}, {2, kStay}}));
    CHECK(res.reward == doctest::Approx(0.0));
}

TEST_CASE("lbf retrieval credits the object level to the learner") {
    EnvState s = reset(lbf_cfg(), 4);
    clear_teammates(s);
    s.objects.assign(1, GridObject{0, 0, 2});
    place(s, 0, 0, 1, -1, 2);
    StepResult res = step(s, actions_of(s, {{0, kLoad}}));
    CHECK(res.reward == doctest::Approx(2.0));
    CHECK(!(s.objects[0].row == 0 && s.objects[0].col == 0));  // respawned elsewhere
}

TEST_CASE("lbf retrieval needs enough combined level") {
    EnvState s = reset(lbf_cfg(), 5);
    clear_teammates(s);
    s.objects.assign(1, GridObject{0, 0, 4});
    place(s, 0, 0, 1, -1, 2);
    place(s, 1, 1, 0, kNearestLoader, 1);
    StepResult res = step(s, actions_of(s, {{0, kLoad}, {1, kLoad}}));
    CHECK(res.reward == doctest::Approx(0.0));
    CHECK(s.objects[0].level == 4);  // still there
}

TEST_CASE("lbf cooperative retrieval with the learner participating") {
    EnvState s = reset(lbf_cfg(), 6);
    clear_teammates(s);
    s.objects.assign(1, GridObject{0, 0, 3});
    place(s, 0, 0, 1, -1, 2);
    place(s, 1, 1, 0, kNearestLoader, 1);
    StepResult res = step(s, actions_of(s, {{0, kLoad}, {1, kLoad}}));
    CHECK(res.reward == doctest::Approx(3.0));
}

TEST_CASE("lbf retrieval without the learner gives the learner nothing") {
    EnvState s = reset(lbf_cfg(), 7);
    clear_teammates(s);
    s.objects.assign(1, GridObject{0, 0, 1});
    place(s, 0, 7, 7);
    place(s, 1, 1, 0, kNearestLoader, 2);
    StepResult res = step(s, actions_of(s, {{1, kLoad}}));
    CHECK(res.reward == doctest::Approx(0.0));
    CHECK(!(s.objects[0].row == 0 && s.objects[0].col == 0));  // collected
}

TEST_CASE("pcn arrival at an uncovered pair costs -0.2") {
    EnvState s = reset(pcn_cfg(), 8);
    clear_teammates(s);
    s.dest_row[0] = 0;
    s.dest_col[0] = 0;
    s.dest_row[1] = 0;
    s.dest_col[1] = 5;
    place(s, 0, 0, 1);
    s.learner_on_dest[0] = s.learner_on_dest[1] = false;
    StepResult res = step(s, actions_of(s, {{0, kWest}}));
    CHECK(res.reward == doctest::Approx(-0.2));
}

TEST_CASE("pcn teammate-only coverage consumes the pair without reward") {
    EnvState s = reset(pcn_cfg(), 19);
    clear_teammates(s);
    s.dest_row[0] = 0;
    s.dest_col[0] = 0;
    s.dest_row[1] = 0;
    s.dest_col[1] = 5;
    place(s, 0, 6, 6);
    place(s, 1, 0, 0, kSeekerFirst);
    place(s, 2, 0, 5, kSeekerSecond);
    StepResult res = step(s, actions_of(s, {{1, kStay}, {2, kStay}}));
    CHECK(res.reward == doctest::Approx(0.0));
    CHECK(!(s.dest_row[0] == 0 && s.dest_col[0] == 0));  // pair resampled
}

TEST_CASE("pcn simultaneous coverage pays +1 and moves the destinations") {
    EnvState s = reset(pcn_cfg(), 9);
    clear_teammates(s);
    s.dest_row[0] = 0;
    s.dest_col[0] = 0;
    s.dest_row[1] = 0;
    s.dest_col[1] = 5;
    place(s, 0, 0, 1);
    place(s, 1, 0, 5, kSeekerSecond);
    s.learner_on_dest[0] = s.learner_on_dest[1] = false;
    StepResult res = step(s, actions_of(s, {{0, kWest}, {1, kStay}}));
    CHECK(res.reward == doctest::Approx(1.0));
    CHECK(!(s.dest_row[0] == 0 && s.dest_col[0] == 0));
}

TEST_CASE("openness: lifetime and wait samples stay in the inclusive ranges") {
    EnvState s = reset(wolf_cfg(), 10);
    std::map<int, int> waits;
    int joins = 0, leaves = 0;
    int min_life = 1000, max_life = 0, min_wait = 1000, max_wait = 0;
    for (int t = 0; t < 20000; ++t) {
        OpennessEvents ev = openness_tick(s);
        for (int id : ev.joins) {
            ++joins;
            min_life = std::min(min_life, s.slots[id].lifetime);
            max_life = std::max(max_life, s.slots[id].lifetime);
        }
        for (int id : ev.leaves) {
            ++leaves;
            min_wait = std::min(min_wait, s.slots[id].wait);
            max_wait = std::max(max_wait, s.slots[id].wait);
        }
    }
    CHECK(joins > 300);
    CHECK(leaves > 300);
    CHECK(min_life >= 25);
    CHECK(max_life <= 35);
    CHECK(min_wait >= 15);
    CHECK(max_wait <= 25);
}

TEST_CASE("openness: lbf wait range is [10, 20]") {
    EnvState s = reset(lbf_cfg(), 11);
    int min_wait = 1000, max_wait = 0, leaves = 0;
    for (int t = 0; t < 20000; ++t) {
        OpennessEvents ev = openness_tick(s);
        for (int id : ev.leaves) {
            ++leaves;
            min_wait = std::min(min_wait, s.slots[id].wait);
            max_wait = std::max(max_wait, s.slots[id].wait);
        }
    }
    CHECK(leaves > 300);
    CHECK(min_wait >= 10);
    CHECK(max_wait <= 20);
}

TEST_CASE("openness: a removed agent waits its full period before re-entry") {
    EnvState s = reset(wolf_cfg(), 12);
    std::map<int, std::pair<int, int>> left_at;  // id -> (tick, wait)
    for (int t = 0; t < 30000; ++t) {
        OpennessEvents ev = openness_tick(s);
        for (int id : ev.leaves) left_at[id] = {t, s.slots[id].wait};
        for (int id : ev.joins) {
            auto it = left_at.find(id);
            if (it == left_at.end()) continue;
            CHECK(t - it->second.first >= it->second.second);
            left_at.erase(it);
        }
    }
}

TEST_CASE("openness: no entry when the team is at capacity") {
    EnvState s = reset(wolf_cfg(), 13);
    clear_teammates(s);
    place(s, 1, 3, 3, kChaser);
    place(s, 2, 4, 4, kChaser);
    s.slots[3].present = false;
    s.slots[3].wait = 0;
    s.slots[3].in_queue = false;
    OpennessEvents ev = openness_tick(s);
    CHECK(ev.joins.empty());
    CHECK(s.present_count() == 3);
    CHECK(!s.reentry.empty());  // queued but blocked by the cap
}

TEST_CASE("present count never exceeds the cap over long random rollouts") {
    for (EnvConfig cfg : {wolf_cfg(), lbf_cfg(), pcn_cfg()}) {
        EnvState s = reset(cfg, 14);
        Rng rng(15);
        int steps_total = 100000;
        for (int t = 0; t < steps_total; ++t) {
            int la = rng.uniform_int(0, num_actions(cfg.kind) - 1);
            JointAction ja = teammate_actions(s, la, rng);
            StepResult res = step(s, ja);
            CHECK(s.present_count() <= cfg.active_cap());
            if (res.done) s = reset(cfg, 14 + static_cast<uint64_t>(t));
        }
    }
}

TEST_CASE("greedy chaser walks straight at the prey") {
    EnvState s = reset(wolf_cfg(), 16);
    clear_teammates(s);
    s.prey_row = 2;
    s.prey_col = 5;
    place(s, 0, 8, 8);
    place(s, 1, 5, 5, kChaser);  // prey directly north
    Rng rng(0);
    CHECK(teammate_act(s, 1, rng) == kNorth);
}

TEST_CASE("nearest loader retrieves when adjacent to the only object") {
    EnvState s = reset(lbf_cfg(), 17);
    clear_teammates(s);
    s.objects.assign(1, GridObject{3, 3, 1});
    place(s, 0, 7, 7);
    place(s, 1, 3, 4, kNearestLoader, 2);
    Rng rng(0);
    CHECK(teammate_act(s, 1, rng) == kLoad);
}

TEST_CASE("pcn seeker hovers until the other destination is covered") {
    EnvState s = reset(pcn_cfg(), 27);
    clear_teammates(s);
    s.dest_row[0] = 5;
    s.dest_col[0] = 5;
    s.dest_row[1] = 0;
    s.dest_col[1] = 0;
    place(s, 0, 10, 10);
    place(s, 1, 5, 6, kSeekerFirst);  // adjacent to its destination
    Rng rng(0);
    CHECK(teammate_act(s, 1, rng) == kStay);  // other destination uncovered
    // Once the learner covers the other destination the seeker completes.
    s.slots[0].row = 0;
    s.slots[0].col = 0;
    CHECK(teammate_act(s, 1, rng) == kWest);  // steps onto (5,5)
}

TEST_CASE("random walker action distribution is uniform within 3 sigma") {
    EnvState s = reset(wolf_cfg(), 18);
    clear_teammates(s);
    place(s, 0, 8, 8);
    place(s, 1, 5, 5, kWolfRandom);
    Rng rng(19);
    const int n = 100000;
    std::vector<int> count(num_actions(EnvKind::wolfpack), 0);
    for (int i = 0; i < n; ++i) count[teammate_act(s, 1, rng)]++;
    const double p = 1.0 / count.size();
    const double sigma = std::sqrt(n * p * (1 - p));
    for (int c : count) CHECK(std::abs(c - n * p) <= 3 * sigma);
}

TEST_CASE("unknown teammate type is rejected") {
    EnvState s = reset(wolf_cfg(), 20);
    clear_teammates(s);
    place(s, 0, 8, 8);
    place(s, 1, 5, 5, 99);
    Rng rng(0);
    CHECK_THROWS(teammate_act(s, 1, rng));
}

TEST_CASE("step validates coverage of present agents") {
    EnvState s = reset(wolf_cfg(), 21);
    clear_teammates(s);
    place(s, 0, 5, 5);
    place(s, 1, 2, 2, kChaser);
    CHECK_THROWS(step(s, JointAction{{0, kStay}}));                // missing agent 1
    CHECK_THROWS(step(s, JointAction{{0, kStay}, {1, kStay}, {2, kStay}}));  // absent agent 2
}

TEST_CASE("wolfpack observation mask is inclusive at Manhattan distance 3") {
    EnvConfig cfg = wolf_cfg();
    cfg.partial_obs = true;
    EnvState s = reset(cfg, 22);
    clear_teammates(s);
    s.prey_row = 9;
    s.prey_col = 9;
    place(s, 0, 5, 5);
    place(s, 1, 5, 8, kChaser);  // distance 3
    place(s, 2, 5, 9, kChaser);  // distance 4
    Observation o = observe_po(s);
    CHECK(o.agents[1].visible);
    CHECK(!o.agents[2].visible);
    for (double v : o.agents[2].feat) CHECK(v == 0.0);
}

TEST_CASE("lbf 5x5 box hides an object three cells away") {
    EnvConfig cfg = lbf_cfg();
    cfg.partial_obs = true;
    EnvState s = reset(cfg, 23);
    clear_teammates(s);
    s.objects.assign(1, GridObject{4, 1, 2});
    place(s, 0, 4, 4);  // object 3 cells to the left
    Observation o = observe_po(s);
    CHECK(o.global_u[0] == 0.0);  // visibility flag of the object
}

TEST_CASE("full observability shows every present agent") {
    EnvState s = reset(wolf_cfg(), 24);
    Observation o = observe(s);
    CHECK(static_cast<int>(o.agents.size()) == s.present_count());
    for (const auto& a : o.agents) CHECK(a.visible);
}

TEST_CASE("episode replay is bit-exact and detects tampering") {
    EnvConfig cfg = lbf_cfg();
    EnvState s = reset(cfg, 25);
    Rng teammate_rng(25 ^ 0x7454534d41455455ULL);
    Rng learner_rng(99);
    EpisodeLog log;
    log.cfg = cfg;
    log.seed = 25;
    for (int t = 0; t < 60; ++t) {
        auto present = present_agents(s);
        int la = learner_rng.uniform_int(0, num_actions(cfg.kind) - 1);
        JointAction ja = teammate_actions(s, la, teammate_rng);
        StepResult res = step(s, ja);
        log.steps.push_back(make_step_record(present, t, ja, res, current_view(s)));
        if (res.done) break;
    }
    ReplayReport ok = verify_episode(log);
    CHECK(ok.ok);

    // Round-trip через the serialized form.
    write_episode_log(log, "episode_test.jsonl");
    EpisodeLog parsed = parse_episode_log("episode_test.jsonl");
    CHECK(verify_episode(parsed).ok);
    std::remove("episode_test.jsonl");

    // Tamper with a reward: replay must fail at that exact step.
    EpisodeLog bad = log;
    bad.steps[30].reward_bits ^= 0x1ULL;
    ReplayReport rep = verify_episode(bad);
    CHECK(!rep.ok);
    CHECK(rep.first_divergence == 30);

    // An empty log passes vacuously.
    EpisodeLog empty;
    empty.cfg = cfg;
    empty.seed = 25;
    CHECK(verify_episode(empty).ok);
}

TEST_CASE("episode replay under the evaluation openness") {
    EnvConfig cfg = wolf_cfg();
    cfg.eval_openness = true;
    EnvState s = reset(cfg, 26);
    CHECK(s.cfg.active_cap() == 5);
    Rng teammate_rng(26 ^ 0x7454534d41455455ULL);
    EpisodeLog log;
    log.cfg = cfg;
    log.seed = 26;
    for (int t = 0; t < 40; ++t) {
        auto present = present_agents(s);
        JointAction ja = teammate_actions(s, kStay, teammate_rng);
        StepResult res = step(s, ja);
        log.steps.push_back(make_step_record(present, t, ja, res, current_view(s)));
    }
    CHECK(verify_episode(log).ok);
}
