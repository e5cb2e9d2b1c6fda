#include "oat/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace oat::env {

using nlohmann::json;

std::string env_kind_name(EnvKind k) {
    switch (k) {
        case EnvKind::wolfpack: return "wolfpack";
        case EnvKind::lbf: return "lbf";
        case EnvKind::pcn: return "pcn";
    }
    return "?";
}

EnvKind env_kind_from(const std::string& s) {
    if (s == "wolfpack") return EnvKind::wolfpack;
    if (s == "lbf") return EnvKind::lbf;
    if (s == "pcn") return EnvKind::pcn;
    throw std::runtime_error("unknown environment kind: " + s);
}

int num_actions(EnvKind k) { return k == EnvKind::lbf ? 6 : 5; }
int num_teammate_types(EnvKind) { return 3; }

int agent_feat_width(EnvKind k) {
    // [row, col, is_learner] plus a level one-hot for lbf.
    return k == EnvKind::lbf ? 6 : 3;
}

int global_feat_width(const EnvConfig& cfg) {
    switch (cfg.kind) {
        case EnvKind::wolfpack: return 3;                     // vis, prey row, prey col
        case EnvKind::lbf: return 4 * cfg.num_objects;        // vis, row, col, level
        case EnvKind::pcn: return 6;                          // 2 x (vis, row, col)
    }
    return 0;
}

int EnvState::present_count() const {
    int n = 0;
    for (const auto& a : slots) n += a.present ? 1 : 0;
    return n;
}

bool EnvState::cell_free(int r, int c) const {
    if (r < 0 || r >= cfg.rows || c < 0 || c >= cfg.cols) return false;
    for (const auto& a : slots)
        if (a.present && a.row == r && a.col == c) return false;
    if (cfg.kind == EnvKind::wolfpack && prey_row == r && prey_col == c) return false;
    if (cfg.kind == EnvKind::lbf)
        for (const auto& o : objects)
            if (o.row == r && o.col == c) return false;
    return true;
}

namespace {

constexpr int kDirR[5] = {0, -1, 0, 1, 0};  // stay, N, E, S, W
constexpr int kDirC[5] = {0, 0, 1, 0, -1};

std::pair<int, int> random_free_cell(EnvState& s) {
    std::vector<std::pair<int, int>> free;
    for (int r = 0; r < s.cfg.rows; ++r)
        for (int c = 0; c < s.cfg.cols; ++c)
            if (s.cell_free(r, c)) free.emplace_back(r, c);
    if (free.empty()) throw std::runtime_error("grid too small: no free cell available");
    return free[s.rng.uniform_int(0, static_cast<int>(free.size()) - 1)];
}

int manhattan(int r0, int c0, int r1, int c1) { return std::abs(r0 - r1) + std::abs(c0 - c1); }

bool adjacent(int r0, int c0, int r1, int c1) { return manhattan(r0, c0, r1, c1) == 1; }

// Distance field toward (tr, tc) with present agents as obstacles (the
// target cell itself is allowed). Unreachable cells get INT_MAX/2.
std::vector<int> bfs_field(const EnvState& s, int tr, int tc, int ignore_id) {
    const int R = s.cfg.rows, C = s.cfg.cols;
    std::vector<int> dist(static_cast<size_t>(R) * C, INT_MAX / 2);
    std::vector<char> blocked(static_cast<size_t>(R) * C, 0);
    for (const auto& a : s.slots)
        if (a.present && a.id != ignore_id) blocked[static_cast<size_t>(a.row) * C + a.col] = 1;
    if (s.cfg.kind == EnvKind::lbf)
        for (const auto& o : s.objects) blocked[static_cast<size_t>(o.row) * C + o.col] = 1;
    if (s.cfg.kind == EnvKind::wolfpack && s.prey_row >= 0)
        blocked[static_cast<size_t>(s.prey_row) * C + s.prey_col] = 1;
    std::queue<std::pair<int, int>> q;
    dist[static_cast<size_t>(tr) * C + tc] = 0;
    q.emplace(tr, tc);
    while (!q.empty()) {
        auto [r, c] = q.front();
        q.pop();
        for (int d = 1; d <= 4; ++d) {
            int nr = r + kDirR[d], nc = c + kDirC[d];
            if (nr < 0 || nr >= R || nc < 0 || nc >= C) continue;
            size_t idx = static_cast<size_t>(nr) * C + nc;
            if (blocked[idx] || dist[idx] <= dist[static_cast<size_t>(r) * C + c] + 1) continue;
            dist[idx] = dist[static_cast<size_t>(r) * C + c] + 1;
            q.emplace(nr, nc);
        }
    }
    return dist;
}

// First move of a shortest path toward the target; kStay when already there
// or no move improves. Direction ties resolve in N,E,S,W order.
int step_toward(const EnvState& s, const AgentSlot& me, int tr, int tc) {
    if (me.row == tr && me.col == tc) return kStay;
    std::vector<int> dist = bfs_field(s, tr, tc, me.id);
    const int C = s.cfg.cols;
    int best = kStay;
    int best_d = dist[static_cast<size_t>(me.row) * C + me.col];
    for (int d = 1; d <= 4; ++d) {
        int nr = me.row + kDirR[d], nc = me.col + kDirC[d];
        if (nr < 0 || nr >= s.cfg.rows || nc < 0 || nc >= s.cfg.cols) continue;
        if (!(nr == tr && nc == tc) && !s.cell_free(nr, nc)) continue;
        int dd = dist[static_cast<size_t>(nr) * C + nc];
        if (dd < best_d) {
            best_d = dd;
            best = d;
        }
    }
    return best;
}

void place_initial_entities(EnvState& s) {
    if (s.cfg.kind == EnvKind::wolfpack) {
        auto [r, c] = random_free_cell(s);
        s.prey_row = r;
        s.prey_col = c;
    } else if (s.cfg.kind == EnvKind::lbf) {
        s.objects.clear();
        for (int i = 0; i < s.cfg.num_objects; ++i) {
            auto [r, c] = random_free_cell(s);
            s.objects.push_back(GridObject{r, c, s.rng.uniform_int(1, 4)});
        }
    } else {
        for (int d = 0; d < 2; ++d) {
            while (true) {
                int r = s.rng.uniform_int(0, s.cfg.rows - 1);
                int c = s.rng.uniform_int(0, s.cfg.cols - 1);
                if (d == 1 && r == s.dest_row[0] && c == s.dest_col[0]) continue;
                s.dest_row[d] = r;
                s.dest_col[d] = c;
                break;
            }
        }
        s.learner_on_dest[0] = s.learner_on_dest[1] = false;
    }
}

void spawn_agent(EnvState& s, AgentSlot& a) {
    auto [r, c] = random_free_cell(s);
    a.row = r;
    a.col = c;
    a.present = true;
    a.in_queue = false;
    a.wait = 0;
    if (a.id != 0) {
        a.type_tag = s.rng.uniform_int(0, num_teammate_types(s.cfg.kind) - 1);
        a.lifetime = s.rng.uniform_int(s.cfg.open.life_lo, s.cfg.open.life_hi);
    }
    if (s.cfg.kind == EnvKind::lbf) a.level = s.rng.uniform_int(1, 3);
}

void validate_action(const EnvState& s, const JointAction& action) {
    size_t k = 0;
    for (const auto& a : s.slots) {
        if (!a.present) continue;
        if (k >= action.size() || action[k].first != a.id)
            throw std::runtime_error("step: missing action for present agent " +
                                     std::to_string(a.id));
        int act = action[k].second;
        if (act < 0 || act >= num_actions(s.cfg.kind))
            throw std::runtime_error("step: action " + std::to_string(act) +
                                     " out of range for agent " + std::to_string(a.id));
        ++k;
    }
    if (k != action.size())
        throw std::runtime_error("step: action supplied for absent agent (id " +
                                 std::to_string(action[k].first) + ")");
}

void move_agents(EnvState& s, const JointAction& action) {
    for (const auto& [id, act] : action) {
        if (act < kNorth || act > kWest) continue;
        AgentSlot& a = s.slots[id];
        int nr = a.row + kDirR[act], nc = a.col + kDirC[act];
        if (!s.cell_free(nr, nc)) continue;  // blocked moves are no-ops
        if (s.cfg.kind == EnvKind::pcn) {
            if (nr < 0 || nr >= s.cfg.rows || nc < 0 || nc >= s.cfg.cols) continue;
        }
        a.row = nr;
        a.col = nc;
    }
}

void move_prey(EnvState& s) {
    int best_d = -1, best_move = kStay;
    for (int cand : {kNorth, kEast, kSouth, kWest, kStay}) {
        int nr = s.prey_row + kDirR[cand], nc = s.prey_col + kDirC[cand];
        if (cand != kStay && !s.cell_free(nr, nc)) continue;
        int nearest = INT_MAX;
        for (const auto& a : s.slots)
            if (a.present) nearest = std::min(nearest, manhattan(nr, nc, a.row, a.col));
        if (nearest > best_d) {
            best_d = nearest;
            best_move = cand;
        }
    }
    s.prey_row += kDirR[best_move];
    s.prey_col += kDirC[best_move];
}

double resolve_wolfpack(EnvState& s, const JointAction&) {
    move_prey(s);
    std::vector<int> hunters;
    for (const auto& a : s.slots)
        if (a.present && adjacent(a.row, a.col, s.prey_row, s.prey_col)) hunters.push_back(a.id);
    const bool learner_in = !hunters.empty() && hunters.front() == 0;
    if (hunters.size() >= 2) {
        double reward = learner_in ? 2.0 * static_cast<double>(hunters.size()) : 0.0;
        auto [r, c] = random_free_cell(s);
        s.prey_row = r;
        s.prey_col = c;
        return reward;
    }
    if (learner_in) return -0.5;  // alone next to the prey
    return 0.0;
}

double resolve_lbf(EnvState& s, const JointAction& action) {
    // Each retrieving agent targets its adjacent object with the lowest
    // level (lowest index on ties).
    std::vector<std::vector<int>> collectors(s.objects.size());
    for (const auto& [id, act] : action) {
        if (act != kLoad) continue;
        const AgentSlot& a = s.slots[id];
        int best = -1;
        for (size_t o = 0; o < s.objects.size(); ++o) {
            if (!adjacent(a.row, a.col, s.objects[o].row, s.objects[o].col)) continue;
            if (best < 0 || s.objects[o].level < s.objects[best].level) best = static_cast<int>(o);
        }
        if (best >= 0) collectors[best].push_back(id);
    }
    double reward = 0.0;
    for (size_t o = 0; o < s.objects.size(); ++o) {
        if (collectors[o].empty()) continue;
        int level_sum = 0;
        bool learner_in = false;
        for (int id : collectors[o]) {
            level_sum += s.slots[id].level;
            learner_in |= id == 0;
        }
        if (level_sum < s.objects[o].level) continue;
        if (learner_in) reward += static_cast<double>(s.objects[o].level);
        auto [r, c] = random_free_cell(s);
        s.objects[o] = GridObject{r, c, s.rng.uniform_int(1, 4)};
    }
    return reward;
}

double resolve_pcn(EnvState& s, const JointAction&) {
    bool covered[2];
    for (int d = 0; d < 2; ++d) {
        covered[d] = false;
        for (const auto& a : s.slots)
            if (a.present && a.row == s.dest_row[d] && a.col == s.dest_col[d]) covered[d] = true;
    }
    bool learner_now[2];
    for (int d = 0; d < 2; ++d)
        learner_now[d] =
            s.slots[0].row == s.dest_row[d] && s.slots[0].col == s.dest_col[d];

    double reward = 0.0;
    if (covered[0] && covered[1]) {
        // The learner is rewarded only when it holds one of the two covered
        // destinations itself; a teammate-only pair still consumes the pair.
        if (learner_now[0] || learner_now[1]) reward = 1.0;
        // New pair of destination cells away from every present agent.
        for (int d = 0; d < 2; ++d) {
            while (true) {
                int r = s.rng.uniform_int(0, s.cfg.rows - 1);
                int c = s.rng.uniform_int(0, s.cfg.cols - 1);
                bool on_agent = false;
                for (const auto& a : s.slots)
                    if (a.present && a.row == r && a.col == c) on_agent = true;
                if (on_agent) continue;
                if (d == 1 && r == s.dest_row[0] && c == s.dest_col[0]) continue;
                s.dest_row[d] = r;
                s.dest_col[d] = c;
                break;
            }
        }
        s.learner_on_dest[0] = s.learner_on_dest[1] = false;
        return reward;
    }
    for (int d = 0; d < 2; ++d) {
        const int other = 1 - d;
        if (learner_now[d] && !s.learner_on_dest[d] && !covered[other]) reward -= 0.2;
    }
    s.learner_on_dest[0] = learner_now[0];
    s.learner_on_dest[1] = learner_now[1];
    return reward;
}

}  // namespace

EnvState reset(const EnvConfig& cfg, uint64_t seed) {
    const int entities = cfg.slot_count() + (cfg.kind == EnvKind::lbf ? cfg.num_objects : 0) +
                         (cfg.kind == EnvKind::wolfpack ? 1 : 0) +
                         (cfg.kind == EnvKind::pcn ? 2 : 0);
    if (cfg.rows * cfg.cols < entities + 2)
        throw std::runtime_error("grid too small for configured agent/object count");
    EnvState s;
    s.cfg = cfg;
    s.rng.seed(seed);
    s.slots.resize(cfg.slot_count());
    for (int i = 0; i < cfg.slot_count(); ++i) {
        s.slots[i] = AgentSlot{};
        s.slots[i].id = i;
    }
    place_initial_entities(s);
    spawn_agent(s, s.slots[0]);
    s.slots[0].type_tag = -1;

    const int cap = cfg.active_cap();
    const int initial = cap >= 2 ? s.rng.uniform_int(1, cap - 1) : 0;
    for (int i = 1; i <= initial && i < cfg.slot_count(); ++i) spawn_agent(s, s.slots[i]);
    for (int i = 1; i < cfg.slot_count(); ++i)
        if (!s.slots[i].present) {
            s.slots[i].wait = s.rng.uniform_int(cfg.open.wait_lo, cfg.open.wait_hi);
            s.slots[i].row = s.slots[i].col = -1;
        }
    if (cfg.kind == EnvKind::pcn) {
        s.learner_on_dest[0] =
            s.slots[0].row == s.dest_row[0] && s.slots[0].col == s.dest_col[0];
        s.learner_on_dest[1] =
            s.slots[0].row == s.dest_row[1] && s.slots[0].col == s.dest_col[1];
    }
    return s;
}

OpennessEvents openness_tick(EnvState& s) {
    OpennessEvents ev;
    for (auto& a : s.slots) {
        if (a.id == 0) continue;
        if (a.present) {
            if (--a.lifetime <= 0) {
                a.present = false;
                a.row = a.col = -1;
                a.wait = s.rng.uniform_int(s.cfg.open.wait_lo, s.cfg.open.wait_hi);
                ev.leaves.push_back(a.id);
            }
        } else if (!a.in_queue) {
            if (a.wait > 0) --a.wait;
            if (a.wait == 0) {
                s.reentry.push_back(a.id);
                a.in_queue = true;
            }
        }
    }
    if (s.reentry.size() > 1) {
        // The reentry queue is randomised each tick.
        for (size_t i = s.reentry.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(s.rng.uniform_int(0, static_cast<int>(i)));
            std::swap(s.reentry[i], s.reentry[j]);
        }
    }
    while (s.present_count() < s.cfg.active_cap() && !s.reentry.empty()) {
        int id = s.reentry.front();
        s.reentry.pop_front();
        spawn_agent(s, s.slots[id]);
        ev.joins.push_back(id);
    }
    return ev;
}

StepResult step(EnvState& s, const JointAction& action) {
    validate_action(s, action);
    move_agents(s, action);
    StepResult res;
    switch (s.cfg.kind) {
        case EnvKind::wolfpack: res.reward = resolve_wolfpack(s, action); break;
        case EnvKind::lbf: res.reward = resolve_lbf(s, action); break;
        case EnvKind::pcn: res.reward = resolve_pcn(s, action); break;
    }
    res.events = openness_tick(s);
    s.step_count += 1;
    res.done = s.step_count >= s.cfg.episode_len;
    return res;
}

namespace {

std::vector<double> personal_features(const EnvState& s, const AgentSlot& a) {
    const double rn = s.cfg.rows > 1 ? static_cast<double>(a.row) / (s.cfg.rows - 1) : 0.0;
    const double cn = s.cfg.cols > 1 ? static_cast<double>(a.col) / (s.cfg.cols - 1) : 0.0;
    if (s.cfg.kind == EnvKind::lbf) {
        std::vector<double> f{rn, cn, 0.0, 0.0, 0.0, a.id == 0 ? 1.0 : 0.0};
        if (a.level >= 1 && a.level <= 3) f[1 + a.level] = 1.0;
        return f;
    }
    return {rn, cn, a.id == 0 ? 1.0 : 0.0};
}

bool in_mask(const EnvState& s, int r, int c) {
    const AgentSlot& L = s.slots[0];
    if (s.cfg.kind == EnvKind::wolfpack)
        return manhattan(L.row, L.col, r, c) <= s.cfg.mask_manhattan;
    return std::abs(L.row - r) <= s.cfg.mask_box && std::abs(L.col - c) <= s.cfg.mask_box;
}

std::vector<double> global_features(const EnvState& s, bool masked) {
    const double R = s.cfg.rows > 1 ? s.cfg.rows - 1 : 1;
    const double C = s.cfg.cols > 1 ? s.cfg.cols - 1 : 1;
    std::vector<double> u;
    auto push_entity = [&](int r, int c, std::optional<double> extra) {
        bool vis = !masked || in_mask(s, r, c);
        u.push_back(vis ? 1.0 : 0.0);
        u.push_back(vis ? r / R : 0.0);
        u.push_back(vis ? c / C : 0.0);
        if (extra) u.push_back(vis ? *extra : 0.0);
    };
    switch (s.cfg.kind) {
        case EnvKind::wolfpack: push_entity(s.prey_row, s.prey_col, std::nullopt); break;
        case EnvKind::lbf:
            for (const auto& o : s.objects) push_entity(o.row, o.col, o.level / 4.0);
            break;
        case EnvKind::pcn:
            for (int d = 0; d < 2; ++d) push_entity(s.dest_row[d], s.dest_col[d], std::nullopt);
            break;
    }
    return u;
}

Observation build_obs(const EnvState& s, bool all_slots, bool masked) {
    Observation o;
    o.global_u = global_features(s, masked);
    const int fw = agent_feat_width(s.cfg.kind);
    for (const auto& a : s.slots) {
        if (!all_slots && !a.present) continue;
        ObsAgent rec;
        rec.id = a.id;
        bool vis = a.present && (!masked || a.id == 0 || in_mask(s, a.row, a.col));
        rec.visible = vis;
        rec.feat = vis ? personal_features(s, a) : std::vector<double>(fw, 0.0);
        o.agents.push_back(std::move(rec));
    }
    return o;
}

}  // namespace

Observation observe(const EnvState& s) { return build_obs(s, false, false); }
Observation observe_po(const EnvState& s) { return build_obs(s, true, true); }
Observation state_view(const EnvState& s) { return build_obs(s, true, false); }
Observation current_view(const EnvState& s) {
    return s.cfg.partial_obs ? observe_po(s) : observe(s);
}

namespace {

int act_random(const EnvState& s, Rng& rng) {
    return rng.uniform_int(0, num_actions(s.cfg.kind) - 1);
}

int act_wolf(const EnvState& s, const AgentSlot& me, Rng& rng) {
    switch (me.type_tag) {
        case kChaser: return step_toward(s, me, s.prey_row, s.prey_col);
        case kFlanker: {
            // Aim at the cell adjacent to the prey opposite the nearest hunter.
            const AgentSlot* nearest = nullptr;
            int best = INT_MAX;
            for (const auto& a : s.slots) {
                if (!a.present || a.id == me.id) continue;
                int d = manhattan(a.row, a.col, s.prey_row, s.prey_col);
                if (d < best) {
                    best = d;
                    nearest = &a;
                }
            }
            int tr = s.prey_row, tc = s.prey_col;
            if (nearest != nullptr) {
                int dr = s.prey_row - nearest->row, dc = s.prey_col - nearest->col;
                int sr = dr > 0 ? 1 : dr < 0 ? -1 : 0;
                int sc = dc > 0 ? 1 : dc < 0 ? -1 : 0;
                if (std::abs(dr) >= std::abs(dc)) tr += sr;
                else tc += sc;
                if (tr == s.prey_row && tc == s.prey_col) tr += 1;
            }
            tr = std::clamp(tr, 0, s.cfg.rows - 1);
            tc = std::clamp(tc, 0, s.cfg.cols - 1);
            if (adjacent(me.row, me.col, s.prey_row, s.prey_col)) return kStay;
            return step_toward(s, me, tr, tc);
        }
        case kWolfRandom: return act_random(s, rng);
        default:
            throw std::runtime_error("unknown wolfpack teammate type " +
                                     std::to_string(me.type_tag));
    }
}

const GridObject* lowest_level_object(const EnvState& s, bool over_level, int my_level) {
    const GridObject* best = nullptr;
    for (const auto& o : s.objects) {
        if (over_level && o.level <= my_level) continue;
        if (best == nullptr || o.level < best->level) best = &o;
    }
    return best;
}

int move_adjacent_to(const EnvState& s, const AgentSlot& me, int tr, int tc) {
    if (adjacent(me.row, me.col, tr, tc)) return kStay;
    int best_act = kStay, best_d = INT_MAX;
    for (int d = 1; d <= 4; ++d) {
        int ar = tr + kDirR[d], ac = tc + kDirC[d];
        if (ar < 0 || ar >= s.cfg.rows || ac < 0 || ac >= s.cfg.cols) continue;
        if (!(me.row == ar && me.col == ac) && !s.cell_free(ar, ac)) continue;
        std::vector<int> dist = bfs_field(s, ar, ac, me.id);
        int dd = dist[static_cast<size_t>(me.row) * s.cfg.cols + me.col];
        if (dd < best_d) {
            best_d = dd;
            best_act = step_toward(s, me, ar, ac);
        }
    }
    return best_act;
}

int act_lbf(const EnvState& s, const AgentSlot& me, Rng& rng) {
    switch (me.type_tag) {
        case kNearestLoader: {
            const GridObject* target = lowest_level_object(s, false, me.level);
            if (target == nullptr) return kStay;
            if (adjacent(me.row, me.col, target->row, target->col)) return kLoad;
            return move_adjacent_to(s, me, target->row, target->col);
        }
        case kCoopWaiter: {
            const GridObject* target = lowest_level_object(s, true, me.level);
            if (target == nullptr) {
                target = lowest_level_object(s, false, me.level);
                if (target == nullptr) return kStay;
                if (adjacent(me.row, me.col, target->row, target->col)) return kLoad;
                return move_adjacent_to(s, me, target->row, target->col);
            }
            if (adjacent(me.row, me.col, target->row, target->col)) {
                for (const auto& a : s.slots)
                    if (a.present && a.id != me.id &&
                        adjacent(a.row, a.col, target->row, target->col))
                        return kLoad;  // retrieve once a helper is alongside
                return kStay;
            }
            return move_adjacent_to(s, me, target->row, target->col);
        }
        case kLbfRandom: return act_random(s, rng);
        default:
            throw std::runtime_error("unknown lbf teammate type " + std::to_string(me.type_tag));
    }
}

int act_pcn(const EnvState& s, const AgentSlot& me, Rng& rng) {
    switch (me.type_tag) {
        case kSeekerFirst:
        case kSeekerSecond: {
            // Hovers next to its preferred destination and steps onto it only
            // once the other destination is already covered, completing pairs
            // started by someone else. Defers to the free destination when its
            // preferred one is already held by another agent.
            int d = me.type_tag == kSeekerFirst ? 0 : 1;
            for (const auto& a : s.slots)
                if (a.present && a.id != me.id && a.row == s.dest_row[d] &&
                    a.col == s.dest_col[d])
                    d = 1 - d;
            const int tr = s.dest_row[d], tc = s.dest_col[d];
            if (me.row == tr && me.col == tc) return kStay;
            const int other = 1 - d;
            bool other_covered = false;
            for (const auto& a : s.slots)
                if (a.present && a.row == s.dest_row[other] && a.col == s.dest_col[other])
                    other_covered = true;
            if (other_covered) return step_toward(s, me, tr, tc);
            if (adjacent(me.row, me.col, tr, tc)) return kStay;
            return move_adjacent_to(s, me, tr, tc);
        }
        case kPcnRandom: return act_random(s, rng);
        default:
            throw std::runtime_error("unknown pcn teammate type " + std::to_string(me.type_tag));
    }
}

}  // namespace

int teammate_act(const EnvState& s, int agent_id, Rng& rng) {
    const AgentSlot& me = s.slots.at(agent_id);
    if (!me.present) throw std::runtime_error("teammate_act: agent not present");
    switch (s.cfg.kind) {
        case EnvKind::wolfpack: return act_wolf(s, me, rng);
        case EnvKind::lbf: return act_lbf(s, me, rng);
        case EnvKind::pcn: return act_pcn(s, me, rng);
    }
    return kStay;
}

JointAction teammate_actions(const EnvState& s, int learner_action, Rng& rng) {
    JointAction a;
    for (const auto& slot : s.slots) {
        if (!slot.present) continue;
        a.emplace_back(slot.id,
                       slot.id == 0 ? learner_action : teammate_act(s, slot.id, rng));
    }
    return a;
}

uint64_t observation_hash(const Observation& o) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    auto mix = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& a : o.agents) {
        mix(&a.id, sizeof(a.id));
        char v = a.visible ? 1 : 0;
        mix(&v, 1);
        mix(a.feat.data(), a.feat.size() * sizeof(double));
    }
    mix(o.global_u.data(), o.global_u.size() * sizeof(double));
    return h;
}

// --- episode logs -------------------------------------------------------

namespace {
json config_to_json(const EnvConfig& cfg) {
    return json{{"kind", env_kind_name(cfg.kind)},
                {"rows", cfg.rows},
                {"cols", cfg.cols},
                {"max_agents_train", cfg.open.max_agents_train},
                {"max_agents_eval", cfg.open.max_agents_eval},
                {"life_lo", cfg.open.life_lo},
                {"life_hi", cfg.open.life_hi},
                {"wait_lo", cfg.open.wait_lo},
                {"wait_hi", cfg.open.wait_hi},
                {"partial_obs", cfg.partial_obs},
                {"eval_openness", cfg.eval_openness},
                {"episode_len", cfg.episode_len},
                {"num_objects", cfg.num_objects},
                {"mask_manhattan", cfg.mask_manhattan},
                {"mask_box", cfg.mask_box}};
}

EnvConfig config_from_json(const json& j) {
    EnvConfig cfg;
    cfg.kind = env_kind_from(j.at("kind").get<std::string>());
    cfg.rows = j.at("rows");
    cfg.cols = j.at("cols");
    cfg.open.max_agents_train = j.at("max_agents_train");
    cfg.open.max_agents_eval = j.at("max_agents_eval");
    cfg.open.life_lo = j.at("life_lo");
    cfg.open.life_hi = j.at("life_hi");
    cfg.open.wait_lo = j.at("wait_lo");
    cfg.open.wait_hi = j.at("wait_hi");
    cfg.partial_obs = j.at("partial_obs");
    cfg.eval_openness = j.at("eval_openness");
    cfg.episode_len = j.at("episode_len");
    cfg.num_objects = j.at("num_objects");
    cfg.mask_manhattan = j.at("mask_manhattan");
    cfg.mask_box = j.at("mask_box");
    return cfg;
}

uint64_t double_bits(double v) {
    uint64_t b;
    std::memcpy(&b, &v, sizeof(b));
    return b;
}

double bits_double(uint64_t b) {
    double v;
    std::memcpy(&v, &b, sizeof(v));
    return v;
}
}  // namespace

std::string episode_header_line(const EnvConfig& cfg, uint64_t seed) {
    json j{{"header", config_to_json(cfg)}, {"seed", seed}};
    return j.dump();
}

std::string episode_step_line(const EpisodeStepRecord& rec) {
    json pres = json::array();
    for (auto [id, tag] : rec.present) pres.push_back(json::array({id, tag}));
    json act = json::array();
    for (auto [id, a] : rec.action) act.push_back(json::array({id, a}));
    json j{{"t", rec.step},
           {"present", pres},
           {"act", act},
           {"r_bits", rec.reward_bits},
           {"r", bits_double(rec.reward_bits)},
           {"done", rec.done},
           {"joins", rec.joins},
           {"leaves", rec.leaves},
           {"obs_hash", rec.obs_hash}};
    return j.dump();
}

EpisodeStepRecord make_step_record(const std::vector<std::pair<int, int>>& present,
                                   int step_index, const JointAction& action,
                                   const StepResult& result, const Observation& next_obs) {
    EpisodeStepRecord rec;
    rec.step = step_index;
    rec.present = present;
    rec.action = action;
    rec.reward_bits = double_bits(result.reward);
    rec.done = result.done;
    rec.joins = result.events.joins;
    rec.leaves = result.events.leaves;
    rec.obs_hash = observation_hash(next_obs);
    return rec;
}

std::vector<std::pair<int, int>> present_agents(const EnvState& s) {
    std::vector<std::pair<int, int>> out;
    for (const auto& a : s.slots)
        if (a.present) out.emplace_back(a.id, a.type_tag);
    return out;
}

void write_episode_log(const EpisodeLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write episode log " + path);
    os << episode_header_line(log.cfg, log.seed) << "\n";
    for (const auto& rec : log.steps) os << episode_step_line(rec) << "\n";
}

std::vector<EpisodeLog> parse_episode_logs(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open episode log " + path);
    std::vector<EpisodeLog> logs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (j.contains("header")) {
            EpisodeLog log;
            log.cfg = config_from_json(j.at("header"));
            log.seed = j.at("seed");
            logs.push_back(std::move(log));
            continue;
        }
        if (logs.empty()) throw std::runtime_error("episode log missing header line");
        EpisodeStepRecord rec;
        rec.step = j.at("t");
        for (const auto& p : j.at("present"))
            rec.present.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
        for (const auto& p : j.at("act"))
            rec.action.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
        rec.reward_bits = j.at("r_bits");
        rec.done = j.at("done");
        rec.joins = j.at("joins").get<std::vector<int>>();
        rec.leaves = j.at("leaves").get<std::vector<int>>();
        rec.obs_hash = j.at("obs_hash");
        logs.back().steps.push_back(std::move(rec));
    }
    return logs;
}

EpisodeLog parse_episode_log(const std::string& path) {
    std::vector<EpisodeLog> logs = parse_episode_logs(path);
    if (logs.empty()) throw std::runtime_error("episode log missing header line");
    return logs.front();
}

void append_episode_log(const EpisodeLog& log, const std::string& path) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("cannot append episode log " + path);
    os << episode_header_line(log.cfg, log.seed) << "\n";
    for (const auto& rec : log.steps) os << episode_step_line(rec) << "\n";
}

ReplayReport verify_episode(const EpisodeLog& log) {
    ReplayReport rep;
    EnvState s = reset(log.cfg, log.seed);
    Rng policy_rng(log.seed ^ 0x7454534d41455455ULL);
    for (const auto& rec : log.steps) {
        auto present = present_agents(s);
        if (present != rec.present) {
            rep.ok = false;
            rep.first_divergence = rec.step;
            rep.detail = "present-agent set diverged";
            return rep;
        }
        int learner_action = 0;
        for (auto [id, a] : rec.action)
            if (id == 0) learner_action = a;
        JointAction expect = teammate_actions(s, learner_action, policy_rng);
        if (expect != rec.action) {
            rep.ok = false;
            rep.first_divergence = rec.step;
            rep.detail = "joint action diverged";
            return rep;
        }
        StepResult res = step(s, expect);
        if (double_bits(res.reward) != rec.reward_bits) {
            rep.ok = false;
            rep.first_divergence = rec.step;
            rep.detail = "reward diverged";
            return rep;
        }
        uint64_t oh = observation_hash(current_view(s));
        if (oh != rec.obs_hash) {
            rep.ok = false;
            rep.first_divergence = rec.step;
            rep.detail = "observation diverged";
            return rep;
        }
        if (res.done != rec.done || res.events.joins != rec.joins ||
            res.events.leaves != rec.leaves) {
            rep.ok = false;
            rep.first_divergence = rec.step;
            rep.detail = "membership events diverged";
            return rep;
        }
    }
    return rep;
}

}  // namespace oat::env
