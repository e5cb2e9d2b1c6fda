#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace oat {

// Seedable generator with explicit state serialization so checkpoints and
// episode replays stay bit-exact.
class Rng {
public:
    Rng() : gen_(0x9e3779b97f4a7c15ULL) {}
    explicit Rng(uint64_t seed) : gen_(seed) {}

    void seed(uint64_t s) { gen_.seed(s); }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    // Inclusive bounds.
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
    double gauss() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
    uint64_t next_u64() { return gen_(); }

    std::mt19937_64& engine() { return gen_; }

    std::string save_state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }
    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
        if (is.fail()) throw std::runtime_error("Rng::load_state: malformed state string");
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace oat
