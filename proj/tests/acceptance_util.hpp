#pragma once

// Shared reporting for the acceptance binaries: one pass/fail line per
// criterion, non-zero exit on any failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace acceptance {

struct Suite {
    int failures = 0;

    void run(int number, const std::string& title, const std::function<bool(std::string&)>& fn) {
        auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", number,
                    title.c_str(), secs, detail.empty() ? "" : " — ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

}  // namespace acceptance
