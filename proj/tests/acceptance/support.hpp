// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mopd/random.hpp"

namespace acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int number;
    std::string title;
    double budget_seconds; // wall-clock limit; exceeding it fails the criterion
    std::function<Outcome()> run;
    std::function<void()> setup = {}; // untimed preparation, e.g. reusing checkpoints
};

std::vector<Criterion> numeric_criteria();   // 1, 2, 3, 4
std::vector<Criterion> algebra_criteria();   // 8, 10
std::vector<Criterion> training_criteria();  // 5, 6, 7, 9

/// Directory holding the shipped configs (set by the build).
std::string config_dir();
/// Fresh scratch directory under the build tree.
std::string scratch_dir(const std::string& name);

template <class... Args>
std::string cat(const Args&... args)
{
    std::ostringstream os;
    os.precision(6);
    (os << ... << args);
    return os.str();
}

} // namespace acceptance
