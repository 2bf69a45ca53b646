#pragma once

#include <functional>
#include <string>
#include <vector>

#include "e3d/rng.hpp"
#include "e3d/tensor.hpp"

namespace e3d {

struct GradCheckReport {
    std::string op;
    std::string shapes;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;  // failure location, when any

    std::string line() const;
};

// Central-difference gradient verification.  `forward` evaluates the op from
// the current contents of `inputs`; `backward` maps an upstream gradient to
// one flat gradient per input span.  The scalar under test is <g, forward()>
// for a seeded random g in [-1,1].
GradCheckReport grad_check(
    const std::string& op_name,
    const std::function<Tensor<double>()>& forward,
    const std::vector<std::span<double>>& inputs,
    const std::function<std::vector<std::vector<double>>(const Tensor<double>&)>& backward,
    double tolerance, std::uint64_t seed = 42, double epsilon = 1e-5);

// The fixed battery behind the `gradcheck` CLI subcommand: every
// differentiable op, the TCA block with and without the gate, and a tiny
// two-block network.
std::vector<GradCheckReport> run_all_grad_checks();

// Subset selection by op name; throws if the name is unknown.
GradCheckReport run_grad_check(const std::string& op_name);

std::vector<std::string> grad_check_names();

}  // namespace e3d
