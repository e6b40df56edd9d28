// Copyright 2026 Speech-Mamba C++ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared test helpers: finite-difference gradient oracle and small utilities.

#ifndef SPEECHMAMBA_TEST_UTIL_HPP
#define SPEECHMAMBA_TEST_UTIL_HPP

#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "speechmamba/tensor.hpp"

namespace smtest {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2});
}

// Compares reverse-mode gradients of the scalar f() against central
// differences. f must rebuild its graph from `params` on every call.
template <class F>
void expect_grads_match(F&& f, std::vector<sm::Tensor> params, double eps, double tol,
                        const std::string& label) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    sm::Tensor loss = f();
    loss.backward();
    std::vector<std::vector<double>> ad;
    for (auto& p : params) ad.push_back(p.grad());

    double worst = 0.0;
    sm::NoGradGuard ng;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].data();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double up = f().item();
            vals[i] = orig - eps;
            const double dn = f().item();
            vals[i] = orig;
            const double fd = (up - dn) / (2.0 * eps);
            const double err = rel_err(ad[pi][i], fd);
            worst = std::max(worst, err);
            ASSERT_LT(err, tol) << label << ": param " << pi << " coord " << i << " ad "
                                << ad[pi][i] << " fd " << fd;
        }
    }
    (void)worst;
}

inline void expect_all_close(const std::vector<double>& a, const std::vector<double>& b,
                             double tol, const std::string& label) {
    ASSERT_EQ(a.size(), b.size()) << label;
    for (std::size_t i = 0; i < a.size(); ++i)
        ASSERT_NEAR(a[i], b[i], tol) << label << " at " << i;
}

}  // namespace smtest

#endif  // SPEECHMAMBA_TEST_UTIL_HPP
