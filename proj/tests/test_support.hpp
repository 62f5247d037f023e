#pragma once

#include <random>

#include "powernet/network.hpp"
#include "powernet/solver.hpp"

namespace powernet::testing {

inline auto error_code_is(ErrorCode code) {
    return Catch::Matchers::Predicate<Error>(
        [code](const Error& e) { return e.code() == code; },
        std::string("error code ") + to_string(code));
}

/// Random SOCP with a known strictly feasible primal/dual pair, so the
/// instance is solvable with a finite optimum.
inline StandardForm random_feasible_socp(std::mt19937_64& rng, int max_vars = 200) {
    std::uniform_int_distribution<int> nvar_d(8, max_vars);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    const int n = nvar_d(rng);
    const int p = std::uniform_int_distribution<int>(1, std::max(1, n / 4))(rng);
    const int n_lp = std::uniform_int_distribution<int>(2, std::max(2, n / 2))(rng);
    const int n_soc = std::uniform_int_distribution<int>(1, 4)(rng);

    StandardForm form;
    form.n_lp = n_lp;
    int m = n_lp;
    for (int i = 0; i < n_soc; ++i) {
        const int dim = std::uniform_int_distribution<int>(2, 6)(rng);
        form.soc_dims.push_back(dim);
        m += dim;
    }

    std::vector<Triplet> ta, tg;
    for (int r = 0; r < p; ++r) {
        for (int c = 0; c < n; ++c) {
            if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.4) {
                ta.emplace_back(r, c, val(rng));
            }
        }
    }
    for (int r = 0; r < m; ++r) {
        bool any = false;
        for (int c = 0; c < n; ++c) {
            if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.3) {
                tg.emplace_back(r, c, val(rng));
                any = true;
            }
        }
        if (!any) tg.emplace_back(r, rng() % n, 1.0);
    }
    form.A.resize(p, n);
    form.A.setFromTriplets(ta.begin(), ta.end());
    form.G.resize(m, n);
    form.G.setFromTriplets(tg.begin(), tg.end());

    // Interior primal slack and dual cone point.
    Vector x0(n), s0(m), z0(m), y0(p);
    for (int i = 0; i < n; ++i) x0[i] = val(rng);
    for (int i = 0; i < p; ++i) y0[i] = val(rng);
    for (int i = 0; i < n_lp; ++i) {
        s0[i] = 0.2 + std::uniform_real_distribution<double>(0, 1)(rng);
        z0[i] = 0.2 + std::uniform_real_distribution<double>(0, 1)(rng);
    }
    int off = n_lp;
    for (int dim : form.soc_dims) {
        double snorm = 0.0, znorm = 0.0;
        for (int i = 1; i < dim; ++i) {
            s0[off + i] = val(rng);
            z0[off + i] = val(rng);
            snorm += s0[off + i] * s0[off + i];
            znorm += z0[off + i] * z0[off + i];
        }
        s0[off] = std::sqrt(snorm) + 0.3;
        z0[off] = std::sqrt(znorm) + 0.3;
        off += dim;
    }
    form.b = form.A * x0;
    form.h = form.G * x0 + s0;
    form.c = -form.A.transpose() * y0 - form.G.transpose() * z0;
    return form;
}

}  // namespace powernet::testing
