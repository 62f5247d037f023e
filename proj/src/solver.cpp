#include "powernet/solver.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace powernet {

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::MaxIter: return "max_iter";
    }
    return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SocScaling {
    int dim = 0;
    double eta2 = 1.0;  ///< eta^2 = snorm / znorm
    double w0 = 1.0;    ///< Nesterov-Todd point, first component
    Vector w1;          ///< remaining components
};

/// Homogeneous self-dual embedding with Nesterov-Todd scaling and Mehrotra
/// predictor-corrector, after the ECOS algorithm. The KKT system
///   [ dI   A'   G' ] [dx]   [bx]
///   [ A   -dI   0  ] [dy] = [by]
///   [ G    0  -W2-dI] [dz]  [bz]
/// is refactorized each iteration with dense per-cone W^2 blocks (the cones
/// in this problem family are small) and solved with sparse LDLT plus
/// iterative refinement.
class HsdSolver {
  public:
    HsdSolver(const StandardForm& form, const SolverSettings& settings)
        : set_(settings), c_(form.c), A_(form.A), b_(form.b), G_(form.G), h_(form.h),
          n_lp_(form.n_lp), soc_dims_(form.soc_dims) {
        n_ = static_cast<int>(c_.size());
        p_ = static_cast<int>(A_.rows());
        m_ = static_cast<int>(G_.rows());
        n_cones_ = static_cast<int>(soc_dims_.size());
        dim_K_ = n_ + p_ + m_;
        if (A_.rows() == 0) A_.resize(0, n_);
        equilibrate();
        At_ = A_.transpose();
        Gt_ = G_.transpose();
        lp_v_ = Vector::Ones(n_lp_);
        socs_.resize(n_cones_);
        int off = n_lp_;
        for (int i = 0; i < n_cones_; ++i) {
            socs_[i].dim = soc_dims_[i];
            socs_[i].w1 = Vector::Zero(soc_dims_[i] - 1);
            off += soc_dims_[i];
        }
        if (off != m_) throw Error(ErrorCode::DimensionMismatch, "cone dims vs G rows");
    }

    StandardSolution run() {
        const auto t0 = std::chrono::steady_clock::now();
        StandardSolution out;

        symbolic_ = true;
        factorize(true);
        symbolic_ = false;

        // Initial point: least-norm primal/dual guesses pushed into the cones.
        Vector dx(n_), dy(p_), dz(m_);
        Vector rhs1 = Vector::Zero(dim_K_);
        rhs1.segment(n_, p_) = b_;
        rhs1.tail(m_) = h_;
        solve_kkt(rhs1, dx, dy, dz, true);
        x_ = dx;
        s_ = bring_to_cone(-dz);

        Vector rhs2 = Vector::Zero(dim_K_);
        rhs2.head(n_) = -c_;
        solve_kkt(rhs2, dx, dy, dz, true);
        y_ = dy;
        z_ = bring_to_cone(dz);

        tau_ = 1.0;
        kap_ = 1.0;
        rhs1.head(n_) = -c_;

        const double resx0 = std::max(1.0, c_.norm());
        const double resy0 = std::max(1.0, b_.norm());
        const double resz0 = std::max(1.0, h_.norm());

        double feastol = set_.tol;
        double abstol = set_.tol;
        double reltol = set_.tol;

        Vector x1(n_), y1(p_), z1(m_), x2(n_), y2(p_), z2(m_);
        Vector lambda(m_), Wdz(m_), ds_by_W(m_), ds_tilde(m_), ds(m_);

        double best_score = kInf;
        Iterate best;
        double pres_prev = kInf;
        int iter = 0;
        bool converged = false;
        bool stalled = false;

        for (iter = 0; iter <= set_.max_iter; ++iter) {
            // Residuals of the homogeneous embedding.
            Vector rx = -Gt_ * z_;
            if (p_ > 0) rx -= At_ * y_;
            const double hresx = rx.norm();
            rx -= tau_ * c_;
            Vector ry = A_ * x_;
            const double hresy = ry.norm();
            ry -= tau_ * b_;
            Vector rz = s_ + G_ * x_;
            const double hresz = rz.norm();
            rz -= tau_ * h_;
            const double cx = c_.dot(x_);
            const double by = p_ > 0 ? b_.dot(y_) : 0.0;
            const double hz = h_.dot(z_);
            const double rt = kap_ + cx + by + hz;

            const double nx = x_.norm(), ny = y_.norm(), nz = z_.norm(), ns = s_.norm();
            const double gap = s_.dot(z_);
            const double mu = (gap + kap_ * tau_) / (n_lp_ + n_cones_ + 1);
            const double pcost = cx / tau_;
            const double dcost = -(hz + by) / tau_;
            double relgap = kInf;
            if (pcost < 0.0) {
                relgap = gap / (-pcost);
            } else if (dcost > 0.0) {
                relgap = gap / dcost;
            }
            const double nry = p_ > 0 ? ry.norm() / std::max(resy0 + nx, 1.0) : 0.0;
            const double nrz = rz.norm() / std::max(resz0 + nx + ns, 1.0);
            const double pres = std::max(nry, nrz) / tau_;
            const double dres = rx.norm() / std::max(resx0 + ny + nz, 1.0) / tau_;
            double pinfres = kInf, dinfres = kInf;
            if ((hz + by) / std::max(ny + nz, 1.0) < -reltol) {
                pinfres = hresx / std::max(ny + nz, 1.0);
            }
            if (cx / std::max(nx, 1.0) < -reltol) {
                dinfres = std::max(hresy / std::max(nx, 1.0), hresz / std::max(nx + ns, 1.0));
            }

            if (set_.verbose) {
                std::printf("%3d  p=% .6e d=% .6e gap=%.2e pres=%.2e dres=%.2e k/t=%.2e\n", iter,
                            pcost, dcost, gap, pres, dres, kap_ / tau_);
            }

            // Divergence safeguard: fall back to the best iterate seen.
            if (iter > 0 && (pres > 1e2 * pres_prev || gap < -1e-12) && best_score < kInf) {
                restore(best);
                out.status = SolveStatus::MaxIter;
                break;
            }
            pres_prev = pres;

            const double score = pres + dres + std::min(relgap, 1.0);
            if (score < best_score) {
                best_score = score;
                save(best);
                best.iterations = iter;
            }

            // Optimality in the scaled problem, confirmed on unscaled data.
            if ((-cx > 0 || -by - hz >= -abstol) && pres < feastol && dres < feastol &&
                (gap < abstol || relgap < reltol)) {
                StandardSolution cand = extract();
                fill_metrics(cand);
                if (cand.metrics.primal_res <= set_.tol && cand.metrics.dual_res <= set_.tol &&
                    cand.metrics.rel_gap <= set_.tol) {
                    cand.status = SolveStatus::Optimal;
                    cand.metrics.iterations = iter;
                    cand.metrics.wall_time_s =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    return cand;
                }
                // The equilibrated test passed but true residuals lag: tighten.
                feastol *= 0.2;
                abstol *= 0.2;
                reltol *= 0.2;
            }

            if (dinfres < feastol && tau_ < kap_) {
                out.status = SolveStatus::Unbounded;
                converged = true;
                break;
            }
            if (pinfres < feastol && tau_ < kap_) {
                out.status = SolveStatus::Infeasible;
                converged = true;
                break;
            }
            if (iter == set_.max_iter) {
                if (best_score < kInf) restore(best);
                out.status = SolveStatus::MaxIter;
                break;
            }
            if (!std::isfinite(pcost)) {
                if (best_score < kInf) restore(best);
                out.status = SolveStatus::MaxIter;
                break;
            }

            // Nesterov-Todd scaling at (s, z).
            if (!update_scalings(lambda)) {
                if (best_score < kInf) restore(best);
                out.status = SolveStatus::MaxIter;
                break;
            }
            try {
                factorize(false);
            } catch (const Error&) {
                if (best_score < kInf) restore(best);
                out.status = SolveStatus::MaxIter;
                break;
            }

            solve_kkt(rhs1, x1, y1, z1, false);

            // Affine (predictor) direction.
            Vector rhs_aff(dim_K_);
            rhs_aff.head(n_) = rx;
            rhs_aff.segment(n_, p_) = -ry;
            rhs_aff.tail(m_) = s_ - rz;
            solve_kkt(rhs_aff, x2, y2, z2, false);

            const double dtau_denom = kap_ / tau_ - c_.dot(x1) - b_.dot(y1) - h_.dot(z1);
            const double dtau_aff =
                (rt - kap_ + c_.dot(x2) + b_.dot(y2) + h_.dot(z2)) / dtau_denom;
            z2 += dtau_aff * z1;
            scale(z2, Wdz);
            ds_by_W = -Wdz - lambda;
            const double dkap_aff = -kap_ - kap_ / tau_ * dtau_aff;
            const double alpha_aff =
                line_search(lambda, ds_by_W, Wdz, tau_, dtau_aff, kap_, dkap_aff);

            const double sigma =
                std::clamp(std::pow(1.0 - alpha_aff, 3), set_.sigma_min, set_.sigma_max);
            const double one_minus_sigma = 1.0 - sigma;

            // Combined (corrector) direction.
            conic_product(lambda, lambda, ds_tilde);
            Vector mehrotra(m_);
            conic_product(ds_by_W, Wdz, mehrotra);
            ds_tilde += mehrotra;
            add_neg_sigma_mu(ds_tilde, sigma * mu);

            conic_division(lambda, ds_tilde, ds_by_W);  // ds_by_W = lambda \ ds~
            scale(ds_by_W, ds);                         // ds = W (lambda \ ds~)

            Vector rhs_comb(dim_K_);
            rhs_comb.head(n_) = one_minus_sigma * rx;
            rhs_comb.segment(n_, p_) = -one_minus_sigma * ry;
            rhs_comb.tail(m_) = -one_minus_sigma * rz + ds;
            solve_kkt(rhs_comb, x2, y2, z2, false);

            const double bkap = kap_ * tau_ + dkap_aff * dtau_aff - sigma * mu;
            const double dtau = (one_minus_sigma * rt - bkap / tau_ + c_.dot(x2) + b_.dot(y2) +
                                 h_.dot(z2)) /
                                dtau_denom;
            x2 += dtau * x1;
            y2 += dtau * y1;
            z2 += dtau * z1;
            scale(z2, Wdz);
            ds_by_W = -(ds_by_W + Wdz);
            const double dkap = -(bkap + kap_ * dtau) / tau_;

            const double alpha =
                set_.step_scale * line_search(lambda, ds_by_W, Wdz, tau_, dtau, kap_, dkap);
            scale(ds_by_W, ds);

            x_ += alpha * x2;
            y_ += alpha * y2;
            z_ += alpha * z2;
            s_ += alpha * ds;
            kap_ += alpha * dkap;
            tau_ += alpha * dtau;

            // Two consecutive crawling steps: the KKT directions have
            // degenerated and nothing more will be gained.
            if (alpha <= set_.step_min || (alpha < 1e-4 && stalled)) {
                if (best_score < kInf) restore(best);
                out.status = SolveStatus::MaxIter;
                break;
            }
            stalled = alpha < 1e-4;
        }

        StandardSolution sol = extract();
        sol.status = out.status;
        fill_metrics(sol);
        sol.metrics.iterations = converged ? iter : std::min(iter, set_.max_iter);
        sol.metrics.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // A max-iter stop may still satisfy the caller's tolerance once
        // measured on unscaled data.
        if (sol.status == SolveStatus::MaxIter && sol.metrics.primal_res <= set_.tol &&
            sol.metrics.dual_res <= set_.tol && sol.metrics.rel_gap <= set_.tol) {
            sol.status = SolveStatus::Optimal;
        }
        return sol;
    }

  private:
    struct Iterate {
        Vector x, y, z, s;
        double tau = 1.0, kap = 1.0;
        int iterations = 0;
    };

    void save(Iterate& it) const {
        it.x = x_;
        it.y = y_;
        it.z = z_;
        it.s = s_;
        it.tau = tau_;
        it.kap = kap_;
    }
    void restore(const Iterate& it) {
        x_ = it.x;
        y_ = it.y;
        z_ = it.z;
        s_ = it.s;
        tau_ = it.tau;
        kap_ = it.kap;
    }

    // -- equilibration --------------------------------------------------

    void equilibrate() {
        x_equil_ = Vector::Ones(n_);
        a_equil_ = Vector::Ones(p_);
        g_equil_ = Vector::Ones(m_);

        for (int pass = 0; pass < set_.equil_iters; ++pass) {
            Vector col_max = Vector::Zero(n_);
            Vector arow_max = Vector::Zero(p_);
            Vector grow_max = Vector::Zero(m_);
            for (int cidx = 0; cidx < A_.outerSize(); ++cidx) {
                for (SparseMatrix::InnerIterator it(A_, cidx); it; ++it) {
                    const double v = std::abs(it.value());
                    col_max[it.col()] = std::max(col_max[it.col()], v);
                    arow_max[it.row()] = std::max(arow_max[it.row()], v);
                }
            }
            for (int cidx = 0; cidx < G_.outerSize(); ++cidx) {
                for (SparseMatrix::InnerIterator it(G_, cidx); it; ++it) {
                    const double v = std::abs(it.value());
                    col_max[it.col()] = std::max(col_max[it.col()], v);
                    grow_max[it.row()] = std::max(grow_max[it.row()], v);
                }
            }
            // Rows of one cone share a scale so that the cone is preserved.
            int off = n_lp_;
            for (int d : soc_dims_) {
                const double m = grow_max.segment(off, d).maxCoeff();
                grow_max.segment(off, d).setConstant(m);
                off += d;
            }
            auto to_scale = [](Vector& v) {
                for (int i = 0; i < v.size(); ++i) v[i] = v[i] > 0.0 ? std::sqrt(v[i]) : 1.0;
            };
            to_scale(col_max);
            to_scale(arow_max);
            to_scale(grow_max);

            for (int cidx = 0; cidx < A_.outerSize(); ++cidx) {
                for (SparseMatrix::InnerIterator it(A_, cidx); it; ++it) {
                    it.valueRef() /= arow_max[it.row()] * col_max[it.col()];
                }
            }
            for (int cidx = 0; cidx < G_.outerSize(); ++cidx) {
                for (SparseMatrix::InnerIterator it(G_, cidx); it; ++it) {
                    it.valueRef() /= grow_max[it.row()] * col_max[it.col()];
                }
            }
            x_equil_ = x_equil_.cwiseProduct(col_max);
            a_equil_ = a_equil_.cwiseProduct(arow_max);
            g_equil_ = g_equil_.cwiseProduct(grow_max);
        }
        b_ = b_.cwiseQuotient(a_equil_);
        h_ = h_.cwiseQuotient(g_equil_);
        c_ = c_.cwiseQuotient(x_equil_);
    }

    // -- KKT assembly and solves -----------------------------------------

    void factorize(bool identity_scaling) {
        // Retry with heavier static regularization when a pivot collapses;
        // near-degenerate optimal faces push the scalings to extremes.
        double d = set_.static_reg;
        for (int attempt = 0; attempt < 6; ++attempt, d *= 100.0) {
            if (try_factorize(identity_scaling, d)) return;
        }
        throw Error(ErrorCode::NotSolved, "KKT factorization failed");
    }

    bool try_factorize(bool identity_scaling, double d) {
        std::vector<Triplet> trip;
        trip.reserve(A_.nonZeros() + G_.nonZeros() + n_ + p_ + n_lp_ + 16 * n_cones_);
        for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, d);
        for (int cidx = 0; cidx < A_.outerSize(); ++cidx) {
            for (SparseMatrix::InnerIterator it(A_, cidx); it; ++it) {
                trip.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
            }
        }
        for (int i = 0; i < p_; ++i) trip.emplace_back(n_ + i, n_ + i, -d);
        for (int cidx = 0; cidx < G_.outerSize(); ++cidx) {
            for (SparseMatrix::InnerIterator it(G_, cidx); it; ++it) {
                trip.emplace_back(n_ + p_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
            }
        }
        // -W^2 - dI block, lower triangle. W^2 = eta^2 (2 w w' - J) per cone
        // with J = diag(1, -1, ..., -1); the dense block pattern stays the
        // same across refactorizations so the symbolic analysis is reused.
        const int zoff = n_ + p_;
        for (int i = 0; i < n_lp_; ++i) {
            trip.emplace_back(zoff + i, zoff + i, -(identity_scaling ? 1.0 : lp_v_[i]) - d);
        }
        int off = n_lp_;
        for (const SocScaling& sc : socs_) {
            for (int r = 0; r < sc.dim; ++r) {
                for (int col = 0; col <= r; ++col) {
                    double w2;
                    if (identity_scaling) {
                        w2 = r == col ? 1.0 : 0.0;
                    } else {
                        const double wr = r == 0 ? sc.w0 : sc.w1[r - 1];
                        const double wc = col == 0 ? sc.w0 : sc.w1[col - 1];
                        w2 = 2.0 * sc.eta2 * wr * wc;
                        if (r == col) w2 -= sc.eta2 * (r == 0 ? 1.0 : -1.0);
                    }
                    trip.emplace_back(zoff + off + r, zoff + off + col,
                                      -w2 - (r == col ? d : 0.0));
                }
            }
            off += sc.dim;
        }

        K_.resize(dim_K_, dim_K_);
        K_.setFromTriplets(trip.begin(), trip.end());
        if (symbolic_) ldlt_.analyzePattern(K_);
        ldlt_.factorize(K_);
        return ldlt_.info() == Eigen::Success;
    }

    /// y += W^2 x on the cone block (current scalings).
    void w2_multiply_add(const Vector& x, Vector& y) const {
        y.head(n_lp_) += lp_v_.cwiseProduct(x.head(n_lp_));
        int off = n_lp_;
        for (const SocScaling& sc : socs_) {
            const auto xb = x.segment(off, sc.dim);
            double wx = sc.w0 * xb[0];
            for (int i = 1; i < sc.dim; ++i) wx += sc.w1[i - 1] * xb[i];
            // J x
            y[off] += sc.eta2 * (2.0 * sc.w0 * wx - xb[0]);
            for (int i = 1; i < sc.dim; ++i) {
                y[off + i] += sc.eta2 * (2.0 * sc.w1[i - 1] * wx + xb[i]);
            }
            off += sc.dim;
        }
    }

    int solve_kkt(const Vector& rhs, Vector& dx, Vector& dy, Vector& dz, bool init) {
        Vector sol = ldlt_.solve(rhs);
        const double threshold = (1.0 + rhs.lpNorm<Eigen::Infinity>()) * set_.refine_acc;
        double err_prev = kInf;
        Vector correction;

        int it = 0;
        for (it = 0; it <= set_.refine_iters; ++it) {
            const auto dxs = sol.head(n_);
            const auto dys = sol.segment(n_, p_);
            const auto dzs = sol.tail(m_);

            // Residual of the unregularized system: the factorization of the
            // regularized one serves as preconditioner.
            Vector ex = rhs.head(n_) - Gt_ * dzs;
            if (p_ > 0) ex -= At_ * dys;
            Vector ey = rhs.segment(n_, p_) - A_ * dxs;
            Vector ez = rhs.tail(m_) - G_ * dxs;
            if (init) {
                ez += dzs;
            } else {
                w2_multiply_add(dzs, ez);
            }
            const double err = std::max({ex.lpNorm<Eigen::Infinity>(),
                                         p_ > 0 ? ey.lpNorm<Eigen::Infinity>() : 0.0,
                                         ez.lpNorm<Eigen::Infinity>()});
            if (it > 0 && err > err_prev) {
                sol -= correction;
                --it;
                break;
            }
            if (err < threshold || it == set_.refine_iters ||
                (it > 0 && err_prev < 3.0 * err)) {
                break;
            }
            err_prev = err;
            Vector e(dim_K_);
            e << ex, ey, ez;
            correction = ldlt_.solve(e);
            sol += correction;
        }
        dx = sol.head(n_);
        dy = sol.segment(n_, p_);
        dz = sol.tail(m_);
        return it;
    }

    // -- cone algebra ------------------------------------------------------

    Vector bring_to_cone(const Vector& r) const {
        // Shift along the cone identity element until the worst block has
        // unit margin; boundary-grazing starts break the NT scaling.
        double shift = 0.0;
        for (int i = 0; i < n_lp_; ++i) {
            shift = std::max(shift, 1.0 - r[i]);
        }
        int off = n_lp_;
        for (int d : soc_dims_) {
            const double res = r[off] - r.segment(off + 1, d - 1).norm();
            shift = std::max(shift, 1.0 - res);
            off += d;
        }
        Vector s = r;
        if (shift > 0.0) {
            s.head(n_lp_).array() += shift;
            off = n_lp_;
            for (int d : soc_dims_) {
                s[off] += shift;
                off += d;
            }
        }
        return s;
    }

    bool update_scalings(Vector& lambda) {
        lp_v_ = s_.head(n_lp_).cwiseQuotient(z_.head(n_lp_));
        if ((lp_v_.array() <= 0.0).any()) return false;
        int off = n_lp_;
        for (SocScaling& sc : socs_) {
            const auto sb = s_.segment(off, sc.dim);
            const auto zb = z_.segment(off, sc.dim);
            const double sres = sb[0] * sb[0] - sb.tail(sc.dim - 1).squaredNorm();
            const double zres = zb[0] * zb[0] - zb.tail(sc.dim - 1).squaredNorm();
            if (sres <= 0.0 || zres <= 0.0) return false;
            const double snorm = std::sqrt(sres);
            const double znorm = std::sqrt(zres);
            sc.eta2 = snorm / znorm;

            const Vector sbar = sb / snorm;
            const Vector zbar = zb / znorm;
            const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
            sc.w0 = (0.5 / gamma) * (sbar[0] + zbar[0]);
            sc.w1 = (0.5 / gamma) * (sbar.tail(sc.dim - 1) - zbar.tail(sc.dim - 1));
            off += sc.dim;
        }
        scale(z_, lambda);
        return true;
    }

    /// lambda = W z with W = eta * (w w'-based NT matrix).
    void scale(const Vector& z, Vector& out) const {
        out.resize(m_);
        out.head(n_lp_) = lp_v_.cwiseSqrt().cwiseProduct(z.head(n_lp_));
        int off = n_lp_;
        for (const SocScaling& sc : socs_) {
            const auto zb = z.segment(off, sc.dim);
            const double eta = std::sqrt(sc.eta2);
            const double zeta = sc.w1.dot(zb.tail(sc.dim - 1));
            out[off] = eta * (sc.w0 * zb[0] + zeta);
            out.segment(off + 1, sc.dim - 1) =
                eta * (zb.tail(sc.dim - 1) + (zb[0] + zeta / (1.0 + sc.w0)) * sc.w1);
            off += sc.dim;
        }
    }

    void conic_product(const Vector& u, const Vector& v, Vector& w) const {
        w.resize(m_);
        w.head(n_lp_) = u.head(n_lp_).cwiseProduct(v.head(n_lp_));
        int off = n_lp_;
        for (int d : soc_dims_) {
            const auto ub = u.segment(off, d);
            const auto vb = v.segment(off, d);
            w[off] = ub.dot(vb);
            w.segment(off + 1, d - 1) = ub[0] * vb.tail(d - 1) + vb[0] * ub.tail(d - 1);
            off += d;
        }
    }

    void conic_division(const Vector& u, const Vector& w, Vector& v) const {
        v.resize(m_);
        v.head(n_lp_) = w.head(n_lp_).cwiseQuotient(u.head(n_lp_));
        int off = n_lp_;
        for (int d : soc_dims_) {
            const auto ub = u.segment(off, d);
            const auto wb = w.segment(off, d);
            const double rho = ub[0] * ub[0] - ub.tail(d - 1).squaredNorm();
            const double zeta = ub.tail(d - 1).dot(wb.tail(d - 1));
            v[off] = (ub[0] * wb[0] - zeta) / rho;
            const double factor = (zeta / ub[0] - wb[0]) / rho;
            v.segment(off + 1, d - 1) = factor * ub.tail(d - 1) + wb.tail(d - 1) / ub[0];
            off += d;
        }
    }

    void add_neg_sigma_mu(Vector& w, double sigma_mu) const {
        w.head(n_lp_).array() -= sigma_mu;
        int off = n_lp_;
        for (int d : soc_dims_) {
            w[off] -= sigma_mu;
            off += d;
        }
    }

    double line_search(const Vector& lambda, const Vector& ds, const Vector& dz, double tau,
                       double dtau, double kap, double dkap) const {
        double alpha = 10.0;
        if (n_lp_ > 0) {
            const double rhomin =
                (ds.head(n_lp_).cwiseQuotient(lambda.head(n_lp_))).minCoeff();
            const double sigmamin =
                (dz.head(n_lp_).cwiseQuotient(lambda.head(n_lp_))).minCoeff();
            const double worst = std::min(rhomin, sigmamin);
            alpha = worst < 0.0 ? 1.0 / (-worst) : 1e13;
        }
        if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
        if (dkap < 0.0) alpha = std::min(alpha, -kap / dkap);

        int off = n_lp_;
        for (int d : soc_dims_) {
            const auto lb = lambda.segment(off, d);
            const double lres = lb[0] * lb[0] - lb.tail(d - 1).squaredNorm();
            if (lres <= 0.0) {
                off += d;
                continue;
            }
            const double lnorm = std::sqrt(lres);
            const Vector lbar = lb / lnorm;
            auto step_bound = [&](const Vector& dir) {
                const auto db = dir.segment(off, d);
                const double ld = lbar[0] * db[0] - lbar.tail(d - 1).dot(db.tail(d - 1));
                const double f = (ld + db[0]) / (lbar[0] + 1.0);
                Vector rho(d);
                rho[0] = ld / lnorm;
                rho.tail(d - 1) = (db.tail(d - 1) - f * lbar.tail(d - 1)) / lnorm;
                return rho.tail(d - 1).norm() - rho[0];
            };
            const double bound = std::max({0.0, step_bound(ds), step_bound(dz)});
            if (bound > 0.0) alpha = std::min(alpha, 1.0 / bound);
            off += d;
        }
        return std::clamp(alpha, 0.0, 1.0);
    }

    // -- solution extraction ------------------------------------------------

    StandardSolution extract() const {
        StandardSolution sol;
        sol.x = x_.cwiseQuotient(x_equil_ * tau_);
        sol.y = p_ > 0 ? Vector(y_.cwiseQuotient(a_equil_ * tau_)) : Vector(0);
        sol.z = z_.cwiseQuotient(g_equil_ * tau_);
        sol.s = s_.cwiseProduct(g_equil_) / tau_;
        return sol;
    }

    void fill_metrics(StandardSolution& sol) const {
        // True residuals on the caller's (unscaled) data.
        const Vector c0 = c_.cwiseProduct(x_equil_);
        const Vector b0 = b_.cwiseProduct(a_equil_);
        const Vector h0 = h_.cwiseProduct(g_equil_);
        Vector eq_res = Vector(0);
        double pres = 0.0;
        if (p_ > 0) {
            Vector Ax(p_);
            Ax.setZero();
            // undo the scaling on the fly: A0 = Da A Dx
            for (int cidx = 0; cidx < A_.outerSize(); ++cidx) {
                for (SparseMatrix::InnerIterator it(A_, cidx); it; ++it) {
                    Ax[it.row()] += it.value() * a_equil_[it.row()] * x_equil_[it.col()] *
                                    sol.x[it.col()];
                }
            }
            pres = (Ax - b0).lpNorm<Eigen::Infinity>() / (1.0 + b0.lpNorm<Eigen::Infinity>());
        }
        Vector Gx = Vector::Zero(m_);
        Vector Gtz = Vector::Zero(n_);
        for (int cidx = 0; cidx < G_.outerSize(); ++cidx) {
            for (SparseMatrix::InnerIterator it(G_, cidx); it; ++it) {
                const double v0 = it.value() * g_equil_[it.row()] * x_equil_[it.col()];
                Gx[it.row()] += v0 * sol.x[it.col()];
                Gtz[it.col()] += v0 * sol.z[it.row()];
            }
        }
        pres = std::max(pres, (Gx + sol.s - h0).lpNorm<Eigen::Infinity>() /
                                  (1.0 + h0.lpNorm<Eigen::Infinity>()));
        Vector station = c0 + Gtz;
        if (p_ > 0) {
            for (int cidx = 0; cidx < A_.outerSize(); ++cidx) {
                for (SparseMatrix::InnerIterator it(A_, cidx); it; ++it) {
                    station[it.col()] +=
                        it.value() * a_equil_[it.row()] * x_equil_[it.col()] * sol.y[it.row()];
                }
            }
        }
        const double dres =
            station.lpNorm<Eigen::Infinity>() / (1.0 + c0.lpNorm<Eigen::Infinity>());
        const double pobj = c0.dot(sol.x);
        const double dobj = -(p_ > 0 ? b0.dot(sol.y) : 0.0) - h0.dot(sol.z);
        sol.metrics.primal_res = pres;
        sol.metrics.dual_res = dres;
        sol.metrics.rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj));
        sol.metrics.primal_obj = pobj;
        sol.metrics.dual_obj = dobj;
    }

    SolverSettings set_;
    Vector c_;
    SparseMatrix A_;
    Vector b_;
    SparseMatrix G_;
    Vector h_;
    int n_lp_ = 0;
    std::vector<int> soc_dims_;
    int n_ = 0, p_ = 0, m_ = 0, n_cones_ = 0, dim_K_ = 0;

    SparseMatrix At_, Gt_;
    Vector x_equil_, a_equil_, g_equil_;

    Vector lp_v_;  ///< LP-cone W^2 diagonal (s/z)
    std::vector<SocScaling> socs_;
    SparseMatrix K_;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
    bool symbolic_ = true;

    Vector x_, y_, z_, s_;
    double tau_ = 1.0, kap_ = 1.0;
};

}  // namespace

StandardSolution solve_standard(const StandardForm& form, const SolverSettings& settings) {
    HsdSolver solver(form, settings);
    return solver.run();
}

}  // namespace powernet
