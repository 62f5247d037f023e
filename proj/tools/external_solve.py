#!/usr/bin/env python3
"""Cross-check solver: reads the sparse text dump and solves it with cvxpy.

Usage: external_solve.py program.socp result.json
"""

import json
import math
import sys

import cvxpy as cp
import numpy as np
import scipy.sparse as sp


def read_tokens(path):
    with open(path) as fh:
        for line in fh:
            yield from line.split()


def parse(path):
    tok = read_tokens(path)

    def s():
        return next(tok)

    def i():
        return int(next(tok))

    def f():
        return float(next(tok))

    assert s() == "powernet-socp" and i() == 1
    assert s() == "vars"
    n = i()
    cost = np.zeros(n)
    assert s() == "cost"
    for _ in range(i()):
        idx = i()
        cost[idx] = f()
    assert s() == "bounds"
    nb = i()
    lo = np.empty(nb)
    hi = np.empty(nb)
    for k in range(nb):
        lo[k] = f()
        hi[k] = f()
    assert s() == "eq"
    rows, nnz = i(), i()
    r = np.empty(nnz, dtype=int)
    c = np.empty(nnz, dtype=int)
    v = np.empty(nnz)
    for k in range(nnz):
        r[k], c[k], v[k] = i(), i(), f()
    A = sp.coo_matrix((v, (r, c)), shape=(rows, n)).tocsr()
    b = np.array([f() for _ in range(rows)])
    cones = []
    assert s() == "cones"
    for _ in range(i()):
        assert s() == "cone"
        dim, nnz, _h_scale = i(), i(), f()
        rr = np.empty(nnz, dtype=int)
        cc = np.empty(nnz, dtype=int)
        vv = np.empty(nnz)
        for k in range(nnz):
            rr[k], cc[k], vv[k] = i(), i(), f()
        P = sp.coo_matrix((vv, (rr, cc)), shape=(dim, n)).tocsr()
        q = np.array([f() for _ in range(dim)])
        cones.append((dim, P, q))
    return n, cost, lo, hi, A, b, cones


def main():
    prog_path, out_path = sys.argv[1], sys.argv[2]
    n, cost, lo, hi, A, b, cones = parse(prog_path)

    w = cp.Variable(n)
    constraints = []
    if A.shape[0] > 0:
        constraints.append(A @ w == b)
    finite_lo = np.isfinite(lo)
    finite_hi = np.isfinite(hi)
    if finite_lo.any():
        constraints.append(w[finite_lo] >= lo[finite_lo])
    if finite_hi.any():
        constraints.append(w[finite_hi] <= hi[finite_hi])
    for dim, P, q in cones:
        expr = P @ w + q
        if dim == 1:
            constraints.append(expr >= 0)
        else:
            constraints.append(cp.SOC(expr[0], expr[1:]))

    problem = cp.Problem(cp.Minimize(cost @ w), constraints)
    value = None
    status = "error"
    for solver in ("CLARABEL", "SCS"):
        if solver not in cp.installed_solvers():
            continue
        try:
            kwargs = {"eps": 1e-10, "max_iters": 200000} if solver == "SCS" else {}
            problem.solve(solver=solver, **kwargs)
        except cp.SolverError:
            continue
        if problem.status in ("optimal", "optimal_inaccurate"):
            value = problem.value
            status = problem.status
            break

    with open(out_path, "w") as fh:
        json.dump({"status": status,
                   "objective": value if value is not None else math.nan,
                   "solver": solver if value is not None else None}, fh)
    return 0 if value is not None else 1


if __name__ == "__main__":
    sys.exit(main())
