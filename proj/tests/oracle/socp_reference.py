"""Independent optimum for the fixture configs via a conic solve of the
branch-flow relaxation (cvxpy). Prints values that the C++ tests freeze."""
import json
import sys

import warnings

import cvxpy as cp
import numpy as np


def solve(cfg, loads=None, caps=None):
    g = cfg["microgrids"]
    ids = [m["id"] for m in g]
    idx = {i: n for n, i in enumerate(ids)}
    n = len(g)
    a = np.array([m["cost_a"] for m in g])
    b = np.array([m["cost_b"] for m in g])
    d = np.array(loads if loads else [m["load_kw"] for m in g], float)
    pmax = np.array(caps if caps else [m["gen_max_kw"] for m in g], float)
    vlo = np.array([m["v_min_volts"] ** 2 for m in g]) / 1e5
    vhi = np.array([m["v_max_volts"] ** 2 for m in g]) / 1e5
    lines = [(idx[l["from"]], idx[l["to"]], l["resistance_ohm"]) for l in cfg.get("lines", [])]
    p = cp.Variable(n)
    v = cp.Variable(n)  # 1e5 V^2
    Pf = cp.Variable(len(lines))  # kW
    Pb = cp.Variable(len(lines))
    l = cp.Variable(len(lines))  # 1e2 A^2
    cons = [p >= 0, p <= pmax, v >= vlo, v <= vhi, l >= 0]
    inj = [0] * n
    for e, (i, k, r) in enumerate(lines):
        inj[i] = inj[i] + Pf[e]
        inj[k] = inj[k] + Pb[e]
        cons.append(Pf[e] + Pb[e] == r * l[e] * 1e2 / 1e3)
        cons.append((v[i] - v[k]) * 1e5 == 1e3 * r * (Pf[e] - Pb[e]))
        # (1000 P)^2 <= l v  in scaled units: P^2 <= l v * 1e2 * 1e5 / 1e6 = 10 l v
        cons.append(cp.quad_over_lin(Pf[e], v[i]) <= 10 * l[e])
        cons.append(cp.quad_over_lin(Pb[e], v[k]) <= 10 * l[e])
    for i in range(n):
        cons.append(p[i] - d[i] == inj[i])
    obj = cp.Minimize(cp.sum(cp.multiply(a / 2, cp.square(p)) + cp.multiply(b, p)))
    prob = cp.Problem(obj, cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
               max_iter=400)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(prob.status)
    worst = max(float(np.max(c.violation())) for c in cons)
    if worst > 1e-6:
        raise RuntimeError("constraint violation %g" % worst)
    return {"p_g": [float(t) for t in p.value], "voltage": [float(np.sqrt(t * 1e5)) for t in v.value],
            "cost": float(prob.value), "violation": worst}


def drop_node(cfg, node):
    out = dict(cfg)
    out["microgrids"] = [m for m in cfg["microgrids"] if m["id"] != node]
    out["lines"] = [l for l in cfg["lines"] if node not in (l["from"], l["to"])]
    return out


if __name__ == "__main__":
    warnings.simplefilter("ignore")
    for path in sys.argv[1:]:
        cfg = json.load(open(path))
        print(path, json.dumps(solve(cfg)))
        if "six" in path:
            caps = [60, 55, 60, 65, 48, 50]
            print("capacity", json.dumps(solve(cfg, caps=caps)))
            print("without6", json.dumps(solve(drop_node(cfg, 6), caps=caps[:5])))
