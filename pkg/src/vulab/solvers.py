"""Deterministic inner solvers: lattices, ball-constrained multistart, hull geometry.

Everything here is seedless.  Start points, probe directions and polish steps
come from fixed lattices so repeated runs produce identical bytes.
"""

from dataclasses import dataclass
from itertools import product
import warnings

import numpy as np
from scipy.optimize import linprog, minimize

from .errors import SolverBudgetExceeded


@dataclass
class SolverConfig:
    max_iters: int = 500
    starts_per_axis: int = 3
    ftol: float = 1e-14
    polish: bool = True
    polish_step: float = 1e-6
    polish_floor: float = 1e-15


DEFAULT_SOLVER = SolverConfig()


def cube_lattice(dim, radius, per_axis):
    """Regular lattice on [-radius, radius]^dim, row-major order."""
    if dim == 0:
        return np.zeros((1, 0))
    axis = np.linspace(-radius, radius, per_axis) if per_axis > 1 else np.array([0.0])
    pts = np.array(list(product(axis, repeat=dim)))
    return pts


def ball_lattice(dim, radius, per_axis):
    """Cube lattice filtered to the closed ball, always containing the origin."""
    pts = cube_lattice(dim, radius, per_axis)
    keep = np.linalg.norm(pts, axis=1) <= radius + 1e-15
    pts = pts[keep]
    if not any(np.linalg.norm(p) < 1e-15 for p in pts):
        pts = np.vstack([np.zeros(dim), pts])
    return pts


def sphere_directions(dim, count):
    """Deterministic unit directions: signs in 1-D, uniform angles in 2-D,
    a normalized offset lattice in higher dimensions."""
    if dim == 0:
        return np.zeros((0, 0))
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    pts = cube_lattice(dim, 1.0, 3)
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-12]
    pts = pts / np.linalg.norm(pts, axis=1)[:, None]
    return np.unique(np.round(pts, 12), axis=0)


def _offset_lattice(dim):
    """Origin, axis steps and two-axis diagonals; used by polish and ball minimization."""
    offs = [np.zeros(dim)]
    eye = np.eye(dim)
    for i in range(dim):
        offs.extend([eye[i], -eye[i]])
    for i in range(dim):
        for j in range(i + 1, dim):
            for si, sj in product((1.0, -1.0), repeat=2):
                v = si * eye[i] + sj * eye[j]
                offs.append(v / np.sqrt(2.0))
    return np.array(offs)


def pattern_polish(fun, x0, center, radius, step, floor):
    """Deterministic compass/diagonal descent inside the closed ball.

    Value-based, so it sharpens kink minimizers that smooth solvers leave at
    ~1e-8 down to ~1e-13 without derivative information.
    """
    dim = len(x0)
    if dim == 0:
        return x0, fun(x0)
    offs = _offset_lattice(dim)[1:]
    x = np.array(x0, dtype=float)
    fx = fun(x)
    s = step
    while s > floor:
        improved = False
        for d in offs:
            cand = x + s * d
            r = np.linalg.norm(cand - center)
            if r > radius:
                cand = center + (cand - center) * (radius / r)
            fc = fun(cand)
            if fc < fx - 1e-18:
                x, fx = cand, fc
                improved = True
        if not improved:
            s *= 0.25
    return x, fx


def _epigraph_solve(max_pieces, sum_pieces, center, radius, x0, cfg):
    """min  sum_pieces(x) + max(max_pieces)(x)  over ||x - center|| <= radius.

    Solved as the smooth epigraph program in (x, t) with SLSQP.
    """
    dim = len(center)

    def sum_val(x):
        return float(sum(p.value(x) for p in sum_pieces))

    def sum_grad(x):
        g = np.zeros(dim)
        for p in sum_pieces:
            g += p.gradient(x)
        return g

    if not max_pieces:
        def obj(x):
            return sum_val(x)

        def jac(x):
            return sum_grad(x)

        cons = [{
            "type": "ineq",
            "fun": lambda x: radius**2 - np.sum((x - center) ** 2),
            "jac": lambda x: -2.0 * (x - center),
        }]
        res = minimize(obj, x0, jac=jac, method="SLSQP", constraints=cons,
                       options={"maxiter": cfg.max_iters, "ftol": cfg.ftol})
        return np.asarray(res.x, dtype=float), res.status in (0,) or res.success, res.nit

    def obj(y):
        return sum_val(y[:dim]) + y[dim]

    def jac(y):
        return np.append(sum_grad(y[:dim]), 1.0)

    cons = []
    for p in max_pieces:
        cons.append({
            "type": "ineq",
            "fun": (lambda y, p=p: y[dim] - p.value(y[:dim])),
            "jac": (lambda y, p=p: np.append(-p.gradient(y[:dim]), 1.0)),
        })
    cons.append({
        "type": "ineq",
        "fun": lambda y: radius**2 - np.sum((y[:dim] - center) ** 2),
        "jac": lambda y: np.append(-2.0 * (y[:dim] - center), 0.0),
    })
    t0 = max(p.value(x0) for p in max_pieces)
    y0 = np.append(x0, t0 + 1e-6)
    res = minimize(obj, y0, jac=jac, method="SLSQP", constraints=cons,
                   options={"maxiter": cfg.max_iters, "ftol": cfg.ftol})
    return np.asarray(res.x[:dim], dtype=float), res.success, res.nit


def _nelder_mead(fun, x0, center, radius, cfg):
    def penalized(x):
        r = np.linalg.norm(x - center)
        if r > radius:
            x = center + (x - center) * (radius / r)
        return fun(x)

    res = minimize(penalized, x0, method="Nelder-Mead",
                   options={"maxiter": 40 * cfg.max_iters, "xatol": 1e-12,
                            "fatol": 1e-14})
    x = np.asarray(res.x, dtype=float)
    r = np.linalg.norm(x - center)
    if r > radius:
        x = center + (x - center) * (radius / r)
    return x, True, res.nit


@dataclass
class BallMinimizeResult:
    points: np.ndarray       # candidate minimizers, one per row
    values: np.ndarray
    approximate: bool = False


def minimize_branches(branches, objective, center, radius, cfg=None, starts=None):
    """Multistart minimization of a piecewise-smooth objective over a closed ball.

    `branches` is a list of (max_pieces, sum_pieces) descriptions covering the
    objective (the global min is the min over branches); `objective` is the
    plain callable used for polish and the unstructured fallback.
    """
    cfg = cfg or DEFAULT_SOLVER
    dim = len(center)
    if dim == 0:
        z = np.zeros(0)
        return BallMinimizeResult(points=z[None, :], values=np.array([objective(z)]))
    if starts is None:
        starts = center + ball_lattice(dim, 0.9 * radius, cfg.starts_per_axis)
    pts, vals = [], []
    approximate = False
    for x0 in starts:
        if branches:
            for max_pieces, sum_pieces in branches:
                x, ok, nit = _epigraph_solve(max_pieces, sum_pieces, center,
                                             radius, np.asarray(x0, float), cfg)
                if not ok and nit >= cfg.max_iters:
                    approximate = True
                    warnings.warn("inner solver hit its iteration budget",
                                  SolverBudgetExceeded)
                if cfg.polish:
                    x, _ = pattern_polish(objective, x, center, radius,
                                          cfg.polish_step, cfg.polish_floor)
                pts.append(x)
                vals.append(objective(x))
        else:
            x, ok, nit = _nelder_mead(objective, np.asarray(x0, float), center,
                                      radius, cfg)
            if cfg.polish:
                x, _ = pattern_polish(objective, x, center, radius,
                                      cfg.polish_step, cfg.polish_floor)
            pts.append(x)
            vals.append(objective(x))
    return BallMinimizeResult(points=np.array(pts), values=np.array(vals),
                              approximate=approximate)


def cluster_minimizers(points, values, cluster_tol, sep_tol):
    """Keep near-optimal points and merge numerical twins.

    Returns (representatives, best_value); representatives are pairwise at
    least sep_tol apart, ordered by (norm, lexicographic) so ties break
    deterministically with the smallest-norm point first.
    """
    best = float(np.min(values))
    keep = [p for p, v in zip(points, values) if v <= best + cluster_tol]
    keep.sort(key=lambda p: (round(float(np.linalg.norm(p)), 12), tuple(np.round(p, 12))))
    reps = []
    for p in keep:
        if all(np.linalg.norm(p - q) >= sep_tol for q in reps):
            reps.append(p)
    return np.array(reps), best


def hull_point_candidates(generators):
    """Deterministic points in co(generators): vertices, centroid, and a few
    edge/midpoint combinations."""
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    cands = [g for g in G]
    cands.append(np.mean(G, axis=0))
    if len(G) == 2:
        for w in (0.25, 0.75):
            cands.append(w * G[0] + (1 - w) * G[1])
    else:
        c = np.mean(G, axis=0)
        for g in G:
            cands.append(0.5 * (g + c))
    out = []
    for z in cands:
        if all(np.linalg.norm(z - q) > 1e-12 for q in out):
            out.append(z)
    return out


def hull_distance(generators, point):
    """Euclidean distance from `point` to co(generators), via the simplex QP
    min ||G^T lam - point||^2 over the probability simplex (SLSQP, small m)."""
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    p = np.asarray(point, dtype=float)
    m = G.shape[0]
    if m == 1:
        return float(np.linalg.norm(G[0] - p))

    def obj(lam):
        r = G.T @ lam - p
        return float(r @ r)

    def jac(lam):
        return 2.0 * (G @ (G.T @ lam - p))

    cons = [{"type": "eq", "fun": lambda lam: np.sum(lam) - 1.0,
             "jac": lambda lam: np.ones(m)}]
    lam0 = np.full(m, 1.0 / m)
    res = minimize(obj, lam0, jac=jac, method="SLSQP", bounds=[(0.0, 1.0)] * m,
                   constraints=cons, options={"maxiter": 200, "ftol": 1e-16})
    return float(np.sqrt(max(res.fun, 0.0)))


def in_hull(generators, point, tol=1e-8):
    """Feasibility of point in co(generators) by LP (exact at LP tolerance)."""
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    p = np.asarray(point, dtype=float)
    m, n = G.shape
    A_eq = np.vstack([G.T, np.ones((1, m))])
    b_eq = np.append(p, 1.0)
    res = linprog(np.zeros(m), A_eq=A_eq, b_eq=b_eq, bounds=[(0.0, None)] * m,
                  method="highs")
    if res.status == 0:
        return True
    return hull_distance(G, p) <= tol
