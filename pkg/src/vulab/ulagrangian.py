"""Localized U-Lagrangian: the selection v(u), partial minimization values,
finite-difference gradients with membership cross-validation, and the
convexity / little-oh diagnostics.

All per-u work routes through one cached inner solve so value, selection and
gradient queries are consistent with each other.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryActive, InconsistentGradient
from .oracle import evaluate, subdifferential_polytope
from .solvers import (DEFAULT_SOLVER, cluster_minimizers, hull_distance,
                      minimize_branches, sphere_directions)
from .vu import principal_angle


def _complement(basis, dim):
    """Orthonormal basis of the orthogonal complement of span(basis)."""
    b = np.atleast_2d(basis)
    if b.shape[1] == 0:
        return np.eye(dim)
    _, s, vt = np.linalg.svd(b.T, full_matrices=True)
    rank = int(np.sum(s > 1e-12))
    return vt[rank:].T


@dataclass
class ULagContext:
    """Frozen setup for one localized U'-Lagrangian study."""

    model: object
    frame: object
    uprime_basis: np.ndarray = None   # defaults to the frame U basis
    eps_v: float = None               # inner V'-ball radius, defaults frame.eps
    solver_cfg: object = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.uprime_basis is None:
            self.uprime_basis = self.frame.u_basis
        self.uprime_basis = np.atleast_2d(np.asarray(self.uprime_basis, float))
        if self.uprime_basis.size and self.frame.dim_u:
            assert principal_angle(self.uprime_basis, self.frame.u_basis) <= 1e-10 \
                or self._contained_in_u()
        if self.eps_v is None:
            self.eps_v = self.frame.eps
        self.vprime_basis = _complement(self.uprime_basis, self.frame.dim)
        self.anchor_vprime = self.vprime_basis.T @ self.frame.anchor
        self.solver_cfg = self.solver_cfg or DEFAULT_SOLVER

    def _contained_in_u(self):
        u = self.frame.u_basis
        resid = self.uprime_basis - u @ (u.T @ self.uprime_basis)
        return float(np.max(np.abs(resid), initial=0.0)) <= 1e-10

    @property
    def dim_uprime(self):
        return self.uprime_basis.shape[1]

    @property
    def dim_vprime(self):
        return self.vprime_basis.shape[1]

    def point(self, u, v):
        out = self.frame.base_point.copy()
        if self.dim_uprime:
            out = out + self.uprime_basis @ np.asarray(u, float)
        if self.dim_vprime:
            out = out + self.vprime_basis @ np.asarray(v, float)
        return out


def _inner_solve(ctx, u, anchor_v=None):
    """Minimize v -> f(base + u + v) - <anchor_V', v> over the V'-ball.

    Returns (v, value, boundary_active); v tie-broken by smallest norm then
    lexicographic order.
    """
    anchor_v = ctx.anchor_vprime if anchor_v is None else np.asarray(anchor_v, float)
    u = np.asarray(u, dtype=float)
    base = ctx.frame.base_point + (ctx.uprime_basis @ u if ctx.dim_uprime else 0.0)
    M = ctx.vprime_basis
    if ctx.dim_vprime == 0:
        return np.zeros(0), evaluate(ctx.model, base), False

    branches = ctx.model.solver_branches()
    if branches is not None:
        from .oracle import AffinePiece
        tilt = AffinePiece(-anchor_v)
        restricted = [([p.restrict(base, M) for p in mp],
                       [p.restrict(base, M) for p in sp] + [tilt])
                      for mp, sp in branches]
    else:
        restricted = None

    def objective(v):
        return evaluate(ctx.model, base + M @ v) - float(anchor_v @ v)

    res = minimize_branches(restricted, objective, np.zeros(ctx.dim_vprime),
                            ctx.eps_v, ctx.solver_cfg)
    cluster_tol = 1e-9 * (1.0 + abs(float(res.values.min())))
    reps, best = cluster_minimizers(res.points, res.values, cluster_tol,
                                    1e-6 * ctx.eps_v)
    v = reps[0]
    boundary = bool(np.linalg.norm(v) >= ctx.eps_v * (1.0 - 1e-9))
    return v, best, boundary


def _anchored_value(ctx, u, v):
    """f(base + u + v) - <anchor_V', v> along the same float path the inner
    solver uses, so every value query is bit-identical to the solve."""
    u = np.asarray(u, dtype=float)
    base = ctx.frame.base_point + (ctx.uprime_basis @ u if ctx.dim_uprime else 0.0)
    if ctx.dim_vprime == 0:
        return evaluate(ctx.model, base)
    return (evaluate(ctx.model, base + ctx.vprime_basis @ v)
            - float(ctx.anchor_vprime @ v))


def _solve_cached(ctx, u):
    key = tuple(np.round(np.asarray(u, float), 14))
    if key not in ctx._cache:
        v, _, boundary = _inner_solve(ctx, u)
        ctx._cache[key] = (v, _anchored_value(ctx, u, v), boundary)
    return ctx._cache[key]


def v_of_u(ctx, u):
    """Selection v(u): minimizer of the anchored inner problem over the
    V'-ball.  Warns BoundaryActive when the minimizer sits on the ball."""
    u = np.asarray(u, dtype=float)
    if np.linalg.norm(u) > ctx.frame.eps + 1e-12:
        raise ValueError("u outside the U'-ball")
    v, _, boundary = _solve_cached(ctx, u)
    if boundary:
        warnings.warn("selection v(u) is active on the V'-ball boundary",
                      BoundaryActive, stacklevel=2)
    return v


def l_value(ctx, u):
    """Localized Lagrangian: f(base+u+v(u)) - <anchor_V', v(u)>, +inf outside
    the U'-ball."""
    u = np.asarray(u, dtype=float)
    if np.linalg.norm(u) > ctx.frame.eps + 1e-12:
        return np.inf
    v, val, boundary = _solve_cached(ctx, u)
    if boundary:
        warnings.warn("selection v(u) is active on the V'-ball boundary",
                      BoundaryActive, stacklevel=2)
    return float(val)


def k_v(ctx, u):
    """Auxiliary value h(u+v(u)) - <anchor_V', u+v(u)>; equals l_value by
    construction (same selection, same float path)."""
    u = np.asarray(u, dtype=float)
    if np.linalg.norm(u) > ctx.frame.eps + 1e-12:
        return np.inf
    v, val, _ = _solve_cached(ctx, u)
    if ctx.dim_vprime and np.linalg.norm(v) > ctx.eps_v + 1e-12:
        return np.inf
    return float(val)


def grad_l(ctx, u, fd_step=None, membership_tol=1e-5, validate=True):
    """Central finite-difference gradient of the Lagrangian, cross-validated
    by membership of (z_U(u), anchor_V') in the subdifferential hull at the
    selected point."""
    u = np.asarray(u, dtype=float)
    step = fd_step if fd_step is not None else 1e-5 * (1.0 + np.linalg.norm(u))
    g = np.zeros(ctx.dim_uprime)
    for i in range(ctx.dim_uprime):
        e = np.zeros(ctx.dim_uprime)
        e[i] = step
        g[i] = (l_value(ctx, u + e) - l_value(ctx, u - e)) / (2.0 * step)
    if validate:
        v, _, _ = _solve_cached(ctx, u)
        point = ctx.point(u, v)
        world = np.zeros(ctx.frame.dim)
        if ctx.dim_uprime:
            world += ctx.uprime_basis @ g
        if ctx.dim_vprime:
            world += ctx.vprime_basis @ ctx.anchor_vprime
        poly = subdifferential_polytope(ctx.model, point)
        dist = hull_distance(poly.generators, world)
        if dist > membership_tol:
            raise InconsistentGradient(
                f"finite-difference gradient {g} lies {dist:.2e} from the hull",
                fd_gradient=g, polytope_distance=dist)
    return g


def convexity_check(ctx, u_grid):
    """Worst midpoint violation max L((a+b)/2) - (L(a)+L(b))/2 over grid
    pairs whose midpoint is itself a grid point."""
    nodes = [np.atleast_1d(np.asarray(u, float)) for u in u_grid]
    vals = [l_value(ctx, u) for u in nodes]
    index = {tuple(np.round(n, 12)): i for i, n in enumerate(nodes)}
    worst = -np.inf
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            mid = 0.5 * (nodes[i] + nodes[j])
            k = index.get(tuple(np.round(mid, 12)))
            if k is None:
                continue
            worst = max(worst, vals[k] - 0.5 * (vals[i] + vals[j]))
    return float(worst)


def little_oh_check(ctx, radii, n_dirs=None):
    """Per radius, the max over U' directions of ||v(u)||/||u||; decreasing
    ratios evidence v(u) = o(||u||)."""
    k = ctx.dim_uprime
    dirs = sphere_directions(k, n_dirs or (16 if k >= 2 else 2))
    out = []
    for r in radii:
        worst = 0.0
        for d in dirs:
            v, _, _ = _solve_cached(ctx, r * d)
            worst = max(worst, float(np.linalg.norm(v)) / r)
        out.append((float(r), worst))
    return out


def common_selection_check(ctx, u_grid, tilt_mags=(-0.05, 0.0, 0.05)):
    """Max deviation of v(u) when the V'-tilt moves around the anchor; small
    deviations certify the common-selection hypothesis numerically."""
    worst = 0.0
    for u in u_grid:
        u = np.atleast_1d(np.asarray(u, float))
        base = None
        for mag in tilt_mags:
            for col in range(max(ctx.dim_vprime, 1)):
                tilt = ctx.anchor_vprime.copy()
                if ctx.dim_vprime:
                    tilt[col] += mag
                v, _, _ = _inner_solve(ctx, u, anchor_v=tilt)
                if base is None:
                    base = v
                else:
                    worst = max(worst, float(np.linalg.norm(v - base)))
    return worst


def lipschitz_gradient_bound(ctx, u_grid, fd_step=None):
    """Max pairwise difference quotient of grad_l over the grid (finite for
    C^{1,1} Lagrangians); reported, not asserted."""
    nodes = [np.atleast_1d(np.asarray(u, float)) for u in u_grid]
    grads = [grad_l(ctx, u, fd_step=fd_step, validate=False) for u in nodes]
    bound = 0.0
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            du = np.linalg.norm(nodes[i] - nodes[j])
            if du < 1e-14:
                continue
            bound = max(bound, float(np.linalg.norm(grads[i] - grads[j])) / du)
    return bound
