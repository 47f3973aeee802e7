"""Second-order machinery: difference quotients, Dini derivatives, subjet
membership, rank-1 supports and the second-order component, limiting
Hessians, Moreau envelopes, coderivative checks and conjugate-Hessian duality.

The rank-1 support of the limiting subhessian is approximated variationally:
it is the sup over f-attentive nearby (x', z') in the subdifferential graph of
the symmetric Dini quotient at (x', z'), with direction balls that scale with
the probe distance.  Quotients at the base point alone miss curvature carried
by neighbouring kinks (they see only the non-limiting subjet).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (CapabilityMissing, EmptyBundle, LambdaTooLarge,
                     NotASubspace, SingularHessian)
from .oracle import (QuadraticPiece, FunctionModel, Flags, active_set, evaluate,
                     subdifferential_polytope)
from .solvers import (DEFAULT_SOLVER, cluster_minimizers, minimize_branches,
                      sphere_directions, _offset_lattice)
from . import vu


# ---------------------------------------------------------------------------
# finite differences

def fd_gradient(fun, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = step
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return g


def fd_hessian(fun, x, step=1e-4):
    """Central second differences, fully symmetrized."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    H = np.zeros((n, n))
    f0 = fun(x)
    E = step * np.eye(n)
    for i in range(n):
        H[i, i] = (fun(x + 2 * E[i]) - 2 * f0 + fun(x - 2 * E[i])) / (4 * step**2)
        for j in range(i + 1, n):
            pij = (fun(x + E[i] + E[j]) - fun(x + E[i] - E[j])
                   - fun(x - E[i] + E[j]) + fun(x - E[i] - E[j])) / (4 * step**2)
            H[i, j] = H[j, i] = pij
    return 0.5 * (H + H.T)


def fd_hessian_from_gradient(grad, x, step=1e-4):
    x = np.asarray(x, dtype=float)
    n = len(x)
    H = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        H[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * step)
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# quotients and shell traces

def delta2(model, x, z, t, u):
    """Second-order difference quotient 2[f(x+tu) - f(x) - t<z,u>]/t^2."""
    if t == 0.0:
        raise ValueError("t must be nonzero")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    fxt = evaluate(model, x + t * u)
    if not np.isfinite(fxt):
        return np.inf
    fx = evaluate(model, x)
    return 2.0 * (fxt - fx - t * float(np.dot(z, u))) / t**2


def default_t_grid(t_max=1e-1, t_min=1e-4, ratio=0.5):
    ts = [t_max]
    while ts[-1] * ratio >= t_min * (1 - 1e-12):
        ts.append(ts[-1] * ratio)
    return np.array(ts)


@dataclass
class ShellTrace:
    ts: np.ndarray
    values: np.ndarray

    @property
    def estimate(self):
        tail = self.values[-3:] if len(self.values) >= 3 else self.values
        return float(np.min(tail))

    def divergent(self, threshold):
        v = self.values
        if len(v) < 3:
            return bool(v[-1] > threshold)
        increasing = v[-3] < v[-2] < v[-1]
        return bool(v[-1] > threshold and increasing)


def _min_over_direction_ball(model, x, z, h, t, radius, refine=2):
    """min of Delta2 over directions u near h with ||u|| = ||h||,
    deterministic lattice plus shrinking pattern refinement.

    Candidates are projected back to the sphere: the liminf lets the radial
    component of u -> h vanish, and keeping it would bias smooth quotients by
    O(ball radius)."""
    h = np.asarray(h, dtype=float)
    n = len(h)
    scale = np.linalg.norm(h)
    offs = _offset_lattice(n)

    def project(u):
        gap = u - h
        norm = np.linalg.norm(gap)
        if norm > radius:
            u = h + gap * (radius / norm)
        nu = np.linalg.norm(u)
        return u if nu < 1e-15 else u * (scale / nu)

    rad = radius
    best_u = h
    best = delta2(model, x, z, t, h)
    for _ in range(refine + 1):
        for o in offs[1:]:
            u = project(best_u + rad * o)
            val = delta2(model, x, z, t, u)
            if val < best:
                best, best_u = val, u
        rad *= 0.3
    return best


def dini_second(model, x, z, h, t_grid=None, dir_ball=0.1, ball_radius=None,
                refine=2):
    """Shell approximation of the lower second-order Dini derivative.

    Per shell t the quotient is minimized over a direction ball around h of
    radius ball_radius (fixed) or dir_ball*t (shrinking).  The full shell
    trace is returned so divergence stays inspectable.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)
    ts = np.asarray(t_grid if t_grid is not None else default_t_grid())
    vals = np.empty(len(ts))
    for i, t in enumerate(ts):
        r = ball_radius if ball_radius is not None else dir_ball * t
        vals[i] = _min_over_direction_ball(model, x, z, h, t, r, refine)
    return ShellTrace(ts=np.array(ts), values=vals)


# ---------------------------------------------------------------------------
# rank-1 support of the limiting subhessian

@dataclass
class RankOneConfig:
    t_grid: np.ndarray = None
    dir_ball: float = 0.1
    divergence_threshold: float = 1e3
    refine: int = 2
    attentive: bool = True
    probe_radii: tuple = (0.03, 0.01)
    probe_dir_count: int = 8
    probe_t_fracs: tuple = (0.1, 0.05, 0.025, 0.0125)
    probe_ball_scale: float = 2.0
    z_radius: float = 0.5
    f_radius: float = 0.5
    active_tol: float = 1e-9
    probes: list = None  # resolved probe list (x', z'); filled lazily


@dataclass
class RankOneResult:
    divergent: bool
    value: float | None
    shells: list  # per-probe (trace_plus, trace_minus)


from .solvers import hull_point_candidates as _z_candidates


def attentive_probes(model, x, z, cfg):
    """Nearby (x', z') in the subdifferential graph: kink points within the
    f-attentive radius whose hull holds subgradients near z."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    fx = evaluate(model, x)
    probes = []
    seen = set()
    dirs = sphere_directions(model.dim, cfg.probe_dir_count)
    for rho in cfg.probe_radii:
        for d in dirs:
            xp = x + rho * d
            if abs(evaluate(model, xp) - fx) > cfg.f_radius * (1.0 + abs(fx)):
                continue
            try:
                poly = subdifferential_polytope(model, xp, cfg.active_tol)
            except CapabilityMissing:
                continue
            if len(poly.generators) < 2:
                continue
            for zp in _z_candidates(poly.generators):
                if np.linalg.norm(zp - z) > cfg.z_radius * (1.0 + np.linalg.norm(z)):
                    continue
                key = (tuple(np.round(xp, 12)), tuple(np.round(zp, 12)))
                if key in seen:
                    continue
                seen.add(key)
                probes.append((xp, zp, rho))
    return probes


def _symmetric_estimate(model, xp, zp, h, ts, ball_radius, cfg):
    """min over +-h of the per-probe Dini estimates; divergent needs both."""
    tp = dini_second(model, xp, zp, h, t_grid=ts, ball_radius=ball_radius,
                     refine=cfg.refine)
    tm = dini_second(model, xp, zp, -np.asarray(h), t_grid=ts,
                     ball_radius=ball_radius, refine=cfg.refine)
    dp = tp.divergent(cfg.divergence_threshold)
    dm = tm.divergent(cfg.divergence_threshold)
    if dp and dm:
        return True, None, (tp, tm)
    vals = []
    if not dp:
        vals.append(tp.estimate)
    if not dm:
        vals.append(tm.estimate)
    return False, float(min(vals)), (tp, tm)


def rank1_support(model, x, z, h, cfg=None):
    """Rank-1 support q of the limiting subhessian along unit direction h.

    Value = sup over the base point and attentive probes of the symmetric
    Dini estimate; divergent as soon as one probe diverges in both +-h.
    """
    cfg = cfg or RankOneConfig()
    h = np.asarray(h, dtype=float)
    ts = cfg.t_grid if cfg.t_grid is not None else default_t_grid()
    base = _symmetric_estimate(model, np.asarray(x, float), np.asarray(z, float),
                               h, ts, None, cfg)
    results = [base]
    if cfg.attentive:
        if cfg.probes is None:
            cfg.probes = attentive_probes(model, x, z, cfg)
        for xp, zp, rho in cfg.probes:
            pts = rho * np.asarray(cfg.probe_t_fracs)
            ball = cfg.probe_ball_scale * rho
            results.append(_symmetric_estimate(model, xp, zp, h, pts, ball, cfg))
    if any(r[0] for r in results):
        return RankOneResult(divergent=True, value=None,
                             shells=[r[2] for r in results])
    value = max(r[1] for r in results)
    return RankOneResult(divergent=False, value=value,
                         shells=[r[2] for r in results])


@dataclass
class RankOneProfile:
    directions: np.ndarray
    values: list                 # float per direction, None when divergent
    divergence_threshold: float
    t_grid: np.ndarray
    support: object = None       # callable h -> RankOneResult for re-evaluation
    meta: dict = field(default_factory=dict)

    def finite_directions(self):
        return np.array([d for d, v in zip(self.directions, self.values)
                         if v is not None]).reshape(-1, self.directions.shape[1])

    def value_at(self, h, tol=1e-10):
        """Degree-2 homogeneous evaluation, reusing profile directions when
        aligned and re-evaluating (with caching) otherwise."""
        h = np.asarray(h, dtype=float)
        n = np.linalg.norm(h)
        if n < 1e-15:
            return 0.0
        d = h / n
        for dd, v in zip(self.directions, self.values):
            if np.linalg.norm(dd - d) <= tol:
                return np.inf if v is None else v * n**2
        cache = self.meta.setdefault("_value_cache", {})
        key = tuple(np.round(d, 12))
        if key not in cache:
            res = self.support(d)
            cache[key] = np.inf if res.divergent else res.value
        return cache[key] * n**2


def second_order_component(model, x, z, dir_grid=None, cfg=None, check_pairs=6):
    """Second-order component: span of the directions with finite rank-1
    support, verified to be subspace-like and contained in U.

    Returns (u2_basis, RankOneProfile).  Raises NotASubspace when the finite
    set fails closure under midpoints.
    """
    cfg = cfg or RankOneConfig()
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    poly = subdifferential_polytope(model, x)
    if not vu.rel_interior_contains(poly, z):
        warnings.warn("anchor is not in the relative interior of the hull; "
                      "the second-order component may degenerate", stacklevel=2)
    if dir_grid is None:
        dir_grid = sphere_directions(model.dim, 64 if model.dim >= 2 else 2)
    dir_grid = np.atleast_2d(np.asarray(dir_grid, dtype=float))
    if cfg.attentive and cfg.probes is None:
        cfg.probes = attentive_probes(model, x, z, cfg)

    values = [None] * len(dir_grid)
    done = [False] * len(dir_grid)
    for i, h in enumerate(dir_grid):
        if done[i]:
            continue
        res = rank1_support(model, x, z, h, cfg)
        values[i] = None if res.divergent else res.value
        done[i] = True
        for j in range(i + 1, len(dir_grid)):   # antipode shares the value
            if not done[j] and np.linalg.norm(dir_grid[j] + h) <= 1e-12:
                values[j] = values[i]
                done[j] = True

    profile = RankOneProfile(
        directions=dir_grid, values=values,
        divergence_threshold=cfg.divergence_threshold,
        t_grid=np.asarray(cfg.t_grid if cfg.t_grid is not None else default_t_grid()),
        support=lambda h: rank1_support(model, x, z, h, cfg))

    finite = profile.finite_directions()
    if len(finite) == 0:
        u2 = np.zeros((model.dim, 0))
    else:
        _, s, vt = np.linalg.svd(finite, full_matrices=False)
        rank = int(np.sum(s > 1e-8 * s[0]))
        u2 = vt[:rank].T
        # closure: midpoints of finite directions stay finite; pairs are
        # drawn at several index separations so cone-shaped finite sets
        # (closed only near each ray) cannot slip through
        m_dirs = len(finite)
        pairs = []
        for step in sorted({1, 2, max(1, m_dirs // 5), max(1, m_dirs // 3),
                            max(1, m_dirs // 2)}, reverse=True):
            for i in range(0, m_dirs - step, max(1, m_dirs // 4)):
                pairs.append((i, i + step))
        checked = 0
        for i, j in pairs:
            if checked >= check_pairs:
                break
            m = finite[i] + finite[j]
            nm = np.linalg.norm(m)
            if nm < 1e-8:
                continue
            res = rank1_support(model, x, z, m / nm, cfg)
            checked += 1
            if res.divergent:
                raise NotASubspace(
                    "finite-direction set is not closed under midpoints")
    frame = vu.decompose(poly, z)
    if u2.shape[1]:
        resid = u2 - frame.u_basis @ (frame.u_basis.T @ u2)
        angle = float(np.max(np.linalg.norm(resid, axis=0)))
        profile.meta["u2_in_u_residual"] = angle
        if angle > 1e-8:
            warnings.warn("second-order component is not contained in U",
                          stacklevel=2)
    profile.meta["dim_u2"] = u2.shape[1]
    return u2, profile


# ---------------------------------------------------------------------------
# subjet membership

@dataclass
class JetCandidate:
    x: np.ndarray
    z: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if np.max(np.abs(self.Q - self.Q.T)) > 1e-12:
            raise ValueError("Q must be symmetric")


@dataclass
class MembershipResult:
    status: str                 # member | rejected | inconclusive
    witness: np.ndarray | None
    min_margin: float


@dataclass
class MembershipConfig:
    radii: tuple = tuple(0.2 * 0.5**k for k in range(8))
    n_dirs: int = 64
    eta_coeff: float = 0.01


def subjet_membership(model, cand, cfg=None):
    """Test f(x+d) >= f(x) + <z,d> + 0.5 d^T Q d - eta(||d||) ||d||^2 over
    shells of shrinking radius with eta = c sqrt(r) (the vanishing slack the
    small-order term allows)."""
    cfg = cfg or MembershipConfig()
    fx = evaluate(model, cand.x)
    dirs = sphere_directions(len(cand.x), cfg.n_dirs)
    margins = np.empty((len(cfg.radii), len(dirs)))
    for si, r in enumerate(cfg.radii):
        eta = cfg.eta_coeff * np.sqrt(r)
        for di, d in enumerate(dirs):
            step = r * d
            raw = (evaluate(model, cand.x + step) - fx - float(cand.z @ step)
                   - 0.5 * float(step @ cand.Q @ step))
            margins[si, di] = raw + eta * r**2
    min_margin = float(margins.min())
    if min_margin >= 0.0:
        return MembershipResult("member", None, min_margin)
    persistent = np.all(margins[-3:] < 0.0, axis=0)
    if persistent.any():
        worst = int(np.argmin(margins[-1] + np.where(persistent, 0.0, np.inf)))
        return MembershipResult("rejected", dirs[worst], min_margin)
    return MembershipResult("inconclusive", None, min_margin)


# ---------------------------------------------------------------------------
# limiting Hessians and coderivative criteria

@dataclass
class HessianBundle:
    samples: list               # (point, hessian) pairs
    source: str                 # analytic | finite_difference | moreau

    def matrices(self):
        return [H for _, H in self.samples]


def limiting_hessians(model, x, z, radii=(0.1, 0.05, 0.02, 0.01),
                      n_dirs=16, gradient_tol=0.5, fd_step=None,
                      include_center=False):
    """Hessian samples at nearby twice-differentiable points whose gradients
    pass the z-filter, symmetrized; raises EmptyBundle when none qualify."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    dirs = sphere_directions(model.dim, n_dirs)
    pts = [x] if include_center else []
    for rho in radii:
        pts.extend(x + rho * d for d in dirs)
    samples = []
    source = "finite_difference"
    for p in pts:
        step = fd_step if fd_step is not None else 1e-4 * (1.0 + np.linalg.norm(p))
        if model.kind in ("max_of_smooth", "sum_of_smooth_and_polyhedral"):
            try:
                act = active_set(model, p, 1e-9)
            except CapabilityMissing:
                act = None
            if act is not None and len(act.indices) != 1:
                continue  # kink point, no classical Hessian
            if model.kind == "max_of_smooth":
                i = next(iter(act.indices))
                grad = model.pieces[i].gradient(p)
                H = model.pieces[i].hessian(p)
                source = "analytic"
            else:
                grad = sum(pc.gradient(p) for pc in model.pieces)
                H = sum(pc.hessian(p) for pc in model.pieces)
                if act is not None:
                    i = next(iter(act.indices))
                    grad = grad + model.polyhedral_part[i].gradient(p)
                source = "analytic"
        elif model.gradient_fn is not None:
            grad = np.asarray(model.gradient_fn(p), dtype=float)
            H = fd_hessian_from_gradient(
                lambda q: np.asarray(model.gradient_fn(q), float), p, step)
            source = model.meta.get("source", "finite_difference")
        else:
            grad = fd_gradient(lambda q: evaluate(model, q), p, 1e-6)
            H = fd_hessian(lambda q: evaluate(model, q), p, step)
        if np.linalg.norm(grad - z) > gradient_tol:
            continue
        H = 0.5 * (np.atleast_2d(H) + np.atleast_2d(H).T)
        samples.append((p, H))
    if not samples:
        raise EmptyBundle("no admissible twice-differentiable sample points")
    return HessianBundle(samples=samples, source=source)


def coderivative_c11(bundle, h):
    """Images {Q h} of the bundle and the hull support value max h^T Q h."""
    if not bundle.samples:
        raise EmptyBundle("bundle is empty")
    h = np.asarray(h, dtype=float)
    images = [H @ h for H in bundle.matrices()]
    support = max(float(h @ H @ h) for H in bundle.matrices())
    return images, support


def tilt_criterion_c11(bundle, dir_grid=None):
    """beta_hat = min over unit directions and samples of h^T Q h; positive
    beta certifies the tilt-stability criterion at sample scale."""
    if not bundle.samples:
        raise EmptyBundle("bundle is empty")
    n = bundle.samples[0][1].shape[0]
    if dir_grid is None:
        dir_grid = sphere_directions(n, 64 if n >= 2 else 2)
    beta = np.inf
    for h in np.atleast_2d(dir_grid):
        for H in bundle.matrices():
            beta = min(beta, float(h @ H @ h))
    return float(beta)


# ---------------------------------------------------------------------------
# Moreau envelope

def moreau_envelope(model, lam, x, solver_cfg=None, search_radius=None):
    """Infimal convolution value and prox point at x.

    Requires lam > 0 and, when a quadratic minorant (alpha, R) is declared,
    R < 1/lam; the gradient of the envelope is (x - prox)/lam.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    x = np.asarray(x, dtype=float)
    qm = model.flags.quadratic_minorant
    if qm is not None and qm[1] >= 1.0 / lam - 1e-12 and qm[1] > 0.0:
        raise LambdaTooLarge(f"quadratic minorant R={qm[1]} requires lam < {1/qm[1]}")
    cfg = solver_cfg or DEFAULT_SOLVER
    radius = search_radius or 4.0 * (1.0 + np.linalg.norm(x) + lam)
    prox_piece = QuadraticPiece(np.eye(model.dim) / lam, -x / lam,
                                float(x @ x) / (2.0 * lam))
    branches = model.solver_branches()
    if branches is not None:
        branches = [(mp, sp + [prox_piece]) for mp, sp in branches]

    def objective(u):
        return evaluate(model, u) + float(np.sum((x - u) ** 2)) / (2.0 * lam)

    for attempt in range(3):
        res = minimize_branches(branches, objective, x, radius, cfg)
        reps, best = cluster_minimizers(res.points, res.values,
                                        1e-9 * (1 + abs(res.values.min())), 1e-9)
        prox = min(reps, key=lambda p: (np.linalg.norm(p - x), tuple(p)))
        if np.linalg.norm(prox - x) < radius * (1.0 - 1e-6):
            return float(objective(prox)), np.asarray(prox, dtype=float)
        radius *= 4.0
    raise LambdaTooLarge("prox search kept hitting the search-ball boundary")


def moreau_model(model, lam, solver_cfg=None):
    """The envelope as a first-class model (C^{1,1} by construction)."""
    def value_fn(x):
        return moreau_envelope(model, lam, x, solver_cfg)[0]

    def gradient_fn(x):
        val, prox = moreau_envelope(model, lam, x, solver_cfg)
        return (np.asarray(x, dtype=float) - prox) / lam

    out = FunctionModel(
        dim=model.dim, kind="custom", value_fn=value_fn, gradient_fn=gradient_fn,
        flags=Flags(locally_lipschitz=True, convex=model.flags.convex),
        name=f"moreau({model.name},{lam})")
    out.meta = {"source": "moreau", "lam": lam,
                "default_base_point": model.meta.get("default_base_point",
                                                     np.zeros(model.dim))}
    return out


# ---------------------------------------------------------------------------
# appendix checks

def para_convexity_check(profile, r, t_grid=(0.5, 1.0), max_dirs=8):
    """Worst midpoint-convexity violation of h -> q(h) + r||h||^2 over points
    built from the finite directions, after degree-2 homogeneous extension.

    Midpoint directions off the profile grid are re-evaluated through the
    profile's support callable (cached), so the check stays exact rather than
    interpolated; max_dirs caps the quadratic pair growth."""
    finite = profile.finite_directions()
    if len(finite) == 0:
        return 0.0
    if len(finite) > max_dirs:
        stride = int(np.ceil(len(finite) / max_dirs))
        finite = finite[::stride]
    pts = [t * d for d in finite for t in t_grid]

    def g(w):
        return profile.value_at(w) + r * float(np.dot(w, w))

    worst = -np.inf
    for i in range(len(pts)):
        for j in range(i, len(pts)):
            m = 0.5 * (pts[i] + pts[j])
            gm = g(m)
            if not np.isfinite(gm):
                gm = np.inf
            worst = max(worst, gm - 0.5 * (g(pts[i]) + g(pts[j])))
    return float(worst)


def _quadratic_fit_hessian(zs, vals, center):
    """Least-squares quadratic fit around center; returns the Hessian."""
    Z = np.atleast_2d(zs) - center
    d = Z.shape[1]
    cols = [np.ones(len(Z))]
    cols.extend(Z[:, i] for i in range(d))
    quad_index = []
    for i in range(d):
        for j in range(i, d):
            cols.append(Z[:, i] * Z[:, j])
            quad_index.append((i, j))
    A = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    H = np.zeros((d, d))
    for k, (i, j) in enumerate(quad_index):
        c = coef[1 + d + k]
        if i == j:
            H[i, i] = 2.0 * c
        else:
            H[i, j] = H[j, i] = c
    return H


def hessian_duality_check(model, x, fd_step=1e-5, box_half=2.0, resolution=401,
                          dual_step=0.1, stencil_half=2):
    """Residual ||grad^2 f*(z) - Q^{-1}||_F with Q the finite-difference
    Hessian at x, z the gradient, and f* sampled from the discrete conjugate
    over a primal grid (dual Hessian by local quadratic fit)."""
    from .envelope import conjugate_at, grid_from_callable
    x = np.asarray(x, dtype=float)
    fun = lambda p: evaluate(model, p)
    Q = fd_hessian(fun, x, fd_step)
    z = fd_gradient(fun, x, fd_step)
    eig = np.linalg.eigvalsh(Q)
    if eig.min() <= 1e-8 * max(eig.max(), 1.0):
        raise SingularHessian("finite-difference Hessian is not positive definite")
    d = model.dim
    box = np.column_stack([x - box_half, x + box_half])
    gf = grid_from_callable(fun, box, (resolution,) * d)
    offsets = dual_step * np.array(
        np.meshgrid(*([np.arange(-stencil_half, stencil_half + 1)] * d),
                    indexing="ij")).reshape(d, -1).T
    zs = z + offsets
    vals = conjugate_at(gf, zs)
    H_star = _quadratic_fit_hessian(zs, vals, z)
    return float(np.linalg.norm(H_star - np.linalg.inv(Q), ord="fro"))


def uniform_bound_check(model, x, z, u2_basis, cfg=None):
    """M_hat = max over U^2 directions (base point and attentive probes) of
    the finite-shell quotient estimates; finiteness is the assertion."""
    cfg = cfg or RankOneConfig()
    u2 = np.atleast_2d(u2_basis)
    k = u2.shape[1]
    if k == 0:
        return 0.0
    m_hat = -np.inf
    for w in sphere_directions(k, 16 if k >= 2 else 2):
        h = u2 @ w
        res = rank1_support(model, x, z, h / np.linalg.norm(h), cfg)
        if res.divergent:
            return np.inf
        m_hat = max(m_hat, res.value)
    return float(m_hat)
