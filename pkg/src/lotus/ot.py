"""Discrete optimal transport: Sinkhorn, entropic Gromov-Wasserstein and the
low-rank Gromov-Wasserstein solver used to compare datasets.

All matrices of intra-space costs are squared Euclidean distances. The
low-rank solver never forms an ``n x m`` plan or an ``n x n`` distance
matrix; it works from a rank ``d + 2`` factorization of the squared
distances, so one outer iteration is linear in ``n + m``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

G_FLOOR = 1e-12
MAX_HALVINGS = 12
G_HALVINGS = 4
# factor steps are line-searched search directions; they need little accuracy
LR_INNER_ITER = 200
LR_INNER_TOL = 1e-7


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud ``sum_i weights[i] * delta(points[i])``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.shape[0] < 1:
            raise ValueError("a measure needs at least one point")
        if weights.shape[0] != points.shape[0]:
            raise ValueError(
                f"{points.shape[0]} points but {weights.shape[0]} weights")
        if not np.all(np.isfinite(points)):
            raise ValueError("points contain NaN or Inf")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class Coupling:
    plan: np.ndarray


@dataclass(frozen=True)
class LowRankCoupling:
    """Plan factored as ``q @ diag(1 / g) @ r_factor.T``."""

    q: np.ndarray
    r_factor: np.ndarray
    g: np.ndarray

    @property
    def rank(self) -> int:
        return self.g.shape[0]

    def dense(self) -> np.ndarray:
        return (self.q / np.maximum(self.g, G_FLOOR)) @ self.r_factor.T

    def marginals(self):
        scale = self.r_factor.sum(axis=0) / np.maximum(self.g, G_FLOOR)
        row = self.q @ scale
        scale = self.q.sum(axis=0) / np.maximum(self.g, G_FLOOR)
        col = self.r_factor @ scale
        return row, col


@dataclass
class GwResult:
    cost: float
    coupling: Union[Coupling, LowRankCoupling]
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings shared by :func:`entropic_gw` and :func:`gw_lowrank`.

    ``epsilon=None`` resolves to ``1e-2 * sqrt(mean(A) * mean(B))`` per
    problem. Both solvers approach ``epsilon`` by continuation: stage ``k``
    runs at ``epsilon * anneal_factor**k`` for ``k = anneal_stages .. 0``,
    warm-started from the previous stage. ``anneal_stages=0`` solves at
    ``epsilon`` directly. ``max_outer_iter`` bounds each stage.

    ``shell_spreads`` adds starts to :func:`gw_lowrank`, one per entry:
    eccentricity shells whose masses form a geometric sequence with that
    largest/smallest ratio. The lowest-energy run wins; an empty tuple
    keeps the single uniform start.
    """

    epsilon: Optional[float] = None
    rank: int = 6
    max_outer_iter: int = 100
    max_inner_iter: int = 1000
    tol: float = 1e-6
    init_perturbation: float = 1e-4
    anneal_factor: float = 4.0
    anneal_stages: int = 6
    shell_spreads: tuple = (8.0, 32.0, 128.0, 512.0)

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.tol <= 0 or self.init_perturbation < 0:
            raise ValueError("tolerances must be positive")
        if self.anneal_factor < 1 or self.anneal_stages < 0:
            raise ValueError("need anneal_factor >= 1 and anneal_stages >= 0")
        if self.max_outer_iter < 1 or self.max_inner_iter < 1:
            raise ValueError("iteration budgets must be >= 1")
        if any(not s >= 1 for s in self.shell_spreads):
            raise ValueError("shell_spreads must all be >= 1")


def pairwise_sq_dist(measure: DiscreteMeasure) -> np.ndarray:
    """Squared Euclidean distance matrix of the measure's support."""
    x = measure.points - measure.points.mean(axis=0)
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def gw_energy(plan, a_mat: np.ndarray, b_mat: np.ndarray) -> float:
    """Quadratic Gromov-Wasserstein energy of a plan.

    ``sum_{i,j,i',j'} (A[i,i'] - B[j,j'])**2 P[i,j] P[i',j']``, evaluated
    through the marginals of ``P`` and ``<P, A P B>``. Accepts a dense
    array, a :class:`Coupling` or a :class:`LowRankCoupling`; the latter
    is contracted through its factors so the plan is never formed.
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b_mat = np.asarray(b_mat, dtype=float)
    if isinstance(plan, LowRankCoupling):
        n, m = plan.q.shape[0], plan.r_factor.shape[0]
        _check_dims(n, m, a_mat, b_mat)
        p, q = plan.marginals()
        ginv = 1.0 / np.maximum(plan.g, G_FLOOR)
        m1 = plan.q.T @ a_mat @ plan.q
        m2 = plan.r_factor.T @ b_mat @ plan.r_factor
        cross = np.sum((m1 * ginv[:, None] * ginv[None, :]) * m2)
    else:
        pm = plan.plan if isinstance(plan, Coupling) else np.asarray(plan, float)
        _check_dims(pm.shape[0], pm.shape[1], a_mat, b_mat)
        p, q = pm.sum(axis=1), pm.sum(axis=0)
        cross = np.sum(pm * (a_mat @ pm @ b_mat))
    value = p @ (a_mat ** 2) @ p + q @ (b_mat ** 2) @ q - 2.0 * cross
    return float(max(value, 0.0))


def _check_dims(n, m, a_mat, b_mat):
    if a_mat.shape != (n, n) or b_mat.shape != (m, m):
        raise ValueError(
            f"plan is {n}x{m} but metric matrices are "
            f"{a_mat.shape} and {b_mat.shape}")


def _sinkhorn_log(cost, a, b, epsilon, max_iter, tol, f=None, g=None,
                  check_every=10, absorb_at=1e30):
    """Log-stabilized Sinkhorn.

    Potentials ``f, g`` live in the log domain; the inner scalings ``u, v``
    run on the kernel ``exp((f + g - C) / eps)`` and are folded back into
    the potentials when they grow past ``absorb_at`` (checked every
    ``check_every`` iterations, rolling back to the last good pair), so
    nothing overflows for small ``eps``. Starting potentials default to the
    c-transform of zero, which keeps every kernel row nonzero.

    Returns (plan, f, g, iterations, converged).
    """
    if f is None or g is None:
        f = np.min(cost, axis=1)
    else:
        f = np.min(cost - g[None, :], axis=1)
    # c-transforms: f + g <= C everywhere, with equality somewhere in
    # every row and column, so the kernel neither overflows nor vanishes
    g = np.min(cost - f[:, None], axis=0)

    def kernel():
        return np.exp((f[:, None] + g[None, :] - cost) / epsilon)

    def absorb(u, v):
        return (f + epsilon * np.log(np.where(np.isfinite(u) & (u > 0), u, 1.0)),
                g + epsilon * np.log(np.where(np.isfinite(v) & (v > 0), v, 1.0)))

    k = kernel()
    u, v = np.ones_like(a), np.ones_like(b)
    good_u, good_v = u, v
    converged = False
    it = 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for it in range(1, max_iter + 1):
            u = a / (k @ v)
            v = b / (k.T @ u)
            if it % check_every and it != max_iter:
                continue
            # NaN-safe: non-finite or huge scalings fail the comparison;
            # roll back to the last good pair and fold it into the potentials
            if not (u.max() < absorb_at and v.max() < absorb_at):
                f, g = absorb(good_u, good_v)
                k = kernel()
                u = np.ones_like(a)
                v = b / (k.T @ u)
                good_u, good_v = u, v
                continue
            good_u, good_v = u, v
            if np.max(np.abs(u * (k @ v) - a)) < tol:
                converged = True
                break
        f, g = absorb(u, v)
    plan = u[:, None] * k * v[None, :]
    return plan, f, g, it, converged


def round_to_marginals(plan, a, b):
    """Nearest-feasible rounding of an approximate plan.

    Scales rows and columns down where they exceed their marginals, then
    spreads the missing mass as a rank-one correction. The result has
    marginals ``a`` and ``b`` up to floating point, and differs from the
    input by at most twice the original marginal violation in L1.
    """
    plan = plan * np.minimum(a / np.maximum(plan.sum(axis=1), 1e-300), 1.0)[:, None]
    plan = plan * np.minimum(b / np.maximum(plan.sum(axis=0), 1e-300), 1.0)[None, :]
    err_a = np.maximum(a - plan.sum(axis=1), 0.0)
    err_b = np.maximum(b - plan.sum(axis=0), 0.0)
    total = err_a.sum()
    if total > 0:
        plan = plan + np.outer(err_a, err_b) / total
    return plan


def _sinkhorn_scaled(cost, a, b, epsilon, max_iter, tol, f=None, g=None):
    """Sinkhorn with epsilon-scaling when no warm start is given."""
    if f is None:
        finite = cost[np.isfinite(cost)]
        span = float(np.ptp(finite)) if finite.size else 0.0
        eps = max(span, epsilon)
        while eps > epsilon * 1.0001:
            _, f, g, _, _ = _sinkhorn_log(cost, a, b, eps, 200, tol * 100, f, g)
            eps = max(eps / 4.0, epsilon)
    return _sinkhorn_log(cost, a, b, epsilon, max_iter, tol, f, g)


def sinkhorn(cost, a, b, epsilon: float, max_iter: int = 1000,
             tol: float = 1e-9):
    """Entropic OT ``min <C, P> - epsilon * H(P)`` over plans with marginals a, b.

    Returns
    -------
    coupling : Coupling
    transport_cost : float
        ``<C, P>`` without the entropy term.
    converged : bool
    """
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if cost.shape != (a.shape[0], b.shape[0]):
        raise ValueError("cost shape does not match the weights")
    plan, _, _, _, converged = _sinkhorn_scaled(cost, a, b, epsilon, max_iter, tol)
    plan = round_to_marginals(plan, a, b)
    return Coupling(plan), float(np.sum(cost * plan)), converged


def default_epsilon(a_mat, b_mat) -> float:
    scale = np.sqrt(np.mean(a_mat) * np.mean(b_mat))
    return 1e-2 * scale if scale > 0 else 1e-2


def _stages(eps, cfg, coarse=True):
    """Continuation schedule as ``(eps_k, max_inner, inner_tol, outer_tol)``.

    With ``coarse`` the intermediate stages, which only provide warm
    starts, run with a fifth of the inner budget and tolerances loosened a
    hundredfold.
    """
    out = []
    for k in range(cfg.anneal_stages, -1, -1):
        if k and coarse:
            out.append((eps * cfg.anneal_factor ** k,
                        max(1, cfg.max_inner_iter // 5), 1e-7, 100.0 * cfg.tol))
        else:
            out.append((eps * cfg.anneal_factor ** k, cfg.max_inner_iter,
                        1e-9, cfg.tol))
    return out


def _entropic_path(a, b, a_mat, b_mat, stages, max_outer):
    c_const = ((a_mat ** 2) @ a)[:, None] + ((b_mat ** 2) @ b)[None, :]
    plan = np.outer(a, b)
    history = [gw_energy(plan, a_mat, b_mat)]
    converged = False
    total = 0
    for eps_k, max_inner, inner_tol, outer_tol in stages:
        f = g = None
        best_plan, best_cost = plan, np.inf
        converged = False
        for _ in range(max_outer):
            total += 1
            lin = c_const - 2.0 * (a_mat @ plan @ b_mat)
            new_plan, f, g, _, _ = _sinkhorn_scaled(
                lin, a, b, eps_k, max_inner, inner_tol, f, g)
            new_plan = round_to_marginals(new_plan, a, b)
            change = np.max(np.abs(new_plan - plan))
            plan = new_plan
            history.append(gw_energy(plan, a_mat, b_mat))
            if history[-1] < best_cost:
                best_plan, best_cost = plan, history[-1]
            if change < outer_tol:
                converged = True
                break
        if not converged:
            logger.debug("entropic_gw: stage eps=%.3g hit max_outer_iter", eps_k)
            plan = best_plan
    return GwResult(gw_energy(plan, a_mat, b_mat), Coupling(plan), total,
                    converged, history)


def entropic_gw(a_meas: DiscreteMeasure, b_meas: DiscreteMeasure,
                cfg: SolverConfig = SolverConfig()) -> GwResult:
    """Entropic GW by iterated linearization (mirror descent with KL prox).

    Starting from ``a b^T``, each outer step solves one entropic OT problem
    whose cost is the linearized energy ``c_const - 2 A P B`` at the
    current plan; a stage ends when the plan moves by less than ``tol``.
    With ``anneal_stages > 0`` the solver also runs a direct path at the
    target ``epsilon`` from the same start and keeps the lower-energy
    plan: continuation usually finds the better basin, but not always.
    The reported cost is the plain quadratic energy of the final plan.
    """
    a, b = a_meas.weights, b_meas.weights
    a_mat, b_mat = pairwise_sq_dist(a_meas), pairwise_sq_dist(b_meas)
    eps = cfg.epsilon if cfg.epsilon is not None else default_epsilon(a_mat, b_mat)
    stages = _stages(eps, cfg)
    best = _entropic_path(a, b, a_mat, b_mat, stages, cfg.max_outer_iter)
    if len(stages) > 1:
        direct = _entropic_path(a, b, a_mat, b_mat, stages[-1:], cfg.max_outer_iter)
        if direct.cost < best.cost:
            best = direct
    return best


# --- low-rank solver -------------------------------------------------------

class _SqEuclidFactors:
    """``D = left @ right.T`` for squared Euclidean distances of centered points."""

    def __init__(self, points, weights):
        x = points - weights @ points
        sq = np.einsum("ij,ij->i", x, x)
        ones = np.ones_like(sq)
        self.x, self.sq, self.w = x, sq, weights
        self.left = np.column_stack([sq, ones, -2.0 * x])
        self.right = np.column_stack([ones, sq, x])

    def matmul(self, mat):
        return self.left @ (self.right.T @ mat)

    def sq_matvec(self, p):
        """``(D**2) @ p`` in O(n d^2)."""
        x, s = self.x, self.sq
        mass, s1, s2 = p.sum(), np.dot(p, s), np.dot(p, s * s)
        m1 = x.T @ p
        ms = x.T @ (p * s)
        second = (x * p[:, None]).T @ x
        return (s * s * mass + 2.0 * s * s1 + s2 - 4.0 * s * (x @ m1)
                - 4.0 * (x @ ms) + 4.0 * np.einsum("ij,jk,ik->i", x, second, x))

    def sq_energy(self, p):
        """``p @ (D**2) @ p`` in O(n d^2)."""
        x, s = self.x, self.sq
        total = p.sum()
        mu = x.T @ p
        second = (x * p[:, None]).T @ x
        value = (2.0 * total * np.dot(p, s * s) + 2.0 * np.dot(p, s) ** 2
                 + 4.0 * np.sum(second * second)
                 - 8.0 * np.dot(p * s, x @ mu))
        return value

    def eccentricity(self):
        """Mean squared distance of each point to the others, ``D @ w``."""
        return self.sq + np.dot(self.w, self.sq)


def _lr_energy(fa, fb, q, r, g):
    ginv = 1.0 / np.maximum(g, G_FLOOR)
    m1 = q.T @ fa.matmul(q)
    m2 = r.T @ fb.matmul(r)
    p = q @ (r.sum(axis=0) * ginv)
    pb = r @ (q.sum(axis=0) * ginv)
    cross = np.sum(m1 * ginv[:, None] * ginv[None, :] * m2)
    return fa.sq_energy(p) + fb.sq_energy(pb) - 2.0 * cross


def _lr_default_epsilon(fa, fb):
    mean_a = 2.0 * np.dot(fa.w, fa.sq)
    mean_b = 2.0 * np.dot(fb.w, fb.sq)
    scale = np.sqrt(mean_a * mean_b)
    return 1e-2 * scale if scale > 0 else 1e-2


def _quantile_factor(ecc, w, g):
    """Monotone split of ``w`` into components of mass ``g`` along ``ecc``.

    Entry ``[i, k]`` is the overlap of point ``i``'s cumulative-mass
    interval (points sorted by eccentricity) with the ``k``-th interval of
    the cumulative ``g``. Points with equal eccentricity share their
    group's interval evenly, which keeps the factor equivariant under row
    permutations.
    """
    span = ecc.max() - ecc.min()
    key = np.round((ecc - ecc.min()) / span, 9) if span > 0 else np.zeros_like(ecc)
    levels, inverse = np.unique(key, return_inverse=True)
    mass = np.bincount(inverse, weights=w, minlength=levels.shape[0])
    upper = np.cumsum(mass)
    lower = upper - mass
    edges = np.r_[0.0, np.cumsum(g)]
    edges[-1] = max(edges[-1], upper[-1])
    overlap = np.clip(np.minimum(upper[:, None], edges[None, 1:])
                      - np.maximum(lower[:, None], edges[None, :-1]), 0.0, None)
    group = mass[inverse]
    share = np.where(group > 0, w / np.maximum(group, 1e-300), 0.0)
    return overlap[inverse] * share[:, None]


def _shell_masses(rank, spread):
    # geometric, largest first: the outermost shell is the lightest
    g = spread ** (-np.arange(rank) / max(rank - 1, 1))
    return g / g.sum()


def _project_block(cost, eps, row, col, max_iter, tol, pot):
    """Entropic mirror step for one factor, projected onto ``(row, col)``."""
    f0, g0 = pot if pot is not None else (None, None)
    fac, f, g, _, _ = _sinkhorn_scaled(cost, row, col, eps, max_iter, tol, f0, g0)
    if not np.all(np.isfinite(fac)):
        raise FloatingPointError("factor projection diverged")
    return round_to_marginals(fac, row, col), (f, g)


class _LowRankState:
    """Factors, inner marginal and energy of the current low-rank plan."""

    def __init__(self, fa, fb, q, r, g):
        self.fa, self.fb = fa, fb
        self.q, self.r, self.g = q, r, g
        self.energy = _lr_energy(fa, fb, q, r, g)
        self.pot_q = self.pot_r = None
        self.theta = self.theta_g = 1.0

    def factor_step(self, eps, max_iter, tol):
        """Entropic mirror step on ``Q`` and ``R`` from the same state, then
        backtracking along the segment to the projected point (convex
        combinations stay feasible). Returns the energy decrease, or None."""
        fa, fb, q, r, g = self.fa, self.fb, self.q, self.r, self.g
        ginv = 1.0 / g
        aq, br = fa.matmul(q), fb.matmul(r)
        # intra-distances between the components of each side
        a_bar = ginv[:, None] * (q.T @ aq) * ginv[None, :]
        b_bar = ginv[:, None] * (r.T @ br) * ginv[None, :]
        q_step, pot_q = _project_block(-2.0 * aq @ b_bar, eps, fa.w, g,
                                       max_iter, tol, self.pot_q)
        r_step, pot_r = _project_block(-2.0 * br @ a_bar, eps, fb.w, g,
                                       max_iter, tol, self.pot_r)
        self.pot_q, self.pot_r = pot_q, pot_r
        step = self.theta
        for _ in range(MAX_HALVINGS):
            q_new = q + step * (q_step - q)
            r_new = r + step * (r_step - r)
            e_new = _lr_energy(fa, fb, q_new, r_new, g)
            if e_new <= self.energy:
                decrease = self.energy - e_new
                self.q, self.r, self.energy = q_new, r_new, e_new
                self.theta = min(1.0, 2.0 * step)
                return decrease
            step *= 0.5
        return None

    def joint_step(self, eps, a_sq, b_sq, max_iter, tol):
        """Joint mirror step on ``(Q, R, g)``. Each factor first takes an
        entropic step with free column sums under the full linearized cost,
        which now includes the per-component column term; the new ``g`` is
        the normalized geometric mean of the two column-sum vectors, and
        both factors are projected onto it. Feasible triples sharing ``g``
        form a convex set, so the segment search applies unchanged.
        Returns the energy decrease, or None."""
        fa, fb, q, r, g = self.fa, self.fb, self.q, self.r, self.g
        ginv = 1.0 / g
        aq, br = fa.matmul(q), fb.matmul(r)
        a_bar = ginv[:, None] * (q.T @ aq) * ginv[None, :]
        b_bar = ginv[:, None] * (r.T @ br) * ginv[None, :]
        cost_q = (b_sq @ r) * ginv - 2.0 * aq @ b_bar
        cost_r = (a_sq @ q) * ginv - 2.0 * br @ a_bar
        mass_q = fa.w @ _row_softmin(cost_q, eps)
        mass_r = fb.w @ _row_softmin(cost_r, eps)
        g_step = np.maximum(np.sqrt(mass_q * mass_r), G_FLOOR)
        g_step /= g_step.sum()
        q_step, _ = _project_block(cost_q, eps, fa.w, g_step, max_iter, tol, None)
        r_step, _ = _project_block(cost_r, eps, fb.w, g_step, max_iter, tol, None)
        step = self.theta_g
        for _ in range(MAX_HALVINGS):
            q_new = q + step * (q_step - q)
            r_new = r + step * (r_step - r)
            g_new = g + step * (g_step - g)
            e_new = _lr_energy(fa, fb, q_new, r_new, g_new)
            if e_new < self.energy:
                decrease = self.energy - e_new
                self.q, self.r, self.g, self.energy = q_new, r_new, g_new, e_new
                self.theta_g = min(1.0, 2.0 * step)
                return decrease
            step *= 0.5
        return None


    def marginal_step(self, eps, a_sq, b_sq):
        """Mirror step on ``g`` alone: mass moves towards components with
        lower linearized cost per unit mass, then both factors are
        rescaled onto the new ``g``. The step is normalized by the spread
        of those costs but never exceeds ``1 / eps``. Returns the energy
        decrease, or None."""
        fa, fb, q, r, g = self.fa, self.fb, self.q, self.r, self.g
        h = _component_costs(fa, fb, q, r, g, a_sq, b_sq)
        h = h - np.dot(g, h)
        scale = max(np.max(np.abs(h)), eps)
        step = self.theta_g
        for _ in range(G_HALVINGS):
            g_new = np.maximum(g * np.exp(-step * h / scale), G_FLOOR)
            g_new /= g_new.sum()
            q_new = _rescale_factor(q * (g_new / g), fa.w, g_new)
            r_new = _rescale_factor(r * (g_new / g), fb.w, g_new)
            e_new = _lr_energy(fa, fb, q_new, r_new, g_new)
            if e_new < self.energy:
                decrease = self.energy - e_new
                self.q, self.r, self.g, self.energy = q_new, r_new, g_new, e_new
                self.theta_g = min(1.0, 2.0 * step)
                return decrease
            step *= 0.5
        return None


def _component_costs(fa, fb, q, r, g, a_sq, b_sq):
    """Linearized energy per unit mass of each component ``Q_k R_k^T / g_k``."""
    ginv = 1.0 / g
    m1 = q.T @ fa.matmul(q)
    m2 = r.T @ fb.matmul(r)
    cross = ((m1 * m2) @ ginv) * ginv
    return (a_sq @ q + b_sq @ r - 2.0 * cross) * ginv


def _rescale_factor(fac, row, col, iters=50):
    """Matrix scaling of a positive factor onto marginals ``(row, col)``."""
    for _ in range(iters):
        fac = fac * (row / np.maximum(fac.sum(axis=1), 1e-300))[:, None]
        fac = fac * (col / np.maximum(fac.sum(axis=0), 1e-300))[None, :]
    return round_to_marginals(fac, row, col)


def _row_softmin(cost, eps):
    z = -cost / eps
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _lr_descend(state, eps, cfg, a_sq, b_sq, joint):
    """Run the continuation schedule from ``state``; returns
    ``(state, history, iterations, converged)``. Once the factors stall
    the ``g`` update is tried: the joint ``(Q, R, g)`` step when ``joint``,
    else the ``g``-only mirror step."""
    history = [state.energy]
    converged = False
    total = 0
    for eps_k, max_inner, _, outer_tol in _stages(eps, cfg, coarse=False):
        converged = False
        for _ in range(cfg.max_outer_iter):
            total += 1
            try:
                decrease = state.factor_step(eps_k, min(max_inner, LR_INNER_ITER),
                                             LR_INNER_TOL)
            except FloatingPointError:
                logger.debug("gw_lowrank: projection failed at eps=%.3g", eps_k)
                decrease = None
            stalled = decrease is None or decrease <= outer_tol * abs(state.energy)
            if stalled and cfg.rank > 1:
                if joint:
                    try:
                        g_decrease = state.joint_step(eps_k, a_sq, b_sq,
                                                      LR_INNER_ITER, LR_INNER_TOL)
                    except FloatingPointError:
                        g_decrease = None
                else:
                    g_decrease = state.marginal_step(eps_k, a_sq, b_sq)
                if g_decrease is not None:
                    stalled = g_decrease <= outer_tol * abs(state.energy)
            history.append(state.energy)
            if stalled:
                converged = True
                break
    return state, history, total, converged


def gw_lowrank(a_meas: DiscreteMeasure, b_meas: DiscreteMeasure,
               cfg: SolverConfig = SolverConfig()) -> GwResult:
    """Low-rank Gromov-Wasserstein between two point clouds.

    Minimizes the quadratic energy over plans ``Q diag(1/g) R^T`` whose
    factors share the inner marginal ``g``. With ``R`` and ``g`` held fixed
    the problem in ``Q`` is itself a GW problem between the first cloud and
    the ``rank`` components of the second, so the factor step is one
    entropic mirror step on ``Q`` and one on ``R``, both taken from the
    same state (which keeps the solver symmetric in its arguments). Once
    the factors stall, a mirror step on ``g`` is tried; a stage ends when
    neither block makes progress. Every step is line-searched, so the
    recorded energy never goes up. Further runs start from eccentricity
    shells of geometric mass, one per ``cfg.shell_spreads`` entry, and the
    lowest-energy result is returned. All linear algebra goes through the
    factored squared distances: cost per iteration is linear in ``n + m``.

    Parameters
    ----------
    a_meas, b_meas : DiscreteMeasure
    cfg : SolverConfig
        ``rank`` must satisfy ``1 <= rank <= min(n, m)``.

    Returns
    -------
    GwResult
        ``cost`` is the energy of the final factored plan, ``coupling`` a
        :class:`LowRankCoupling` and ``history`` the energy per outer
        iteration (index 0 is the initialization).
    """
    n, m = a_meas.size, b_meas.size
    rank = cfg.rank
    if not 1 <= rank <= min(n, m):
        raise ValueError(f"rank must be in [1, {min(n, m)}], got {rank}")
    a, b = a_meas.weights, b_meas.weights
    fa = _SqEuclidFactors(a_meas.points, a)
    fb = _SqEuclidFactors(b_meas.points, b)
    eps = cfg.epsilon if cfg.epsilon is not None else _lr_default_epsilon(fa, fb)
    a_sq, b_sq = fa.sq_matvec(a), fb.sq_matvec(b)

    ecc_a, ecc_b = fa.eccentricity(), fb.eccentricity()

    # independent factors plus a small eccentricity-ordered split, which
    # breaks the symmetry between components
    g = np.full(rank, 1.0 / rank)
    mix = cfg.init_perturbation
    q = (1.0 - mix) * np.outer(a, g) + mix * _quantile_factor(ecc_a, a, g)
    r = (1.0 - mix) * np.outer(b, g) + mix * _quantile_factor(ecc_b, b, g)
    state, history, total, converged = _lr_descend(
        _LowRankState(fa, fb, q, r, g), eps, cfg, a_sq, b_sq, False)
    # uniform starts tend to settle on equal-mass clusters, and g moves
    # little from where it starts; light outer shells plus joint g updates
    # reach better optima on heavy-tailed clouds. The joint step is kept
    # off the uniform start, where it tends to starve components at full
    # rank.
    for spread in (cfg.shell_spreads if rank > 1 else ()):
        g = _shell_masses(rank, spread)
        shells = _LowRankState(fa, fb, _quantile_factor(ecc_a, a, g),
                               _quantile_factor(ecc_b, b, g), g)
        alt = _lr_descend(shells, eps, cfg, a_sq, b_sq, True)
        total += alt[2]
        if alt[0].energy < state.energy:
            state, history, _, converged = alt
    coupling = LowRankCoupling(state.q, state.r, state.g)
    return GwResult(float(max(state.energy, 0.0)), coupling, total,
                    converged, history)
