"""Optimization over g-polymatroids.

Linear objectives are minimized by the greedy algorithm on the lifted base
polyhedron: the ground set is extended by an extra element (index 0 in
permutation labels, steps keep their numbers ``1..T``) whose lifted set
function is ``-p`` of the complement.  Linear coupling constraints are
handled by column generation over greedy vertices, smooth convex objectives
by Frank-Wolfe.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .setfn import ParamodularOracle, StackedOracle
from .simplex import INFEASIBLE, OPTIMAL, RevisedSimplex

log = logging.getLogger(__name__)

LIFT = 0  # label of the auxiliary ground-set element


class InfeasibleError(RuntimeError):
    """The coupling constraints cut off the whole flexibility set."""


@dataclass(frozen=True, eq=False)
class Vertex:
    u: np.ndarray
    label: tuple[int, ...]

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "label", tuple(int(x) for x in self.label))


@dataclass
class CouplingConstraints:
    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        C = np.asarray(self.C, dtype=float)
        self.C = C if C.ndim == 2 and C.shape[0] == len(self.d) else C.reshape(len(self.d), -1)
        if not (np.isfinite(self.C).all() and np.isfinite(self.d).all()):
            raise ValueError("coupling data must be finite")

    @property
    def m(self) -> int:
        return len(self.d)

    @classmethod
    def empty(cls, T: int) -> "CouplingConstraints":
        return cls(np.zeros((0, T)), np.zeros(0))

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "d": self.d.tolist()}

    @classmethod
    def from_dict(cls, data: dict, T: int) -> "CouplingConstraints":
        if not data or not data.get("d"):
            return cls.empty(T)
        C = np.asarray(data["C"], dtype=float)
        if C.ndim != 2 or C.shape[1] != T:
            raise ValueError(f"coupling matrix must have {T} columns")
        return cls(C, data["d"])


@dataclass
class SolveResult:
    u_star: np.ndarray
    objective: float
    atoms: list[tuple[float, Vertex]]
    status: str = OPTIMAL
    mu: np.ndarray | None = None
    sigma: float | None = None
    iterations: int = 0
    gap: float | None = None
    history: list[float] = field(default_factory=list)
    aux: np.ndarray | None = None


# -- lifting and greedy -------------------------------------------------------------------

class LiftedOracle:
    """Submodular function on the ground set extended by the element 0.

    Masks have ``T + 1`` columns; column 0 is the auxiliary element.
    """

    def __init__(self, base: ParamodularOracle):
        self.base = base
        self.T = base.T

    @staticmethod
    def _queries(masks):
        masks = np.asarray(masks, dtype=bool)
        has_aux = masks[..., 0]
        real = masks[..., 1:]
        return has_aux, np.where(has_aux[..., None], ~real, real)

    def eval_many(self, masks) -> np.ndarray:
        has_aux, query = self._queries(masks)
        p, b = self.base.eval_many(query)
        return np.where(has_aux, -p, b)

    def eval_members(self, masks) -> np.ndarray:
        """Per-member values ``(k, N)`` for stacked base oracles.

        ``masks`` is ``(k, T + 1)`` or, with one set per member, ``(k, N, T + 1)``.
        """
        has_aux, query = self._queries(masks)
        P, B = self.base.eval_members(query)
        return np.where(has_aux[:, None] if has_aux.ndim == 1 else has_aux, -P, B)

    def __call__(self, A) -> float:
        mask = np.zeros(self.T + 1, dtype=bool)
        mask[list(A)] = True
        return float(self.eval_many(mask[None, :])[0])


def lift(oracle: ParamodularOracle) -> LiftedOracle:
    return LiftedOracle(oracle)


def _check_label(label, T: int) -> np.ndarray:
    perm = np.asarray(label, dtype=int).reshape(-1)
    if perm.shape != (T + 1,) or not np.array_equal(np.sort(perm), np.arange(T + 1)):
        raise ValueError(f"label must be a permutation of 0..{T}")
    return perm


def prefix_masks(label, T: int) -> np.ndarray:
    """Rows ``j`` = first ``j + 1`` elements of the permutation."""
    perm = _check_label(label, T)
    rank = np.empty(T + 1, dtype=int)
    rank[perm] = np.arange(T + 1)
    return rank[None, :] <= np.arange(T + 1)[:, None]


def _lifted_prefix_values(lifted: LiftedOracle, masks: np.ndarray, workers: int) -> np.ndarray:
    if workers <= 1:
        return lifted.eval_many(masks)
    chunks = np.array_split(masks, min(workers, len(masks)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lifted.eval_many, chunks))
    return np.concatenate(parts)


def _marginals(values: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Lifted point with ``u[perm[j]] = values[j] - values[j - 1]``."""
    steps = np.diff(values, prepend=0.0, axis=0)
    out = np.empty_like(steps)
    out[perm] = steps
    return out


def vertex_from_permutation(oracle: ParamodularOracle, label, workers: int = 1) -> Vertex:
    """The vertex selected by an ordering of the lifted ground set."""
    T = oracle.T
    perm = _check_label(label, T)
    values = _lifted_prefix_values(LiftedOracle(oracle), prefix_masks(perm, T), workers)
    if np.isnan(values).any():
        raise FloatingPointError("oracle returned NaN")
    return Vertex(_marginals(values, perm)[1:], tuple(perm))


def greedy_order(c) -> np.ndarray:
    """Stable ascending order of the lifted costs (auxiliary element costs 0)."""
    c_lift = np.concatenate([[0.0], np.asarray(c, dtype=float)])
    return np.argsort(c_lift, kind="stable")


def greedy_lp(oracle: ParamodularOracle, c, workers: int = 1) -> Vertex:
    """Minimize ``c u`` over the g-polymatroid of ``oracle``.

    ``workers > 1`` evaluates the ``T + 1`` prefix sets on a thread pool; the
    result is identical to the sequential one.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape != (oracle.T,):
        raise ValueError(f"cost vector needs length {oracle.T}")
    if not np.isfinite(c).all():
        raise ValueError("cost vector must be finite")
    return vertex_from_permutation(oracle, greedy_order(c), workers=workers)


def member_vertices(oracle: StackedOracle, label) -> np.ndarray:
    """``(N, T)`` vertices of every stacked member for one ordering."""
    T = oracle.T
    perm = _check_label(label, T)
    values = LiftedOracle(oracle).eval_members(prefix_masks(perm, T))
    return _marginals(values, perm)[1:].T


# -- column generation ----------------------------------------------------------------------

class _Master:
    """Restricted master LP over convex weights of generated vertices.

    Rows are the coupling constraints (``<= d``) followed by the convexity
    row.  Optional master-only columns with their own costs and coupling
    coefficients are present from the start.
    """

    def __init__(self, C, d, aux_cost=None, aux_C=None):
        self.C = C
        self.m = len(d)
        self.sign = np.where(d >= 0, 1.0, -1.0)
        m = self.m
        rows = m + 1
        cols, costs, art, basis = [], [], [], [None] * rows
        for i in range(m):
            col = np.zeros(rows)
            col[i] = self.sign[i]
            cols.append(col)
            costs.append(0.0)
            art.append(False)
            if self.sign[i] > 0:
                basis[i] = len(cols) - 1
        self.aux_index = []
        if aux_cost is not None:
            for k in range(len(aux_cost)):
                col = np.zeros(rows)
                col[:m] = self.sign * aux_C[:, k]
                cols.append(col)
                costs.append(float(aux_cost[k]))
                art.append(False)
                self.aux_index.append(len(cols) - 1)
        for r in range(rows):
            if basis[r] is None:
                col = np.zeros(rows)
                col[r] = 1.0
                cols.append(col)
                costs.append(0.0)
                art.append(True)
                basis[r] = len(cols) - 1
        b = np.concatenate([self.sign * d, [1.0]])
        self.lp = RevisedSimplex(np.column_stack(cols), b, costs, basis, art)
        self.vertex_cols: list[int] = []
        self.vertices: list[Vertex] = []

    def add(self, v: Vertex, cost: float):
        col = np.concatenate([self.sign * (self.C @ v.u), [1.0]])
        (j,) = self.lp.add_columns(col[:, None], [cost])
        self.vertex_cols.append(j)
        self.vertices.append(v)

    def duals(self) -> tuple[np.ndarray, float]:
        y = self.lp.duals()
        return self.sign * y[:self.m], float(y[self.m])


class _ColumnGeneration:
    """One column-generation run, advanced a pricing round at a time.

    :meth:`prices` solves the restricted master and returns the cost vector
    to price at; :meth:`offer` takes the greedy vertex for it and either
    adds a column or finishes.  ``result`` is set once finished.
    """

    def __init__(self, T: int, c, coupling: CouplingConstraints | None, eps: float,
                 max_rounds: int | None, aux_cost=None, aux_C=None):
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.shape != (T,):
            raise ValueError(f"cost vector needs length {T}")
        if not np.isfinite(c).all():
            raise ValueError("cost vector must be finite")
        coupling = coupling or CouplingConstraints.empty(T)
        if coupling.C.shape[1] != T:
            raise ValueError(f"coupling matrix must have {T} columns")
        m = coupling.m
        if aux_cost is not None:
            aux_cost = np.asarray(aux_cost, dtype=float).reshape(-1)
            aux_C = np.asarray(aux_C, dtype=float).reshape(m, len(aux_cost))
        self.T, self.c, self.C, self.d, self.m = T, c, coupling.C, coupling.d, m
        self.eps = eps
        self.max_rounds = 10 * (m + T) if max_rounds is None else max_rounds
        self.aux_cost, self.aux_C = aux_cost, aux_C
        self.result: SolveResult | None = None
        self.rounds = 0
        self.history: list[float] = []
        self.status = OPTIMAL

    def start(self, v0: Vertex):
        """Seed with the vertex minimizing ``c`` alone."""
        c = self.c
        if self.m == 0 and self.aux_cost is None:
            obj = float(c @ v0.u)
            self.result = SolveResult(v0.u.copy(), obj, [(1.0, v0)], mu=np.zeros(0), sigma=obj)
            return
        self.master = _Master(self.C, self.d, self.aux_cost, self.aux_C)
        self.master.add(v0, float(c @ v0.u))
        self.seen = {v0.label}
        self.scale = 1.0 + np.abs(c).max(initial=0.0) * max(1.0, np.abs(v0.u).max(initial=0.0))

    def prices(self) -> np.ndarray:
        lp_status = self.master.lp.solve(refactor=False)
        self.phase_one = lp_status == INFEASIBLE
        if lp_status not in (OPTIMAL, INFEASIBLE):
            raise RuntimeError(f"restricted master failed: {lp_status}")
        y, self.sigma = self.master.duals()
        if self.phase_one:
            return -(self.C.T @ y)
        self.history.append(self.master.lp.objective())
        return self.c - self.C.T @ y

    def offer(self, price: np.ndarray, v: Vertex):
        reduced = float(price @ v.u) - self.sigma
        if self.phase_one:
            tol = self.eps * (1.0 + np.abs(self.d).max(initial=0.0))
        else:
            tol = self.eps * self.scale
        if reduced >= -tol or v.label in self.seen:
            if self.phase_one:
                raise InfeasibleError("coupling constraints exclude every feasible profile")
            self._finish()
            return
        if self.rounds >= self.max_rounds:
            log.warning("column generation stopped after %d rounds", self.rounds)
            if self.phase_one:
                raise InfeasibleError("no feasible master found within the round limit")
            self.status = "iteration_limit"
            self._finish()
            return
        self.master.add(v, float(self.c @ v.u))
        self.seen.add(v.label)
        self.rounds += 1

    def _finish(self):
        master, T = self.master, self.T
        master.lp.solve()  # refactors, then polishes if the fresh inverse disagrees
        x = master.lp.x()
        lam = x[master.vertex_cols]
        atoms = [(float(w), vx) for w, vx in zip(lam, master.vertices) if w > 0]
        u_star = sum(w * vx.u for w, vx in atoms)
        aux = x[master.aux_index] if master.aux_index else None
        objective = float(self.c @ u_star)
        if aux is not None:
            objective += float(self.aux_cost @ aux)
        y, sigma = master.duals()
        if len(atoms) > T + 1:
            atoms = caratheodory_reduce(atoms, T)
        self.result = SolveResult(u_star, objective, atoms, status=self.status, mu=-y,
                                  sigma=sigma, iterations=self.rounds, history=self.history,
                                  aux=aux)


def solve_lp_coupled(oracle: ParamodularOracle, c, coupling: CouplingConstraints | None = None,
                     eps: float = 1e-8, max_rounds: int | None = None, workers: int = 1,
                     aux_cost=None, aux_C=None) -> SolveResult:
    """Minimize ``c u`` over the g-polymatroid subject to ``C u <= d``.

    Dantzig-Wolfe column generation: the restricted master chooses convex
    weights of generated vertices, the greedy algorithm prices new ones at
    ``c + C^T mu``.  Infeasible masters are first driven to feasibility by a
    phase-one master with artificial variables.  Optional master-only
    variables ``s >= 0`` (cost ``aux_cost``, columns ``aux_C`` in the
    coupling rows) extend the model, e.g. for norm objectives.

    Raises :class:`InfeasibleError` if no feasible point exists.
    """
    run = _ColumnGeneration(oracle.T, c, coupling, eps, max_rounds, aux_cost, aux_C)
    run.start(greedy_lp(oracle, run.c, workers=workers))
    while run.result is None:
        price = run.prices()
        run.offer(price, greedy_lp(oracle, price, workers=workers))
    return run.result


def greedy_lp_grouped(oracle: StackedOracle, offsets, costs) -> list[Vertex]:
    """Greedy vertices of several sub-populations in one sweep.

    Members ``offsets[g]:offsets[g + 1]`` of ``oracle`` form group ``g``,
    priced at ``costs[g]``.  Each result equals ``greedy_lp`` on that group.
    """
    T = oracle.T
    offsets = np.asarray(offsets, dtype=int)
    costs = np.asarray(costs, dtype=float).reshape(len(offsets) - 1, T)
    if not np.isfinite(costs).all():
        raise ValueError("cost vectors must be finite")
    sizes = np.diff(offsets)
    if (sizes <= 0).any() or offsets[0] != 0 or offsets[-1] != oracle.n_members:
        raise ValueError("offsets must split the members into nonempty groups")
    perms = [greedy_order(cg) for cg in costs]
    lifted = np.stack([prefix_masks(p, T) for p in perms])          # (G, T+1, T+1)
    per_member = np.repeat(lifted, sizes, axis=0).transpose(1, 0, 2)  # (T+1, N, T+1)
    values = LiftedOracle(oracle).eval_members(per_member)
    sums = np.add.reduceat(values, offsets[:-1], axis=1)
    return [Vertex(_marginals(sums[:, g], perm)[1:], tuple(perm))
            for g, perm in enumerate(perms)]


def solve_many_coupled(groups: Sequence[Sequence], costs, couplings, eps: float = 1e-8,
                       max_rounds: int | None = None, aux_costs=None, aux_Cs=None
                       ) -> list[SolveResult]:
    """Independent coupled LPs, one per device group, priced together.

    Args:
        groups: device parameter lists, one per problem.
        costs: cost vector per problem.
        couplings: :class:`CouplingConstraints` (or ``None``) per problem.
        eps: reduced-cost tolerance.
        max_rounds: pricing-round cap per problem.
        aux_costs: optional master-only variable costs per problem.
        aux_Cs: their coupling columns per problem.

    Returns:
        What :func:`solve_lp_coupled` returns for each problem, in order.
        Each greedy call is shared across all unfinished problems, which
        removes most per-call overhead for many small problems.
    """
    groups = [list(g) for g in groups]
    if not groups:
        return []
    T = groups[0][0].T
    n = len(groups)
    aux_costs = [None] * n if aux_costs is None else aux_costs
    aux_Cs = [None] * n if aux_Cs is None else aux_Cs
    runs = [_ColumnGeneration(T, costs[i], couplings[i], eps, max_rounds, aux_costs[i], aux_Cs[i])
            for i in range(n)]
    sizes = [len(g) for g in groups]
    members = [p for g in groups for p in g]
    starts = np.concatenate([[0], np.cumsum(sizes)])

    def price_all(active, vectors):
        params = [p for i in active for p in groups[i]]
        sub = StackedOracle(params, check=False)
        offsets = np.concatenate([[0], np.cumsum([sizes[i] for i in active])])
        return greedy_lp_grouped(sub, offsets, vectors)

    all_idx = list(range(n))
    stacked = StackedOracle(members, check=False)
    for run, v in zip(runs, greedy_lp_grouped(stacked, starts, [r.c for r in runs])):
        run.start(v)
    active = [i for i in all_idx if runs[i].result is None]
    while active:
        vectors = [runs[i].prices() for i in active]
        for i, price, v in zip(active, vectors, price_all(active, vectors)):
            runs[i].offer(price, v)
        active = [i for i in active if runs[i].result is None]
    return [r.result for r in runs]


# -- Frank-Wolfe ----------------------------------------------------------------------------

STEP_RULES = ("open_loop", "line_search", "pairwise")


def _line_search(grad, u, direction, iters: int = 60) -> float:
    """Minimizer over ``[0, 1]`` of a convex function along ``direction``."""
    def slope(g):
        return float(np.asarray(grad(u + g * direction)) @ direction)
    if slope(1.0) <= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def frank_wolfe(oracle: ParamodularOracle, f: Callable, grad: Callable, K: int = 1000,
                tol: float = 1e-6, step: str = "open_loop", workers: int = 1,
                callback: Callable | None = None) -> SolveResult:
    """Minimize a smooth convex ``f`` over the g-polymatroid.

    Linear subproblems are greedy calls.  The reported ``gap`` is the
    Frank-Wolfe duality gap of the returned iterate, an upper bound on its
    suboptimality.

    Args:
        oracle: set-function oracle of the feasible set.
        f: objective callback.
        grad: gradient callback.
        K: iteration cap.
        tol: stop once the gap is at most this.
        step: ``"open_loop"`` uses ``2 / (k + 2)``; ``"line_search"`` bisects
            the directional derivative; ``"pairwise"`` moves weight from the
            worst active atom to the greedy vertex with a line search, which
            converges linearly on polytopes.
        workers: threads for the greedy evaluations.
        callback: called as ``callback(k, u)`` after each step.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if step not in STEP_RULES:
        raise ValueError(f"unknown step rule {step!r}")
    T = oracle.T
    v = greedy_lp(oracle, np.zeros(T), workers=workers)
    u = v.u.copy()
    weights = {v.label: 1.0}
    verts = {v.label: v}
    gaps: list[float] = []
    gap = np.inf
    k = 0
    for k in range(K):
        g = np.asarray(grad(u), dtype=float)
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient")
        v = greedy_lp(oracle, g, workers=workers)
        gap = float(g @ (u - v.u))
        gaps.append(gap)
        if gap <= tol:
            break
        verts[v.label] = v
        if step == "pairwise":
            away = max(weights, key=lambda key: (float(g @ verts[key].u), key))
            cap = weights[away]
            direction = v.u - verts[away].u
            gamma = cap * _line_search(grad, u, cap * direction)
            u = u + gamma * direction
            weights[v.label] = weights.get(v.label, 0.0) + gamma
            if gamma >= cap:
                del weights[away]
            else:
                weights[away] = cap - gamma
        else:
            direction = v.u - u
            gamma = 2.0 / (k + 2) if step == "open_loop" else _line_search(grad, u, direction)
            u = u + gamma * direction
            for key in weights:
                weights[key] *= 1.0 - gamma
            weights[v.label] = weights.get(v.label, 0.0) + gamma
        if callback is not None:
            callback(k, u)
    else:
        g = np.asarray(grad(u), dtype=float)
        gap = float(g @ (u - greedy_lp(oracle, g, workers=workers).u))
        gaps.append(gap)
    atoms = [(w, verts[key]) for key, w in weights.items() if w > 0]
    if len(atoms) > T + 1:
        atoms = caratheodory_reduce(atoms, T)
    return SolveResult(u, float(f(u)), atoms, iterations=k + 1, gap=gap, history=gaps,
                       status=OPTIMAL if gap <= tol else "iteration_limit")


# -- Caratheodory ---------------------------------------------------------------------------

def caratheodory_reduce(atoms: Sequence[tuple[float, Vertex]], T: int | None = None
                        ) -> list[tuple[float, Vertex]]:
    """Rewrite a convex combination with at most ``T + 1`` atoms.

    Repeatedly finds an affine dependency among ``T + 2`` atoms and shifts
    weight along it until one weight vanishes.
    """
    atoms = [(float(w), v) for w, v in atoms if w > 0]
    if not atoms:
        return atoms
    T = len(atoms[0][1].u) if T is None else T
    while len(atoms) > T + 1:
        head = atoms[:T + 2]
        pts = np.array([v.u for _, v in head]).T
        M = np.vstack([pts, np.ones(len(head))])
        alpha = np.linalg.svd(M)[2][-1]
        if alpha.max() <= 0:
            alpha = -alpha
        lam = np.array([w for w, _ in head])
        pos = alpha > 0
        ratios = np.full(len(head), np.inf)
        ratios[pos] = lam[pos] / alpha[pos]
        i = int(np.argmin(ratios))
        lam = lam - ratios[i] * alpha
        lam[i] = 0.0
        kept = [(float(w), v) for w, (_, v) in zip(lam, head) if w > 1e-15]
        atoms = kept + atoms[T + 2:]
    return atoms
