"""Small dense linear programming.

A two-phase primal simplex on a full tableau.  Problems here have at most a
few dozen variables, so clarity beats speed.  Dantzig's rule picks the
entering column until the solver has made ``5 * ncols`` consecutive
degenerate pivots, after which Bland's rule takes over for the rest of the
solve.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericalFailure

__all__ = [
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
    "EPS_MIN",
    "LpProblem",
    "LpOutcome",
    "lp_solve",
    "lp_feasibility_with_margin",
    "schur_certificate",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

#: Smallest margin accepted as strict satisfaction of a ``>`` row.
EPS_MIN = 1e-6

MAX_ITER = 10_000
_PIVOT_TOL = 1e-9
_COST_TOL = 1e-10
_FEAS_TOL = 1e-9


@dataclass
class LpProblem:
    """``maximize objective @ x`` subject to linear constraints.

    Each row of ``A_ub`` means ``A_ub[i] @ x <= b_ub[i]``.  ``bounds`` holds
    one ``(lower, upper)`` pair per variable with ``None`` for an infinite
    side; when omitted every variable is nonnegative.
    """

    objective: np.ndarray
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    bounds: list = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if len(self.bounds) != n:
            raise DimensionError(f"{len(self.bounds)} bounds for {n} variables")
        for j, (lo, hi) in enumerate(self.bounds):
            if lo is not None and hi is not None and lo > hi:
                raise ValueError(f"variable {j}: lower bound {lo} exceeds upper bound {hi}")

    @property
    def nvars(self):
        return self.objective.size


def _rows(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, n) if np.size(A) else np.zeros((0, n))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise DimensionError(f"{what} constraints have shape {A.shape} with {b.size} right-hand sides")
    return A, b


@dataclass
class LpOutcome:
    status: str
    x: np.ndarray = None
    objective_value: float = None
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


class _Tableau:
    """Row 0 holds reduced costs ``z_j - c_j`` and the objective in the last column."""

    def __init__(self, A, b, basis):
        m, ncols = A.shape
        self.tab = np.zeros((m + 1, ncols + 1))
        self.tab[1:, :-1] = A
        self.tab[1:, -1] = b
        self.basis = list(basis)
        self.iterations = 0

    def set_objective(self, c):
        self.tab[0, :] = 0.0
        self.tab[0, :-1] = -c
        for r, j in enumerate(self.basis, start=1):
            if c[j] != 0.0:
                self.tab[0] += c[j] * self.tab[r]

    def pivot(self, r, c):
        tab = self.tab
        tab[r] /= tab[r, c]
        col = tab[:, c].copy()
        col[r] = 0.0
        tab -= np.outer(col, tab[r])
        tab[:, c] = 0.0
        tab[r, c] = 1.0
        self.basis[r - 1] = c

    def run(self, allowed):
        """Maximise the current objective over columns flagged in ``allowed``.

        Returns False when the problem is unbounded.
        """
        tab = self.tab
        ncols = tab.shape[1] - 1
        bland = False
        degenerate = 0
        while True:
            if self.iterations >= MAX_ITER:
                raise NumericalFailure(f"simplex exceeded {MAX_ITER} iterations")
            costs = np.where(allowed, tab[0, :-1], 0.0)
            scale = 1.0 + np.abs(tab[0, -1])
            candidates = np.flatnonzero(costs < -_COST_TOL * scale)
            if candidates.size == 0:
                return True
            if bland:
                c = int(candidates[0])
            else:
                c = int(candidates[np.argmin(costs[candidates])])
            column = tab[1:, c]
            rows = np.flatnonzero(column > _PIVOT_TOL)
            if rows.size == 0:
                return False
            ratios = tab[1 + rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + _PIVOT_TOL * (1.0 + abs(best))]
            # smallest basic index among ties keeps Bland's rule cycle-free
            r = 1 + int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, c)
            self.iterations += 1
            if best <= _PIVOT_TOL:
                degenerate += 1
                if degenerate >= 5 * ncols:
                    bland = True
            else:
                degenerate = 0


def _standard_form(p):
    """Rewrite ``p`` over nonnegative variables ``y`` with ``x = offset + T @ y``."""
    n = p.nvars
    cols = []
    offset = np.zeros(n)
    extra_rows = []
    for j, (lo, hi) in enumerate(p.bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    T = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s
    A_ub = p.A_ub @ T
    b_ub = p.b_ub - p.A_ub @ offset
    if extra_rows:
        box = np.zeros((len(extra_rows), len(cols)))
        for i, (k, width) in enumerate(extra_rows):
            box[i, k] = 1.0
        A_ub = np.vstack([A_ub, box])
        b_ub = np.concatenate([b_ub, [w for _, w in extra_rows]])
    A_eq = p.A_eq @ T
    b_eq = p.b_eq - p.A_eq @ offset
    return T, offset, A_ub, b_ub, A_eq, b_eq


def lp_solve(p):
    """Solve an :class:`LpProblem` with the two-phase simplex method.

    Returns
    -------
    LpOutcome
        ``status`` is one of ``"optimal"``, ``"infeasible"``, ``"unbounded"``.

    Raises
    ------
    NumericalFailure
        If the iteration cap is hit.
    """
    T, offset, A_ub, b_ub, A_eq, b_eq = _standard_form(p)
    ny = T.shape[1]
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # [ y | slacks | artificials ]
    A = np.zeros((m, ny + m_ub))
    A[:m_ub, :ny] = A_ub
    A[:m_ub, ny:] = np.eye(m_ub)
    A[m_ub:, :ny] = A_eq
    b = np.concatenate([b_ub, b_eq])
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    basis = [None] * m
    for i in range(m_ub):
        if not flip[i]:
            basis[i] = ny + i
    need = [i for i in range(m) if basis[i] is None]
    nart = len(need)
    A_full = np.hstack([A, np.zeros((m, nart))])
    for k, i in enumerate(need):
        A_full[i, ny + m_ub + k] = 1.0
        basis[i] = ny + m_ub + k
    ncols = A_full.shape[1]
    original = A_full.copy()

    tab = _Tableau(A_full, b, basis)
    if nart:
        c1 = np.zeros(ncols)
        c1[ny + m_ub:] = -1.0
        tab.set_objective(c1)
        tab.run(np.ones(ncols, dtype=bool))
        if tab.tab[0, -1] < -_FEAS_TOL * (1.0 + np.abs(b).max(initial=0.0)):
            return LpOutcome(INFEASIBLE, iterations=tab.iterations)
        # drive zero-level artificials out of the basis, dropping redundant rows
        r = 1
        while r <= len(tab.basis):
            if tab.basis[r - 1] >= ny + m_ub:
                row = tab.tab[r, :ny + m_ub]
                cand = np.flatnonzero(np.abs(row) > _PIVOT_TOL)
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                else:
                    tab.tab = np.delete(tab.tab, r, axis=0)
                    original = np.delete(original, r - 1, axis=0)
                    b = np.delete(b, r - 1)
                    del tab.basis[r - 1]
                    continue
            r += 1

    allowed = np.zeros(ncols, dtype=bool)
    allowed[:ny + m_ub] = True
    c2 = np.zeros(ncols)
    c2[:ny] = T.T @ p.objective
    tab.set_objective(c2)
    if not tab.run(allowed):
        return LpOutcome(UNBOUNDED, iterations=tab.iterations)

    sol = np.zeros(ncols)
    basis = tab.basis
    sol[basis] = tab.tab[1:, -1]
    # one refinement solve on the original columns trims tableau round-off
    if basis:
        Bm = original[:, basis]
        try:
            refined = np.linalg.solve(Bm, b)
            if np.all(np.isfinite(refined)) and np.abs(refined - sol[basis]).max() < 1e-6:
                sol[basis] = refined
        except np.linalg.LinAlgError:
            pass
    sol = np.maximum(sol, 0.0)
    x = offset + T @ sol[:ny]
    return LpOutcome(OPTIMAL, x=x, objective_value=float(p.objective @ x), iterations=tab.iterations)


@dataclass
class MarginSolution:
    """Point found by :func:`lp_feasibility_with_margin` and its achieved margin."""

    x: np.ndarray
    margin: float
    outcome: LpOutcome = field(repr=False, default=None)


def lp_feasibility_with_margin(strict=None, weak=None, eq=None, box=None, nvars=None, eps_min=EPS_MIN):
    """Find ``x`` satisfying strict and weak inequality systems with max margin.

    Solves ``max t`` subject to ``S x >= s + t``, ``W x >= w``, ``E x = e``,
    the variable box and ``t <= 1``.

    Parameters
    ----------
    strict, weak, eq : tuple of (matrix, vector), optional
        ``(S, s)`` meaning ``S x > s``; ``(W, w)`` meaning ``W x >= w``;
        ``(E, e)`` meaning ``E x = e``.
    box : list of (lower, upper), optional
        Variable bounds, ``None`` for an open side.  Default: all free.
    nvars : int, optional
        Number of variables when it cannot be inferred from the systems.
    eps_min : float
        Smallest margin counted as strict satisfaction.

    Returns
    -------
    MarginSolution or None
        None when the best margin is below ``eps_min`` or the weak system is
        empty.
    """
    systems = [s for s in (strict, weak, eq) if s is not None]
    if nvars is None:
        if box is not None:
            nvars = len(box)
        elif systems:
            nvars = np.atleast_2d(np.asarray(systems[0][0], dtype=float)).shape[1]
        else:
            raise ValueError("cannot infer the number of variables")

    def unpack(system):
        if system is None:
            return np.zeros((0, nvars)), np.zeros(0)
        M, v = system
        M = np.asarray(M, dtype=float).reshape(-1, nvars)
        v = np.asarray(v, dtype=float).ravel()
        if M.shape[0] != v.size:
            raise DimensionError("row count and right-hand side length differ")
        return M, v

    S, s = unpack(strict)
    W, w = unpack(weak)
    E, e = unpack(eq)
    A_ub = np.vstack([
        np.hstack([-S, np.ones((S.shape[0], 1))]),
        np.hstack([-W, np.zeros((W.shape[0], 1))]),
    ])
    b_ub = np.concatenate([-s, -w])
    A_eq = np.hstack([E, np.zeros((E.shape[0], 1))])
    bounds = list(box) if box is not None else [(None, None)] * nvars
    if len(bounds) != nvars:
        raise DimensionError(f"{len(bounds)} bounds for {nvars} variables")
    bounds.append((None, 1.0))
    objective = np.zeros(nvars + 1)
    objective[-1] = 1.0
    out = lp_solve(LpProblem(objective, A_ub, b_ub, A_eq, e, bounds))
    if not out.optimal or out.objective_value < eps_min:
        return None
    return MarginSolution(out.x[:-1], float(out.x[-1]), out)


def schur_certificate(M, D=1e4, eps_min=EPS_MIN):
    """Certify ``rho(M) < 1`` for a nonnegative matrix by LP.

    Searches ``d`` in ``[1, D]^n`` with ``M d < d``.  For ``M >= 0`` such a
    ``d`` exists iff ``M`` is Schur, which gives a root-finding-free
    cross-check of :func:`posobs.linalg.spectral_radius`.

    Returns
    -------
    MarginSolution or None
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"square matrix required, got shape {M.shape}")
    if np.any(M < 0):
        raise ValueError("the LP certificate applies to nonnegative matrices only")
    n = M.shape[0]
    return lp_feasibility_with_margin(
        strict=(np.eye(n) - M, np.zeros(n)), box=[(1.0, D)] * n, eps_min=eps_min
    )
