"""LP synthesis of observer and feedback gains.

Every design problem is bilinear in a gain and a diagonal certificate.  The
usual change of variables makes it linear:

* state feedback: ``Z = K diag(d)`` turns ``A + BK >= 0`` and
  ``(A + BK) d < d`` into rows linear in ``(d, Z)``;
* observers: ``V = diag(lam) L`` turns ``A - LC >= 0`` and
  ``lam' (A - LC) < lam'`` into rows linear in ``(lam, V)``.

A nonnegative matrix ``M`` with ``M d < d`` for some ``d > 0`` (or
``lam' M < lam'``) is Schur, so a feasible point certifies stability.

The coupling condition ``B Ku + Ll C >= 0`` multiplies ``lam`` with ``Ku``.
The coupled pipeline therefore fixes ``lam`` from a first observer solve and
then solves for ``(Ku, V)`` jointly.  This staged scheme is sound but not
complete: a stage-infeasible result does not prove that no gains exist.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, PosobsError
from .linalg import DEFAULT_TOL, as_matrix
from .lp import lp_feasibility_with_margin, schur_certificate
from .model import (
    INVARIANCE_IDS,
    GainSet,
    build_extended_closed_loop,
    certify,
    check_invariance_conditions,
    validate_system,
)

__all__ = [
    "THM1",
    "COUPLED",
    "RADIUS_FLOOR",
    "FeedbackDesign",
    "ObserverDesign",
    "UpperFeedbackDesign",
    "SynthesisRequest",
    "SynthesisResult",
    "synth_state_feedback",
    "synth_observer_gain",
    "synth_upper_feedback",
    "synth_full",
    "find_necessity_counterexample",
]

THM1 = "thm1"
COUPLED = "coupled"

DEFAULT_EPS = 1e-6
DEFAULT_D = 1e4
DEFAULT_ITERATIONS = 3
#: Feasible results keep every block radius at or below 1 - RADIUS_FLOOR.
RADIUS_FLOOR = 1e-6


class _Program:
    """Collects variable blocks and rows for :func:`lp_feasibility_with_margin`."""

    def __init__(self):
        self.nvars = 0
        self.box = []
        self.strict = []
        self.weak = []

    def block(self, shape, lo=None, hi=None):
        size = int(np.prod(shape))
        idx = np.arange(self.nvars, self.nvars + size).reshape(shape)
        self.nvars += size
        self.box.extend([(lo, hi)] * size)
        return idx

    def fix(self, idx, values):
        for i, v in zip(np.ravel(idx), np.ravel(values)):
            self.box[i] = (float(v), float(v))

    def row(self, terms, rhs, strict=False):
        """Add ``sum(coef * var) >= rhs`` (``>`` when ``strict``)."""
        (self.strict if strict else self.weak).append((terms, float(rhs)))

    def solve(self, eps):
        def dense(rows):
            if not rows:
                return None
            M = np.zeros((len(rows), self.nvars))
            for r, (terms, _) in enumerate(rows):
                for i, c in terms:
                    M[r, i] += c
            return M, np.array([rhs for _, rhs in rows])

        return lp_feasibility_with_margin(
            strict=dense(self.strict), weak=dense(self.weak), box=self.box,
            nvars=self.nvars, eps_min=eps,
        )


@dataclass
class FeedbackDesign:
    """``K = Z diag(d)^-1`` with certificate ``(A + BK) d <= d - margin``."""

    K: np.ndarray
    d: np.ndarray
    Z: np.ndarray
    margin: float


@dataclass
class ObserverDesign:
    """``L = diag(lam)^-1 V`` with certificate ``lam'(A - LC) <= lam' - margin``."""

    L: np.ndarray
    lam: np.ndarray
    V: np.ndarray
    margin: float


@dataclass
class UpperFeedbackDesign:
    K_upper: np.ndarray
    L_lower: np.ndarray
    lam: np.ndarray
    V: np.ndarray
    margin: float


def synth_state_feedback(A, B, eps=DEFAULT_EPS, D=DEFAULT_D):
    """Find ``K`` with ``A + BK >= 0`` and ``rho(A + BK) < 1``.

    Returns
    -------
    FeedbackDesign or None
        None when the LP has no point with margin at least ``eps``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n, m = A.shape[0], B.shape[1]
    if A.shape != (n, n) or B.shape[0] != n:
        raise DimensionError(f"incompatible shapes A{A.shape}, B{B.shape}")
    prog = _Program()
    d = prog.block(n, 1.0, D)
    Z = prog.block((m, n))
    for i in range(n):
        for j in range(n):
            terms = [(d[j], A[i, j])] + [(Z[k, j], B[i, k]) for k in range(m)]
            prog.row(terms, 0.0)
    for i in range(n):
        terms = [(d[i], 1.0)] + [(d[j], -A[i, j]) for j in range(n)]
        terms += [(Z[k, j], -B[i, k]) for k in range(m) for j in range(n)]
        prog.row(terms, 0.0, strict=True)
    sol = prog.solve(eps)
    if sol is None:
        return None
    dv = sol.x[d]
    Zv = sol.x[Z]
    return FeedbackDesign(Zv / dv[None, :], dv, Zv, sol.margin)


def _observer_rows(prog, A, C, lam, V, lam_fixed):
    """``diag(lam) A - V C >= 0`` and the strict copositive stability rows."""
    n, p = A.shape[0], C.shape[0]

    def lam_term(i, coef):
        # fixed multipliers contribute to the right-hand side instead
        return ([], -coef * lam_fixed[i]) if lam_fixed is not None else ([(lam[i], coef)], 0.0)

    for i in range(n):
        for j in range(n):
            terms, shift = lam_term(i, A[i, j])
            terms = terms + [(V[i, k], -C[k, j]) for k in range(p)]
            prog.row(terms, shift)
    for j in range(n):
        terms, shift = [], 0.0
        for i in range(n):
            t, s = lam_term(i, -A[i, j])
            terms += t
            shift += s
        t, s = lam_term(j, 1.0)
        terms += t
        shift += s
        terms += [(V[i, k], C[k, j]) for i in range(n) for k in range(p)]
        prog.row(terms, shift, strict=True)
    return lam_term


def _noise_rows(prog, lam_term, V, E1, F1, upper):
    n, p = V.shape
    for i in range(n):
        vf = [(V[i, k], F1[k]) for k in range(p)]
        if upper:
            t, s = lam_term(i, -E1[i])
            prog.row(vf + t, s)  # 17a: V F1 - diag(lam) E1 >= 0
        else:
            t, s = lam_term(i, E1[i])
            prog.row([(v, -c) for v, c in vf] + t, s)  # 17b
            prog.row(vf, 0.0)  # 17c


def synth_observer_gain(A, C, *, require_LC_nonneg=False, noise_upper=None, noise_lower=None,
                        coupled_BKbar=None, lam_fixed=None, eps=DEFAULT_EPS, D=DEFAULT_D):
    """Find ``L`` with ``A - LC >= 0`` and ``rho(A - LC) < 1``.

    Parameters
    ----------
    require_LC_nonneg : bool
        Also require ``LC >= 0``.
    noise_upper : tuple of (E1, F1), optional
        Require ``L F1 >= E1`` (the upper-observer noise condition).
    noise_lower : tuple of (E1, F1), optional
        Require ``E1 >= L F1 >= 0`` (the lower-observer noise conditions).
    coupled_BKbar : array_like, optional
        Require ``B Ku + L C >= 0`` for the given product ``B Ku``.
    lam_fixed : array_like, optional
        Use this copositive certificate instead of optimizing it.

    Returns
    -------
    ObserverDesign or None
    """
    A = as_matrix(A, "A")
    C = np.asarray(C, dtype=float)
    C = C.reshape(1, -1) if C.ndim == 1 else as_matrix(C, "C")
    n, p = A.shape[0], C.shape[0]
    if A.shape != (n, n) or C.shape[1] != n:
        raise DimensionError(f"incompatible shapes A{A.shape}, C{C.shape}")
    prog = _Program()
    lam = prog.block(n, 1.0, D)
    V = prog.block((n, p))
    fixed = None
    if lam_fixed is not None:
        fixed = np.asarray(lam_fixed, dtype=float).ravel()
        prog.fix(lam, fixed)
    lam_term = _observer_rows(prog, A, C, lam, V, fixed)
    if require_LC_nonneg:
        for i in range(n):
            for j in range(n):
                prog.row([(V[i, k], C[k, j]) for k in range(p)], 0.0)
    if coupled_BKbar is not None:
        BK = as_matrix(coupled_BKbar, "coupled_BKbar")
        for i in range(n):
            for j in range(n):
                t, s = lam_term(i, BK[i, j])
                prog.row(t + [(V[i, k], C[k, j]) for k in range(p)], s)
    if noise_upper is not None:
        _noise_rows(prog, lam_term, V, *_e1f1(noise_upper), upper=True)
    if noise_lower is not None:
        _noise_rows(prog, lam_term, V, *_e1f1(noise_lower), upper=False)
    sol = prog.solve(eps)
    if sol is None:
        return None
    lv = sol.x[lam]
    Vv = sol.x[V]
    return ObserverDesign(Vv / lv[:, None], lv, Vv, sol.margin)


def _e1f1(pair):
    E1, F1 = pair
    return np.asarray(E1, dtype=float).ravel(), np.asarray(F1, dtype=float).ravel()


def synth_upper_feedback(A, B, C, lam_fixed, *, noise_lower=None, eps=DEFAULT_EPS):
    """Jointly choose ``Ku`` and the lower observer gain at a fixed certificate.

    Solves for ``(Ku, V)`` with ``B Ku >= 0``, ``A + B Ku >= 0``,
    ``diag(lam) B Ku + V C >= 0`` and the lower-observer rows, maximising the
    observer stability margin.  ``A`` may have negative entries; ``Ku`` then
    has to restore ``A + B Ku >= 0``.

    Returns
    -------
    UpperFeedbackDesign or None
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    C = np.asarray(C, dtype=float)
    C = C.reshape(1, -1) if C.ndim == 1 else as_matrix(C, "C")
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    lam_fixed = np.asarray(lam_fixed, dtype=float).ravel()
    if lam_fixed.size != n or np.any(lam_fixed <= 0):
        raise ValueError("lam_fixed must be a positive vector of length n")
    prog = _Program()
    Ku = prog.block((m, n))
    V = prog.block((n, p))
    lam_term = _observer_rows(prog, A, C, None, V, lam_fixed)
    for i in range(n):
        for j in range(n):
            bk = [(Ku[k, j], B[i, k]) for k in range(m)]
            prog.row(bk, 0.0)  # B Ku >= 0
            prog.row(bk, -A[i, j])  # A + B Ku >= 0
            prog.row([(v, lam_fixed[i] * c) for v, c in bk]
                     + [(V[i, k], C[k, j]) for k in range(p)], 0.0)
    if noise_lower is not None:
        _noise_rows(prog, lam_term, V, *_e1f1(noise_lower), upper=False)
    sol = prog.solve(eps)
    if sol is None:
        return None
    Vv = sol.x[V]
    return UpperFeedbackDesign(sol.x[Ku], Vv / lam_fixed[:, None], lam_fixed, Vv, sol.margin)


@dataclass
class SynthesisRequest:
    system: object
    mode: str = COUPLED
    include_noise_conditions: bool = False
    eps: float = DEFAULT_EPS
    D: float = DEFAULT_D
    iterations: int = DEFAULT_ITERATIONS

    def __post_init__(self):
        if self.mode not in (THM1, COUPLED):
            raise ValueError(f"unknown synthesis mode {self.mode!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.D >= 1:
            raise ValueError("D must be at least 1")


@dataclass
class SynthesisResult:
    """Outcome of :func:`synth_full`.

    ``failed_stage`` names the pipeline stage that was infeasible.  An
    infeasible result means this staged pipeline found nothing; it is not a
    proof that the system cannot be stabilized.
    """

    status: str
    gains: GainSet = None
    certificates: dict = field(default_factory=dict)
    report: object = None
    failed_stage: str = None

    @property
    def feasible(self):
        return self.status == "feasible"

    def describe(self):
        if self.feasible:
            return "feasible"
        return f"stage-infeasible at {self.failed_stage} stage"


def _fail(stage, **kw):
    return SynthesisResult("infeasible", failed_stage=stage, **kw)


def synth_full(req):
    """Synthesize a full gain set and re-certify it.

    ``thm1`` mode designs ``K`` and an observer with ``LC >= 0``
    independently and returns ``(Lu, Ll, Ku=0, Kl=K)``.  ``coupled`` mode
    runs the staged pipeline that allows ``Ll C`` to have negative entries
    compensated by feedback from the upper estimate.
    """
    sys = req.system
    problems = validate_system(sys)
    if problems:
        raise PosobsError("invalid system: " + "; ".join(map(str, problems)))
    A, B, C = sys.A, sys.B, sys.C
    noise = req.include_noise_conditions
    if noise:
        pair = (sys.E1(), sys.F1())
    up_noise = pair if noise else None
    low_noise = pair if noise else None
    certs = {}

    fb = synth_state_feedback(A, B, req.eps, req.D)
    if fb is None:
        return _fail("feedback")
    certs.update(d=fb.d, feedback_margin=fb.margin)

    if req.mode == THM1:
        low = synth_observer_gain(A, C, require_LC_nonneg=True, noise_lower=low_noise,
                                  eps=req.eps, D=req.D)
        if low is None:
            return _fail("observer", certificates=certs)
        if noise:
            up = synth_observer_gain(A, C, noise_upper=up_noise, eps=req.eps, D=req.D)
            if up is None:
                return _fail("upper observer", certificates=certs)
        else:
            up = low
        gains = GainSet(up.L, low.L, np.zeros((sys.m, sys.n)), fb.K)
        certs.update(lambda_lower=low.lam, lower_margin=low.margin,
                     lambda_upper=up.lam, upper_margin=up.margin)
    else:
        first = synth_observer_gain(A, C, noise_lower=low_noise, eps=req.eps, D=req.D)
        if first is None:
            return _fail("lower observer", certificates=certs)
        joint = synth_upper_feedback(A, B, C, first.lam, noise_lower=low_noise, eps=req.eps)
        if joint is None:
            return _fail("joint upper-feedback", certificates=certs)
        for _ in range(req.iterations):
            # refresh the certificate from the achieved lower gain and re-solve
            err = A - joint.L_lower @ C
            if err.min() < -DEFAULT_TOL:
                break
            refreshed = schur_certificate(np.maximum(err, 0.0).T, D=req.D, eps_min=req.eps)
            if refreshed is None:
                break
            retry = synth_upper_feedback(A, B, C, refreshed.x, noise_lower=low_noise, eps=req.eps)
            if retry is None or retry.margin <= joint.margin * (1 + 1e-9):
                break
            joint = retry
        up = synth_observer_gain(A, C, noise_upper=up_noise, eps=req.eps, D=req.D)
        if up is None:
            return _fail("upper observer", certificates=certs)
        gains = GainSet(up.L, joint.L_lower, joint.K_upper, fb.K - joint.K_upper)
        certs.update(lambda_lower=joint.lam, lower_margin=joint.margin,
                     lambda_upper=up.lam, upper_margin=up.margin)

    report = certify(sys, gains, tol=DEFAULT_TOL, noise=noise)
    worst = max(report.radii[k] for k in ("rho_cl", "rho_up", "rho_low"))
    if not report.ok or worst > 1.0 - RADIUS_FLOOR:
        return _fail("recheck", gains=gains, certificates=certs, report=report)
    return SynthesisResult("feasible", gains, certs, report)


# ---------------------------------------------------------------------------
# necessity counterexamples
# ---------------------------------------------------------------------------

_TARGET_EXIT = 1e-3


def _cone_exit(M, point):
    n = point.size // 3
    nxt = M @ point
    x, xbar, xlow = nxt[:n], nxt[n:2 * n], nxt[2 * n:]
    return -min((xbar - x).min(), (x - xlow).min(), xlow.min())


def find_necessity_counterexample(sys, g, violated, tol=DEFAULT_TOL):
    """Construct an ordered point that leaves the cone after one step.

    Parameters
    ----------
    violated : str
        One of ``"6a"`` .. ``"6f"``.

    Returns
    -------
    tuple of numpy.ndarray or None
        ``(x, xbar, xlow)`` with ``0 <= xlow <= x <= xbar`` whose image
        under the extended closed loop violates the ordering, or None when
        the named condition holds.
    """
    if violated not in INVARIANCE_IDS:
        raise ValueError(f"unknown condition id {violated!r}; expected one of {INVARIANCE_IDS}")
    report = check_invariance_conditions(sys, g, tol)
    if report.passed(violated):
        return None
    n = sys.n
    A, B, C = sys.A, sys.B, sys.C
    Ku, Kl, Lu, Ll = g.K_upper, g.K_lower, g.L_upper, g.L_lower
    tested = {
        "6a": A + B @ (Ku + Kl),
        "6b": A + B @ Ku,
        "6c": B @ Ku,
        "6d": A - Lu @ C,
        "6e": A - Ll @ C,
        "6f": B @ Ku + Ll @ C,
    }[violated]
    i, j = np.unravel_index(np.argmin(tested), tested.shape)
    e = np.zeros(n)
    e[j] = 1.0
    zero = np.zeros(n)
    # error coordinates (x, ebar, elow); elow <= x keeps the point ordered
    if violated == "6a":
        x, ebar, elow = e, zero, zero
    elif violated == "6c":
        x = np.ones(n)
        drift = (A + B @ (Ku + Kl)) @ x
        ratio = abs(drift[i] / tested[i, j])
        x, ebar, elow = x, (1.0 + ratio) * 10.0 * e, zero
    elif violated in ("6b", "6f"):
        x, ebar, elow = e, zero, e
    elif violated == "6d":
        x, ebar, elow = zero, e, zero
    else:  # 6e
        x, ebar, elow = e, zero, e
    point = np.concatenate([x, x + ebar, x - elow])
    M = build_extended_closed_loop(sys, g)
    exit_size = _cone_exit(M, point)
    if exit_size <= 0:
        return None
    if exit_size < _TARGET_EXIT:
        point = point * (_TARGET_EXIT / exit_size)
    return point[:n], point[n:2 * n], point[2 * n:]
