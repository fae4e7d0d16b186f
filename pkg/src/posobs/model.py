"""Plant and gain data model, extended closed-loop matrices, certification.

Conventions
-----------
The closed loop stacks the state with the upper and lower estimates,
``X = (x, xbar, xlow)``, and uses the positive feedback convention
``u = K_lower @ xlow + K_upper @ xbar``.  In error coordinates
``(x, ebar, elow)`` with ``ebar = xbar - x`` and ``elow = x - xlow`` the
dynamics are block upper triangular::

    [A + B(Ku + Kl)   B Ku     -B Kl  ]
    [      0        A - Lu C     0    ]
    [      0           0      A - Ll C]

Condition ids
-------------
========  =====================================
``6a``    ``A + B(Ku + Kl) >= 0``
``6b``    ``A + B Ku >= 0``
``6c``    ``B Ku >= 0``
``6d``    ``A - Lu C >= 0``
``6e``    ``A - Ll C >= 0``
``6f``    ``B Ku + Ll C >= 0``
``10a``   ``A + B K >= 0`` (single unstructured observer)
``10b``   ``B K >= 0``
``10c``   ``L C >= 0``
``17a``   ``Lu F 1 - E 1 >= 0``
``17b``   ``E 1 - Ll F 1 >= 0``
``17c``   ``Ll F 1 >= 0``
========  =====================================
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, MissingNoiseModelError, NumericalFailure
from .linalg import DEFAULT_TOL, as_matrix, is_nonneg, spectral_radius, to_exact

__all__ = [
    "STABILITY_TOL",
    "INVARIANCE_IDS",
    "GENERIC_IDS",
    "NOISE_IDS",
    "PositiveSystem",
    "GainSet",
    "ConditionResult",
    "ConditionReport",
    "Violation",
    "build_extended_closed_loop",
    "build_error_dynamics",
    "noise_bias",
    "check_invariance_conditions",
    "check_generic_conditions",
    "check_noise_conditions",
    "check_stability",
    "certify",
    "cone_violation",
    "validate_system",
]

#: rho < 1 - STABILITY_TOL counts as Schur.
STABILITY_TOL = 1e-9
#: Allowed gap between rho of the stacked matrix and the largest block radius.
SPECTRUM_MATCH_TOL = 1e-8

INVARIANCE_IDS = ("6a", "6b", "6c", "6d", "6e", "6f")
GENERIC_IDS = ("10a", "10b", "10c")
NOISE_IDS = ("17a", "17b", "17c")
RADIUS_KEYS = ("rho_cl", "rho_up", "rho_low", "rho_ext")


@dataclass(frozen=True, eq=False)
class PositiveSystem:
    """Discrete-time plant ``x+ = A x + B u + E w``, ``y = C x + F v``.

    ``E`` and ``F`` are optional and only needed for the noisy setting.  With
    ``positivization_mode`` set, ``A`` may have negative entries; feedback
    from the upper estimate is then expected to restore positivity.
    Positivity requirements are reported by :func:`validate_system` rather
    than enforced here, shapes are enforced.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray = None
    F: np.ndarray = None
    positivization_mode: bool = False

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, "B")
        C = np.asarray(self.C, dtype=float)
        C = C.reshape(1, -1) if C.ndim == 1 else as_matrix(C, "C")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if self.E is not None:
            E = as_matrix(self.E, "E")
            if E.shape[0] != n:
                raise DimensionError(f"E has {E.shape[0]} rows, expected {n}")
            object.__setattr__(self, "E", E)
        if self.F is not None:
            F = as_matrix(self.F, "F")
            if F.shape[0] != C.shape[0]:
                raise DimensionError(f"F has {F.shape[0]} rows, expected {C.shape[0]}")
            object.__setattr__(self, "F", F)
        object.__setattr__(self, "positivization_mode", bool(self.positivization_mode))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def has_noise(self):
        return self.E is not None and self.F is not None

    def E1(self):
        """Mean process-noise injection ``E @ 1``."""
        self._need_noise()
        return self.E.sum(axis=1)

    def F1(self):
        """Mean measurement-noise injection ``F @ 1``."""
        self._need_noise()
        return self.F.sum(axis=1)

    def _need_noise(self):
        if not self.has_noise:
            raise MissingNoiseModelError("the system has no noise model (E and F are required)")


@dataclass(frozen=True, eq=False)
class GainSet:
    """Observer gains ``L_upper``, ``L_lower`` (n x p) and feedback gains
    ``K_upper``, ``K_lower`` (m x n)."""

    L_upper: np.ndarray
    L_lower: np.ndarray
    K_upper: np.ndarray
    K_lower: np.ndarray

    def __post_init__(self):
        for name in ("L_upper", "L_lower", "K_upper", "K_lower"):
            object.__setattr__(self, name, as_matrix(getattr(self, name), name))

    def check_dims(self, sys):
        n, m, p = sys.n, sys.m, sys.p
        for name, shape in (("L_upper", (n, p)), ("L_lower", (n, p)),
                            ("K_upper", (m, n)), ("K_lower", (m, n))):
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionError(f"{name} has shape {got}, expected {shape}")

    @classmethod
    def zeros(cls, sys):
        n, m, p = sys.n, sys.m, sys.p
        return cls(np.zeros((n, p)), np.zeros((n, p)), np.zeros((m, n)), np.zeros((m, n)))


@dataclass
class ConditionResult:
    margin: float
    passed: bool


@dataclass
class ConditionReport:
    """Margins, spectral radii and verdicts from the certification checks.

    Verdicts that were not evaluated are ``None``.
    """

    conditions: dict = field(default_factory=dict)
    radii: dict = field(default_factory=dict)
    invariance_ok: bool = None
    stability_ok: bool = None
    noise_ok: bool = None
    generic_ok: bool = None
    tol: float = DEFAULT_TOL

    def margin(self, cid):
        return self.conditions[cid].margin

    def passed(self, cid):
        return self.conditions[cid].passed

    def merge(self, other):
        """Combine two partial reports; entries of ``other`` win."""
        out = ConditionReport(dict(self.conditions), dict(self.radii), tol=self.tol)
        out.conditions.update(other.conditions)
        out.radii.update(other.radii)
        for name in ("invariance_ok", "stability_ok", "noise_ok", "generic_ok"):
            mine, theirs = getattr(self, name), getattr(other, name)
            setattr(out, name, theirs if theirs is not None else mine)
        return out

    @property
    def verdicts(self):
        return {name: getattr(self, name)
                for name in ("invariance_ok", "stability_ok", "noise_ok", "generic_ok")
                if getattr(self, name) is not None}

    @property
    def ok(self):
        """True iff every evaluated verdict passes."""
        return all(self.verdicts.values())

    def to_dict(self):
        flat = {}
        for cid in INVARIANCE_IDS + GENERIC_IDS + NOISE_IDS:
            if cid in self.conditions:
                res = self.conditions[cid]
                flat[f"cond{cid}"] = {"margin": res.margin, "pass": res.passed}
        for key in RADIUS_KEYS:
            if key in self.radii:
                flat[key] = self.radii[key]
        flat.update(self.verdicts)
        return flat

    def render(self):
        """Flat ``key = value`` text, one entry per line."""
        lines = []
        for cid in INVARIANCE_IDS + GENERIC_IDS + NOISE_IDS:
            if cid in self.conditions:
                res = self.conditions[cid]
                lines.append(f"cond{cid} = {res.margin:.12g} {'pass' if res.passed else 'FAIL'}")
        for key in RADIUS_KEYS:
            if key in self.radii:
                lines.append(f"{key} = {self.radii[key]:.12g}")
        for name, value in self.verdicts.items():
            lines.append(f"{name} = {'true' if value else 'false'}")
        return "\n".join(lines)

    def __str__(self):
        return self.render()


def _blocks(sys, g, exact=False):
    g.check_dims(sys)
    mats = (sys.A, sys.B, sys.C, g.L_upper, g.L_lower, g.K_upper, g.K_lower)
    if exact:
        mats = tuple(to_exact(M) for M in mats)
    A, B, C, Lu, Ll, Ku, Kl = mats
    return {
        "A": A,
        "BKu": B @ Ku,
        "BKl": B @ Kl,
        "LuC": Lu @ C,
        "LlC": Ll @ C,
    }


def _stack(rows):
    return np.vstack([np.hstack(r) for r in rows])


def build_extended_closed_loop(sys, g, exact=False):
    """Closed loop in ``(x, xbar, xlow)`` coordinates, a ``3n x 3n`` matrix.

    With ``exact=True`` the matrix is built from ``Fraction`` entries.
    """
    b = _blocks(sys, g, exact)
    A, BKu, BKl, LuC, LlC = b["A"], b["BKu"], b["BKl"], b["LuC"], b["LlC"]
    return _stack([
        [A, BKu, BKl],
        [LuC, A - LuC + BKu, BKl],
        [LlC, BKu, A - LlC + BKl],
    ])


def noise_bias(sys, g):
    """Mean noise injection into the error coordinates, a ``3n`` vector."""
    n = sys.n
    if not sys.has_noise:
        return np.zeros(3 * n)
    E1, F1 = sys.E1(), sys.F1()
    return np.concatenate([E1, -E1 + g.L_upper @ F1, E1 - g.L_lower @ F1])


def build_error_dynamics(sys, g, exact=False):
    """Error-coordinate closed loop ``G`` and the mean noise bias.

    Returns
    -------
    G : numpy.ndarray, shape (3n, 3n)
    bias : numpy.ndarray, shape (3n,)
        Zero when the system has no noise model.
    """
    b = _blocks(sys, g, exact)
    A, BKu, BKl, LuC, LlC = b["A"], b["BKu"], b["BKl"], b["LuC"], b["LlC"]
    Z = A * 0
    G = _stack([
        [A + BKu + BKl, BKu, -BKl],
        [Z, A - LuC, Z],
        [Z, Z, A - LlC],
    ])
    return G, noise_bias(sys, g)


def _record(report, cid, M, tol):
    ok, margin = is_nonneg(M, tol)
    report.conditions[cid] = ConditionResult(margin, ok)
    return ok


def check_invariance_conditions(sys, g, tol=DEFAULT_TOL):
    """Conditions 6a-6f: invariance of the ordered cone ``0 <= xlow <= x <= xbar``."""
    b = _blocks(sys, g)
    A, BKu, BKl, LuC, LlC = b["A"], b["BKu"], b["BKl"], b["LuC"], b["LlC"]
    report = ConditionReport(tol=tol)
    tested = {
        "6a": A + BKu + BKl,
        "6b": A + BKu,
        "6c": BKu,
        "6d": A - LuC,
        "6e": A - LlC,
        "6f": BKu + LlC,
    }
    report.invariance_ok = all([_record(report, cid, M, tol) for cid, M in tested.items()])
    return report


def check_generic_conditions(sys, K, L, tol=DEFAULT_TOL):
    """Conditions 10a-10c that a single unstructured positive observer with
    feedback ``u = K xhat`` would need."""
    K = as_matrix(K, "K")
    L = as_matrix(L, "L")
    if K.shape != (sys.m, sys.n) or L.shape != (sys.n, sys.p):
        raise DimensionError(f"K must be {(sys.m, sys.n)} and L {(sys.n, sys.p)}")
    report = ConditionReport(tol=tol)
    BK = sys.B @ K
    tested = {"10a": sys.A + BK, "10b": BK, "10c": L @ sys.C}
    report.generic_ok = all([_record(report, cid, M, tol) for cid, M in tested.items()])
    return report


def check_noise_conditions(sys, g, tol=DEFAULT_TOL):
    """Conditions 17a-17c keeping the expected state ordered under unit-mean noise.

    Raises
    ------
    MissingNoiseModelError
        If ``E`` or ``F`` is absent.
    """
    g.check_dims(sys)
    E1, F1 = sys.E1(), sys.F1()
    report = ConditionReport(tol=tol)
    tested = {
        "17a": g.L_upper @ F1 - E1,
        "17b": E1 - g.L_lower @ F1,
        "17c": g.L_lower @ F1,
    }
    report.noise_ok = all([_record(report, cid, v, tol) for cid, v in tested.items()])
    return report


def check_stability(sys, g):
    """Spectral radii of the three diagonal blocks and of the stacked closed loop.

    The stacked matrix is similar to the block triangular error dynamics, so
    ``rho_ext`` must equal the largest block radius; a mismatch beyond
    ``1e-8`` raises :class:`NumericalFailure`.
    """
    b = _blocks(sys, g, exact=True)
    A, BKu, BKl, LuC, LlC = b["A"], b["BKu"], b["BKl"], b["LuC"], b["LlC"]
    radii = {
        "rho_cl": spectral_radius(A + BKu + BKl),
        "rho_up": spectral_radius(A - LuC),
        "rho_low": spectral_radius(A - LlC),
        "rho_ext": spectral_radius(build_extended_closed_loop(sys, g, exact=True)),
    }
    worst = max(radii["rho_cl"], radii["rho_up"], radii["rho_low"])
    if abs(radii["rho_ext"] - worst) > SPECTRUM_MATCH_TOL:
        raise NumericalFailure(
            f"rho_ext={radii['rho_ext']!r} disagrees with block radius {worst!r}", best=radii
        )
    report = ConditionReport(radii=radii)
    report.stability_ok = worst < 1.0 - STABILITY_TOL
    return report


def certify(sys, g, tol=DEFAULT_TOL, noise=None, generic=False):
    """Run every applicable check and merge the results.

    Parameters
    ----------
    noise : bool, optional
        Include 17a-17c.  Defaults to whether the system has a noise model.
    generic : bool
        Include 10a-10c with ``K = K_upper + K_lower`` and ``L = L_lower``.
    """
    report = check_invariance_conditions(sys, g, tol)
    report = report.merge(check_stability(sys, g))
    if noise is None:
        noise = sys.has_noise
    if noise:
        report = report.merge(check_noise_conditions(sys, g, tol))
    if generic:
        report = report.merge(check_generic_conditions(sys, g.K_upper + g.K_lower, g.L_lower, tol))
    report.tol = tol
    return report


def cone_violation(x, xbar, xlow):
    """How far ``(x, xbar, xlow)`` lies outside ``0 <= xlow <= x <= xbar``.

    Returns 0.0 inside the cone, otherwise the largest violated gap.
    """
    x, xbar, xlow = (np.asarray(v, dtype=float) for v in (x, xbar, xlow))
    gaps = np.concatenate([xbar - x, x - xlow, xlow])
    return float(max(0.0, -gaps.min())) if gaps.size else 0.0


@dataclass(frozen=True)
class Violation:
    """One failed structural requirement on a :class:`PositiveSystem`.

    ``index`` is the zero-based ``(row, col)`` of the offending entry.
    """

    matrix: str
    index: tuple
    value: float
    constraint: str

    def __str__(self):
        i, j = self.index
        return f"{self.matrix}[{i}, {j}] = {self.value:g} violates {self.constraint}"


def validate_system(sys):
    """Check the positivity requirements of ``sys``.

    ``A >= 0`` is required unless ``positivization_mode`` is set; ``E >= 0``
    is required when ``E`` is present.  ``F`` and ``C`` are unrestricted.

    Returns
    -------
    list of Violation
        Empty when the system is valid.
    """
    out = []
    checks = []
    if not sys.positivization_mode:
        checks.append(("A", sys.A))
    if sys.E is not None:
        checks.append(("E", sys.E))
    for name, M in checks:
        for i, j in zip(*np.nonzero(M < 0)):
            out.append(Violation(name, (int(i), int(j)), float(M[i, j]), f"{name} >= 0"))
    return out
