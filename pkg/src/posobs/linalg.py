"""Dense real linear algebra used throughout posobs.

Matrices are plain ``numpy`` float arrays.  Eigenvalues are computed without
an external eigensolver: the characteristic polynomial is formed exactly in
rational arithmetic (Faddeev-LeVerrier on an integer-scaled copy), reduced to
square-free factors with Yun's algorithm and the factors are solved with the
Aberth-Ehrlich simultaneous iteration, first in double precision and then
refined in multiprecision against the exact coefficients.  Working exactly up
to the root finder means repeated and defective eigenvalues, which are common
in the structured closed-loop matrices of interval observers, come out at full
double precision, and tight clusters of distinct roots are still separated.

Float entries enter the exact stage through their shortest decimal
representation, so ``0.9`` is treated as ``9/10`` and not as the nearest
binary fraction.
"""

from fractions import Fraction
from math import lcm

import mpmath
import numpy as np

from .errors import DimensionError, NumericalFailure, SingularMatrixError

__all__ = [
    "DEFAULT_TOL",
    "as_matrix",
    "is_nonneg",
    "to_exact",
    "charpoly",
    "squarefree_factors",
    "polynomial_roots",
    "eigenvalues",
    "spectral_radius",
    "solve_linear",
]

#: Default tolerance for elementwise nonnegativity tests.
DEFAULT_TOL = 1e-9

_ABERTH_MAXITER = 500
_REFINE_DPS = 60
_REFINE_MAXITER = 400
_RESIDUAL_TOL = 1e-8
_PIVOT_TOL = 1e-12


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array.

    1-D input is read as a column vector.
    """
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def is_nonneg(M, tol=DEFAULT_TOL):
    """Elementwise nonnegativity test.

    Parameters
    ----------
    M : array_like
        Matrix or vector to test.
    tol : float
        Entries down to ``-tol`` are accepted.

    Returns
    -------
    ok : bool
        True iff every entry is ``>= -tol``.
    margin : float
        The minimum entry.  ``inf`` for an empty input.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    arr = np.asarray(M, dtype=float)
    if arr.size == 0:
        return True, float("inf")
    margin = float(arr.min())
    return margin >= -tol, margin


# ---------------------------------------------------------------------------
# exact characteristic polynomial
# ---------------------------------------------------------------------------

def _fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    xf = float(x)
    if not np.isfinite(xf):
        raise ValueError("non-finite matrix entry")
    return Fraction(repr(xf))


def to_exact(M):
    """Convert a matrix to a ``numpy`` object array of ``Fraction`` entries."""
    arr = np.asarray(M, dtype=object)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = _fraction(v)
    return out


def _square_exact(M):
    if isinstance(M, np.ndarray) and M.dtype == object:
        arr = M
    else:
        arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"square matrix required, got shape {np.shape(arr)}")
    return to_exact(arr)


def charpoly(M):
    """Exact characteristic polynomial ``det(zI - M)``.

    Returns the coefficients as ``Fraction`` values, highest degree first
    (the leading coefficient is 1).
    """
    F = _square_exact(M)
    n = F.shape[0]
    if n == 0:
        return [Fraction(1)]
    scale = 1
    for v in F.flat:
        scale = lcm(scale, v.denominator)
    N = [[int(F[i, j] * scale) for j in range(n)] for i in range(n)]

    # Faddeev-LeVerrier on the integer matrix N = scale*M; every division is exact.
    coeffs = [1]
    Mk = [[int(i == j) for j in range(n)] for i in range(n)]
    for k in range(1, n + 1):
        AM = [[sum(a * b for a, b in zip(row, col)) for col in zip(*Mk)] for row in N]
        tr = sum(AM[i][i] for i in range(n))
        c, rem = divmod(-tr, k)
        assert rem == 0
        coeffs.append(c)
        if k < n:
            Mk = AM
            for i in range(n):
                Mk[i][i] += c
    return [Fraction(c, scale**k) for k, c in enumerate(coeffs)]


def _trim(p):
    i = 0
    while i < len(p) - 1 and p[i] == 0:
        i += 1
    return p[i:]


def _monic(p):
    p = _trim(p)
    lead = p[0]
    return [c / lead for c in p]


def _deriv(p):
    d = len(p) - 1
    return _trim([c * (d - i) for i, c in enumerate(p[:-1])]) if d > 0 else [Fraction(0)]


def _divmod(num, den):
    num = list(num)
    den = _trim(den)
    if len(num) < len(den):
        return [Fraction(0)], _trim(num)
    q = []
    for i in range(len(num) - len(den) + 1):
        f = num[i] / den[0]
        q.append(f)
        if f:
            for j in range(1, len(den)):
                num[i + j] -= f * den[j]
    rem = num[len(num) - len(den) + 1:] or [Fraction(0)]
    return q, _trim(rem)


def _is_zero(p):
    return len(p) == 1 and p[0] == 0


def _gcd(a, b):
    a, b = _monic(a), _trim(b)
    while not _is_zero(b):
        _, r = _divmod(a, b)
        a, b = _monic(b), r
    return a


def _sub(a, b):
    n = max(len(a), len(b))
    a = [Fraction(0)] * (n - len(a)) + list(a)
    b = [Fraction(0)] * (n - len(b)) + list(b)
    return _trim([x - y for x, y in zip(a, b)])


def squarefree_factors(p):
    """Yun's square-free decomposition over the rationals.

    Returns a list of ``(factor, multiplicity)`` with monic, pairwise coprime,
    square-free factors whose product (with multiplicities) is ``monic(p)``.
    """
    f = _monic([_fraction(c) for c in p])
    if len(f) == 1:
        return []
    df = _deriv(f)
    a0 = _gcd(f, df)
    b, _ = _divmod(f, a0)
    c, _ = _divmod(df, a0)
    d = _sub(c, _deriv(b))
    out = []
    i = 1
    while len(b) > 1:
        a = _gcd(b, d)
        b, _ = _divmod(b, a)
        c, _ = _divmod(d, a)
        d = _sub(c, _deriv(b))
        if len(a) > 1:
            out.append((a, i))
        i += 1
    return out


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

def _aberth(coeffs, maxiter=_ABERTH_MAXITER):
    """Aberth-Ehrlich iteration for a monic float polynomial (highest first)."""
    a = np.asarray(coeffs, dtype=complex)
    deg = len(a) - 1
    da = a[:-1] * np.arange(deg, 0, -1)
    # Fujiwara bound on root moduli
    bound = 2.0 * max(abs(a[k]) ** (1.0 / k) for k in range(1, deg + 1))
    center = -a[1] / deg
    radius = max(bound / 2.0, 1e-3)
    angles = 2.0 * np.pi * np.arange(deg) / deg + 0.4
    z = center + radius * np.exp(1j * angles)
    eps = np.finfo(float).eps
    abs_a = np.abs(a)
    done = np.zeros(deg, dtype=bool)
    for _ in range(maxiter):
        p = np.polyval(a, z)
        # a root is settled once its residual is at Horner rounding level
        noise = 4.0 * deg * eps * np.polyval(abs_a, np.abs(z))
        done |= np.abs(p) <= noise
        if done.all():
            return z
        dp = np.polyval(da, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = p / dp
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            s = inv.sum(axis=1)
            w = ratio / (1.0 - ratio * s)
        bad = ~np.isfinite(w)
        if bad.any():
            w[bad] = 1e-3 * (1.0 + abs(z[bad])) * np.exp(1j * 0.7)
        w[done] = 0.0
        z = z - w
        done |= np.abs(w) <= 2.0 * eps * np.abs(z)
    raise NumericalFailure("Aberth iteration did not converge", best=z)


def _refine(exact, z0):
    """Aberth iteration in multiprecision, seeded with double-precision roots.

    A root is settled when its step is tiny or its residual reaches the
    working-precision rounding level; the latter bounds what clustered roots
    can attain.
    """
    deg = len(exact) - 1
    with mpmath.workdps(_REFINE_DPS):
        a = [mpmath.mpf(c.numerator) / c.denominator for c in exact]
        abs_a = [abs(c) for c in a]
        z = [mpmath.mpc(complex(v)) for v in z0]
        tol = mpmath.mpf(10) ** (-(_REFINE_DPS - 12))
        unit = 4 * deg * mpmath.mpf(10) ** (-_REFINE_DPS)
        done = [False] * deg
        for _ in range(_REFINE_MAXITER):
            for k in range(deg):
                if done[k]:
                    continue
                p, dp = mpmath.polyval(a, z[k], derivative=True)
                if abs(p) <= unit * mpmath.polyval(abs_a, abs(z[k])):
                    done[k] = True
                    continue
                s = mpmath.mpc(0)
                for j in range(deg):
                    if j != k:
                        gap = z[k] - z[j]
                        if gap == 0:
                            gap = tol
                        s += 1 / gap
                ratio = p / dp if dp != 0 else mpmath.mpc(tol, tol)
                w = ratio / (1 - ratio * s)
                z[k] -= w
                if abs(w) <= tol * (1 + abs(z[k])):
                    done[k] = True
            if all(done):
                return np.array([complex(v) for v in z])
    raise NumericalFailure("multiprecision root refinement did not converge",
                           best=np.array([complex(v) for v in z]))


def polynomial_roots(coeffs):
    """Roots of a square-free polynomial given highest degree first.

    Raises
    ------
    NumericalFailure
        If the iteration does not converge or a root fails the residual check
        ``|p(z)| <= 1e-8 * sum |a_k| |z|^k``.
    """
    exact = _monic([_fraction(c) for c in coeffs])
    zeros = 0
    while len(exact) > 1 and exact[-1] == 0:
        exact.pop()
        zeros += 1
    deg = len(exact) - 1
    if deg == 0:
        return np.zeros(zeros, dtype=complex)
    if deg == 1:
        return np.array([complex(float(-exact[1]))] + [0j] * zeros)
    a = np.array([float(c) for c in exact], dtype=complex)
    try:
        z = _aberth(a)
    except NumericalFailure as exc:
        z = exc.best
    z = _refine(exact, z)
    # snap imaginary parts that are pure round-off; real polynomial roots pair up
    z = np.where(np.abs(z.imag) <= 8 * np.finfo(float).eps * np.abs(z), z.real + 0j, z)
    scale = np.polyval(np.abs(a), np.abs(z))
    resid = np.abs(np.polyval(a, z))
    if np.any(resid > _RESIDUAL_TOL * scale):
        raise NumericalFailure("root residual check failed", best=z)
    return np.concatenate([z, np.zeros(zeros, dtype=complex)])


def eigenvalues(M):
    """All eigenvalues of a square matrix, repeated by algebraic multiplicity.

    Accepts float arrays or object arrays of ``Fraction`` (exact input).

    Returns
    -------
    numpy.ndarray
        Complex array of length ``n`` sorted by decreasing modulus.
    """
    poly = charpoly(M)
    roots = []
    for factor, mult in squarefree_factors(poly):
        r = polynomial_roots(factor)
        roots.extend(np.repeat(r, mult))
    out = np.array(roots, dtype=complex)
    order = np.lexsort((-out.imag, -out.real, -np.abs(out)))
    return out[order]


def spectral_radius(M):
    """Largest eigenvalue modulus of a square matrix."""
    ev = eigenvalues(M)
    return float(np.max(np.abs(ev))) if ev.size else 0.0


# ---------------------------------------------------------------------------
# linear solve
# ---------------------------------------------------------------------------

def solve_linear(M, b):
    """Solve ``M x = b`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    M : array_like, shape (n, n)
    b : array_like, shape (n,) or (n, k)

    Returns
    -------
    numpy.ndarray
        Solution with the same shape as ``b``.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``1e-12`` times the largest magnitude in its
        column of ``M``.
    """
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"square matrix required, got shape {A.shape}")
    rhs = np.array(b, dtype=float)
    vector = rhs.ndim == 1
    if vector:
        rhs = rhs.reshape(-1, 1)
    n = A.shape[0]
    if rhs.shape[0] != n:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, expected {n}")
    colscale = np.abs(A).max(axis=0) if n else np.zeros(0)

    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= _PIVOT_TOL * colscale[k] or A[p, k] == 0.0:
            raise SingularMatrixError(f"singular pivot in column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            rhs[[k, p]] = rhs[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        rhs[k + 1:] -= np.outer(f, rhs[k])

    x = np.zeros_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x.ravel() if vector else x
