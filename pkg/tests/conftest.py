import itertools

import numpy as np
import pytest

from posobs import GainSet, PositiveSystem, SynthesisRequest, spectral_radius, synth_full
from posobs.fixtures import example
from posobs.model import INVARIANCE_IDS, check_invariance_conditions


def random_plant(rng, positivize=False):
    n = int(rng.integers(2, 4))
    if positivize:
        A = rng.uniform(0, 1, (n, n))
        A[rng.random((n, n)) < 0.3] *= -0.3
        B = np.eye(n) + 0.2 * rng.uniform(0, 1, (n, n))
    else:
        A = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < 0.7)
        B = rng.uniform(-1, 1, (n, int(rng.integers(1, n + 1))))
    A *= rng.uniform(0.5, 1.5) / max(spectral_radius(A), 1e-3)
    C = rng.uniform(-1, 1, (int(rng.integers(1, n + 1)), n))
    return PositiveSystem(A, B, C, positivization_mode=positivize)


def certified_sets(count, seed, positivize_every=3):
    """``count`` (system, gains) pairs produced and certified by synth_full."""
    rng = np.random.default_rng(seed)
    out = []
    for k in itertools.count():
        if len(out) >= count:
            return out
        if k > 20 * count:
            raise RuntimeError("random synthesis produced too few certified sets")
        sys = random_plant(rng, positivize=(k % positivize_every == 0))
        res = synth_full(SynthesisRequest(sys))
        if res.feasible:
            out.append((sys, res.gains))


@pytest.fixture(scope="session")
def certified_pool():
    return certified_sets(100, seed=20240917)


@pytest.fixture(scope="session")
def ex1():
    return example("ex1")


@pytest.fixture(scope="session")
def ex2():
    return example("ex2")


@pytest.fixture(scope="session")
def ex3():
    return example("ex3")


@pytest.fixture(scope="session")
def scalar():
    return example("scalar")


def observer_step(sys, g, x, xbar, xlow):
    """One closed-loop step written out from the plant and observer equations.

    Works on batches (rows are points).  Kept separate from the package's
    matrix construction so tests can compare the two.
    """
    A, B, C = sys.A, sys.B, sys.C
    u = xlow @ g.K_lower.T + xbar @ g.K_upper.T
    y = x @ C.T
    x1 = x @ A.T + u @ B.T
    xb1 = xbar @ (A - g.L_upper @ C).T + y @ g.L_upper.T + u @ B.T
    xl1 = xlow @ (A - g.L_lower @ C).T + y @ g.L_lower.T + u @ B.T
    return x1, xb1, xl1


def cone_exit(x, xbar, xlow):
    """Largest violation of ``0 <= xlow <= x <= xbar`` per point."""
    gaps = np.concatenate([xbar - x, x - xlow, xlow], axis=-1)
    return np.maximum(0.0, -gaps.min(axis=-1))


_FAMILIES = {
    "6a": ("Kl",),
    "6b": ("KuKl", "Ku"),
    "6c": ("KuKl", "Ku"),
    "6d": ("Lu",),
    "6e": ("Ll",),
    "6f": ("Ll", "KuKl"),
}


def _perturbed(g, fam, step):
    Lu, Ll, Ku, Kl = g.L_upper, g.L_lower, g.K_upper, g.K_lower
    if fam == "Kl":
        Kl = Kl + step
    elif fam == "KuKl":
        Ku, Kl = Ku + step, Kl - step
    elif fam == "Ku":
        Ku = Ku + step
    elif fam == "Ll":
        Ll = Ll + step
    elif fam == "Lu":
        Lu = Lu + step
    return GainSet(Lu, Ll, Ku, Kl)


def violate(sys, g, target, rng, single=True, directions=20):
    """Perturb certified gains until ``target`` fails.

    With ``single`` the other invariance conditions must keep passing.
    Returns the perturbed gains and the list of failing ids, or None.
    """
    for fam in _FAMILIES[target]:
        shape = (g.K_upper if fam.startswith("K") else g.L_lower).shape
        for _ in range(directions):
            D = rng.normal(size=shape)
            for s in np.geomspace(1e-3, 10, 30):
                g2 = _perturbed(g, fam, s * D)
                rep = check_invariance_conditions(sys, g2)
                fails = [c for c in INVARIANCE_IDS if not rep.passed(c)]
                if target in fails and (not single or fails == [target]):
                    return g2, fails
                if fails:
                    break
    return None


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE.items():
        label = name.removeprefix("test_criterion_").replace("_", " ", 1)
        terminalreporter.write_line(f"criterion {label}: {'PASS' if outcome == 'passed' else 'FAIL'}")
