import numpy as np
import pytest

from conftest import cone_exit, observer_step, violate
from posobs import GainSet, PositiveSystem, SynthesisRequest, certify, spectral_radius
from posobs.errors import PosobsError
from posobs.model import INVARIANCE_IDS, check_noise_conditions
from posobs.synthesis import (RADIUS_FLOOR, find_necessity_counterexample, synth_full,
                              synth_observer_gain, synth_state_feedback, synth_upper_feedback)


class TestStateFeedback:
    def test_scalar(self):
        fb = synth_state_feedback([[1.2]], [[1.0]])
        assert fb is not None and 0 <= 1.2 + fb.K[0, 0] < 1

    def test_schur_nonneg_plant(self):
        A = np.array([[0.5, 0.1], [0.2, 0.3]])
        fb = synth_state_feedback(A, [[1.0], [0.0]])
        M = A + np.array([[1.0], [0.0]]) @ fb.K
        assert M.min() >= -1e-9 and spectral_radius(M) < 1

    def test_no_authority(self):
        assert synth_state_feedback([[1.2]], [[0.0]]) is None

    def test_diagonal_scaling_identity(self):
        A = np.array([[1.2, 0.2], [0.0, 0.2]])
        B = np.eye(2)
        fb = synth_state_feedback(A, B)
        assert np.allclose((A + B @ fb.K) @ fb.d, A @ fb.d + B @ fb.Z @ np.ones(2), atol=1e-10)
        assert np.all(fb.d >= 1 - 1e-12)


class TestObserverGain:
    A = np.array([[1.2, 0.2], [0.0, 0.2]])
    C = np.array([[1.0, -1.0]])

    def test_ex1(self):
        ob = synth_observer_gain(self.A, self.C)
        M = self.A - ob.L @ self.C
        assert M.min() >= -1e-9 and spectral_radius(M) < 1
        lam = ob.lam
        assert np.allclose(lam @ M, lam @ self.A - np.ones(2) @ ob.V @ self.C, atol=1e-10)

    def test_lc_nonneg_infeasible(self):
        assert synth_observer_gain(self.A, self.C, require_LC_nonneg=True) is None

    def test_scalar_noise_window(self):
        ob = synth_observer_gain([[1.2]], [[1.0]], noise_lower=([[0.02]], [[0.06]]))
        L = ob.L[0, 0]
        assert 0.2 < L <= 1 / 3 + 1e-9


def test_upper_feedback_ex1():
    A = np.array([[1.2, 0.2], [0.0, 0.2]])
    C = np.array([[1.0, -1.0]])
    up = synth_upper_feedback(A, np.eye(2), C, np.array([1.0, 3.0]))
    assert up is not None
    BK = up.K_upper
    assert BK.min() >= -1e-9 and (A + BK).min() >= -1e-9
    assert (BK + up.L_lower @ C).min() >= -1e-9


def test_upper_feedback_positivization():
    A = np.array([[1.2, 0.2], [-0.1, 0.2]])
    C = np.array([[1.0, -1.0]])
    ob = synth_observer_gain(A, C)
    up = synth_upper_feedback(A, np.eye(2), C, ob.lam)
    assert up.K_upper[1, 0] >= 0.1 - 1e-9


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_coupled_examples(name, request):
    sc = request.getfixturevalue(name)
    res = synth_full(SynthesisRequest(sc.system, "coupled"))
    assert res.feasible, res.describe()
    rep = certify(sc.system, res.gains)
    assert rep.ok
    assert max(rep.radii[k] for k in ("rho_cl", "rho_up", "rho_low")) <= 1 - RADIUS_FLOOR
    cert, A, B, C, g = res.certificates, sc.system.A, sc.system.B, sc.system.C, res.gains
    d = cert["d"]
    assert np.all((A + B @ (g.K_upper + g.K_lower)) @ d < d)
    for key, L in (("lambda_lower", g.L_lower), ("lambda_upper", g.L_upper)):
        lam = cert[key]
        assert np.all(lam @ (A - L @ C) < lam)


def test_thm1_infeasible_on_ex1(ex1):
    res = synth_full(SynthesisRequest(ex1.system, "thm1"))
    assert res.describe() == "stage-infeasible at observer stage"


def test_thm1_upper_feedback_is_zero():
    sys = PositiveSystem([[0.5, 0.2], [0.0, 0.4]], np.eye(2), np.eye(2))
    res = synth_full(SynthesisRequest(sys, "thm1"))
    assert res.feasible and np.all(res.gains.K_upper == 0.0)


def test_coupled_with_noise(ex3):
    res = synth_full(SynthesisRequest(ex3.system, "coupled", include_noise_conditions=True))
    assert res.feasible
    assert check_noise_conditions(ex3.system, res.gains).noise_ok
    assert res.report.stability_ok


def test_rejects_non_positive_plant():
    sys = PositiveSystem([[1.2, 0.2], [-0.1, 0.2]], np.eye(2), [[1.0, -1.0]])
    with pytest.raises(PosobsError):
        synth_full(SynthesisRequest(sys))


def test_request_validation(ex1):
    with pytest.raises(ValueError):
        SynthesisRequest(ex1.system, mode="other")
    with pytest.raises(ValueError):
        SynthesisRequest(ex1.system, eps=0)
    with pytest.raises(ValueError):
        SynthesisRequest(ex1.system, D=0.5)


def test_soundness_on_random_plants(certified_pool):
    for sys, g in certified_pool:
        rep = certify(sys, g)
        assert rep.invariance_ok and rep.stability_ok
        assert max(rep.radii[k] for k in ("rho_cl", "rho_up", "rho_low")) <= 1 - RADIUS_FLOOR


class TestCounterexample:
    def _exits(self, sys, g, triple):
        x, xbar, xlow = (np.asarray(v, dtype=float)[None, :] for v in triple)
        assert cone_exit(x, xbar, xlow)[0] == 0.0
        return float(cone_exit(*observer_step(sys, g, x, xbar, xlow))[0])

    def test_none_when_conditions_hold(self, ex1):
        for cid in INVARIANCE_IDS:
            assert find_necessity_counterexample(ex1.system, ex1.gains, cid) is None

    def test_flipped_upper_feedback(self, ex1):
        g = GainSet(ex1.gains.L_upper, ex1.gains.L_lower, [[0, -0.3], [0, 0]], ex1.gains.K_lower)
        triple = find_necessity_counterexample(ex1.system, g, "6c")
        assert self._exits(ex1.system, g, triple) >= 1e-6

    def test_large_lower_gain(self, ex1):
        g = GainSet(ex1.gains.L_upper, [[1.3], [0.0]], ex1.gains.K_upper, ex1.gains.K_lower)
        triple = find_necessity_counterexample(ex1.system, g, "6e")
        assert self._exits(ex1.system, g, triple) >= 1e-6

    def test_unknown_id(self, ex1):
        with pytest.raises(ValueError):
            find_necessity_counterexample(ex1.system, ex1.gains, "6z")

    @pytest.mark.parametrize("cid", ["6a", "6c", "6d", "6e", "6f"])
    def test_random_single_violations(self, cid, certified_pool):
        rng = np.random.default_rng(ord(cid[1]))
        done = 0
        for sys, g in certified_pool[:40]:
            found = violate(sys, g, cid, rng, directions=5)
            if found is None:
                continue
            triple = find_necessity_counterexample(sys, found[0], cid)
            assert self._exits(sys, found[0], triple) >= 1e-6
            done += 1
        assert done >= 5
