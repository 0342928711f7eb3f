import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from suntracker.errors import DomainError
from suntracker.motor_plant import MotorParams, MotorState, frozen_rhs
from suntracker.multimodel import (
    ModelBank,
    PidSurfaceConfig,
    PidSurfaceState,
    SmmmcConfig,
    SmmmcController,
    Weighting,
    fuse,
    pid_surface,
    residues,
    saturated_switching,
    validities,
)
from suntracker.sun_reference import Ramp, ReferenceProfile, sample

P = MotorParams()
residue_vectors = st.lists(st.floats(0.0, 1e3), min_size=1, max_size=8)
positive_residues = st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=8)


class TestResidues:
    def test_perfect_models(self):
        np.testing.assert_array_equal(residues(1.5, [1.5, 1.5, 1.5]), 0.0)

    def test_hand_example(self):
        np.testing.assert_array_equal(residues(2.0, [1.0, 5.0]), [1.0, 3.0])

    @given(st.floats(-1e3, 1e3), st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6))
    def test_negation_symmetry(self, y, preds):
        np.testing.assert_array_equal(residues(y, preds), residues(-y, [-p for p in preds]))


class TestValidities:
    def test_hand_example(self):
        vs = validities([1.0, 3.0])
        np.testing.assert_allclose(vs.r_norm, [0.25, 0.75])
        np.testing.assert_allclose(vs.v, [0.75, 0.25])
        np.testing.assert_allclose(vs.v_ref, [0.5625, 0.0625])
        np.testing.assert_allclose(vs.nu, [0.9, 0.1])

    @pytest.mark.parametrize("n", [2, 3, 7])
    def test_equal_residues_uniform(self, n):
        np.testing.assert_allclose(validities([2.5] * n).nu, 1.0 / n)

    def test_zero_residue_selects(self):
        np.testing.assert_array_equal(validities([0.0, 5.0]).nu, [1.0, 0.0])

    def test_all_zero_uniform(self):
        np.testing.assert_allclose(validities([0.0, 0.0, 0.0]).nu, 1.0 / 3.0)

    def test_two_exact_models_share(self):
        np.testing.assert_allclose(validities([0.0, 0.0, 4.0]).nu, [0.5, 0.5, 0.0])

    def test_single_model(self):
        assert validities([3.0]).nu.tolist() == [1.0]

    def test_plain_weighting(self):
        np.testing.assert_allclose(validities([1.0, 3.0], Weighting.PLAIN).nu, [0.75, 0.25])

    @pytest.mark.parametrize("bad", [[], [-1.0, 2.0], [math.nan, 1.0]])
    def test_rejects_bad_residues(self, bad):
        with pytest.raises(DomainError):
            validities(bad)

    @given(residue_vectors)
    def test_normalisation(self, r):
        vs = validities(r)
        assert vs.nu.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(vs.nu >= 0.0)
        if sum(r) > 0.0:
            assert vs.r_norm.sum() == pytest.approx(1.0, abs=1e-12)

    @given(positive_residues, st.data())
    def test_monotone_in_own_residue(self, r, data):
        i = data.draw(st.integers(0, len(r) - 1))
        factor = data.draw(st.floats(0.01, 0.99))
        lower = list(r)
        lower[i] *= factor
        assert validities(lower).nu[i] >= validities(r).nu[i] - 1e-12

    def test_randomised_sweep(self):
        rng = np.random.default_rng(11)
        for _ in range(10_000):
            n = int(rng.integers(1, 9))
            r = rng.exponential(1.0, n) * (rng.random(n) > 0.1)
            vs = validities(r)
            assert abs(vs.nu.sum() - 1.0) <= 4 * np.finfo(float).eps * n
            u = rng.normal(size=n)
            u_g, _ = fuse(u, vs)
            assert u.min() - 1e-12 <= u_g <= u.max() + 1e-12


class TestPidSurface:
    cfg = PidSurfaceConfig(a=0.355, b=1.0, g=1.2)

    def test_zero_error(self):
        state = PidSurfaceState()
        for _ in range(50):
            res = pid_surface(1.0, 1.0, state, self.cfg, 0.01)
            state = res.state
            assert res.s == 0.0

    def test_constant_error(self):
        eps, dt, n = 0.2, 0.01, 300
        state = PidSurfaceState()
        for _ in range(n + 1):
            res = pid_surface(eps, 0.0, state, self.cfg, dt, rate=0.0)
            state = res.state
        assert res.s == pytest.approx(self.cfg.a * eps + self.cfg.g * eps * n * dt, rel=1e-12)

    def test_exponential_error_on_manifold(self):
        cfg = PidSurfaceConfig(a=1.0, b=1.0, g=1e-300)
        state = PidSurfaceState()
        for k in range(100):
            e = math.exp(-0.01 * k)
            res = pid_surface(e, 0.0, state, cfg, 0.01, rate=-e)
            state = res.state
            assert abs(res.s) < 1e-12

    def test_integral_override(self):
        res = pid_surface(0.1, 0.0, PidSurfaceState(), self.cfg, 0.01, rate=0.0, integral=2.0)
        assert res.s == pytest.approx(0.355 * 0.1 + 1.2 * 2.0)

    @pytest.mark.parametrize("kw", [{"a": 0.0}, {"psi": -1.0}, {"I": math.inf}, {"u_min": 1.0, "u_max": 0.5}])
    def test_config_validation(self, kw):
        with pytest.raises(DomainError):
            PidSurfaceConfig(**kw)


class TestSaturatedSwitching:
    def test_centre(self):
        assert saturated_switching(0.0, PidSurfaceConfig(I=5.0, psi=0.1)) == 0.0

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_outside_layer(self, sign):
        assert saturated_switching(sign * 0.2, PidSurfaceConfig(I=5.0, psi=0.1)) == sign * 5.0

    def test_linear_branch(self):
        assert saturated_switching(0.05, PidSurfaceConfig(I=2.0, psi=0.1)) == pytest.approx(1.0)

    def test_bounds_clamp(self):
        assert saturated_switching(1.0, PidSurfaceConfig(I=5.0, psi=0.1, u_min=-5.0, u_max=3.0)) == 3.0

    @given(st.floats(-1.0, 1.0))
    def test_odd(self, s):
        cfg = PidSurfaceConfig(I=3.0, psi=0.05)
        assert saturated_switching(-s, cfg) == -saturated_switching(s, cfg)

    def test_continuous_at_layer_edge(self):
        cfg = PidSurfaceConfig(I=3.0, psi=0.05)
        for edge in (cfg.psi, -cfg.psi):
            lo, hi = saturated_switching(edge - 1e-12, cfg), saturated_switching(edge + 1e-12, cfg)
            assert abs(hi - lo) < 1e-9


class TestFuse:
    def test_selection(self):
        assert fuse([3.0, -7.0, 2.0], [0.0, 1.0, 0.0])[0] == -7.0

    def test_symmetric_cancellation(self):
        assert fuse([2.5, -2.5], [0.5, 0.5])[0] == 0.0

    def test_hand_example(self):
        assert fuse([2.0, -4.0], [0.9, 0.1])[0] == pytest.approx(1.4)

    def test_surface_fusion(self):
        assert fuse([0.0, 0.0], [0.25, 0.75], [4.0, 8.0])[1] == pytest.approx(7.0)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            fuse([1.0, 2.0], [1.0])


class TestBank:
    def test_spanning(self):
        bank = ModelBank.spanning(P, 3, 200.0)
        assert bank.anchors_deg_s == (0.0, 100.0, 200.0)
        assert len(bank.models()) == 3

    def test_anchor_order(self):
        with pytest.raises(DomainError):
            ModelBank(P, (0.0, 0.0))

    def test_config_broadcasts_surfaces(self):
        cfg = SmmmcConfig(anchors_deg_s=(0.0, 50.0), surfaces=(PidSurfaceConfig(I=7.0),))
        assert cfg.n_models == 2 and all(c.I == 7.0 for c in cfg.surfaces)


def _drive_exact_plant(anchor_deg_s, steps=10, cfg=None):
    """Plant identical to the frozen model at ``anchor_deg_s``; returns the last diagnostics."""
    ctrl = SmmmcController(cfg or SmmmcConfig(), P)
    prm = P.packed()
    w = math.radians(anchor_deg_s)
    prof = ReferenceProfile(Ramp(anchor_deg_s))
    x = np.array([0.5, sample(prof, 0.0, P).i_qr, w, 0.0])
    dt = 1e-4

    def f(y, vd, vq):
        return np.array(frozen_rhs(prm, w, y[0], y[1], y[2], vd, vq, P.C) + (y[2],))

    for k in range(steps + 1):
        vd, vq, diag = ctrl.step(MotorState(*x), sample(prof, k * dt, P), dt)
        k1 = f(x, vd, vq)
        k2 = f(x + 0.5 * dt * k1, vd, vq)
        k3 = f(x + 0.5 * dt * k2, vd, vq)
        k4 = f(x + dt * k3, vd, vq)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return vq, diag


class TestController:
    @pytest.mark.parametrize("index,anchor", [(0, 0.0), (1, 100.0), (2, 200.0)])
    def test_exact_model_selected(self, index, anchor):
        vq, diag = _drive_exact_plant(anchor)
        assert diag.validity.nu[index] == pytest.approx(1.0, abs=1e-9)
        assert vq == pytest.approx(diag.u_eq, abs=1e-3)

    def test_single_model_bank(self):
        cfg = SmmmcConfig(anchors_deg_s=(100.0,), surfaces=(PidSurfaceConfig(),))
        _, diag = _drive_exact_plant(100.0, cfg=cfg)
        assert diag.validity.nu.tolist() == [1.0]

    def test_rejects_bad_dt(self):
        ctrl = SmmmcController(SmmmcConfig(), P)
        with pytest.raises(DomainError):
            ctrl.step(MotorState(), sample(ReferenceProfile(Ramp(0.0)), 0.0, P), 0.0)
