import numpy as np
import pytest

from zoka.problems import PsiSpec
from zoka.prox import katyusha_z_step, project_feasible, prox


def bisect_prox_1d(v, t, mu, lo, hi, iters=80):
    """Independent 1-D oracle: minimize 1/2 (v-y)^2 + t mu/2 y^2 over [lo, hi]
    by bisecting the derivative (strictly increasing in y)."""
    def deriv(y):
        return (y - v) + t * mu * y

    if deriv(lo) >= 0:
        return lo
    if deriv(hi) <= 0:
        return hi
    a, b = lo, hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if deriv(mid) > 0:
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


class TestProxClosedForms:
    def test_zero_is_identity(self, rng):
        v = rng.standard_normal(5)
        out = prox(v, 2.0, PsiSpec.zero())
        assert np.array_equal(out, v)
        assert out is not v  # defensive copy

    def test_box_clamp_frozen(self):
        out = prox(np.array([2.0, -3.0]), 1.0, PsiSpec.box(-1, 1))
        assert np.array_equal(out, [1.0, -1.0])

    def test_l2_shrink(self):
        out = prox(np.array([3.0, -3.0]), 2.0, PsiSpec.l2(0.5))
        assert np.allclose(out, [1.5, -1.5])

    def test_l2_box_shrink_then_clamp_frozen(self):
        # t*mu = 1: (2,0) shrinks to (1,0), already inside the box
        out = prox(np.array([2.0, 0.0]), 2.0, PsiSpec.l2_box(0.5, -1, 1))
        assert np.allclose(out, [1.0, 0.0])

    def test_zero_scale_is_identity_inside_box(self):
        psi = PsiSpec.l2_box(1.0, -1, 1)
        v = np.array([0.3, -0.7])
        assert np.allclose(prox(v, 0.0, psi), v)

    def test_argument_errors(self):
        with pytest.raises(TypeError):
            prox(np.zeros(2), 1.0, "not a psi")
        with pytest.raises(ValueError):
            prox(np.zeros(2), -0.5, PsiSpec.zero())


class TestProxProperties:
    def test_matches_bisection_oracle_on_1000_scalars(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            v = 4.0 * rng.standard_normal()
            t = float(rng.uniform(0.01, 5.0))
            mu = float(rng.uniform(0.01, 3.0))
            lo, hi = sorted(rng.uniform(-2.0, 2.0, size=2))
            psi = PsiSpec.l2_box(mu, lo, hi)
            got = prox(np.array([v]), t, psi)[0]
            want = bisect_prox_1d(v, t, mu, lo, hi)
            assert got == pytest.approx(want, abs=1e-10)

    def test_nonexpansive_for_every_variant(self):
        rng = np.random.default_rng(23)
        variants = [PsiSpec.zero(), PsiSpec.box(-1, 1), PsiSpec.l2(0.7),
                    PsiSpec.l2_box(0.7, -1, 1)]
        for psi in variants:
            for _ in range(1000):
                a = 3.0 * rng.standard_normal(4)
                b = 3.0 * rng.standard_normal(4)
                t = float(rng.uniform(0.0, 4.0))
                pa, pb = prox(a, t, psi), prox(b, t, psi)
                assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12

    def test_optimality_residual(self):
        """v - y in t dpsi(y): interior coordinates satisfy v - y = t mu y
        exactly; bound coordinates need a multiplier of the right sign."""
        rng = np.random.default_rng(31)
        psi = PsiSpec.l2_box(0.9, -1, 1)
        for _ in range(100):
            v = 3.0 * rng.standard_normal(6)
            t = float(rng.uniform(0.01, 4.0))
            y = prox(v, t, psi)
            resid = v - y - t * psi.mu_psi * y
            for i in range(6):
                if y[i] == 1.0:
                    assert resid[i] >= -1e-10
                elif y[i] == -1.0:
                    assert resid[i] <= 1e-10
                else:
                    assert abs(resid[i]) <= 1e-10

    def test_output_never_aliases_input(self):
        for psi in (PsiSpec.zero(), PsiSpec.box(-1, 1), PsiSpec.l2(1.0)):
            v = np.zeros(3)
            out = prox(v, 1.0, psi)
            out[0] = 99.0
            assert v[0] == 0.0


class TestProjectFeasible:
    def test_box(self):
        psi = PsiSpec.box(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
        assert np.array_equal(project_feasible(np.array([5.0, -5.0]), psi),
                              [1.0, 0.0])

    def test_no_box_copies(self):
        v = np.array([1.0, 2.0])
        out = project_feasible(v, PsiSpec.l2(1.0))
        assert np.array_equal(out, v) and out is not v


class TestKatyushaZStep:
    def test_sigma_zero_reduces_to_gradient_step_on_z(self):
        z = np.array([1.0, -1.0])
        g = np.array([0.5, 0.5])
        out = katyusha_z_step(z, np.zeros(2), g, eta=2.0, sigma=0.0, M=4.0,
                              psi=PsiSpec.zero())
        assert np.allclose(out, z - (2.0 / 4.0) * g)

    def test_frozen_hand_value(self):
        # eta=1, sigma=1, M=1, z=0, x=2, g=0 -> (1*2 + 0 - 0)/2 = 1
        out = katyusha_z_step(np.zeros(1), np.array([2.0]), np.zeros(1),
                              eta=1.0, sigma=1.0, M=1.0, psi=PsiSpec.zero())
        assert out[0] == pytest.approx(1.0)

    def test_prox_scale_is_eta_over_one_plus_eta_sigma_M(self):
        # with a pure l2 psi the step has the closed form
        # inner/(1 + scale*mu) with scale = eta/((1+eta*sigma) M)
        z, x, g = np.array([0.5]), np.array([1.5]), np.array([0.25])
        eta, sigma, M, mu = 1.5, 0.2, 2.0, 0.8
        inner = (eta * sigma * x + z - (eta / M) * g) / (1 + eta * sigma)
        scale = eta / ((1 + eta * sigma) * M)
        expected = inner / (1 + scale * mu)
        out = katyusha_z_step(z, x, g, eta, sigma, M, PsiSpec.l2(mu))
        assert np.allclose(out, expected, atol=1e-15)
