import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radialsle.conformal import (BranchedValue, green, green_complex,
                                 koebe_disk, koebe_disk_inverse,
                                 pre_schwarzian, schwarzian, slit_map)


class TestBranchedValue:
    def test_roundtrip(self):
        z = 0.3 - 0.8j
        bv = BranchedValue.from_complex(z)
        assert bv.value == pytest.approx(z, abs=1e-15)

    def test_multiplication_adds_fields(self):
        x = BranchedValue(0.2, 1.1)
        y = BranchedValue(-0.5, 2.9)
        z = x * y
        assert z.log_mod == pytest.approx(-0.3, abs=1e-15)
        assert z.arg == pytest.approx(4.0, abs=1e-15)

    def test_power_scales_fields(self):
        x = BranchedValue(0.4, 5.0)   # arg beyond principal range on purpose
        y = x**0.5
        assert y.log_mod == 0.2
        assert y.arg == 2.5

    @given(st.floats(-3, 3), st.floats(-9, 9), st.floats(-3, 3),
           st.floats(-9, 9), st.floats(-4, 4))
    def test_exponent_laws(self, lm1, a1, lm2, a2, power):
        x, y = BranchedValue(lm1, a1), BranchedValue(lm2, a2)
        lhs = (x * y) ** power
        assert abs(lhs.log_mod - power * (lm1 + lm2)) < 1e-12
        assert abs(lhs.arg - power * (a1 + a2)) < 1e-12

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            BranchedValue.from_complex(0)


class TestGreen:
    def test_pole_at_origin(self):
        for w in (0.3, 0.5j, -0.2 + 0.4j):
            assert green(w, 0) == pytest.approx(-math.log(abs(w)), abs=1e-14)

    def test_symmetry(self):
        assert green(0.3 + 0.1j, -0.5j) == pytest.approx(green(-0.5j, 0.3 + 0.1j))

    def test_half_minus_half(self):
        assert green(0.5, -0.5) == pytest.approx(math.log(1.25), abs=1e-14)

    def test_real_part_relation(self):
        w1, w2 = 0.3 + 0.2j, -0.1 + 0.5j
        assert 2 * green_complex(w1, w2).real == pytest.approx(green(w1, w2), abs=1e-14)

    def test_coincident(self):
        with pytest.raises(ValueError):
            green(0.3, 0.3)

    def test_conjugate_increments_close_loop(self):
        # Im G+ increments around a small contractible loop sum to zero
        w2 = -0.4 + 0.1j
        center = 0.35 + 0.25j
        phis = np.linspace(0, 2 * np.pi, 400)
        pts = center + 0.08 * np.exp(1j * phis)
        total = 0.0
        prev = green_complex(pts[0], w2)
        for w in pts[1:]:
            cur = green_complex(w, w2)
            total += (cur - prev).imag
            prev = cur
        assert abs(total) < 1e-8


class TestSchwarzian:
    def test_mobius_annihilated(self):
        # f(z) = (2z+1)/(z+3): compute derivatives at z=0.4 analytically
        z = 0.4
        den = z + 3
        fp = 5 / den**2
        fpp = -10 / den**3
        fppp = 30 / den**4
        assert abs(schwarzian(fp, fpp, fppp)) < 1e-14
        assert pre_schwarzian(fp, fpp) == pytest.approx(-2 / den)

    def test_identity(self):
        assert schwarzian(1.0, 0.0, 0.0) == 0.0
        assert pre_schwarzian(1.0, 0.0) == 0.0

    def test_square_map_fd_oracle(self):
        # f(z) = z^2 at z = 1: N = 1, S = -3/2; oracle by central differences
        # (first two derivatives at the 1e-6 step; the third-order stencil
        # needs a coarser step to beat double-precision round-off)
        f = lambda z: z * z
        h = 1e-6
        z = 1.0
        fp = (f(z + h) - f(z - h)) / (2 * h)
        fpp = (f(z + h) - 2 * f(z) + f(z - h)) / h**2
        h3 = 1e-3
        fppp = (f(z + 2 * h3) - 2 * f(z + h3) + 2 * f(z - h3) - f(z - 2 * h3)) / (2 * h3**3)
        assert pre_schwarzian(fp, fpp) == pytest.approx(1.0, abs=1e-3)
        assert schwarzian(fp, fpp, fppp) == pytest.approx(-1.5, abs=1e-3)
        assert schwarzian(2.0, 2.0, 0.0) == pytest.approx(-1.5, abs=1e-15)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            schwarzian(0.0, 1.0, 1.0)


class TestSlitMap:
    def test_normalization(self):
        for r in (0.2, 0.5, 0.9):
            psi = slit_map(r, 1.3)
            assert abs(psi(0)) < 1e-15
            assert psi.d0 == pytest.approx((1 + r) ** 2 / (4 * r), abs=1e-14)

    def test_d0_at_half(self):
        assert slit_map(0.5, 0.0).d0 == pytest.approx(1.125, abs=1e-15)

    def test_vanishing_slit(self):
        psi = slit_map(1 - 1e-9, 0.7)
        z = 0.3 + 0.4j
        assert abs(psi(z) - z) < 1e-6
        assert psi.d0 == pytest.approx(1.0, abs=1e-12)

    def test_boundary_modulus(self):
        psi = slit_map(0.5, np.pi)
        phis = np.linspace(0.05, 2 * np.pi - 0.05, 200) + np.pi  # avoid slit base
        vals = psi(np.exp(1j * phis))
        assert np.max(np.abs(np.abs(vals) - 1.0)) < 1e-9

    def test_capacity_monotone(self):
        rs = np.linspace(0.05, 0.95, 19)
        d0s = [slit_map(r, 0.0).d0 for r in rs]
        assert all(d > 1 for d in d0s)
        assert all(d0s[i] > d0s[i + 1] for i in range(len(d0s) - 1))

    def test_interior_derivative_fd(self):
        psi = slit_map(0.4, 2.0)
        h = 1e-7
        for z in (0.2 + 0.3j, -0.5 - 0.1j, 0.1 - 0.6j):
            fd = (psi(z + h) - psi(z - h)) / (2 * h)
            assert abs(psi.deriv(z) - fd) < 1e-6

    def test_boundary_derivative_consistency(self):
        # angular closed form vs chain rule away from the antipode
        psi = slit_map(0.5, np.pi)
        for phi in (0.0, 0.8, 2.0, 4.5):
            chain = abs(psi.deriv(np.exp(1j * phi)))
            assert psi.abs_deriv_boundary(phi) == pytest.approx(chain, rel=1e-10)

    def test_boundary_derivative_fd_oracle(self):
        # numerically differentiate the boundary angle correspondence
        r, th0 = 0.35, 1.1
        psi = slit_map(r, th0)
        m = 2 * math.sqrt(r) / (1 + r)

        def big_phi(phi):
            return 2 * math.acos(m * math.cos((phi - th0) / 2))

        h = 1e-7
        for phi in (th0 + 0.5, th0 + 2.0, th0 + 3.0):
            fd = (big_phi(phi + h) - big_phi(phi - h)) / (2 * h)
            assert psi.abs_deriv_boundary(phi) == pytest.approx(abs(fd), rel=1e-6)

    def test_domain_error(self):
        for r in (-0.1, 0.0, 1.0, 1.5):
            with pytest.raises(ValueError):
                slit_map(r, 0.0)

    def test_koebe_inverse_pair(self):
        zs = np.array([0.3 + 0.4j, -0.7j, 0.9, -0.95, 1e-12])
        assert np.max(np.abs(koebe_disk_inverse(koebe_disk(zs)) - zs)) < 1e-12
