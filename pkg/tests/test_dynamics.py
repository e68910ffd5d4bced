import numba
import numpy as np
import pytest

import perturbix as px
from perturbix.dynamics import (
    MapSpec,
    SdeSpec,
    double_well_1d_field,
    double_well_2d_field,
    rotation_field,
    run_preset,
    simulate_lanford,
    simulate_lorenz63,
    simulate_sde_em,
)


@numba.njit
def decay(x):
    return -x


@numba.njit
def zero(x):
    return np.zeros_like(x)


@numba.njit
def cubic(x):
    return x**3


class TestLanford:
    def test_fixed_point(self):
        assert simulate_lanford(MapSpec(5, noise_halfwidth=0.0, initial=0.0)).points[:, 0].tolist() == [0.0] * 5

    def test_one_step(self):
        tr = simulate_lanford(MapSpec(2, noise_halfwidth=0.0, initial=0.5))
        assert tr.points[1, 0] == pytest.approx(0.125, abs=1e-15)
        assert tr.dt == 1.0

    def test_wrapped_and_seeded(self):
        a = simulate_lanford(MapSpec(10_000, seed=5)).points
        b = simulate_lanford(MapSpec(10_000, seed=5)).points
        c = simulate_lanford(MapSpec(10_000, seed=6)).points
        assert np.array_equal(a, b) and not np.array_equal(a, c)
        assert a.min() >= 0 and a.max() < 1

    def test_noise_range(self):
        x = simulate_lanford(MapSpec(50_000, seed=1)).points[:, 0]
        f = 2 * x[:-1] + 0.5 * x[:-1] * (1 - x[:-1])
        xi = (x[1:] - f + 0.5) % 1.0 - 0.5
        assert np.abs(xi).max() <= 0.1 + 1e-12
        assert abs(xi.mean()) < 0.002


class TestSde:
    def test_constant(self):
        tr = simulate_sde_em(SdeSpec(zero, 0.0, 0.1, 50, np.array([0.3, -0.2])))
        assert np.all(tr.points == [0.3, -0.2])

    @pytest.mark.parametrize("drift", [decay, lambda x: -x])
    def test_exponential_decay(self, drift):
        tr = simulate_sde_em(SdeSpec(drift, 0.0, 1e-3, 1001, np.array([1.0])))
        assert tr.points[1000, 0] == pytest.approx(np.exp(-1.0), abs=1e-3)

    def test_python_and_jit_agree(self):
        a = simulate_sde_em(SdeSpec(decay, 0.3, 1e-2, 5000, np.array([0.5]), seed=4)).points
        b = simulate_sde_em(SdeSpec(lambda x: -x, 0.3, 1e-2, 5000, np.array([0.5]), seed=4)).points
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_seeded_bit_identical(self):
        f = double_well_2d_field(-0.1)
        a = simulate_sde_em(SdeSpec(f, 0.4, 1e-2, 300_000, np.zeros(2), seed=9)).points
        b = simulate_sde_em(SdeSpec(f, 0.4, 1e-2, 300_000, np.zeros(2), seed=9)).points
        assert a.tobytes() == b.tobytes()

    def test_noise_scaling(self):
        n = 10**5
        inc = []
        for sigma in (0.3, 0.6):
            x = simulate_sde_em(SdeSpec(decay, sigma, 1e-2, n, np.array([0.0]), seed=1)).points[:, 0]
            inc.append(np.std(x[1:] - x[:-1] * (1 - 1e-2)))
        ratio = inc[1] / inc[0]
        # the ratio of two sample deviations has relative standard error 1/sqrt(n)
        assert abs(ratio - 2.0) <= 3 * 2.0 / np.sqrt(n)

    def test_energy_decay(self):
        v = lambda x: -x**2 / 2 + x**4 / 4 + 0.1 * x  # noqa: E731
        x = simulate_sde_em(SdeSpec(double_well_1d_field(-0.1), 0.0, 1e-2, 2000, np.array([1.6]))).points[:, 0]
        dv = np.diff(v(x))
        assert np.all(dv <= 1e-4 * 1e-2)

    def test_blowup(self):
        with pytest.raises(px.NumericalBlowup):
            simulate_sde_em(SdeSpec(cubic, 0.0, 0.5, 1000, np.array([2.0])))
        with pytest.raises(px.NumericalBlowup):
            simulate_sde_em(SdeSpec(lambda x: x**3, 0.0, 0.5, 1000, np.array([2.0])))

    def test_bad_spec(self):
        with pytest.raises(px.ParameterError):
            SdeSpec(decay, 0.1, dt=0.0)
        with pytest.raises(px.ParameterError):
            SdeSpec(decay, -0.1)


class TestFields:
    def test_double_well_points(self):
        f = double_well_2d_field(0.0)
        np.testing.assert_array_equal(f(np.zeros(2)), [0.0, 0.0])
        np.testing.assert_allclose(double_well_1d_field(-0.1)(np.array([2.0])), [2 - 8 - 0.1])
        fr = double_well_2d_field(0.0, with_rotation=True)
        np.testing.assert_allclose(fr(np.array([0.5, 0.2])), [0.375 + 0.1, -0.2 + 0.1875])

    def test_rotation_zero(self):
        assert rotation_field(1.0, 0.0) == (0.0, 0.0)

    def test_rotation_flux_divergence_free(self):
        sigma = 0.4
        x = np.linspace(-2, 2, 801)
        y = np.linspace(-1.5, 1.5, 601)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        v = -xx**2 / 2 + xx**4 / 4 + yy**2 / 2
        rho = np.exp(-2 * v / sigma**2)
        rx, ry = rotation_field(xx, yy)
        div = np.gradient(rx * rho, x, axis=0) + np.gradient(ry * rho, y, axis=1)
        scale = np.abs(np.gradient(rx * rho, x, axis=0)).max()
        h = x[1] - x[0]
        assert np.abs(div[2:-2, 2:-2]).max() <= 50 * h**2 * scale


class TestLorenz:
    def test_z_axis_invariant(self):
        tr = simulate_lorenz63(steps=2000, transient=0.0, initial=(0.0, 0.0, 10.0))
        assert np.all(tr.points[:, :2] == 0)
        assert tr.points[-1, 2] < 10.0 * np.exp(-8 / 3 * 1.5)

    def test_subcritical_origin(self):
        tr = simulate_lorenz63(r=0.5, steps=1000, transient=20.0, initial=(1.0, 1.0, 1.0))
        assert np.abs(tr.points).max() < 1e-3

    def test_attractor_bounds(self):
        tr = simulate_lorenz63(steps=20_000, transient=10.0)
        assert tr.points.shape == (20_000, 3)
        assert np.abs(tr.points[:, 0]).max() < 25 and 0 < tr.points[:, 2].min()

    def test_blowup(self):
        with pytest.raises(px.NumericalBlowup):
            simulate_lorenz63(dt=0.5, steps=100, transient=0.0)


class TestPresets:
    def test_unknown(self):
        with pytest.raises(px.ParameterError):
            run_preset("nope")
        with pytest.raises(px.ParameterError):
            run_preset("lanford", sigma=1.0)

    @pytest.mark.parametrize("name,dims", [("lanford", 1), ("dw1d", 1), ("dw2d", 2), ("dw2d-rot", 2), ("l63", 3)])
    def test_shapes(self, name, dims):
        tr, cfg = run_preset(name, steps=1000)
        assert tr.points.shape == (1000, dims)
        assert cfg["steps"] == 1000
        assert tr.meta["preset"] == name
