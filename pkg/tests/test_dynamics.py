import math

import numpy as np
import pytest

from fracspde import dynamics as dyn
from fracspde import spectral as sp
from fracspde.errors import InvalidParameterError
from fracspde.fractional import kernel_increments, mittag_leffler


def make_cfg(**over):
    base = dict(
        d=2, M=4, s=1.0, beta=1.0, b=0.0, S=100.0, dt=1e-3, t_end=0.05,
        zeta="none", init={"coeffs": [{"k": [1, 0], "re": 1.0}]}, seed=1,
    )
    base.update(over)
    return dyn.SimConfig(**base)


class TestCutoff:
    def test_plateau(self):
        assert dyn.cutoff_value(0.0, 10.0) == 1.0
        assert dyn.cutoff_value(10.0, 10.0) == 1.0

    def test_zero_tail(self):
        assert dyn.cutoff_value(11.0, 10.0) == 0.0
        assert dyn.cutoff_value(11.5, 10.0) == 0.0

    def test_symmetric_midpoint(self):
        assert dyn.cutoff_value(10.5, 10.0) == pytest.approx(0.5)

    def test_monotone_and_c1(self):
        rs = np.linspace(9.5, 12.0, 400)
        vals = np.array([dyn.cutoff_value(r, 10.0) for r in rs])
        assert np.all(np.diff(vals) <= 1e-15)
        # max slope of the quintic join is 15/8
        slopes = np.abs(np.diff(vals) / np.diff(rs))
        assert slopes.max() <= 15.0 / 8.0 + 1e-6
        assert slopes.max() >= 15.0 / 8.0 - 1e-2


class TestZeta:
    def test_fisher_on_constant(self):
        u = sp.constant(2, 4, 3.0)
        z = dyn.zeta_fisher(u)
        assert z.mean == pytest.approx(9.0 - 3.0, abs=1e-12)
        off = z.coeffs.copy()
        off[(4, 4)] = 0.0
        assert np.max(np.abs(off)) <= 1e-13

    def test_fisher_on_zero(self):
        z = dyn.zeta_fisher(sp.zeros(2, 4))
        assert np.all(z.coeffs == 0.0)

    def test_fisher_trig_identity(self):
        # (2cos)^2 - 2cos = 2 + 2cos(4 pi x) - 2cos(2 pi x)
        u = sp.mode_pair(2, 4, (1, 0))
        z = dyn.zeta_fisher(u)
        assert z.mean == pytest.approx(2.0, abs=1e-13)
        assert z.coeff((2, 0)) == pytest.approx(1.0, abs=1e-13)
        assert z.coeff((1, 0)) == pytest.approx(-1.0, abs=1e-13)

    def test_keller_segel_on_constant(self):
        z = dyn.zeta_keller_segel(sp.constant(2, 4, 2.0))
        assert np.max(np.abs(z.coeffs)) <= 1e-14

    def test_keller_segel_mean_free(self):
        rng = np.random.default_rng(3)
        rho = sp.random_field(rng, 2, 5, 1.0, 1.0, mean=0.8)
        z = dyn.zeta_keller_segel(rho)
        assert abs(z.mean) <= 1e-12

    def test_keller_segel_single_mode_closed_form(self):
        # rho = 2cos(2 pi x1): c = rho/(4 pi^2), grad c = -(1/pi) sin e1,
        # zeta = -d/dx1(rho dc/dx1) = -(2/pi) d/dx1 (cos sin) = -(2/pi) 2pi cos(4 pi x1)
        rho = sp.mode_pair(2, 4, (1, 0))
        z = dyn.zeta_keller_segel(rho)
        # -(2/pi)*2pi*cos(4 pi x1) = -4cos(4 pi x1) -> coeff at (2,0) = -2... wait:
        # rho*dc/dx1 = 2cos * (-(1/pi) sin) = -(1/pi) sin(4 pi x1);
        # -d/dx1 of that = (1/pi) * 4pi cos(4 pi x1) = 4 cos(4 pi x1)?? sign check
        # below against brute force instead of by hand:
        conv = _brute_force_keller_segel(rho)
        assert np.max(np.abs(z.coeffs - conv)) <= 1e-10
        # closed form: zeta = 4 cos(4 pi x1) has +-(2,0) coefficients = 2
        assert z.coeff((2, 0)) == pytest.approx(conv[(4 + 2, 4)], abs=1e-12)

    def test_keller_segel_matches_bruteforce_random(self):
        rng = np.random.default_rng(4)
        rho = sp.random_field(rng, 2, 3, 1.0, 0.7, mean=0.2)
        z = dyn.zeta_keller_segel(rho)
        conv = _brute_force_keller_segel(rho)
        assert np.max(np.abs(z.coeffs - conv)) <= 1e-12


def _brute_force_keller_segel(rho: sp.SpectralField) -> np.ndarray:
    """Dense convolution reference for -div(rho grad((-Lap)^-1(rho - mean)))."""
    d, M = rho.d, rho.M
    pot = sp.laplacian_inverse(rho)
    out = np.zeros_like(rho.coeffs)
    for ax in range(d):
        gpot = sp.gradient(pot)[ax].coeffs
        flux = np.zeros_like(out)
        for k1 in np.ndindex(*(2 * M + 1,) * d):
            ka = np.array(k1) - M
            for k2 in np.ndindex(*(2 * M + 1,) * d):
                kb = np.array(k2) - M
                ks = ka + kb
                if np.max(np.abs(ks)) <= M:
                    flux[tuple(ks + M)] += rho.coeffs[k1] * gpot[k2]
        lgrid = sp._mode_grids(d, M)[ax]
        out -= sp.TWO_PI * 1j * lgrid * flux
    return out


class TestDrift:
    def test_pure_multiplier_mode(self):
        cfg = make_cfg(b=2.0, s=1.5)
        u = sp.mode_pair(2, 4, (1, 2))
        g = dyn.drift(u, cfg)
        ksq = 5.0
        expect = -((4 * math.pi**2 * ksq) ** 1.5) - 2.0 * 4 * math.pi**2 * ksq
        assert g.coeff((1, 2)) == pytest.approx(expect * u.coeff((1, 2)), rel=1e-12)

    def test_cutoff_kills_nonlinearity(self):
        cfg = make_cfg(zeta="fisher", S=0.01)
        u = sp.constant(2, 4, 5.0)  # H^-gamma norm 5 >> S+1
        g = dyn.drift(u, cfg)
        assert np.max(np.abs(g.coeffs)) == 0.0  # linear part kills constants too

    def test_heat_reduction(self):
        cfg = make_cfg(b=0.0, s=1.0)
        u = sp.mode_pair(2, 4, (1, 0))
        g = dyn.drift(u, cfg)
        assert g.coeff((1, 0)) == pytest.approx(-4 * math.pi**2, rel=1e-13)


class TestConfigValidation:
    def test_beta_constraint_with_noise(self):
        with pytest.raises(InvalidParameterError, match="1/2"):
            make_cfg(beta=0.4, noise_N=2)

    def test_beta_free_without_noise(self):
        cfg = make_cfg(beta=0.4)
        assert cfg.beta == 0.4

    def test_step_cap(self):
        with pytest.raises(InvalidParameterError, match="cap"):
            make_cfg(dt=1e-7, t_end=1.0)

    def test_init_schema(self):
        with pytest.raises(InvalidParameterError):
            make_cfg(init={"mean": 0.5})
        with pytest.raises(InvalidParameterError):
            make_cfg(init={"delta0": 0.1, "mean": 0.5, "bogus": 1})

    def test_hash_stable_and_sensitive(self):
        a, b = make_cfg(), make_cfg()
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != make_cfg(seed=2).config_hash()
        assert len(a.config_hash()) == 16


class TestIntegrateLinear:
    def test_heat_mode_decay(self):
        cfg = make_cfg(M=1, dt=1e-4, t_end=0.2)
        rec = dyn.integrate(cfg)
        lam = 4 * math.pi**2
        for t_probe in (0.1, 0.2):
            i = int(round(t_probe / cfg.dt))
            exact = math.sqrt(2.0) * math.exp(-lam * rec.times[i])
            assert abs(rec.l2[i] - exact) <= 1e-3

    def test_fractional_mode_mittag_leffler(self):
        cfg = make_cfg(M=1, beta=0.8, dt=1e-4, t_end=0.4)
        rec = dyn.integrate(cfg)
        lam = 4 * math.pi**2
        for i in range(0, len(rec.times), 400):
            oracle = math.sqrt(2.0) * mittag_leffler(0.8, 1.0, -lam * rec.times[i] ** 0.8)
            assert abs(rec.l2[i] - oracle) <= 1e-2

    def test_noise_off_l2_non_increasing(self):
        rng_cfg = make_cfg(
            M=4, b=1.5, s=1.0, dt=1e-4, t_end=0.05,
            init={"amplitude": 0.5, "decay": 1.0},
        )
        rec = dyn.integrate(rng_cfg)
        assert np.all(np.diff(rec.l2) <= 1e-14)

    def test_trajectory_grid(self):
        cfg = make_cfg(dt=1e-3, t_end=0.01)
        rec = dyn.integrate(cfg)
        assert len(rec.times) == 11
        assert rec.times[-1] == pytest.approx(0.01)


class TestIntegrateStochastic:
    def test_determinism(self):
        cfg = make_cfg(
            M=4, beta=1.0, b=1.0, noise_N=1, zeta="fisher", dt=1e-4, t_end=0.01,
            init={"mean": 0.4, "delta0": 0.01}, seed=5,
        )
        a, b = dyn.integrate(cfg), dyn.integrate(cfg)
        assert np.array_equal(a.l2, b.l2)
        assert np.array_equal(a.mean, b.mean)

    def test_distinct_runs_differ(self):
        cfg = make_cfg(
            M=4, b=1.0, noise_N=1, dt=1e-4, t_end=0.01,
            init={"amplitude": 0.3, "decay": 2.0}, seed=5,
        )
        a = dyn.integrate(cfg, run_index=0)
        b = dyn.integrate(cfg, run_index=1)
        assert not np.array_equal(a.l2, b.l2)

    def test_mean_conserved_exactly_by_transport(self):
        cfg = make_cfg(
            M=4, b=2.0, noise_N=2, zeta="none", dt=1e-4, t_end=0.02,
            init={"amplitude": 0.3, "decay": 2.0, "mean": 0.9}, seed=6,
        )
        rec = dyn.integrate(cfg)
        assert np.max(np.abs(rec.mean - 0.9)) == 0.0

    def test_fractional_noisy_path_runs(self):
        # fresh noise enters the Volterra sum with weight dt^(beta-1), so the
        # noisy fractional path is exercised in its stable regime (beta near 1)
        cfg = make_cfg(
            M=2, beta=0.9, b=0.5, noise_N=1, zeta="fisher", dt=5e-4, t_end=0.05,
            init={"mean": 0.4, "delta0": 0.01}, seed=7,
        )
        rec = dyn.integrate(cfg)
        assert not rec.blew_up
        assert np.all(np.isfinite(rec.l2))
        assert rec.l2.max() <= 1.0

    def test_blowup_recorded_not_raised(self):
        cfg = make_cfg(
            M=2, zeta="fisher", dt=1e-3, t_end=5.0, S=1e7,
            init={"mean": 1.5, "delta0": 0.0}, blowup_threshold=1e3,
        )
        rec = dyn.integrate(cfg)
        assert rec.blew_up
        assert rec.blowup_time is not None
        assert np.all(np.isfinite(rec.l2))
        assert rec.times[-1] <= rec.blowup_time

    def test_snapshots(self):
        cfg = make_cfg(dt=1e-3, t_end=0.01, snapshot_stride=5)
        rec = dyn.integrate(cfg)
        assert [s for s, _ in rec.snapshots] == [0, 5, 10]
        assert rec.snapshots[0][1].coeff((1, 0)) == pytest.approx(1.0)


class TestCutoffEquivalence:
    def test_inactive_cutoff_levels_are_bitwise_equivalent(self):
        # any two S levels above the running H^-gamma norm give the exact
        # same trajectory: the plateau value is exactly 1.0
        kw = dict(
            M=4, b=1.0, noise_N=1, zeta="fisher", dt=1e-4, t_end=0.02,
            init={"mean": 0.4, "delta0": 0.01}, seed=8,
        )
        a = dyn.integrate(make_cfg(S=50.0, **kw))
        b = dyn.integrate(make_cfg(S=5000.0, **kw))
        assert np.array_equal(a.l2, b.l2)
        assert np.all(a.cutoff == 1.0)


class TestMeanModeIdentity:
    def test_fisher_mean_obeys_scalar_recursion(self):
        # recorded mean must satisfy the discrete Volterra recursion driven by
        # ||u - mean||^2 + mean^2 - mean (exact while the cut-off is inactive)
        cfg = make_cfg(
            M=2, beta=0.8, b=1.0, zeta="fisher", dt=1e-4, t_end=0.2,
            init={"mean": 0.6, "delta0": 0.04}, seed=9, S=100.0,
        )
        rec = dyn.integrate(cfg)
        assert np.all(rec.cutoff == 1.0)
        feed = rec.fluct_l2sq + rec.mean**2 - rec.mean
        c = kernel_increments(cfg.beta, cfg.dt, cfg.n_steps)
        for n in range(1, len(rec.times)):
            pred = rec.mean[0] + float(np.dot(c[1 : n + 1], feed[n - 1 :: -1]))
            assert abs(pred - rec.mean[n]) <= 1e-6


class TestClassicalRegression:
    def test_beta_one_matches_independent_euler_maruyama(self):
        """Volterra stepper at beta = 1 == plain Euler-Maruyama, same path."""
        from _reference import independent_euler_maruyama

        cfg = make_cfg(
            M=5, beta=1.0, b=1.0, noise_N=1, zeta="fisher", dt=2e-5, t_end=0.01,
            init={"mean": 0.5, "delta0": 0.01}, seed=10, S=0.45, snapshot_stride=1,
        )
        rec = dyn.integrate(cfg)
        ref = independent_euler_maruyama(cfg)
        assert len(rec.snapshots) == cfg.n_steps + 1
        for (step, field), ref_block in zip(rec.snapshots, ref):
            assert np.max(np.abs(field.coeffs - ref_block)) <= 1e-12, f"step {step}"
