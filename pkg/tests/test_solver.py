import numpy as np
import pytest

from conftest import make_cfg
from sllb.kernels import marcus_flow
from sllb.noise import JumpPath, LevyMeasure, path_seed, sample_prm
from sllb.solver import (
    BlowUpError, SolverConfig, solve_llb_jump, solve_stochastic_control,
    weak_form_residual,
)
from sllb.noise import Control
from sllb.spectral import (
    build_grid, constant_field, field_from_cosines, norms, random_field,
    synthesize, zero_field,
)

NU0 = LevyMeasure.from_atoms([])


def decay_radius(t):
    """Closed form for r' = -r - r^3, r(0) = 1."""
    return np.sqrt(np.exp(-2 * t) / (2 - np.exp(-2 * t)))


class TestDeterministicDecay:
    def test_constant_state_follows_scalar_ode(self, grid1d):
        h0 = synthesize(zero_field(grid1d))
        m0 = constant_field(grid1d, [0.6, 0.0, 0.8])
        cfg = make_cfg(grid1d, T=1.0, dt=1e-4, snapshot_stride=0)
        traj = solve_llb_jump(cfg, m0, NU0, 0, h0)
        r1 = decay_radius(1.0)
        # pointwise magnitude and direction at the terminal time
        vals = grid1d.synthesize_coeffs(traj.field_coeffs[-1])
        mag = np.sqrt((vals ** 2).sum(axis=1))
        assert np.abs(mag - r1).max() < 1e-4
        direction = vals / mag[:, None]
        assert np.abs(direction - np.array([0.6, 0.0, 0.8])).max() < 1e-9

    @pytest.mark.parametrize("scheme", ["imex_euler", "etd1"])
    def test_richardson_order_at_least_one(self, grid1d, h1d_phys, m0_std, scheme):
        terminals = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = make_cfg(grid1d, T=0.5, dt=dt, scheme=scheme,
                           snapshot_stride=0)
            traj = solve_llb_jump(cfg, m0_std, NU0, 0, h1d_phys)
            terminals.append(traj.field_coeffs[-1])
        e1 = np.sqrt(((terminals[0] - terminals[1]) ** 2).sum())
        e2 = np.sqrt(((terminals[1] - terminals[2]) ** 2).sum())
        order = np.log2(e1 / e2)
        assert order >= 0.9

    def test_pure_laplacian_is_exact(self, grid1d):
        # nonlinear terms off, no noise: modes decay exactly like e^{-lam t}
        h0 = synthesize(zero_field(grid1d))
        m0 = random_field(grid1d, np.random.default_rng(0))
        cfg = make_cfg(grid1d, T=0.3, dt=0.05, include_nonlinear=False,
                       snapshot_stride=0)
        traj = solve_llb_jump(cfg, m0, NU0, 0, h0)
        expect = np.exp(-grid1d.eigenvalues * 0.3)[:, None] * m0.coeffs
        assert np.abs(traj.field_coeffs[-1] - expect).max() < 1e-13


class TestJumpHandling:
    def test_zero_h_keeps_zero_state(self, grid1d, nu_std):
        h0 = synthesize(zero_field(grid1d))
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3, eps=0.5)
        traj = solve_llb_jump(cfg, zero_field(grid1d), nu_std, 3, h0)
        assert traj.jump_events or traj.times.size  # path may carry jumps
        assert np.abs(traj.field_coeffs[-1]).max() == 0.0
        assert traj.l2.max() == 0.0

    def test_single_injected_jump_is_exact_transport(self, grid1d, h1d_phys,
                                                     nu_std, m0_std):
        path = JumpPath(0.5, np.array([0.25]), np.array([0.5]))
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3, eps=0.7)
        traj = solve_llb_jump(cfg, m0_std, nu_std, path, h1d_phys)
        assert len(traj.jump_events) == 1
        ev = traj.jump_events[0]
        assert ev.time == 0.25 and ev.mark == 0.5
        moved = grid1d.project_values(
            marcus_flow(grid1d.synthesize_coeffs(ev.pre_coeffs),
                        h1d_phys.values, 0.7 * 0.5))
        assert np.abs(ev.post_coeffs - moved).max() < 1e-14
        # trajectory snapshot at the jump node is the post-jump state
        node = int(np.searchsorted(traj.times, 0.25))
        assert traj.times[node] == 0.25
        assert np.array_equal(traj.field_at(node), ev.post_coeffs)

    def test_jump_times_inserted_exactly(self, grid1d, h1d_phys, nu_std, m0_std):
        t_jump = 0.1234567
        path = JumpPath(0.5, np.array([t_jump]), np.array([-0.4]))
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3)
        traj = solve_llb_jump(cfg, m0_std, nu_std, path, h1d_phys)
        assert t_jump in traj.times

    def test_path_horizon_mismatch_rejected(self, grid1d, h1d_phys, nu_std,
                                            m0_std):
        path = JumpPath(1.0, np.array([0.25]), np.array([0.5]))
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3)
        with pytest.raises(ValueError):
            solve_llb_jump(cfg, m0_std, nu_std, path, h1d_phys)

    def test_foreign_marks_rejected(self, grid1d, h1d_phys, nu_std, m0_std):
        path = JumpPath(0.5, np.array([0.25]), np.array([0.123]))
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3)
        with pytest.raises(ValueError):
            solve_llb_jump(cfg, m0_std, nu_std, path, h1d_phys)


class TestDeterminism:
    def test_identical_seeds_bit_identical(self, grid1d, h1d_phys, nu_std,
                                           m0_std):
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3, eps=0.5, seed=11)
        a = solve_llb_jump(cfg, m0_std, nu_std, None, h1d_phys)
        b = solve_llb_jump(cfg, m0_std, nu_std, None, h1d_phys)
        assert np.array_equal(a.times, b.times)
        for ca, cb in zip(a.field_coeffs, b.field_coeffs):
            assert np.array_equal(ca, cb)
        assert np.array_equal(a.l2, b.l2)

    def test_perturbed_initial_state_gronwall_divergence(self, grid1d,
                                                         h1d_phys, nu_std,
                                                         m0_std):
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3, eps=0.5, seed=11)
        path = sample_prm(nu_std, cfg.T, 1 / cfg.eps, 11)
        base = solve_llb_jump(cfg, m0_std, nu_std, path, h1d_phys)
        rng = np.random.default_rng(5)
        direction = rng.standard_normal(m0_std.coeffs.shape)
        direction /= np.sqrt((direction ** 2).sum())
        rates = []
        for delta in (1e-6, 1e-4, 1e-2):
            from sllb.spectral import Field
            m0p = Field(grid1d, m0_std.coeffs + delta * direction)
            pert = solve_llb_jump(cfg, m0p, nu_std, path, h1d_phys)
            sup = max(np.sqrt(((a - b) ** 2).sum())
                      for a, b in zip(base.field_coeffs, pert.field_coeffs))
            rates.append(np.log(sup / delta) / cfg.T)
        c_hat = max(rates)
        assert np.isfinite(c_hat) and c_hat < 50.0
        for delta, rate in zip((1e-6, 1e-4, 1e-2), rates):
            assert rate <= c_hat + 1e-12


class TestEnergyBalance:
    @staticmethod
    def residual(traj):
        grad_sq = traj.h1 ** 2 - traj.l2 ** 2
        ints = np.trapezoid(grad_sq + traj.l4 ** 4 + traj.l2 ** 2, traj.times)
        return abs(traj.l2[-1] ** 2 + 2 * ints - traj.l2[0] ** 2)

    def test_residual_halves_with_dt(self, grid1d, h1d_phys, m0_std):
        res = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = make_cfg(grid1d, T=0.5, dt=dt, snapshot_stride=0)
            traj = solve_llb_jump(cfg, m0_std, NU0, 0, h1d_phys)
            res.append(self.residual(traj))
        for a, b in zip(res, res[1:]):
            assert 0.8 * 2 <= a / b <= 1.2 * 2


class TestWeakFormResidual:
    def test_zero_solution_zero_residual(self, grid1d):
        h0 = synthesize(zero_field(grid1d))
        cfg = make_cfg(grid1d, T=0.25, dt=5e-3)
        path = JumpPath(0.25, np.empty(0), np.empty(0))
        traj = solve_llb_jump(cfg, zero_field(grid1d), NU0, path, h0)
        v = random_field(grid1d, np.random.default_rng(1))
        assert weak_form_residual(traj, v, path, NU0, h0) == 0.0

    def test_deterministic_first_order(self, grid1d, h1d_phys, m0_std):
        v = random_field(grid1d, np.random.default_rng(2), max_mode=4)
        path = JumpPath(0.5, np.empty(0), np.empty(0))
        res = []
        for dt in (4e-3, 2e-3, 1e-3):
            cfg = make_cfg(grid1d, T=0.5, dt=dt, snapshot_stride=1)
            traj = solve_llb_jump(cfg, m0_std, NU0, path, h1d_phys)
            res.append(weak_form_residual(traj, v, path, NU0, h1d_phys))
        order = np.log2(res[0] / res[2]) / 2
        assert order >= 0.9

    def test_jump_run_residual_small(self, grid1d, h1d_phys, nu_std, m0_std):
        cfg = make_cfg(grid1d, T=0.5, dt=1e-3, eps=1.0, seed=21,
                       snapshot_stride=1)
        path = sample_prm(nu_std, cfg.T, 1.0, 21)
        traj = solve_llb_jump(cfg, m0_std, nu_std, path, h1d_phys)
        v = random_field(grid1d, np.random.default_rng(3), max_mode=4)
        res = weak_form_residual(traj, v, path, nu_std, h1d_phys)
        assert res <= 1e-2 * (1 + norms(m0_std).h1)

    def test_requires_dense_fields(self, grid1d, h1d_phys, m0_std):
        cfg = make_cfg(grid1d, T=0.25, dt=5e-3, snapshot_stride=0)
        path = JumpPath(0.25, np.empty(0), np.empty(0))
        traj = solve_llb_jump(cfg, m0_std, NU0, path, h1d_phys)
        v = zero_field(grid1d)
        with pytest.raises(ValueError):
            weak_form_residual(traj, v, path, NU0, h1d_phys)


class TestGuards:
    def test_blowup_guard_triggers(self, grid1d, h1d_phys, m0_std):
        cfg = make_cfg(grid1d, T=0.5, dt=2e-3, blowup_guard=1e-3)
        with pytest.raises(BlowUpError) as exc:
            solve_llb_jump(cfg, m0_std, NU0, 0, h1d_phys)
        assert exc.value.h1 > 1e-3

    def test_config_validation(self, grid1d):
        with pytest.raises(ValueError):
            SolverConfig(grid=grid1d, T=1.0, dt=2.0)
        with pytest.raises(ValueError):
            SolverConfig(grid=grid1d, T=1.0, dt=0.1, eps=0.0)
        with pytest.raises(ValueError):
            SolverConfig(grid=grid1d, T=1.0, dt=0.1, scheme="rk4")

    def test_grid_mismatch(self, grid1d, h1d_phys):
        other = build_grid(1, 4, 8)
        cfg = make_cfg(other, T=0.5, dt=2e-3)
        with pytest.raises(ValueError):
            solve_llb_jump(cfg, zero_field(grid1d), NU0, 0, h1d_phys)


class TestControlledSolver:
    def test_unit_control_same_law_as_plain(self, grid1d, h1d_phys, nu_std,
                                            m0_std):
        # same eps, theta = 1: terminal L2 distributions agree (z-test)
        eps = 0.5
        theta = Control.constant(1.0, 0.25, 4, nu_std.n_atoms)
        term_c, term_p = [], []
        for i in range(300):
            cfg = make_cfg(grid1d, T=0.25, dt=5e-3, eps=eps, snapshot_stride=0)
            tc = solve_stochastic_control(cfg, m0_std, nu_std, theta,
                                          h1d_phys, path_seed(31, i))
            tp = solve_llb_jump(cfg, m0_std, nu_std, path_seed(32, i),
                                h1d_phys)
            term_c.append(tc.l2[-1])
            term_p.append(tp.l2[-1])
        term_c, term_p = np.array(term_c), np.array(term_p)
        se = np.sqrt(term_c.var() / 300 + term_p.var() / 300)
        assert abs(term_c.mean() - term_p.mean()) < 4 * se

    def test_zero_control_is_deterministic(self, grid1d, h1d_phys, nu_std,
                                           m0_std):
        theta = Control.constant(0.0, 0.25, 4, nu_std.n_atoms)
        cfg = make_cfg(grid1d, T=0.25, dt=5e-3, eps=0.5)
        a = solve_stochastic_control(cfg, m0_std, nu_std, theta, h1d_phys, 1)
        b = solve_stochastic_control(cfg, m0_std, nu_std, theta, h1d_phys, 2)
        assert not a.jump_events and not b.jump_events
        assert np.array_equal(a.field_coeffs[-1], b.field_coeffs[-1])


class TestEnsembleBounds:
    def test_h1_sup_and_dissipation_stable_under_dt_halving(self, grid1d,
                                                            h1d_phys, nu_std,
                                                            m0_std):
        # per-path sup H1 and the Laplacian dissipation integral stay
        # bounded; the ensemble means move by less than two standard errors
        # when dt halves
        def ensemble_stats(dt):
            sups, ints = [], []
            for i in range(24):
                cfg = make_cfg(grid1d, T=0.25, dt=dt, eps=0.5,
                               snapshot_stride=0)
                path = sample_prm(nu_std, cfg.T, 1 / cfg.eps, path_seed(55, i))
                traj = solve_llb_jump(cfg, m0_std, nu_std, path, h1d_phys)
                sups.append(traj.h1.max())
                lap_sq = traj.h2 ** 2 - 2 * traj.h1 ** 2 + traj.l2 ** 2
                ints.append(np.trapezoid(lap_sq, traj.times))
            return np.array(sups), np.array(ints)

        sups_a, ints_a = ensemble_stats(2e-3)
        sups_b, ints_b = ensemble_stats(1e-3)
        assert np.isfinite(sups_a).all() and np.isfinite(ints_a).all()
        for a, b in ((sups_a, sups_b), (ints_a, ints_b)):
            se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
            assert abs(a.mean() - b.mean()) <= max(2 * se, 1e-3 * a.mean())


class TestGalerkinLevels:
    def test_gap_shrinks_with_resolution(self, nu_std):
        from sllb.spectral import embed
        levels = [4, 8, 16]
        terminals = {}
        path = sample_prm(nu_std, 0.25, 1.0, 5)
        for n in levels:
            g = build_grid(1, n, 2 * n)
            h = synthesize(field_from_cosines(g, [((0,), 2, 0.6), ((1,), 0, 0.25)]))
            m0 = field_from_cosines(g, [((0,), 0, 0.4), ((1,), 1, 0.3)])
            cfg = make_cfg(g, T=0.25, dt=2e-3, snapshot_stride=0)
            terminals[n] = solve_llb_jump(cfg, m0, nu_std, path, h)
        fine = build_grid(1, 16, 32)
        gaps = []
        for a, b in [(4, 8), (8, 16)]:
            from sllb.spectral import Field
            ca = embed(Field(build_grid(1, a, 2 * a), terminals[a].field_coeffs[-1]), fine)
            cb = embed(Field(build_grid(1, b, 2 * b), terminals[b].field_coeffs[-1]), fine)
            gaps.append(np.sqrt(((ca.coeffs - cb.coeffs) ** 2).sum()))
        assert gaps[1] < gaps[0]
