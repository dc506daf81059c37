import numpy as np
import pytest

from flowmarch.catalog import get_system
from flowmarch.errors import StageSolverError
from flowmarch.odecore import TrainingDomain
from flowmarch.psirep import (
    DIRK_GAMMA,
    CollocationSet,
    PsiRepresentation,
    assemble_jacobian,
    assemble_residual,
    build_model,
    canon_kind,
    eval_F,
    eval_psi,
    solve_dK_dxi,
    solve_stage_K,
)

from conftest import decay_system

KINDS = ("exp_s0", "exp_s1", "exp_s2", "imp_s1", "imp_s2")


def _linear_model(kind, M=12, seed=0, Rm=0.5):
    system = get_system("linear")
    domain = TrainingDomain([[-1.1, 1.1]], t0_interval=(-0.05, 1.05), h_max=0.03)
    return build_model(system, domain, kind, M=M, Rm=Rm, seed=seed)


def _pendulum_model(kind, M=12, seed=0, Rm=0.5):
    system = get_system("pendulum_free")
    domain = TrainingDomain([[-2.0, 2.0], [-3.0, 3.0]], h_max=0.1)
    return build_model(system, domain, kind, M=M, Rm=Rm, seed=seed)


class TestCanonKind:
    @pytest.mark.parametrize(
        "raw,want",
        [
            ("exp_s1", "exp_s1"),
            ("ExpS1", "exp_s1"),
            ("EXP-S2", "exp_s2"),
            ("  imp_s1 ", "imp_s1"),
            ("ImpS2", "imp_s2"),
            ("exps0", "exp_s0"),
        ],
    )
    def test_spellings(self, raw, want):
        assert canon_kind(raw) == want

    @pytest.mark.parametrize("raw", ["rk4", "exp_s3", "imp", ""])
    def test_unknown_kind(self, raw):
        with pytest.raises(ValueError, match="kind"):
            canon_kind(raw)

    def test_local_orders_and_implicit_flags(self):
        orders = {k: PsiRepresentation.from_kind(k).s for k in KINDS}
        assert orders == {
            "exp_s0": 0, "exp_s1": 1, "exp_s2": 2, "imp_s1": 1, "imp_s2": 2
        }
        assert [PsiRepresentation.from_kind(k).implicit for k in KINDS] == [
            False, False, False, True, True
        ]
        assert DIRK_GAMMA == 1.0 - np.sqrt(2.0) / 2.0


class TestBuildModel:
    def test_input_width_counts_t0_only_when_non_autonomous(self):
        assert _linear_model("exp_s1").subnet.n_in == 3  # n=1, +t0, +xi
        assert _pendulum_model("exp_s1").subnet.n_in == 3  # n=2, +xi
        decay = build_model(
            decay_system(), TrainingDomain([[0.1, 2.0]], h_max=0.2),
            "exp_s0", M=6, Rm=0.5, seed=0,
        )
        assert decay.subnet.n_in == 2

    def test_untrained_model_starts_at_baseline(self):
        model = _linear_model("exp_s1")
        y0 = np.array([0.4])
        f0 = model.system.eval_rhs(y0, 0.1)
        got = eval_psi(model, y0, 0.1, 0.02)
        np.testing.assert_allclose(got, y0 + 0.02 * f0, rtol=1e-15)

    def test_width_mismatch_rejected(self):
        model = _linear_model("exp_s1")
        bad_net = model.subnet
        from flowmarch.psirep import PsiModel

        with pytest.raises(ValueError, match="width"):
            PsiModel(
                representation=model.representation,
                subnet=bad_net,
                normalizer=model.normalizer,
                system=get_system("pendulum_free"),
                domain=model.domain,
            )


class TestIdentityAtZeroStep:
    @pytest.mark.parametrize("kind", KINDS)
    def test_non_autonomous(self, kind):
        model = _linear_model(kind, seed=3)
        rng = np.random.default_rng(1)
        model.subnet.beta = rng.normal(size=model.subnet.beta.shape)
        y0 = rng.uniform(-1.0, 1.0, size=(20, 1))
        t0 = rng.uniform(0.0, 1.0, size=20)
        out = eval_psi(model, y0, t0, 0.0)
        np.testing.assert_array_equal(out, y0)

    @pytest.mark.parametrize("kind", KINDS)
    def test_autonomous(self, kind):
        model = _pendulum_model(kind, seed=4)
        rng = np.random.default_rng(2)
        model.subnet.beta = rng.normal(size=model.subnet.beta.shape)
        y0 = rng.uniform(-1.5, 1.5, size=(20, 2))
        out = eval_psi(model, y0, None, 0.0)
        np.testing.assert_array_equal(out, y0)


class TestStageSolve:
    def test_linear_stage_has_closed_form(self):
        # K = f(y0 + xi K, t0 + xi) for dy/dt = -lam (y - cos(pi t)) gives
        # K = lam (cos(pi (t0+xi)) - y0) / (1 + lam xi)
        system = get_system("linear")  # lam = 100
        K = solve_stage_K(system, np.array([0.0]), 0.0, 0.02)
        want = 100.0 * np.cos(0.02 * np.pi) / 3.0
        assert K[0] == pytest.approx(want, rel=1e-12)
        assert K[0] == pytest.approx(33.26755761427572, rel=1e-12)

    def test_batch_matches_single(self):
        system = get_system("pendulum_free")
        rng = np.random.default_rng(0)
        Y = rng.uniform(-1, 1, size=(6, 2))
        XI = rng.uniform(0.0, 0.1, size=6)
        K_batch = solve_stage_K(system, Y, None, XI)
        for k in range(6):
            np.testing.assert_allclose(
                solve_stage_K(system, Y[k], None, XI[k]), K_batch[k], rtol=1e-12
            )

    def test_zero_xi_reduces_to_rhs(self):
        system = get_system("pendulum_free")
        y = np.array([0.7, -0.3])
        np.testing.assert_allclose(
            solve_stage_K(system, y, None, 0.0), system.eval_rhs(y, 0.0),
            rtol=1e-14,
        )

    def test_divergent_stage_raises(self):
        # dy/dt = y^2 with xi*K = huge makes the stage equation lose its root
        def rhs(y, t):
            return y**2

        from flowmarch.odecore import IvpSystem, fd_jac_t, fd_jac_y

        system = IvpSystem(1, rhs, fd_jac_y(rhs), fd_jac_t(rhs), autonomous=True)
        with pytest.raises(StageSolverError):
            solve_stage_K(system, np.array([5.0]), None, 1.0)

    def test_dK_dxi_matches_finite_differences(self):
        system = get_system("linear")
        y0 = np.array([0.3])
        t0, xi = 0.2, 0.015
        K = solve_stage_K(system, y0, t0, xi)
        dK = solve_dK_dxi(system, y0, t0, xi, K)
        eps = 1e-7
        Kp = solve_stage_K(system, y0, t0, xi + eps)
        Km = solve_stage_K(system, y0, t0, xi - eps)
        np.testing.assert_allclose(dK, (Kp - Km) / (2 * eps), rtol=1e-6)


class TestBaselines:
    def test_exp_s2_is_the_midpoint_step(self):
        model = _pendulum_model("exp_s2")
        system = model.system
        y0 = np.array([1.0, -0.5])
        xi = 0.08
        f0 = system.eval_rhs(y0, 0.0)
        want = y0 + xi * system.eval_rhs(y0 + 0.5 * xi * f0, 0.0)
        np.testing.assert_allclose(eval_F(model, y0, None, xi), want, rtol=1e-14)

    def test_imp_s2_matches_dirk_tableau(self):
        model = _linear_model("imp_s2")
        system = model.system
        g = DIRK_GAMMA
        y0, t0, xi = np.array([0.2]), 0.1, 0.02
        K1 = solve_stage_K(system, y0, t0, g * xi)
        base2 = y0 + (1 - g) * xi * K1
        K2 = solve_stage_K(system, base2, t0 + (1 - g) * xi, g * xi)
        want = y0 + (1 - g) * xi * K1 + g * xi * K2
        np.testing.assert_allclose(eval_F(model, y0, t0, xi), want, rtol=1e-13)

    @pytest.mark.parametrize("kind,s", [("exp_s1", 1), ("exp_s2", 2)])
    def test_baseline_defect_order(self, kind, s):
        # the untrained residual R = dF/dxi - f(F) should shrink like xi^s
        model = _pendulum_model(kind)
        y0 = np.array([[1.2, 0.3]])
        beta0 = np.zeros_like(model.subnet.beta)

        def defect(xi):
            pts = CollocationSet(y0=y0, xi=np.array([xi]))
            return float(np.max(np.abs(assemble_residual(model, beta0, pts))))

        xi = 0.08
        ratio = defect(xi / 2) / defect(xi)
        assert abs(np.log2(ratio) + s) < 0.35


class TestResidualAssembly:
    def test_beta0_exp_s1_residual_is_the_euler_defect(self):
        model = _pendulum_model("exp_s1")
        system = model.system
        rng = np.random.default_rng(7)
        y0 = rng.uniform(-1, 1, size=(5, 2))
        xi = rng.uniform(0.01, 0.1, size=5)
        pts = CollocationSet(y0=y0, xi=xi)
        got = assemble_residual(model, np.zeros_like(model.subnet.beta), pts)
        f0 = system.eval_rhs(y0, 0.0)
        want = f0 - system.eval_rhs(y0 + xi[:, None] * f0, xi)
        np.testing.assert_allclose(got.reshape(5, 2), want, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("kind", ["exp_s0", "exp_s2", "imp_s1"])
    def test_residual_is_the_flow_equation_defect(self, kind):
        # R must equal d(psi)/dxi - f(psi, t0+xi) for any beta; the xi
        # derivative is checked by central differences of eval_psi
        model = _linear_model(kind, M=10, seed=5)
        rng = np.random.default_rng(8)
        model.subnet.beta = 0.1 * rng.normal(size=model.subnet.beta.shape)
        y0 = rng.uniform(-1, 1, size=(4, 1))
        t0 = rng.uniform(0.0, 0.9, size=4)
        xi = rng.uniform(0.005, 0.028, size=4)
        pts = CollocationSet(y0=y0, xi=xi, t0=t0)
        got = assemble_residual(model, model.subnet.beta, pts).reshape(4, 1)

        eps = 1e-7
        psi_p = eval_psi(model, y0, t0, xi + eps)
        psi_m = eval_psi(model, y0, t0, xi - eps)
        dpsi = (psi_p - psi_m) / (2 * eps)
        f = model.system.eval_rhs(eval_psi(model, y0, t0, xi), t0 + xi)
        np.testing.assert_allclose(got, dpsi - f, rtol=2e-5, atol=1e-7)

    @pytest.mark.parametrize("kind", KINDS)
    def test_jacobian_matches_finite_differences(self, kind):
        model = _pendulum_model(kind, M=7, seed=6)
        rng = np.random.default_rng(9)
        beta = 0.2 * rng.normal(size=model.subnet.beta.shape)
        pts = CollocationSet(
            y0=rng.uniform(-1, 1, size=(4, 2)),
            xi=rng.uniform(0.01, 0.09, size=4),
        )
        J = assemble_jacobian(model, beta, pts)
        assert J.shape == (8, 14)  # (n*Q, n*M)

        flat = beta.ravel()
        fd = np.empty_like(J)
        for j in range(flat.size):
            bp = flat.copy()
            bm = flat.copy()
            bp[j] += 1e-6
            bm[j] -= 1e-6
            rp = assemble_residual(model, bp.reshape(beta.shape), pts)
            rm = assemble_residual(model, bm.reshape(beta.shape), pts)
            fd[:, j] = (rp - rm) / 2e-6
        scale = np.max(np.abs(fd))
        np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-6 * scale)

    def test_jacobian_is_beta_independent_when_f_is_linear(self):
        # psi is affine in beta and f is linear in y, so the residual is
        # affine in beta and its Jacobian cannot depend on it
        model = _linear_model("exp_s1", M=6)
        pts = CollocationSet(
            y0=np.array([[0.5], [-0.5]]),
            xi=np.array([0.005, 0.02]),
            t0=np.array([0.1, 0.7]),
        )
        J0 = assemble_jacobian(model, np.zeros_like(model.subnet.beta), pts)
        J1 = assemble_jacobian(model, np.ones_like(model.subnet.beta), pts)
        np.testing.assert_allclose(J0, J1, rtol=1e-12, atol=1e-12)
