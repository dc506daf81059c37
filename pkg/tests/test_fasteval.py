"""Tests for the folded single-point evaluator and its per-model cache."""

import numpy as np
import pytest

from flowmarch.catalog import get_system
from flowmarch.fasteval import HAVE_NUMBA, cached_evaluator, compile_evaluator
from flowmarch.odecore import TrainingDomain
from flowmarch.psirep import KINDS, build_model, eval_psi
from flowmarch.randnet import make_rng

LINEAR_DOMAIN = TrainingDomain(
    [[-1.1, 1.1]], t0_interval=(-0.05, 1.05), h_max=0.03
)
PENDULUM_DOMAIN = TrainingDomain([[-2.0, 2.0], [-3.0, 3.0]], h_max=0.1)


def _model(system_key, domain, kind, seed=0, **kwargs):
    model = build_model(
        get_system(system_key), domain, kind, M=24, Rm=0.5, seed=seed, **kwargs
    )
    rng = make_rng(seed + 100)
    model.subnet.beta = rng.normal(scale=0.3, size=model.subnet.beta.shape)
    return model


def _sample_inputs(model, count, seed=1):
    rng = make_rng(seed)
    box = model.normalizer.y0_box
    y0 = rng.uniform(box[:, 0], box[:, 1], size=(count, box.shape[0]))
    if model.system.autonomous:
        t0 = np.zeros(count)
    else:
        lo, hi = model.domain.t0_interval
        t0 = rng.uniform(lo, hi, size=count)
    xi = rng.uniform(0.0, model.domain.h_max, size=count)
    return y0, t0, xi


def _max_rel_diff(model, fn, count=200):
    y0, t0, xi = _sample_inputs(model, count)
    worst = 0.0
    for k in range(count):
        a = fn(y0[k], t0[k], xi[k])
        b = eval_psi(model, y0[k], t0[k], xi[k])
        worst = max(worst, np.max(np.abs(a - b) / (1.0 + np.abs(b))))
    return worst


class TestCompileEvaluator:
    @pytest.mark.parametrize("kind", KINDS)
    def test_matches_reference_evaluation_nonautonomous(self, kind):
        model = _model("linear", LINEAR_DOMAIN, kind)
        fn = compile_evaluator(model)
        assert _max_rel_diff(model, fn) <= 1e-14

    @pytest.mark.parametrize("kind", ["exp_s1", "imp_s2"])
    def test_matches_reference_evaluation_autonomous(self, kind):
        model = _model("pendulum_free", PENDULUM_DOMAIN, kind)
        fn = compile_evaluator(model)
        assert _max_rel_diff(model, fn) <= 1e-14

    def test_tanh_activation_path(self):
        model = _model("linear", LINEAR_DOMAIN, "exp_s1", activation="tanh")
        fn = compile_evaluator(model)
        assert _max_rel_diff(model, fn) <= 1e-14

    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
    def test_kernel_flag_and_numpy_fallback_agree(self):
        model = _model("linear", LINEAR_DOMAIN, "exp_s1")
        fast = compile_evaluator(model)
        slow = compile_evaluator(model, force_numpy=True)
        assert fast.compiled
        assert not slow.compiled
        y0, t0, xi = _sample_inputs(model, 50)
        for k in range(50):
            a = fast(y0[k], t0[k], xi[k])
            b = slow(y0[k], t0[k], xi[k])
            np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)

    def test_batched_input_falls_back_to_reference(self):
        model = _model("linear", LINEAR_DOMAIN, "exp_s1")
        fn = compile_evaluator(model)
        y0, t0, xi = _sample_inputs(model, 16)
        np.testing.assert_array_equal(
            fn(y0, t0, xi), eval_psi(model, y0, t0, xi)
        )

    def test_extra_hidden_layers_use_the_numpy_path(self):
        model = _model("linear", LINEAR_DOMAIN, "exp_s1", hidden=(10,))
        assert len(model.subnet.hidden_weights) == 2
        fn = compile_evaluator(model)
        assert not fn.compiled
        assert _max_rel_diff(model, fn, count=60) <= 1e-14

    def test_captures_weights_at_compile_time(self):
        model = _model("linear", LINEAR_DOMAIN, "exp_s1")
        fn = compile_evaluator(model)
        y0, t0, xi = np.array([0.4]), 0.3, 0.02
        before = fn(y0, t0, xi)
        model.subnet.beta = 2.0 * model.subnet.beta
        np.testing.assert_array_equal(fn(y0, t0, xi), before)
        assert fn.model is model


class TestCachedEvaluator:
    def test_reuses_the_compiled_closure(self):
        model = _model("linear", LINEAR_DOMAIN, "exp_s1")
        assert cached_evaluator(model) is cached_evaluator(model)

    def test_rebinding_weights_invalidates_the_cache(self):
        model = _model("linear", LINEAR_DOMAIN, "exp_s1")
        first = cached_evaluator(model)
        y0, t0, xi = np.array([0.4]), 0.3, 0.02
        stale = first(y0, t0, xi)
        model.subnet.beta = 2.0 * model.subnet.beta
        second = cached_evaluator(model)
        assert second is not first
        np.testing.assert_allclose(
            second(y0, t0, xi), eval_psi(model, y0, t0, xi), rtol=1e-14
        )
        assert not np.array_equal(second(y0, t0, xi), stale)
