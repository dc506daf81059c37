"""Benchmark sweeps, result serialization, and flow-property verification."""

import io
import json
from pathlib import Path

import pytest

from flowmarch.bench import (
    CLASSICAL_METHODS,
    SWEEP_VARIABLES,
    ExperimentConfig,
    ResultRow,
    canon_method,
    load_experiment_config,
    march_config_from_run_config,
    model_from_run_config,
    rows_to_csv,
    run_experiment,
    verify_flow_theorems,
    write_results,
)
from flowmarch.decomp import DecomposedModel
from flowmarch.errors import ConfigError

CSV_HEADER = "method,sweep,value,e_max,e_rms,train_seconds,march_seconds,error"


class TestCanonMethod:
    def test_classical_spellings(self):
        assert canon_method("RK4") == "rk4"
        assert canon_method("dp54") == "dp54"
        assert canon_method("SDIRK2") == "sdirk2"

    def test_kind_spellings(self):
        assert canon_method("ExpS1") == "exp_s1"
        assert canon_method("imp_s2") == "imp_s2"

    def test_unknown_method(self):
        with pytest.raises(ConfigError, match="unknown method"):
            canon_method("euler")

    def test_module_constants(self):
        assert CLASSICAL_METHODS == ("rk4", "dp54", "sdirk2")
        assert SWEEP_VARIABLES == ("M", "Q", "h_max", "tolerance")


class TestExperimentConfig:
    def test_methods_canonicalized_and_deduped(self):
        cfg = ExperimentConfig(
            problem="linear100", sweep="M", values=(10,),
            methods=("RK4", "rk4", "ExpS1"),
        )
        assert cfg.methods == ("rk4", "exp_s1")

    def test_unknown_problem(self):
        with pytest.raises(ConfigError, match="unknown problem"):
            ExperimentConfig(problem="nope", sweep="M", values=(10,),
                             methods=("rk4",))

    def test_unknown_sweep(self):
        with pytest.raises(ConfigError, match="sweep"):
            ExperimentConfig(problem="linear100", sweep="width", values=(10,),
                             methods=("rk4",))

    def test_m_sweep_values_must_be_integers(self):
        with pytest.raises(ConfigError, match="must be an integer"):
            ExperimentConfig(problem="linear100", sweep="M", values=(10.5,),
                             methods=("rk4",))
        with pytest.raises(ConfigError):
            ExperimentConfig(problem="linear100", sweep="Q", values=(0,),
                             methods=("rk4",))

    def test_continuous_sweep_values_must_be_positive(self):
        with pytest.raises(ConfigError, match="positive"):
            ExperimentConfig(problem="linear100", sweep="h_max",
                             values=(-0.01,), methods=("rk4",))

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown override"):
            ExperimentConfig(problem="linear100", sweep="M", values=(10,),
                             methods=("rk4",), overrides={"width": 3})

    def test_override_type_checks(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(problem="linear100", sweep="M", values=(10,),
                             methods=("rk4",), overrides={"Q": 99.5})
        with pytest.raises(ConfigError):
            ExperimentConfig(problem="linear100", sweep="M", values=(10,),
                             methods=("rk4",), overrides={"M": True})

    def test_from_dict_round_trip(self):
        doc = {
            "problem": "linear100",
            "sweep": "M",
            "values": [20, 40],
            "methods": ["exp_s1", "rk4"],
            "seed": 3,
            "overrides": {"Q": 400},
        }
        cfg = ExperimentConfig.from_dict(doc)
        assert cfg.problem == "linear100"
        assert cfg.values == (20, 40)
        assert cfg.methods == ("exp_s1", "rk4")
        assert cfg.seed == 3
        assert cfg.overrides == {"Q": 400}

    def test_from_dict_unknown_keys(self):
        with pytest.raises(ConfigError, match="unknown experiment keys"):
            ExperimentConfig.from_dict({
                "problem": "linear100", "sweep": "M", "values": [10],
                "methods": ["rk4"], "repeat": 5,
            })

    def test_load_experiment_config_table_form(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            "[experiment]\n"
            'problem = "linear100"\n'
            'sweep = "M"\n'
            "values = [20, 40]\n"
            'methods = ["exp_s1", "rk4"]\n'
            "[experiment.overrides]\n"
            "Q = 400\n"
        )
        cfg = load_experiment_config(path)
        assert cfg.problem == "linear100"
        assert cfg.values == (20, 40)
        assert cfg.overrides == {"Q": 400}

    def test_load_experiment_config_flat_form(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            'problem = "linear100"\n'
            'sweep = "h_max"\n'
            "values = [0.01]\n"
            'methods = ["dp54"]\n'
        )
        cfg = load_experiment_config(path)
        assert cfg.sweep == "h_max"
        assert cfg.values == (0.01,)


class TestCsvFormat:
    def test_header_only_for_empty_rows(self):
        buf = io.StringIO()
        rows_to_csv([], buf)
        assert buf.getvalue() == CSV_HEADER + "\n"

    def test_float_cells_use_17_significant_digits(self):
        row = ResultRow(method="rk4", sweep="M", value=400, e_max=1 / 3,
                        e_rms=None, train_seconds=None, march_seconds=0.25,
                        error=None)
        buf = io.StringIO()
        rows_to_csv([row], buf)
        line = buf.getvalue().splitlines()[1]
        assert line == "rk4,M,400,0.33333333333333331,,,0.25,"

    def test_round_trip_precision(self):
        # 17 significant digits reproduce the double exactly
        x = 0.1 + 0.2
        row = ResultRow(method="dp54", sweep="tolerance", value=1e-8,
                        e_max=x, e_rms=x, train_seconds=None,
                        march_seconds=None, error=None)
        buf = io.StringIO()
        rows_to_csv([row], buf)
        cell = buf.getvalue().splitlines()[1].split(",")[3]
        assert float(cell) == x


@pytest.fixture(scope="module")
def m_sweep_rows():
    cfg = ExperimentConfig(
        problem="linear100", sweep="M", values=(20, 40),
        methods=("exp_s1", "rk4"),
        overrides={"Q": 400, "t_final": 0.1},
    )
    return cfg, run_experiment(cfg, record_timings=False)


class TestRunExperiment:
    def test_rows_in_value_major_order(self, m_sweep_rows):
        _, rows = m_sweep_rows
        assert [(r.value, r.method) for r in rows] == [
            (20, "exp_s1"), (20, "rk4"), (40, "exp_s1"), (40, "rk4"),
        ]

    def test_successful_rows_have_errors_filled(self, m_sweep_rows):
        _, rows = m_sweep_rows
        for row in rows:
            assert row.error is None
            assert row.e_max > 0.0
            assert row.e_rms <= row.e_max

    def test_trained_error_drops_with_m(self, m_sweep_rows):
        _, rows = m_sweep_rows
        nn = {r.value: r.e_max for r in rows if r.method == "exp_s1"}
        assert nn[40] < nn[20]

    def test_classical_rows_ignore_m(self, m_sweep_rows):
        _, rows = m_sweep_rows
        rk = [r.e_max for r in rows if r.method == "rk4"]
        assert rk[0] == rk[1]

    def test_classical_rows_have_no_train_time(self, m_sweep_rows):
        _, rows = m_sweep_rows
        for row in rows:
            if row.method == "rk4":
                assert row.train_seconds is None

    def test_record_timings_off_zeroes_clocks(self, m_sweep_rows):
        _, rows = m_sweep_rows
        for row in rows:
            if row.method == "exp_s1":
                assert row.train_seconds == 0.0
            assert row.march_seconds == 0.0

    def test_jobs_do_not_change_results(self, m_sweep_rows):
        cfg, rows = m_sweep_rows
        rows2 = run_experiment(cfg, jobs=2, record_timings=False)
        buf1, buf2 = io.StringIO(), io.StringIO()
        rows_to_csv(rows, buf1)
        rows_to_csv(rows2, buf2)
        assert buf1.getvalue() == buf2.getvalue()

    def test_failing_row_is_captured_not_raised(self):
        # Q=80 undertrains the map and the march walks out of the box;
        # the classical row in the same sweep still succeeds.
        cfg = ExperimentConfig(
            problem="linear100", sweep="M", values=(6,),
            methods=("exp_s1", "rk4"),
            overrides={"Q": 80, "t_final": 0.1},
        )
        rows = run_experiment(cfg, record_timings=False)
        assert "OutOfDomainError" in rows[0].error
        assert rows[0].e_max is None
        assert rows[1].error is None

    def test_tolerance_sweep_rejects_non_adaptive_methods(self):
        cfg = ExperimentConfig(
            problem="linear100", sweep="tolerance", values=(1e-6,),
            methods=("exp_s1", "rk4", "dp54"),
            overrides={"t_final": 0.1},
        )
        rows = run_experiment(cfg, record_timings=False)
        by_method = {r.method: r for r in rows}
        assert "does not apply" in by_method["exp_s1"].error
        assert "no tolerance parameter" in by_method["rk4"].error
        assert by_method["dp54"].error is None
        assert by_method["dp54"].e_max < 1e-4

    def test_rk4_needs_a_fixed_step(self):
        cfg = ExperimentConfig(problem="vdp100", sweep="h_max",
                               values=(0.01,), methods=("rk4",))
        rows = run_experiment(cfg, record_timings=False)
        assert "no fixed step size" in rows[0].error

    def test_write_results_emits_csv_and_json(self, m_sweep_rows, tmp_path):
        cfg, rows = m_sweep_rows
        csv_path, json_path = write_results(cfg, rows, tmp_path / "out.csv")
        csv_path, json_path = Path(csv_path), Path(json_path)
        assert csv_path.name == "out.csv"
        assert json_path.name == "out.json"
        text = csv_path.read_text()
        assert text.startswith(CSV_HEADER)
        assert len(text.splitlines()) == 1 + len(rows)

        doc = json.loads(json_path.read_text())
        assert doc["problem"] == "linear100"
        assert doc["sweep"] == "M"
        assert doc["values"] == [20, 40]
        assert doc["methods"] == ["exp_s1", "rk4"]
        assert len(doc["rows"]) == len(rows)
        assert doc["rows"][0]["method"] == "exp_s1"
        assert doc["rows"][0]["e_max"] == rows[0].e_max

    def test_output_in_config_triggers_write(self, tmp_path):
        base = tmp_path / "res"
        cfg = ExperimentConfig(
            problem="linear100", sweep="tolerance", values=(1e-6,),
            methods=("dp54",), output=base,
            overrides={"t_final": 0.1},
        )
        run_experiment(cfg, record_timings=False)
        assert (tmp_path / "res.csv").exists()
        assert (tmp_path / "res.json").exists()


class TestVerifyFlowTheorems:
    def test_state_lattice_shift(self):
        report = verify_flow_theorems("pendulum_free", samples=3, tol=1e-8,
                                      seed=0)
        assert report.problem == "pendulum_free"
        assert [c.name for c in report.checks] == ["state_shift"]
        check = report.checks[0]
        assert check.samples == 3
        assert check.max_defect <= check.tol
        assert check.passed
        assert report.passed

    def test_temporal_shift_and_periodic_orbit(self):
        report = verify_flow_theorems("linear100", samples=3, tol=1e-8,
                                      seed=1)
        names = {c.name for c in report.checks}
        assert names == {"temporal_shift", "periodic_orbit"}
        assert report.passed

    def test_explicit_selection(self):
        report = verify_flow_theorems("linear100", samples=3, tol=1e-8,
                                      theorems=["temporal_shift"])
        assert [c.name for c in report.checks] == ["temporal_shift"]

    def test_no_metadata_at_all(self):
        with pytest.raises(ConfigError, match="no periodicity metadata"):
            verify_flow_theorems("lorenz63", samples=3)

    def test_requested_check_needs_its_metadata(self):
        with pytest.raises(ConfigError, match="absent"):
            verify_flow_theorems("linear100", samples=3,
                                 theorems=["state_shift"])

    def test_unknown_theorem_name(self):
        with pytest.raises(ConfigError, match="unknown theorem check"):
            verify_flow_theorems("pendulum_free", samples=3,
                                 theorems=["galilean_boost"])


class TestRunConfigAssembly:
    def test_entry_defaults(self):
        model, train_cfg, entry = model_from_run_config({"problem": "linear100"})
        assert entry.problem_id == "linear100"
        assert model.representation.kind == "exp_s1"
        assert model.subnet.arch == (3, 800, 1)
        assert train_cfg.Q == 2500
        assert train_cfg.seed == 0

    def test_overrides_flow_through(self):
        model, train_cfg, _ = model_from_run_config({
            "problem": "linear100", "kind": "imp_s1", "seed": 5,
            "domain": {"h_max": 0.05},
            "network": {"M": 10, "Rm": 0.7},
            "train": {"Q": 40, "max_iterations": 7},
        })
        assert model.representation.kind == "imp_s1"
        assert model.subnet.arch == (3, 10, 1)
        assert model.subnet.Rm == 0.7
        assert model.domain.h_max == 0.05
        assert train_cfg.Q == 40
        assert train_cfg.seed == 5
        assert train_cfg.max_iterations == 7

    def test_subdomain_section_builds_decomposition(self):
        model, _, _ = model_from_run_config({
            "problem": "linear100",
            "subdomains": {"t_boundaries": [-0.05, 0.5, 1.05]},
            "network": {"M": 8},
        })
        assert isinstance(model, DecomposedModel)
        assert len(model) == 2

    def test_march_defaults_from_entry(self):
        y0, march_cfg = march_config_from_run_config({"problem": "linear100"})
        assert y0.tolist() == [0.0]
        assert march_cfg.t_span == (0.0, 1.0)
        assert march_cfg.mode == "fixed"
        assert march_cfg.dt == 0.02
        assert march_cfg.safety == 0.95
        assert march_cfg.allow_extrapolation is False

    def test_march_section_overrides(self):
        _, march_cfg = march_config_from_run_config({
            "problem": "linear100",
            "march": {"t_span": [0.0, 0.5], "dt": 0.01, "safety": 0.9,
                      "mode": "quasi_adaptive"},
        })
        assert march_cfg.t_span == (0.0, 0.5)
        assert march_cfg.mode == "quasi_adaptive"
        assert march_cfg.dt == 0.01
        assert march_cfg.safety == 0.9
