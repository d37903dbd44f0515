import numpy as np
import pytest

from ncadmm.config import (AdmmConfig, ExperimentConfig, GraphConfig,
                           NoiseConfig, OutputConfig, ProblemConfig)
from ncadmm.experiment import (SweepResult, emit_csv, emit_svg, format_sci,
                               preflight_reports, run_experiment, run_trial)


def tiny_config(**kw):
    base = dict(
        seed=31,
        trials=3,
        graph=GraphConfig(n_nodes=10, rho=0.4),
        problem=ProblemConfig(dim=2, obs_noise_var=1e-3, design_kind="well_conditioned"),
        admm=AdmmConfig(c=(0.2,), max_iter=80),
        noise=NoiseConfig(model="gaussian", sigma_e=(1e-3,), delta=0.0,
                          placement_mode="analysis_faithful"),
        output=OutputConfig(csv_path="out.csv", svg_path=None),
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestFormatSci:
    def test_canonical_zero(self):
        assert format_sci(0.0) == "0e0"
        assert format_sci(-0.0) == "0e0"

    def test_seventeen_significant_digits(self):
        assert format_sci(1.0) == "1.0000000000000000e0"
        assert format_sci(-0.1) == "-1.0000000000000001e-1"
        assert format_sci(12345.678) == "1.2345678000000000e4"

    def test_round_trips_through_float(self):
        for x in (3.14159, 1e-300, -2.5e17, 7.0):
            assert float(format_sci(x)) == x

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            format_sci(float("nan"))
        with pytest.raises(ValueError):
            format_sci(float("inf"))


class TestRunExperiment:
    def test_single_trial_mean_is_trajectory_metric(self):
        cfg = tiny_config(trials=1)
        res = run_experiment(cfg, quiet=True)
        direct = run_trial(cfg, 0)
        assert np.array_equal(res.mean, direct)
        assert np.array_equal(res.std, np.zeros_like(direct))

    def test_deterministic_across_invocations(self):
        cfg = tiny_config()
        a = run_experiment(cfg, quiet=True)
        b = run_experiment(cfg, quiet=True)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.std, b.std)

    def test_parallel_matches_serial(self):
        cfg = tiny_config(trials=5)
        serial = run_experiment(cfg, jobs=1, quiet=True)
        parallel = run_experiment(cfg, jobs=4, quiet=True)
        assert np.array_equal(serial.mean, parallel.mean)
        assert np.array_equal(serial.std, parallel.std)

    def test_cells_share_trial_instance(self):
        # Identical sigma_e twice: same graph/problem and same cell index
        # would alias, but distinct cell indices get distinct noise, so the
        # curves differ while the k=0 row (no noise yet) agrees.
        cfg = tiny_config(noise=NoiseConfig(model="gaussian", sigma_e=(1e-2, 1e-2)))
        res = run_experiment(cfg, quiet=True)
        assert res.mean[0, 0] == res.mean[1, 0] == 1.0
        assert not np.array_equal(res.mean[0], res.mean[1])

    def test_preflight_reports_per_cell(self):
        cfg = tiny_config(admm=AdmmConfig(c=(0.01, 0.2), max_iter=10))
        reports = preflight_reports(cfg)
        assert len(reports) == 2
        assert reports[0].c == 0.01
        assert reports[0].cond_linear  # tiny c satisfies the conditions

    def test_trial_failure_propagates(self, monkeypatch):
        import ncadmm.experiment as exp

        def boom(cfg, trial):
            raise RuntimeError(f"trial {trial} exploded")

        monkeypatch.setattr(exp, "run_trial", boom)
        with pytest.raises(RuntimeError, match="exploded"):
            exp.run_experiment(tiny_config(), quiet=True)

    def test_noiseless_cells_decay_monotonically_past_transient(self):
        # release-gating sanity property: with the noise switched off, every
        # sweep curve is non-increasing from iteration 10 until it comes
        # within 10x of its floor
        cfg = tiny_config(
            trials=4,
            admm=AdmmConfig(c=(0.1, 0.5), max_iter=400),
            noise=NoiseConfig(model="none", sigma_e=(0.0,)),
        )
        res = run_experiment(cfg, quiet=True)
        for curve in res.mean:
            floor = curve[-max(1, len(curve) // 10):].mean()
            segment = curve[10:]
            active = segment[:-1] > 10.0 * floor
            assert np.all(np.diff(segment)[active] <= 0.0)


class TestEmitCsv:
    def test_header_and_sorting(self, tmp_path):
        cells = [(1.0, 1e-2), (0.1, 1e-2), (0.1, 1e-3)]
        mean = np.array([[1.0, 0.5], [2.0, 0.25], [3.0, 0.125]])
        std = np.zeros_like(mean)
        res = SweepResult(cells=cells, mean=mean, std=std, trials=1, wall_time=0.0)
        path = tmp_path / "sweep.csv"
        emit_csv(res, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "c,sigma_e,k,mean_edc,std_edc"
        # sorted by (c, sigma_e, k): the (0.1, 1e-3) cell comes first
        assert lines[1].startswith("1.0000000000000001e-1,1.0000000000000000e-3,0,")
        assert lines[2].startswith("1.0000000000000001e-1,1.0000000000000000e-3,1,")
        assert lines[3].startswith("1.0000000000000001e-1,1.0000000000000000e-2,0,")

    def test_empty_sweep_writes_header_only(self, tmp_path):
        res = SweepResult(cells=[], mean=np.zeros((0, 5)), std=np.zeros((0, 5)),
                          trials=0, wall_time=0.0)
        path = tmp_path / "empty.csv"
        emit_csv(res, path)
        assert path.read_text() == "c,sigma_e,k,mean_edc,std_edc\n"

    def test_reemission_is_byte_identical(self, tmp_path):
        cfg = tiny_config()
        res = run_experiment(cfg, quiet=True)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(res, p1)
        emit_csv(res, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_lf_line_endings(self, tmp_path):
        cfg = tiny_config(trials=1, admm=AdmmConfig(c=(0.2,), max_iter=3))
        res = run_experiment(cfg, quiet=True)
        path = tmp_path / "lf.csv"
        emit_csv(res, path)
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")


class TestEmitSvg:
    def test_one_polyline_per_cell(self, tmp_path):
        res = SweepResult(cells=[(0.5, 1e-3)],
                          mean=np.array([[1.0, 0.1, 0.01]]),
                          std=np.zeros((1, 3)), trials=1, wall_time=0.0)
        path = tmp_path / "one.svg"
        emit_svg(res, path)
        text = path.read_text()
        assert text.count("<polyline") == 1
        assert text.startswith("<svg")
        assert "href" not in text  # self-contained

    def test_monotone_data_monotone_pixels(self, tmp_path):
        vals = np.array([[10.0 ** (-k / 4) for k in range(20)]])
        res = SweepResult(cells=[(1.0, 0.0)], mean=vals, std=np.zeros_like(vals),
                          trials=1, wall_time=0.0)
        path = tmp_path / "mono.svg"
        emit_svg(res, path)
        text = path.read_text()
        points = text.split('<polyline points="')[1].split('"')[0]
        ys = [float(p.split(",")[1]) for p in points.split()]
        assert all(b >= a for a, b in zip(ys, ys[1:]))  # svg y grows downward

    def test_nonpositive_values_clamped(self, tmp_path):
        vals = np.array([[1.0, 0.0, -1.0]])
        res = SweepResult(cells=[(1.0, 0.0)], mean=vals, std=np.zeros_like(vals),
                          trials=1, wall_time=0.0)
        path = tmp_path / "clamp.svg"
        emit_svg(res, path)  # must not raise on the log map

    def test_empty_sweep_rejected(self, tmp_path):
        res = SweepResult(cells=[], mean=np.zeros((0, 2)), std=np.zeros((0, 2)),
                          trials=0, wall_time=0.0)
        with pytest.raises(ValueError):
            emit_svg(res, tmp_path / "no.svg")
