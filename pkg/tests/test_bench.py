import math

import numpy as np
import pytest

from kmz import bench
from kmz import problems as pb
from kmz.errors import ConfigError, KmzError


class TestPsnr:
    def test_identical_images(self):
        img = pb.shepp_logan_phantom(16)
        assert bench.psnr(img, img) == math.inf

    def test_twenty_db(self):
        x_true = np.full((10, 10), 1.0)
        x_recon = x_true - 0.1
        assert bench.psnr(x_true, x_recon) == pytest.approx(20.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        x_true = rng.random((8, 8)) + 0.5
        x_recon = x_true + rng.standard_normal((8, 8)) * 0.05
        a = bench.psnr(x_true, x_recon)
        b = bench.psnr(3.0 * x_true, 3.0 * x_recon)
        assert a == pytest.approx(b, rel=1e-12)

    def test_zero_reference_rejected(self):
        with pytest.raises(KmzError):
            bench.psnr(np.zeros((4, 4)), np.ones((4, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(KmzError):
            bench.psnr(np.ones((4, 4)), np.ones((4, 5)))


class TestMethodLabel:
    def test_labels(self):
        assert bench.method_label("rek", 1) == "rek"
        assert bench.method_label("memrk", 4) == "memrk4"


class TestExperimentSpec:
    def test_roundtrip(self):
        spec = bench.ExperimentSpec(kind="sparse", m=200, n=40, density=0.2,
                                    methods=[("rek", 1), ("memrk", 6)],
                                    trials=3, seed=9)
        back = bench.ExperimentSpec.from_dict(spec.to_dict())
        assert back.to_dict() == spec.to_dict()

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            bench.ExperimentSpec.from_dict({"bogus": 1})

    def test_invalid_method_rejected(self):
        spec = bench.ExperimentSpec(methods=[("rek", 2)])
        with pytest.raises(ConfigError):
            spec.validate()

    def test_bad_kind(self):
        with pytest.raises(ConfigError):
            bench.ExperimentSpec(kind="tomo").validate()


class TestRunExperiment:
    def small_spec(self, **kw):
        base = dict(kind="dense", m=50, n=10,
                    methods=[("emrk", 1), ("memrk", 2)], trials=2,
                    tol=1e-8, max_outer=20_000, seed=5, record_err=True)
        base.update(kw)
        return bench.ExperimentSpec(**base)

    def test_row_layout_and_convergence(self):
        rows = bench.run_experiment(self.small_spec())
        per_cell = [r for r in rows if r.seed >= 0]
        medians = [r for r in rows if r.seed == -1]
        assert len(per_cell) == 4 and len(medians) == 2
        assert [(r.method, r.seed) for r in per_cell] == [
            ("emrk", 0), ("emrk", 1), ("memrk2", 0), ("memrk2", 1)]
        for r in per_cell:
            assert r.final_res < 1e-8
            assert r.err_sq is not None and r.err_sq < 1e-2

    def test_determinism_modulo_wall_time(self):
        spec = self.small_spec()
        a = bench.run_experiment(spec)
        b = bench.run_experiment(spec)
        for ra, rb in zip(a, b):
            assert (ra.method, ra.seed, ra.iters, ra.final_res, ra.err_sq) == \
                   (rb.method, rb.seed, rb.iters, rb.final_res, rb.err_sq)

    def test_threaded_matches_serial(self, monkeypatch):
        spec = self.small_spec()
        serial = bench.run_experiment(spec)
        monkeypatch.setenv("KMZ_THREADS", "4")
        threaded = bench.run_experiment(spec)
        for ra, rb in zip(serial, threaded):
            assert (ra.method, ra.seed, ra.iters, ra.final_res) == \
                   (rb.method, rb.seed, rb.iters, rb.final_res)

    def test_median_iters_helper(self):
        rows = bench.run_experiment(self.small_spec())
        med = bench.median_iters(rows)
        assert set(med) == {"emrk", "memrk2"}
        assert all(v > 0 for v in med.values())

    def test_underdetermined_auto_rank_deficiency(self):
        spec = self.small_spec(m=8, n=12, methods=[("memrk", 2)], trials=1)
        rows = bench.run_experiment(spec)
        assert rows[0].final_res < 1e-8

    def test_multi_step_medians_nonincreasing(self):
        spec = bench.ExperimentSpec(
            kind="dense", m=2000, n=200,
            methods=[("memrk", 1), ("memrk", 2), ("memrk", 4), ("memrk", 6)],
            trials=5, tol=1e-6, max_outer=50_000, seed=0)
        med = bench.median_iters(bench.run_experiment(spec))
        its = [med["memrk1"], med["memrk2"], med["memrk4"], med["memrk6"]]
        assert its == sorted(its, reverse=True)


class TestConvergenceCurve:
    def test_row_count_without_convergence(self, tmp_path):
        spec = bench.ExperimentSpec(kind="dense", m=50, n=10,
                                    methods=[("emrk", 1)], tol=1e-300,
                                    max_outer=40, seed=1, trace_every=1)
        paths = bench.convergence_curve(spec, tmp_path)
        lines = paths["emrk"].read_text().splitlines()
        assert len(lines) == 42  # header + k = 0..40
        assert lines[1].startswith("0,1")

    def test_needs_trace_stride(self, tmp_path):
        spec = bench.ExperimentSpec(trace_every=0)
        with pytest.raises(ConfigError):
            bench.convergence_curve(spec, tmp_path)

    def test_multi_step_curve_dominates_single_step(self, tmp_path):
        spec = bench.ExperimentSpec(kind="dense", m=2000, n=200,
                                    methods=[("memrk", 1), ("memrk", 6)],
                                    tol=1e-300, max_outer=600, seed=2,
                                    trace_every=10)
        paths = bench.convergence_curve(spec, tmp_path)
        curves = {}
        for label, path in paths.items():
            rows = np.loadtxt(path, delimiter=",", skiprows=1)
            curves[label] = dict(zip(rows[:, 0].astype(int), rows[:, 1]))
        ks = sorted(set(curves["memrk1"]) & set(curves["memrk6"]))
        burn_in = [k for k in ks if k >= 200]
        assert burn_in
        assert all(curves["memrk6"][k] <= curves["memrk1"][k] for k in burn_in)


class TestTomoExperiment:
    def geom(self):
        return pb.TomoGeometry(image_n=8, half_width=4.0,
                               angles_deg=list(np.arange(0.0, 180.0, 20.0)),
                               rays=11, span=10.0)

    def test_budget_zero_scores_blank_image(self):
        rows, images = bench.tomo_experiment(self.geom(), 0.01,
                                             [("rek", 1)], iter_budget_factor=0)
        assert rows[0].iters == 0
        blank_psnr = bench.psnr(pb.shepp_logan_phantom(8), np.zeros((8, 8)))
        assert rows[0].psnr == pytest.approx(blank_psnr)
        assert set(images) == {"phantom"}

    def test_noiseless_reconstruction_improves_with_budget(self):
        small = bench.tomo_experiment(self.geom(), 0.0, [("memrk", 4)],
                                      iter_budget_factor=1, seed=3)[0][0].psnr
        large = bench.tomo_experiment(self.geom(), 0.0, [("memrk", 4)],
                                      iter_budget_factor=10, seed=3)[0][0].psnr
        assert large > small

    def test_exact_budget_and_images(self):
        geom = self.geom()
        rows, images = bench.tomo_experiment(geom, 0.01, [("rek", 1), ("memrk", 2)],
                                             iter_budget_factor=2, seed=4)
        m = geom.rows
        for r in rows:
            assert r.iters == 2 * m
            assert np.isfinite(r.psnr)
        assert set(images) == {"phantom", "rek", "memrk2"}
        assert images["rek"].shape == (8, 8)

    def test_determinism(self):
        a = bench.tomo_experiment(self.geom(), 0.01, [("rek", 1)],
                                  iter_budget_factor=1, seed=5)[0][0]
        b = bench.tomo_experiment(self.geom(), 0.01, [("rek", 1)],
                                  iter_budget_factor=1, seed=5)[0][0]
        assert a.psnr == b.psnr and a.final_res == b.final_res


class TestEmission:
    def test_results_header_and_empty_fields(self, tmp_path):
        path = tmp_path / "r.csv"
        bench.emit_results([], path)
        assert path.read_text() == bench.RESULT_HEADER + "\n"
        row = bench.ResultRow("rek", 5, 3, 1, 0, 17, 0.25, 1e-7)
        bench.emit_results([row], path)
        lines = path.read_text().splitlines()
        assert lines[0] == bench.RESULT_HEADER
        fields = lines[1].split(",")
        assert fields[0] == "rek" and fields[5] == "17"
        assert fields[8] == "" and fields[9] == ""  # err_sq, psnr unset

    def test_float_roundtrip_precision(self, tmp_path):
        value = 1.0 / 3.0
        row = bench.ResultRow("rek", 5, 3, 1, 0, 17, value, value, value, value)
        path = tmp_path / "r.csv"
        bench.emit_results([row], path)
        fields = path.read_text().splitlines()[1].split(",")
        assert float(fields[7]) == value

    def test_emit_meta(self, tmp_path):
        import json
        spec = bench.ExperimentSpec(seed=42)
        path = tmp_path / "meta.json"
        bench.emit_meta(spec, path)
        meta = json.loads(path.read_text())
        assert meta["spec"]["seed"] == 42
        assert "kmz_version" in meta

    def test_write_pgm(self, tmp_path):
        img = np.array([[0.0, 0.5], [1.0, 0.25]])
        path = tmp_path / "i.pgm"
        bench.write_pgm(img, path)
        lines = path.read_text().split()
        assert lines[0] == "P2" and lines[1] == "2" and lines[2] == "2"
        pixels = [int(v) for v in lines[4:]]
        assert max(pixels) == 255 and min(pixels) == 0

    def test_write_image_txt_roundtrip(self, tmp_path):
        img = np.random.default_rng(6).random((5, 5))
        path = tmp_path / "i.txt"
        bench.write_image_txt(img, path)
        assert np.array_equal(np.loadtxt(path), img)
