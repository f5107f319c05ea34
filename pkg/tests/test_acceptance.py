"""Acceptance gate: one test and one printed PASS/FAIL line per criterion.

Heavy artifacts (500-iteration anneals, the full benchmark sweep) are cached
under /tmp keyed on the package sources, so a clean tree reruns them once.
"""

import io
import math
import platform
import time

import numpy as np
import pytest
from PIL import Image

from jqf import annealer, cli, metrics, raster, texture
from jqf.annealer import AnnealConfig
from jqf.codec import EncodePlan, decode, encode, read_quant_tables
from jqf.errors import InvalidArgumentError
from jqf.qtable import (
    FusionWeights,
    fuse,
    scale_table,
    standard_tables,
    unscale_table,
)

from . import oracle_fsim
from .conftest import acceptance_record, cached
from .test_metrics import brute_force_psnr

STD_LUMA, STD_CHROMA = standard_tables()
SWEEP = (35, 50, 75, 95)


def _pillow_bytes(image, quality):
    im = Image.fromarray(image.pixels)
    if image.colorspace == raster.GRAY:
        im = im.convert("RGB")
    buf = io.BytesIO()
    im.save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


class TestTableScaling:
    def test_scaling_matches_reference_encoder_exactly(self):
        failures = []
        for q in SWEEP:
            ref = read_quant_tables(_pillow_bytes(
                raster.from_gray(np.full((16, 16), 128, np.uint8)), q))
            ours_l = np.array(scale_table(STD_LUMA, q).values)
            ours_c = np.array(scale_table(STD_CHROMA, q).values)
            if not (np.array_equal(ref[0], ours_l) and np.array_equal(ref[1], ours_c)):
                failures.append(q)
        identity = (
            scale_table(STD_LUMA, 50).values == STD_LUMA.values
            and scale_table(STD_CHROMA, 50).values == STD_CHROMA.values
        )
        ok = not failures and identity
        acceptance_record(
            "table-scaling",
            ok,
            "byte-for-byte vs reference encoder DQT at Q=35/50/75/95; "
            "Q50 identity %s" % identity,
        )


class TestTemperatureSchedule:
    def test_schedule_endpoints_and_clamp(self):
        config = AnnealConfig(iterations=2000, p=10.0)
        t0 = annealer.temperature(0, config)
        t_end = annealer.temperature(2000, config)
        endpoint_ok = t0 == 1.0 and abs(t_end - 1.0 / 11.0) < 1e-12

        rng = np.random.default_rng(2024)
        clamp_ok = True
        for _ in range(5000):
            s_i = float(rng.uniform(0, 1e7))
            s_prev = float(rng.uniform(1e-7, 1e7))
            i = int(rng.integers(0, 2001))
            p = annealer.accept_probability(s_i, s_prev, i, config)
            if not (0.0 <= p <= 1.0):
                clamp_ok = False
                break
        acceptance_record(
            "temperature-schedule",
            endpoint_ok and clamp_ok,
            "T(0)=%r, T(2000)-1/11=%.2e (tol 1e-12); acceptance probability "
            "clamped to [0,1] over 5000 random triples" % (t0, t_end - 1.0 / 11.0),
        )


class TestMetricOracles:
    def test_psnr_against_brute_force(self, metric_suite):
        worst = 0.0
        for name, ref, test in metric_suite:
            ours = metrics.psnr(ref, test)
            oracle = brute_force_psnr(ref.luma(), test.luma())
            worst = max(worst, abs(ours - oracle))
        acceptance_record(
            "psnr-oracle", worst < 1e-9,
            "max |ours - brute force| = %.3e over 10 images (tol 1e-9)" % worst,
        )

    def test_ssim_against_skimage(self, metric_suite):
        from skimage.metrics import structural_similarity as skimage_ssim

        worst = 0.0
        for name, ref, test in metric_suite:
            ours = metrics.ssim(ref, test)
            oracle = skimage_ssim(
                ref.luma(), test.luma(), data_range=255.0,
                gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
            )
            worst = max(worst, abs(ours - oracle))
        acceptance_record(
            "ssim-oracle", worst < 1e-4,
            "max |ours - scikit-image| = %.3e over 10 images (tol 1e-4)" % worst,
        )

    def test_fsim_against_reference_port(self, metric_suite):
        worst = 0.0
        for name, ref, test in metric_suite:
            ours = metrics.fsim(ref, test)
            oracle = oracle_fsim.fsim_reference(ref.luma(), test.luma())
            worst = max(worst, abs(ours - oracle))
        acceptance_record(
            "fsim-oracle", worst < 5e-3,
            "max |ours - reference port| = %.3e over 10 images (tol 5e-3)" % worst,
        )

    def test_self_similarity(self, metric_suite):
        _, ref, _ = metric_suite[0]
        p = metrics.psnr(ref, ref)
        s = metrics.ssim(ref, ref)
        f = metrics.fsim(ref, ref)
        ok = p == math.inf and s == 1.0 and f == 1.0
        acceptance_record(
            "metric-self-similarity", ok,
            "psnr=%r ssim=%r fsim=%r on identical input" % (p, s, f),
        )


def _anneal_mosaic_q95(mixed_mosaic):
    config = AnnealConfig(iterations=500, quality=95, gamma=0.01, seed=1337)
    results = []
    for _ in range(3):
        table, trace = annealer.anneal(mixed_mosaic, config)
        results.append((table.values, trace.to_csv(),
                        trace.baseline_size, trace.baseline_fsim))
    return results


@pytest.fixture(scope="module")
def q95_runs(mixed_mosaic_512):
    return cached(
        "acceptance_anneal_q95",
        lambda: _anneal_mosaic_q95(mixed_mosaic_512),
    )


class TestAnnealing:
    def test_feasibility_and_size_reduction(self, mixed_mosaic_512, q95_runs):
        values, _, baseline_size, _ = q95_runs[0]
        from jqf.qtable import QuantTable

        table = QuantTable(values=values, component_kind=STD_LUMA.component_kind)
        chroma = scale_table(STD_CHROMA, 95)
        std_l = scale_table(STD_LUMA, 95)
        plan = EncodePlan(mixed_mosaic_512, subsampling="4:2:0")
        cand_blob = plan.finish(table, chroma)
        base_blob = plan.finish(std_l, chroma)
        assert base_blob.size_bytes == baseline_size

        candidate_img = decode(cand_blob.data)
        baseline_img = decode(base_blob.data)
        feasible = metrics.quality_within_tolerance(
            mixed_mosaic_512, candidate_img, baseline_img, 0.01
        )
        reduction = 1.0 - cand_blob.size_bytes / base_blob.size_bytes
        ok = feasible and cand_blob.size_bytes < base_blob.size_bytes and reduction >= 0.05
        acceptance_record(
            "annealing-512-mosaic", ok,
            "M=500 Q=95 gamma=0.01: feasible=%s, %d -> %d bytes "
            "(%.1f%% below standard, needs >=5%%)" % (
                feasible, base_blob.size_bytes, cand_blob.size_bytes,
                100 * reduction),
        )

    def test_three_runs_bit_identical(self, q95_runs):
        csvs = [r[1] for r in q95_runs]
        tables = [r[0] for r in q95_runs]
        ok = csvs[0] == csvs[1] == csvs[2] and tables[0] == tables[1] == tables[2]
        acceptance_record(
            "annealing-determinism", ok,
            "3 seeded runs: trace CSVs bit-identical=%s, tables identical=%s" % (
                csvs[0] == csvs[1] == csvs[2], tables[0] == tables[1] == tables[2]),
        )


class TestFusion:
    def test_fusion_properties(self):
        table = scale_table(STD_LUMA, 75)
        identity_ok = fuse([table], FusionWeights({0: 1.0})).values == table.values

        t_lo = scale_table(STD_LUMA, 40)
        t_hi = scale_table(STD_LUMA, 85)
        rng = np.random.default_rng(7)
        convex_ok = True
        for _ in range(200):
            w = float(rng.uniform())
            fused = np.array(
                fuse([t_lo, t_hi], FusionWeights({0: w, 1: 1.0 - w})).values,
                dtype=np.float64,
            )
            exact = w * np.array(t_lo.values) + (1 - w) * np.array(t_hi.values)
            if np.abs(fused - exact).max() > 1.0:
                convex_ok = False
                break

        try:
            FusionWeights({0: 0.4, 1: 0.4})
            validation_ok = False
        except InvalidArgumentError:
            validation_ok = True

        ok = identity_ok and convex_ok and validation_ok
        acceptance_record(
            "fusion", ok,
            "identity=%s, convex within +/-1 of exact blend over 200 draws=%s, "
            "non-unit weight sum rejected=%s" % (identity_ok, convex_ok, validation_ok),
        )


def _run_sweep(corpus_dir, annealed_model):
    report = cli.run_benchmark(
        corpus_dir, annealed_model, qualities=SWEEP, table_files=(),
        out_csv=None, out_json=None,
    )
    return report


@pytest.fixture(scope="module")
def sweep(corpus_dir, annealed_model):
    return cached(
        "acceptance_sweep",
        lambda: _run_sweep(corpus_dir, annealed_model),
    )


class TestEndToEnd:
    def test_corpus_size(self, corpus_dir, corpus_photo_count):
        n = len(list(corpus_dir.glob("*.png")))
        ok = corpus_photo_count >= 20 and n >= corpus_photo_count
        acceptance_record(
            "corpus", ok,
            "%d images, %d photographs (needs >=20 photographs)" % (
                n, corpus_photo_count),
        )

    def test_size_improves_at_every_quality(self, sweep):
        fused = {a["quality"]: a for a in sweep.aggregates if a["kind"] == "fused"}
        ok = (
            not sweep.errors
            and set(fused) == set(SWEEP)
            and all(fused[q]["size_pct"] < 0.0 for q in SWEEP)
        )
        detail = ", ".join(
            "Q%d %+0.2f%%" % (q, fused[q]["size_pct"]) for q in SWEEP if q in fused
        )
        acceptance_record(
            "end-to-end-size", ok,
            "mean fused-vs-standard size delta over %d images: %s "
            "(all must be negative)" % (
                fused.get(SWEEP[0], {}).get("images", 0), detail),
        )

    def test_quality_held_at_q95(self, sweep):
        fused = {a["quality"]: a for a in sweep.aggregates if a["kind"] == "fused"}
        drop = fused[95]["fsim_pct"]
        ok = drop >= -1.0
        acceptance_record(
            "end-to-end-quality", ok,
            "mean FSIM delta at Q95: %+0.4f%% (must stay above -1%%)" % drop,
        )


class TestPredictionLatency:
    def test_predict_and_fuse_under_one_second(self, corpus_dir, annealed_model):
        model = texture.load_model(annealed_model)
        base = raster.read_image(corpus_dir / "grass.png")
        tiled = np.tile(base.pixels, (4, 4))[:2048, :2048]
        image = raster.from_gray(np.ascontiguousarray(tiled))
        assert max(image.width, image.height) == 2048

        cli.fused_table_for(image, model, 75)  # warm caches
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            cli.fused_table_for(image, model, 75)
            times.append(time.perf_counter() - t0)
        best = min(times)
        machine = "%s, %d cores, python %s" % (
            platform.machine(), __import__("os").cpu_count(),
            platform.python_version(),
        )
        acceptance_record(
            "prediction-latency", best < 1.0,
            "predict+fuse on 2048x2048: %.3fs best of 3 (limit 1.0s; %s)" % (
                best, machine),
        )


class TestCodecInterop:
    def test_all_outputs_decode_and_sizes_match_reference(
        self, corpus_dir, annealed_model
    ):
        model = texture.load_model(annealed_model)
        files = sorted(corpus_dir.glob("*.png"))
        produced = 0
        decoded = 0
        ratio_failures = []
        worst_ratio = 0.0
        for path in files:
            image = raster.read_image(path)
            dist = texture.predict_distribution(image, model)
            for q in SWEEP:
                std_l = scale_table(STD_LUMA, q)
                std_c = scale_table(STD_CHROMA, q)
                tables = [
                    scale_table(unscale_table(model.tables[t], model.anneal_quality), q)
                    for t in sorted(dist.weights)
                ]
                fused = fuse(tables, FusionWeights(dist.weights))
                for kind, luma in (("standard", std_l), ("fused", fused)):
                    blob = encode(image, luma, std_c)
                    produced += 1
                    try:
                        with Image.open(io.BytesIO(blob.data)) as im:
                            im.load()
                            if (im.width, im.height) == (image.width, image.height):
                                decoded += 1
                    except Exception:
                        pass
                    if kind == "standard":
                        ref_size = len(_pillow_bytes(image, q))
                        ratio = blob.size_bytes / ref_size - 1.0
                        worst_ratio = max(worst_ratio, abs(ratio))
                        if abs(ratio) > 0.10:
                            ratio_failures.append((path.name, q, ratio))
        ok = decoded == produced and not ratio_failures
        acceptance_record(
            "codec-interop", ok,
            "%d/%d files decode in the third-party decoder; standard-table "
            "size vs reference encoder worst |delta| %.2f%% (limit 10%%)" % (
                decoded, produced, 100 * worst_ratio),
        )
