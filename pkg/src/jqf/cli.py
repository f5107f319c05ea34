"""Command-line front end: train, deploy, and benchmark quantization tables.

Subcommands:
  cluster    corpus -> texture model (centroids) + patch assignment CSV
  anneal     model + corpus -> per-texture optimal tables + trace CSVs
  compress   image + trained model -> fused-table JPEG + JSON report
  benchmark  corpus + model -> per-image metrics CSV/JSON + aggregate deltas
  metrics    two images -> PSNR/SSIM/FSIM
  visualize  two table files -> text/HTML 8x8 diff

Flags mirror config-file keys (line-oriented `key = value`); precedence is
flag > config file > preset > built-in default.  JQF_WORKERS sets the
default worker count.  Commands exit 0 on success and print one
machine-readable `error: <Type>: <message>` line on failure.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import annealer, metrics, texture
from .codec import decode, encode
from .errors import InvalidArgumentError, JqfError
from .qtable import (
    FusionWeights,
    fuse,
    read_table,
    scale_table,
    standard_tables,
    unscale_table,
    write_table,
)
from .raster import read_image

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff")
BENCH_QUALITIES = (35, 50, 75, 95)


# ------------------------------------------------------------------- helpers


def corpus_files(corpus_dir):
    root = Path(corpus_dir)
    if not root.is_dir():
        raise InvalidArgumentError("corpus directory %s does not exist" % root)
    files = sorted(
        p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file()
    )
    if not files:
        raise InvalidArgumentError("no images found under %s" % root)
    return files


def load_config_file(path):
    """Parse `key = value` lines; '#' starts a comment; keys use - or _."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidArgumentError(
                    "%s:%d: expected key=value, got %r" % (path, lineno, raw.strip())
                )
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def preset_config(name):
    ref = resources.files("jqf").joinpath("presets", name + ".conf")
    if not ref.is_file():
        raise InvalidArgumentError("unknown preset %r" % name)
    values = {}
    for lineno, raw in enumerate(ref.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _scaled_standard(quality):
    std_luma, std_chroma = standard_tables()
    return scale_table(std_luma, quality), scale_table(std_chroma, quality)


def _retarget(table, from_quality, to_quality):
    """Re-express a table stored at one quality at another quality."""
    if from_quality == to_quality:
        return table
    return scale_table(unscale_table(table, from_quality), to_quality)


def fused_table_for(image, model, quality):
    """Predict an image's texture distribution and fuse its luminance table."""
    if len(model.tables) != model.k:
        raise InvalidArgumentError(
            "model has %d/%d per-texture tables; run anneal first"
            % (len(model.tables), model.k)
        )
    dist = texture.predict_distribution(image, model)
    tables = [
        _retarget(model.tables[tid], model.anneal_quality, quality)
        for tid in sorted(dist.weights)
    ]
    fused = fuse(tables, FusionWeights(dist.weights))
    return fused, dist


def _luma_metrics(original, decoded):
    return {
        "psnr": metrics.psnr(original, decoded),
        "ssim": metrics.ssim(original, decoded),
        "fsim": metrics.fsim(original, decoded),
    }


# ------------------------------------------------------------------- cluster


def run_cluster(corpus_dir, k, stride, embedder, seed, model_out, assignments_out):
    """Extract, embed, and cluster corpus patches; persist model + assignments."""
    files = corpus_files(corpus_dir)
    patches = []
    for path in files:
        img = read_image(path)
        patches.extend(texture.extract_patches(img, stride, source_id=path.name))
    if not patches:
        raise InvalidArgumentError("corpus produced no patches")

    if embedder == texture.EMBEDDER_ID:
        vectors = texture.embed_batch(patches)
        embedder_id = texture.EMBEDDER_ID
    else:
        vectors, embedder_id, _ = texture.read_embedding_file(embedder)
        if vectors.shape[0] != len(patches):
            raise InvalidArgumentError(
                "embedding file has %d vectors for %d patches"
                % (vectors.shape[0], len(patches))
            )
    if k > len(patches):
        raise InvalidArgumentError(
            "k=%d exceeds patch count %d" % (k, len(patches))
        )

    centroids = texture.kmeans(vectors.astype(np.float64), k, seed).astype(np.float32)
    model = texture.TextureModel(centroids=centroids, embedder_id=embedder_id)
    texture.save_model(model, model_out)

    labels = texture.nearest_centroids(vectors.astype(np.float64), model.centroids)
    with open(assignments_out, "w", newline="") as fh:
        fh.write(
            "# cluster corpus=%s k=%d stride=%d embedder=%s seed=%d\n"
            % (corpus_dir, k, stride, embedder, seed)
        )
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patch", "source", "origin_x", "origin_y", "cluster"])
        for i, (p, lab) in enumerate(zip(patches, labels)):
            writer.writerow([i, p.source_image, p.origin[0], p.origin[1], int(lab)])
    return model


# -------------------------------------------------------------------- anneal


def build_mosaics(model, corpus_dir, stride, max_patches, seed):
    """One mosaic per texture id from corpus patches nearest to each centroid.

    Returns (mosaics, empty_ids); textures that attracted no patches get no
    mosaic and are reported in empty_ids.
    """
    files = corpus_files(corpus_dir)
    patches = []
    for path in files:
        img = read_image(path)
        patches.extend(texture.extract_patches(img, stride, source_id=path.name))
    vectors = texture.embed_batch(patches).astype(np.float64)
    labels = texture.nearest_centroids(vectors, model.centroids)
    mosaics = {}
    empty = []
    for tid in range(model.k):
        idx = np.nonzero(labels == tid)[0]
        if len(idx) == 0:
            empty.append(tid)
            continue
        group = [patches[i] for i in idx]
        mosaics[tid] = texture.stitch_mosaic(
            group, max_patches, seed=np.random.SeedSequence([seed, tid])
        )
    return mosaics, empty


def run_anneal(model_file, corpus_dir, quality, iterations, p, gamma, workers, seed,
               stride, max_patches, model_out, traces_dir):
    """Anneal per-texture tables on corpus mosaics and persist the result."""
    model = texture.load_model(model_file)
    config = annealer.AnnealConfig(
        iterations=iterations, p=p, gamma=gamma, quality=quality, seed=seed
    )
    mosaics, empty = build_mosaics(model, corpus_dir, stride, max_patches, seed)
    for tid in empty:
        print("warning: texture %d has no patches; keeping scaled standard table" % tid,
              file=sys.stderr)

    partial = texture.TextureModel(
        centroids=model.centroids[[t for t in range(model.k) if t not in empty]],
        embedder_id=model.embedder_id,
    ) if empty else model

    if empty:
        # anneal only the populated textures, on a compacted id space
        keep = [t for t in range(model.k) if t not in empty]
        remap = {new: old for new, old in enumerate(keep)}
        compact_mosaics = {new: mosaics[remap[new]] for new in range(len(keep))}
        annealed, traces_c = annealer.anneal_all(partial, compact_mosaics, config,
                                                 workers=workers)
        std_luma = scale_table(standard_tables()[0], quality)
        tables = {tid: std_luma for tid in empty}
        traces = {}
        for new, old in remap.items():
            tables[old] = annealed.tables[new]
            traces[old] = traces_c[new]
        updated = model.with_tables(tables, anneal_quality=quality)
    else:
        updated, traces = annealer.anneal_all(model, mosaics, config, workers=workers)

    texture.save_model(updated, model_out)
    traces_dir = Path(traces_dir)
    traces_dir.mkdir(parents=True, exist_ok=True)
    for tid, trace in traces.items():
        trace.write_csv(traces_dir / ("texture-%03d.csv" % tid))
    params = {
        "command": "anneal", "model": str(model_file), "corpus": str(corpus_dir),
        "quality": quality, "iterations": iterations, "p": p, "gamma": gamma,
        "workers": workers, "seed": seed, "stride": stride,
        "max_patches": max_patches,
    }
    with open(traces_dir / "params.json", "w") as fh:
        json.dump(params, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return updated


# ------------------------------------------------------------------ compress


def run_compress(image_path, model_file, quality, output, report_out=None):
    """Encode one image with its fused table; report against the standard table."""
    model = texture.load_model(model_file)
    image = read_image(image_path)
    t0 = time.perf_counter()
    fused, dist = fused_table_for(image, model, quality)
    fuse_seconds = time.perf_counter() - t0

    std_luma, std_chroma = _scaled_standard(quality)
    blob = encode(image, fused, std_chroma)
    std_blob = encode(image, std_luma, std_chroma)
    with open(output, "wb") as fh:
        fh.write(blob.data)

    decoded = decode(blob.data)
    std_decoded = decode(std_blob.data)
    report = {
        "command": "compress",
        "image": str(image_path),
        "model": str(model_file),
        "quality": quality,
        "output": str(output),
        "fuse_seconds": fuse_seconds,
        "distribution": {str(t): w for t, w in sorted(dist.weights.items())},
        "fused_table": list(fused.values),
        "size_bytes": {"fused": blob.size_bytes, "standard": std_blob.size_bytes},
        "metrics": {
            "fused": _luma_metrics(image, decoded),
            "standard": _luma_metrics(image, std_decoded),
        },
    }
    if report_out:
        with open(report_out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


# ----------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class BenchmarkReport:
    """Per-image rows plus aggregate mean percentage deltas vs standard."""

    rows: tuple       # dicts: file, kind, quality, size, psnr, ssim, fsim
    aggregates: tuple  # dicts: kind, quality, images, size_pct, psnr_pct, ...
    errors: tuple

    def write_csv(self, path, params=None):
        with open(path, "w", newline="") as fh:
            if params:
                fh.write("# benchmark %s\n" % " ".join(
                    "%s=%s" % (k, params[k]) for k in sorted(params)))
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["file", "kind", "quality", "size", "psnr", "ssim", "fsim"])
            for r in self.rows:
                writer.writerow([
                    r["file"], r["kind"], r["quality"], r["size"],
                    repr(r["psnr"]), repr(r["ssim"]), repr(r["fsim"]),
                ])
            writer.writerow([])
            writer.writerow([
                "kind", "quality", "images",
                "size_pct", "psnr_pct", "ssim_pct", "fsim_pct",
            ])
            for a in self.aggregates:
                writer.writerow([
                    a["kind"], a["quality"], a["images"],
                    repr(a["size_pct"]), repr(a["psnr_pct"]),
                    repr(a["ssim_pct"]), repr(a["fsim_pct"]),
                ])

    def write_json(self, path, params=None):
        payload = {
            "rows": list(self.rows),
            "aggregates": list(self.aggregates),
            "errors": list(self.errors),
        }
        if params:
            payload["params"] = params
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _aggregate(rows):
    """Mean percentage deltas vs the standard rows, per (kind, quality)."""
    std = {}
    for r in rows:
        if r["kind"] == "standard":
            std[(r["file"], r["quality"])] = r
    out = []
    kinds = sorted({r["kind"] for r in rows})
    qualities = sorted({r["quality"] for r in rows})
    for kind in kinds:
        for q in qualities:
            deltas = {"size": [], "psnr": [], "ssim": [], "fsim": []}
            n = 0
            for r in rows:
                if r["kind"] != kind or r["quality"] != q:
                    continue
                base = std.get((r["file"], q))
                if base is None:
                    continue
                n += 1
                for key in deltas:
                    deltas[key].append((r[key] / base[key] - 1.0) * 100.0)
            if n == 0:
                continue
            out.append({
                "kind": kind,
                "quality": q,
                "images": n,
                "size_pct": float(np.mean(deltas["size"])),
                "psnr_pct": float(np.mean(deltas["psnr"])),
                "ssim_pct": float(np.mean(deltas["ssim"])),
                "fsim_pct": float(np.mean(deltas["fsim"])),
            })
    return out


def run_benchmark(corpus_dir, model_file, qualities=BENCH_QUALITIES,
                  table_files=(), out_csv=None, out_json=None):
    """Encode/decode/score every corpus image per quality and table kind."""
    model = texture.load_model(model_file) if model_file else None
    files = corpus_files(corpus_dir)
    externals = []
    for tf in table_files:
        table, stored_q = read_table(tf)
        externals.append((Path(tf).name, table, stored_q))

    rows = []
    errors = []
    for path in files:
        try:
            image = read_image(path)
            fused_by_q = {}
            if model is not None:
                dist = texture.predict_distribution(image, model)
                for q in qualities:
                    tables = [
                        _retarget(model.tables[tid], model.anneal_quality, q)
                        for tid in sorted(dist.weights)
                    ]
                    fused_by_q[q] = fuse(tables, FusionWeights(dist.weights))
            for q in qualities:
                std_luma, std_chroma = _scaled_standard(q)
                variants = [("standard", std_luma)]
                if model is not None:
                    variants.append(("fused", fused_by_q[q]))
                for name, table, stored_q in externals:
                    variants.append(
                        ("external:" + name, _retarget(table, stored_q, q))
                    )
                for kind, luma in variants:
                    blob = encode(image, luma, std_chroma)
                    decoded = decode(blob.data)
                    m = _luma_metrics(image, decoded)
                    rows.append({
                        "file": path.name, "kind": kind, "quality": q,
                        "size": blob.size_bytes, **m,
                    })
        except Exception as exc:  # record and continue, per contract
            errors.append({"file": path.name, "error": "%s: %s" % (
                type(exc).__name__, exc)})
    report = BenchmarkReport(
        rows=tuple(rows), aggregates=tuple(_aggregate(rows)), errors=tuple(errors)
    )
    params = {
        "corpus": str(corpus_dir),
        "model": str(model_file) if model_file else "",
        "qualities": ",".join(str(q) for q in qualities),
        "tables": ",".join(str(t) for t in table_files),
    }
    if out_csv:
        report.write_csv(out_csv, params=params)
    if out_json:
        report.write_json(out_json, params=params)
    return report


# ----------------------------------------------------------------- visualize


def table_diff_text(table, baseline):
    """8x8 grid of current values with +/- change marks vs the baseline."""
    lines = []
    for r in range(8):
        cells = []
        for c in range(8):
            v = table.values[r * 8 + c]
            d = v - baseline.values[r * 8 + c]
            if d > 0:
                cells.append("%4d+%d" % (v, d))
            elif d < 0:
                cells.append("%4d-%d" % (v, -d))
            else:
                cells.append("%4d  " % v)
        lines.append(" ".join(cells))
    return "\n".join(lines)


def table_diff_html(table, baseline, title="quantization table diff"):
    """Single-file HTML: increases tinted red, decreases blue."""
    rows = []
    for r in range(8):
        cells = []
        for c in range(8):
            v = table.values[r * 8 + c]
            d = v - baseline.values[r * 8 + c]
            if d > 0:
                style = "background:#fbd2d2"
                note = "+%d" % d
            elif d < 0:
                style = "background:#d2defb"
                note = "%d" % d
            else:
                style = ""
                note = ""
            cells.append(
                '<td style="%s">%d<sub>%s</sub></td>' % (style, v, note)
            )
        rows.append("<tr>%s</tr>" % "".join(cells))
    return (
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\">"
        "<title>%s</title><style>"
        "table{border-collapse:collapse;font:14px monospace}"
        "td{border:1px solid #999;padding:6px 8px;text-align:right;min-width:3em}"
        "sub{color:#555}"
        "</style></head><body><h1>%s</h1><table>%s</table>"
        "<p>red = value increased vs baseline, blue = decreased.</p>"
        "</body></html>" % (title, title, "".join(rows))
    )


def run_visualize(table_file, baseline_file, out_text=None, out_html=None):
    table, _ = read_table(table_file)
    baseline, _ = read_table(baseline_file)
    text = table_diff_text(table, baseline)
    if out_text:
        with open(out_text, "w") as fh:
            fh.write(text + "\n")
    if out_html:
        html = table_diff_html(
            table, baseline,
            title="%s vs %s" % (Path(table_file).name, Path(baseline_file).name),
        )
        with open(out_html, "w") as fh:
            fh.write(html)
    return text


# ----------------------------------------------------------------- arg wiring


def _default_workers():
    env = os.environ.get("JQF_WORKERS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jqf",
        description="JPEG quantization table training, fusion, and benchmarking",
    )
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--preset", help="named built-in config (desk, full)")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="cluster corpus patches into textures")
    c.add_argument("corpus")
    c.add_argument("--k", type=int, default=8)
    c.add_argument("--stride", type=int, default=64)
    c.add_argument("--embedder", default=texture.EMBEDDER_ID,
                   help="builtin id or path to an embedding exchange file")
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--model-out", default="model.jqfm")
    c.add_argument("--assignments-out", default="assignments.csv")

    a = sub.add_parser("anneal", help="anneal per-texture tables on mosaics")
    a.add_argument("corpus")
    a.add_argument("--model", required=True)
    a.add_argument("--quality", type=int, default=50)
    a.add_argument("--iterations", type=int, default=2000)
    a.add_argument("--p", type=float, default=10.0)
    a.add_argument("--gamma", type=float, default=0.01)
    a.add_argument("--workers", type=int, default=None)
    a.add_argument("--seed", type=int, default=7)
    a.add_argument("--stride", type=int, default=64)
    a.add_argument("--max-patches", type=int, default=225)
    a.add_argument("--model-out", default=None,
                   help="default: overwrite --model in place")
    a.add_argument("--traces-dir", default="traces")

    p = sub.add_parser("compress", help="fused-table encode of one image")
    p.add_argument("image")
    p.add_argument("--model", required=True)
    p.add_argument("--quality", type=int, default=75)
    p.add_argument("--output", required=True)
    p.add_argument("--report", default=None)

    b = sub.add_parser("benchmark", help="corpus sweep vs the standard table")
    b.add_argument("corpus")
    b.add_argument("--model", default=None)
    b.add_argument("--qualities", default="35,50,75,95")
    b.add_argument("--table", action="append", default=[],
                   help="external table file to include (repeatable)")
    b.add_argument("--out-csv", default="benchmark.csv")
    b.add_argument("--out-json", default="benchmark.json")

    m = sub.add_parser("metrics", help="PSNR/SSIM/FSIM between two images")
    m.add_argument("reference")
    m.add_argument("test")
    m.add_argument("--json", action="store_true")

    v = sub.add_parser("visualize", help="diff two quantization table files")
    v.add_argument("table")
    v.add_argument("baseline")
    v.add_argument("--out-text", default=None)
    v.add_argument("--out-html", default=None)
    return parser


_CONFIG_KEYS = {
    "k", "stride", "embedder", "seed", "quality", "iterations", "p", "gamma",
    "workers", "max_patches", "qualities",
}
_INT_KEYS = {"k", "stride", "seed", "quality", "iterations", "workers", "max_patches"}
_FLOAT_KEYS = {"p", "gamma"}


def _apply_config(args, values):
    """Fill argparse defaults from a config mapping without overriding flags."""
    for key, raw in values.items():
        if key not in _CONFIG_KEYS:
            raise InvalidArgumentError("unknown config key %r" % key)
        if not hasattr(args, key) or getattr(args, "_cli_set_" + key, False):
            continue
        if key in _INT_KEYS:
            value = int(raw)
        elif key in _FLOAT_KEYS:
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        # remember which tunables were given explicitly so config can't override
        given = set()
        for tok in argv:
            if tok.startswith("--"):
                given.add(tok[2:].split("=", 1)[0].replace("-", "_"))
        for key in _CONFIG_KEYS:
            if key in given:
                setattr(args, "_cli_set_" + key, True)
        if args.preset:
            _apply_config(args, preset_config(args.preset))
        if args.config:
            _apply_config(args, load_config_file(args.config))

        if args.command == "cluster":
            run_cluster(args.corpus, args.k, args.stride, args.embedder,
                        args.seed, args.model_out, args.assignments_out)
            print("model written to %s" % args.model_out)
        elif args.command == "anneal":
            workers = args.workers if args.workers else _default_workers()
            model_out = args.model_out or args.model
            run_anneal(args.model, args.corpus, args.quality, args.iterations,
                       args.p, args.gamma, workers, args.seed, args.stride,
                       args.max_patches, model_out, args.traces_dir)
            print("annealed model written to %s" % model_out)
        elif args.command == "compress":
            report = run_compress(args.image, args.model, args.quality,
                                  args.output, args.report)
            print("wrote %s (%d bytes, standard %d bytes)" % (
                args.output, report["size_bytes"]["fused"],
                report["size_bytes"]["standard"]))
        elif args.command == "benchmark":
            qualities = tuple(int(q) for q in str(args.qualities).split(",") if q)
            report = run_benchmark(args.corpus, args.model, qualities,
                                   args.table, args.out_csv, args.out_json)
            for agg in report.aggregates:
                if agg["kind"] == "standard":
                    continue
                print("%s Q%d: size %+0.2f%% fsim %+0.4f%% over %d images" % (
                    agg["kind"], agg["quality"], agg["size_pct"],
                    agg["fsim_pct"], agg["images"]))
            if report.errors:
                print("%d image(s) failed; see %s" % (
                    len(report.errors), args.out_json), file=sys.stderr)
        elif args.command == "metrics":
            ref = read_image(args.reference)
            test = read_image(args.test)
            result = _luma_metrics(ref, test)
            if args.json:
                print(json.dumps(result, sort_keys=True))
            else:
                for name in ("psnr", "ssim", "fsim"):
                    print("%s %.6f" % (name, result[name]))
        elif args.command == "visualize":
            text = run_visualize(args.table, args.baseline,
                                 args.out_text, args.out_html)
            if not args.out_text:
                print(text)
        return 0
    except (JqfError, OSError) as exc:
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
