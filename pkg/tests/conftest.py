"""Shared fixtures: benchmark corpus, metric suite, trained models.

The corpus is assembled offline from photographs bundled with scikit-image
and scikit-learn plus two seeded synthetic textures.  Expensive artifacts
(clustered/annealed models) are cached under /tmp keyed by a hash of the
package sources, so a code change invalidates the cache.
"""

import hashlib
import io
import json
import pickle
from pathlib import Path

import numpy as np
import pytest
from PIL import Image, ImageFilter

from jqf import raster, texture

PKG_ROOT = Path(__file__).resolve().parent.parent
CACHE_ROOT = Path("/tmp/jqf-test-cache")
CORPUS_MAX_DIM = 768


def _source_hash():
    digest = hashlib.sha256()
    for path in sorted((PKG_ROOT / "src").rglob("*.py")):
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


def cache_dir():
    d = CACHE_ROOT / _source_hash()
    d.mkdir(parents=True, exist_ok=True)
    return d


def cached(name, build):
    """Load a pickled artifact if the sources have not changed, else build."""
    path = cache_dir() / (name + ".pkl")
    if path.exists():
        with open(path, "rb") as fh:
            return pickle.load(fh)
    value = build()
    with open(path, "wb") as fh:
        pickle.dump(value, fh)
    return value


# ------------------------------------------------------------------- corpus


def _synthetic_weave(seed, size=512):
    """Seeded band-limited noise texture; photographic in statistics."""
    rng = np.random.default_rng(seed)
    base = rng.normal(0.0, 1.0, (size, size))
    spectrum = np.fft.rfft2(base)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    r = np.hypot(fy, fx)
    spectrum *= np.exp(-((r - 0.12) ** 2) / (2 * 0.05**2)) + 0.15 / (1.0 + (r / 0.02) ** 2)
    plane = np.fft.irfft2(spectrum, s=(size, size))
    plane -= plane.min()
    plane *= 255.0 / plane.max()
    return raster.from_gray(plane.astype(np.uint8))


def _synthetic_gradient_grain(seed, size=512):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    waves = (
        110.0
        + 60.0 * np.sin(2 * np.pi * (0.013 * x + 0.007 * y))
        + 40.0 * np.sin(2 * np.pi * (0.002 * x * y / size + 0.021 * y))
    )
    grain = rng.normal(0.0, 9.0, (size, size))
    plane = np.clip(waves + grain, 0, 255)
    return raster.from_gray(plane.astype(np.uint8))


def _skimage_photos():
    from skimage import data

    loaders = {
        "astronaut": lambda: raster.from_rgb(data.astronaut()),
        "brick": lambda: raster.from_gray(data.brick()),
        "camera": lambda: raster.from_gray(data.camera()),
        "cell": lambda: raster.from_gray(data.cell()),
        "chelsea": lambda: raster.from_rgb(data.chelsea()),
        "clock": lambda: raster.from_gray(data.clock()),
        "coffee": lambda: raster.from_rgb(data.coffee()),
        "coins": lambda: raster.from_gray(data.coins()),
        "grass": lambda: raster.from_gray(data.grass()),
        "gravel": lambda: raster.from_gray(data.gravel()),
        "hubble": lambda: raster.from_rgb(data.hubble_deep_field()),
        "ihc": lambda: raster.from_rgb(data.immunohistochemistry()),
        "micro": lambda: raster.from_gray(data.microaneurysms()),
        "moon": lambda: raster.from_gray(data.moon()),
        "motorcycle_l": lambda: raster.from_rgb(data.stereo_motorcycle()[0]),
        "motorcycle_r": lambda: raster.from_rgb(data.stereo_motorcycle()[1]),
        "page": lambda: raster.from_gray(data.page()),
        "retina": lambda: raster.from_rgb(np.asarray(data.retina())[:, :, :3]),
        "rocket": lambda: raster.from_rgb(data.rocket()),
        "text": lambda: raster.from_gray(data.text()),
    }
    return loaders


def _sklearn_photos():
    from sklearn.datasets import load_sample_image

    return {
        "china": lambda: raster.from_rgb(load_sample_image("china.jpg")),
        "flower": lambda: raster.from_rgb(load_sample_image("flower.jpg")),
    }


def build_corpus(dest):
    """24 deterministic images: 22 photographs + 2 synthetic textures."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    loaders = {}
    loaders.update(_skimage_photos())
    loaders.update(_sklearn_photos())
    photo_count = len(loaders)
    loaders["weave"] = lambda: _synthetic_weave(2024)
    loaders["grain"] = lambda: _synthetic_gradient_grain(2025)
    for name in sorted(loaders):
        img = raster.resize_max_dim(loaders[name](), CORPUS_MAX_DIM)
        raster.write_png(img, dest / (name + ".png"))
    return photo_count


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    dest = cache_dir() / "corpus"
    marker = dest / "DONE.json"
    if not marker.exists():
        photos = build_corpus(dest)
        marker.write_text(json.dumps({"photos": photos}))
    return dest


@pytest.fixture(scope="session")
def corpus_photo_count(corpus_dir):
    return json.loads((corpus_dir / "DONE.json").read_text())["photos"]


# -------------------------------------------------------------- metric suite


def _jpeg_distort(image, quality):
    buf = io.BytesIO()
    Image.fromarray(image.pixels).save(buf, format="JPEG", quality=quality)
    with Image.open(buf) as im:
        if image.colorspace == raster.GRAY:
            return raster.from_gray(np.asarray(im.convert("L"), dtype=np.uint8))
        return raster.from_rgb(np.asarray(im.convert("RGB"), dtype=np.uint8))


def _noise_distort(image, sigma, seed):
    rng = np.random.default_rng(seed)
    noisy = image.pixels.astype(np.float64) + rng.normal(0, sigma, image.pixels.shape)
    return raster.RasterImage(np.clip(noisy, 0, 255).astype(np.uint8), image.colorspace)


def _blur_distort(image, radius):
    blurred = Image.fromarray(image.pixels).filter(ImageFilter.GaussianBlur(radius))
    return raster.RasterImage(np.asarray(blurred, dtype=np.uint8), image.colorspace)


def build_metric_suite(corpus):
    """Ten fixed (reference, distorted) pairs over ten distinct images."""
    def img(name):
        return raster.resize_max_dim(raster.read_image(corpus / (name + ".png")), 512)

    return [
        ("camera-jpeg25", img("camera"), _jpeg_distort(img("camera"), 25)),
        ("astronaut-jpeg40", img("astronaut"), _jpeg_distort(img("astronaut"), 40)),
        ("coffee-jpeg60", img("coffee"), _jpeg_distort(img("coffee"), 60)),
        ("brick-jpeg80", img("brick"), _jpeg_distort(img("brick"), 80)),
        ("moon-jpeg92", img("moon"), _jpeg_distort(img("moon"), 92)),
        ("grass-noise3", img("grass"), _noise_distort(img("grass"), 3.0, 31)),
        ("coins-noise8", img("coins"), _noise_distort(img("coins"), 8.0, 32)),
        ("chelsea-blur1", img("chelsea"), _blur_distort(img("chelsea"), 1.0)),
        ("rocket-blur2", img("rocket"), _blur_distort(img("rocket"), 2.0)),
        ("text-jpeg35", img("text"), _jpeg_distort(img("text"), 35)),
    ]


@pytest.fixture(scope="session")
def metric_suite(corpus_dir):
    return build_metric_suite(corpus_dir)


# ------------------------------------------------------------- mosaic, model


def build_mixed_mosaic(corpus, side_patches=8, seed=404):
    """Square mosaic mixing several source textures, side_patches^2 tiles."""
    names = ("brick", "grass", "gravel", "camera", "moon")
    patches = []
    for name in names:
        img = raster.read_image(corpus / (name + ".png"))
        patches.extend(texture.extract_patches(img, 64, source_id=name))
    return texture.stitch_mosaic(
        patches, side_patches * side_patches, seed=np.random.SeedSequence(seed)
    )


@pytest.fixture(scope="session")
def mixed_mosaic_512(corpus_dir):
    return build_mixed_mosaic(corpus_dir)


@pytest.fixture(scope="session")
def desk_model(corpus_dir):
    """K=8 texture model clustered from the corpus (fast, no tables)."""
    from jqf import cli

    def build():
        out = cache_dir() / "desk_model.jqfm"
        cli.run_cluster(
            corpus_dir, k=8, stride=64, embedder=texture.EMBEDDER_ID, seed=7,
            model_out=out, assignments_out=cache_dir() / "desk_assignments.csv",
        )
        return out.read_bytes()

    raw = cached("desk_model_bytes", build)
    path = cache_dir() / "desk_model.jqfm"
    path.write_bytes(raw)
    return path


@pytest.fixture(scope="session")
def annealed_model(corpus_dir, desk_model):
    """Desk model annealed at Q50, M=500; the heavy session artifact."""
    from jqf import cli

    def build():
        out = cache_dir() / "annealed_model.jqfm"
        cli.run_anneal(
            desk_model, corpus_dir, quality=50, iterations=500, p=10.0,
            gamma=0.01, workers=1, seed=7, stride=64, max_patches=64,
            model_out=out, traces_dir=cache_dir() / "anneal_traces",
        )
        return out.read_bytes()

    raw = cached("annealed_model_bytes", build)
    path = cache_dir() / "annealed_model.jqfm"
    path.write_bytes(raw)
    return path


# -------------------------------------------------------- acceptance report

_ACCEPTANCE_LINES = []


def acceptance_record(name, ok, detail):
    line = "%s  %s: %s" % ("PASS" if ok else "FAIL", name, detail)
    _ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
