"""Full-reference image quality metrics: PSNR, SSIM, and FSIM.

All three operate on luminance planes. SSIM follows the original
11x11 / sigma 1.5 Gaussian-window formulation with valid-window averaging.
FSIM follows the published phase-congruency formulation, including its
log-Gabor filter bank, noise compensation, and Scharr gradient term; the
filter bank is cached per image shape since it is expensive to build and
the same shapes recur constantly.
"""

import math

import numpy as np
from scipy.fft import fft2, ifft2
from scipy.signal import convolve2d, fftconvolve

from .errors import DimensionMismatchError
from .raster import RasterImage

# SSIM constants
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_DATA_RANGE = 255.0

# FSIM constants
_FSIM_T1 = 0.85
_FSIM_T2 = 160.0
_PC_NSCALE = 4
_PC_NORIENT = 4
_PC_MIN_WAVELENGTH = 6
_PC_MULT = 2.0
_PC_SIGMA_ONF = 0.55
_PC_DTHETA_ON_SIGMA = 1.2
_PC_K = 2.0
_PC_EPS = 1e-4

_SCHARR_DX = np.array([[3, 0, -3], [10, 0, -10], [3, 0, -3]], dtype=np.float64) / 16.0
_SCHARR_DY = _SCHARR_DX.T


def _as_plane(image):
    if isinstance(image, RasterImage):
        return image.luma()
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError("expected a 2-D luminance plane")
    return arr


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise DimensionMismatchError(
            "image dimensions differ: %s vs %s" % (a.shape, b.shape)
        )


def psnr(reference, test):
    """Peak signal-to-noise ratio in dB over luminance; +inf for identical input."""
    ref = _as_plane(reference)
    tst = _as_plane(test)
    _check_shapes(ref, tst)
    mse = np.mean((ref - tst) ** 2)
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(_DATA_RANGE / math.sqrt(mse))


def _gaussian_window():
    r = _SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * _SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


_SSIM_W = _gaussian_window()


def ssim(reference, test):
    """Mean structural similarity over luminance, valid-window Gaussian weighting."""
    ref = _as_plane(reference)
    tst = _as_plane(test)
    _check_shapes(ref, tst)
    if min(ref.shape) < _SSIM_WINDOW:
        raise DimensionMismatchError(
            "image smaller than the %dx%d SSIM window" % (_SSIM_WINDOW, _SSIM_WINDOW)
        )
    w = _SSIM_W
    c1 = (_SSIM_K1 * _DATA_RANGE) ** 2
    c2 = (_SSIM_K2 * _DATA_RANGE) ** 2
    mu1 = fftconvolve(ref, w, mode="valid")
    mu2 = fftconvolve(tst, w, mode="valid")
    s11 = fftconvolve(ref * ref, w, mode="valid") - mu1 * mu1
    s22 = fftconvolve(tst * tst, w, mode="valid") - mu2 * mu2
    s12 = fftconvolve(ref * tst, w, mode="valid") - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


# --------------------------------------------------------------------- FSIM


def _frequency_axis(n):
    # even lengths exclude +Nyquist, odd lengths are symmetric
    if n % 2:
        return np.arange(-(n - 1) // 2, (n - 1) // 2 + 1, dtype=np.float64) / (n - 1)
    return np.arange(-n // 2, n // 2, dtype=np.float64) / n


class _FilterBank:
    """Log-Gabor x angular-spread filters plus per-orientation noise constants."""

    def __init__(self, shape):
        rows, cols = shape
        x, y = np.meshgrid(_frequency_axis(cols), _frequency_axis(rows))
        radius = np.fft.ifftshift(np.sqrt(x * x + y * y))
        theta = np.fft.ifftshift(np.arctan2(-y, x))
        lp = 1.0 / (1.0 + (radius / 0.45) ** 30)  # butterworth, cutoff .45, order 15
        radius[0, 0] = 1.0  # avoid log(0) at DC; the DC bin is zeroed below anyway

        log_gabor = []
        for s in range(_PC_NSCALE):
            wavelength = _PC_MIN_WAVELENGTH * _PC_MULT**s
            fo = 1.0 / wavelength
            g = np.exp(-(np.log(radius / fo) ** 2) / (2.0 * math.log(_PC_SIGMA_ONF) ** 2))
            g *= lp
            g[0, 0] = 0.0
            log_gabor.append(g)

        theta_sigma = math.pi / _PC_NORIENT / _PC_DTHETA_ON_SIGMA
        sin_t, cos_t = np.sin(theta), np.cos(theta)
        self.filters = np.empty((_PC_NORIENT, _PC_NSCALE, rows, cols))
        self.em_n = np.empty(_PC_NORIENT)
        self.sum_an2 = np.empty(_PC_NORIENT)
        self.sum_aiaj = np.empty(_PC_NORIENT)
        scale = math.sqrt(rows * cols)
        for o in range(_PC_NORIENT):
            angl = o * math.pi / _PC_NORIENT
            ds = sin_t * math.cos(angl) - cos_t * math.sin(angl)
            dc = cos_t * math.cos(angl) + sin_t * math.sin(angl)
            dtheta = np.abs(np.arctan2(ds, dc))
            spread = np.exp(-(dtheta**2) / (2.0 * theta_sigma**2))
            ifft_filters = []
            for s in range(_PC_NSCALE):
                filt = log_gabor[s] * spread
                self.filters[o, s] = filt
                ifft_filters.append(np.real(ifft2(filt)) * scale)
            self.em_n[o] = np.sum(self.filters[o, 0] ** 2)
            self.sum_an2[o] = sum(np.sum(f * f) for f in ifft_filters)
            aiaj = 0.0
            for i in range(_PC_NSCALE - 1):
                for j in range(i + 1, _PC_NSCALE):
                    aiaj += np.sum(ifft_filters[i] * ifft_filters[j])
            self.sum_aiaj[o] = aiaj


_BANKS = {}


def _filter_bank(shape):
    bank = _BANKS.get(shape)
    if bank is None:
        bank = _FilterBank(shape)
        _BANKS[shape] = bank
    return bank


def phase_congruency(plane):
    """Phase congruency map of a 2-D plane (values in [0, 1])."""
    im = np.asarray(plane, dtype=np.float64)
    bank = _filter_bank(im.shape)
    imfft = fft2(im)
    energy_all = np.zeros(im.shape)
    an_all = np.zeros(im.shape)
    for o in range(_PC_NORIENT):
        eo = ifft2(imfft[None, :, :] * bank.filters[o], axes=(-2, -1))
        an = np.abs(eo)
        sum_an = an.sum(axis=0)
        sum_e = eo.real.sum(axis=0)
        sum_o = eo.imag.sum(axis=0)
        x_energy = np.sqrt(sum_e * sum_e + sum_o * sum_o) + _PC_EPS
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        e, od = eo.real, eo.imag
        energy = (e * mean_e + od * mean_o - np.abs(e * mean_o - od * mean_e)).sum(axis=0)

        # noise threshold estimated from the smallest-scale response
        median_e2n = np.median(an[0] ** 2)
        mean_e2n = median_e2n / math.log(2.0)
        noise_power = mean_e2n / bank.em_n[o]
        est_noise_energy2 = (
            2.0 * noise_power * bank.sum_an2[o] + 4.0 * noise_power * bank.sum_aiaj[o]
        )
        tau = math.sqrt(est_noise_energy2 / 2.0)
        est_noise_energy = tau * math.sqrt(math.pi / 2.0)
        est_noise_sigma = math.sqrt((2.0 - math.pi / 2.0) * tau * tau)
        t = (est_noise_energy + _PC_K * est_noise_sigma) / 1.7
        energy_all += np.maximum(energy - t, 0.0)
        an_all += sum_an
    return energy_all / (an_all + _PC_EPS)


def _matlab_downsample(plane, factor):
    """F x F box average then F-stride subsample, zero-padded at the borders."""
    if factor == 1:
        return plane
    kernel = np.full((factor, factor), 1.0 / (factor * factor))
    full = convolve2d(plane, kernel, mode="full")
    off = factor // 2
    rows, cols = plane.shape
    same = full[off : off + rows, off : off + cols]
    return same[::factor, ::factor]


def _gradient_magnitude(plane):
    gx = convolve2d(plane, _SCHARR_DX, mode="same")
    gy = convolve2d(plane, _SCHARR_DY, mode="same")
    return np.sqrt(gx * gx + gy * gy)


def _downsample_factor(shape):
    return max(1, int(math.floor(min(shape) / 256.0 + 0.5)))


def _fsim_combine(pc1, g1, pc2, g2):
    pc_sim = (2.0 * pc1 * pc2 + _FSIM_T1) / (pc1 * pc1 + pc2 * pc2 + _FSIM_T1)
    g_sim = (2.0 * g1 * g2 + _FSIM_T2) / (g1 * g1 + g2 * g2 + _FSIM_T2)
    pcm = np.maximum(pc1, pc2)
    return float(np.sum(g_sim * pc_sim * pcm) / np.sum(pcm))


def fsim(reference, test):
    """Feature similarity index over luminance (phase congruency + gradient)."""
    ref = _as_plane(reference)
    tst = _as_plane(test)
    _check_shapes(ref, tst)
    factor = _downsample_factor(ref.shape)
    ref = _matlab_downsample(ref, factor)
    tst = _matlab_downsample(tst, factor)
    return _fsim_combine(
        phase_congruency(ref),
        _gradient_magnitude(ref),
        phase_congruency(tst),
        _gradient_magnitude(tst),
    )


class FsimContext:
    """FSIM against one fixed reference, with the reference side precomputed.

    Annealing scores hundreds of candidates against the same raw image; the
    reference phase congruency, gradient map, and downsample factor never
    change, so compute them once.  score() matches fsim(reference, test).
    """

    def __init__(self, reference):
        ref = _as_plane(reference)
        self.shape = ref.shape
        self.factor = _downsample_factor(ref.shape)
        self._ref_small = _matlab_downsample(ref, self.factor)
        self._pc1 = phase_congruency(self._ref_small)
        self._g1 = _gradient_magnitude(self._ref_small)

    def score(self, test):
        tst = _as_plane(test)
        if tst.shape != self.shape:
            raise DimensionMismatchError(
                "image dimensions differ: %s vs %s" % (self.shape, tst.shape)
            )
        small = _matlab_downsample(tst, self.factor)
        return _fsim_combine(
            self._pc1, self._g1, phase_congruency(small), _gradient_magnitude(small)
        )


def scores_within_tolerance(baseline_score, candidate_score, gamma):
    """True when the candidate keeps at least (1 - gamma) of the baseline score."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1], got %r" % (gamma,))
    return candidate_score >= baseline_score * (1.0 - gamma)


def quality_within_tolerance(raw, candidate, baseline, gamma):
    """Feasibility check: candidate similarity to the raw image must stay
    within a relative margin gamma of the baseline's similarity."""
    return scores_within_tolerance(fsim(raw, baseline), fsim(raw, candidate), gamma)
