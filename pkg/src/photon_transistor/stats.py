"""Estimators turning shot records into the derived observables:
transmission spectra, bimodal count histograms, switching contrast,
transistor gain, retrieval decay curves and the gate-source
cross-correlation, each with uncertainties.

Uncertainties are bootstrap percentile intervals (1000 resamples by
default) except for spectra, which carry plain standard errors of the
mean.  Component splits can use the simulation ground truth (stored
excitation number) or a threshold on the detected counts, mirroring how
a real bimodal histogram is cut.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .engine import ShotRecord

DEFAULT_RESAMPLES = 1000


class FitError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# record access helpers

def _col(records: Sequence[ShotRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


def _detected(records: Sequence[ShotRecord]) -> np.ndarray:
    return _col(records, "detected_source")


def _bootstrap(rng: np.random.Generator, n: int, resamples: int):
    for _ in range(resamples):
        yield rng.integers(0, n, size=n)


def _percentile_errors(samples: np.ndarray, center: float) -> tuple[float, float]:
    lo, hi = np.percentile(samples, [2.5, 97.5])
    return max(center - float(lo), 0.0), max(float(hi) - center, 0.0)


# ---------------------------------------------------------------------------
# spectra

@dataclass(frozen=True)
class Spectrum:
    detunings: tuple[float, ...]
    mean_transmission: tuple[float, ...]
    sem: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.detunings) == len(self.mean_transmission) == len(self.sem)):
            raise ValueError("Spectrum fields must have equal lengths")
        if any(s < 0 for s in self.sem):
            raise ValueError("Spectrum.sem must be >= 0")


def average_spectrum(groups: Mapping[float, Sequence[ShotRecord]],
                     reference: float) -> Spectrum:
    """Mean detected source counts per detuning, normalized by
    ``reference`` (the no-gate resonant mean).  SEM is the sample
    standard deviation over sqrt(N), in the same normalized units."""
    if reference <= 0:
        raise ValueError("reference must be > 0")
    detunings, means, sems = [], [], []
    for delta in sorted(groups):
        counts = _detected(groups[delta])
        if counts.size < 2:
            raise ValueError("need at least 2 shots per detuning")
        detunings.append(delta)
        means.append(float(np.mean(counts)) / reference)
        sems.append(float(np.std(counts, ddof=1)) / math.sqrt(counts.size) / reference)
    return Spectrum(tuple(detunings), tuple(means), tuple(sems))


def resonant_reference(records: Sequence[ShotRecord]) -> float:
    """Mean detected counts of a no-gate resonant run, used to normalize."""
    counts = _detected(records)
    if counts.size == 0:
        raise ValueError("empty reference run")
    return float(np.mean(counts))


def switching_contrast(gate_records: Sequence[ShotRecord],
                       no_gate_records: Sequence[ShotRecord]) -> tuple[float, float]:
    """Relative transmission drop on resonance,
    1 - <counts with gate>/<counts without gate>, with the propagated
    standard error."""
    a = _detected(gate_records)
    b = _detected(no_gate_records)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least 2 shots in each group")
    mb = float(np.mean(b))
    if mb == 0:
        raise ValueError("zero transmission in the no-gate reference")
    ma = float(np.mean(a))
    ratio = ma / mb
    sa = float(np.std(a, ddof=1)) / math.sqrt(a.size)
    sb = float(np.std(b, ddof=1)) / math.sqrt(b.size)
    sigma = abs(ratio) * math.sqrt((sa / ma) ** 2 + (sb / mb) ** 2) if ma > 0 else sa / mb
    return 1.0 - ratio, sigma


# ---------------------------------------------------------------------------
# histograms

@dataclass(frozen=True)
class TransmissionHistogram:
    """Occurrence rates of detected source counts per detuning column.
    rates[i, c] is the fraction of shots at detunings[i] that produced c
    detected photons; every row sums to 1.  Component statistics come
    from the ground-truth stored number; threshold_* fields repeat the
    split using only the observable counts."""

    detunings: tuple[float, ...]
    count_bins: tuple[int, ...]
    rates: np.ndarray
    high_mean: tuple[float, ...]
    low_mean: tuple[float, ...]
    high_peak: tuple[float, ...]
    low_peak: tuple[float, ...]
    extinction_factor: tuple[float, ...]
    threshold: tuple[float, ...]
    threshold_extinction_factor: tuple[float, ...]

    def column(self, detuning: float) -> int:
        for i, d in enumerate(self.detunings):
            if d == detuning:
                return i
        raise KeyError(f"no column at detuning {detuning}")


def _valley_threshold(hist: np.ndarray) -> float:
    """Cut between the two components of a bimodal count histogram: the
    minimum of the (lightly smoothed) histogram between its outermost
    prominent local maxima.  NaN when the histogram is unimodal."""
    if hist.size < 3:
        return math.nan
    kernel = np.array([0.25, 0.5, 0.25])
    smooth = np.convolve(hist, kernel, mode="same")
    floor = 0.05 * smooth.max()
    maxima = []
    for i in range(smooth.size):
        left = smooth[i - 1] if i > 0 else -1.0
        right = smooth[i + 1] if i < smooth.size - 1 else -1.0
        if smooth[i] >= floor and smooth[i] >= left and smooth[i] > right:
            maxima.append(i)
    if len(maxima) < 2:
        return math.nan
    lo, hi = maxima[0], maxima[-1]
    if hi - lo < 2:
        return math.nan
    valley = lo + 1 + int(np.argmin(smooth[lo + 1: hi]))
    return float(valley)


def build_histogram(groups: Mapping[float, Sequence[ShotRecord]],
                    max_count: int | None = None) -> TransmissionHistogram:
    """Occurrence-rate histogram over detuning x detected-count bins with
    a high/low component split per column.  The extinction factor is the
    ratio of the component mean counts (no gate over gate present)."""
    if len(groups) == 0:
        raise ValueError("no detuning groups")
    all_counts = np.concatenate([_detected(groups[d]) for d in groups])
    if all_counts.size < 1:
        raise ValueError("no shots")
    top = int(max_count) if max_count is not None else int(all_counts.max())
    if top < 1:
        raise ValueError("degenerate count binning; no counts above zero")
    bins = np.arange(0, top + 1)
    detunings = sorted(groups)
    rates = np.zeros((len(detunings), bins.size))
    high_mean, low_mean, high_peak, low_peak = [], [], [], []
    factor, thresholds, thr_factor = [], [], []
    for i, delta in enumerate(detunings):
        records = groups[delta]
        if len(records) < 1:
            raise ValueError("empty detuning group")
        counts = _detected(records)
        stored = _col(records, "n_stored")
        clipped = np.clip(counts, 0, top).astype(int)
        hist = np.bincount(clipped, minlength=bins.size).astype(float)
        rates[i] = hist / hist.sum()
        hi_sel = stored == 0
        lo_sel = ~hi_sel
        hm = float(np.mean(counts[hi_sel])) if hi_sel.any() else math.nan
        lm = float(np.mean(counts[lo_sel])) if lo_sel.any() else math.nan
        high_mean.append(hm)
        low_mean.append(lm)
        high_peak.append(float(np.argmax(np.bincount(clipped[hi_sel], minlength=bins.size)))
                         if hi_sel.any() else math.nan)
        low_peak.append(float(np.argmax(np.bincount(clipped[lo_sel], minlength=bins.size)))
                        if lo_sel.any() else math.nan)
        factor.append(hm / lm if lo_sel.any() and hi_sel.any() and lm > 0 else math.nan)
        thr = _valley_threshold(rates[i])
        thresholds.append(thr)
        t_hi = counts > thr
        if t_hi.any() and (~t_hi).any() and float(np.mean(counts[~t_hi])) > 0:
            thr_factor.append(float(np.mean(counts[t_hi])) / float(np.mean(counts[~t_hi])))
        else:
            thr_factor.append(math.nan)
    return TransmissionHistogram(
        detunings=tuple(detunings),
        count_bins=tuple(int(b) for b in bins),
        rates=rates,
        high_mean=tuple(high_mean),
        low_mean=tuple(low_mean),
        high_peak=tuple(high_peak),
        low_peak=tuple(low_peak),
        extinction_factor=tuple(factor),
        threshold=tuple(thresholds),
        threshold_extinction_factor=tuple(thr_factor),
    )


def single_excitation_fraction(records: Sequence[ShotRecord]) -> tuple[float, float]:
    """P(n_stored = 1 | n_stored >= 1) with its binomial standard error."""
    stored = _col(records, "n_stored")
    present = stored >= 1
    n = int(present.sum())
    if n == 0:
        raise ValueError("no shots with a stored excitation")
    p = float(np.mean(stored[present] == 1))
    return p, math.sqrt(max(p * (1 - p), 1e-12) / n)


# ---------------------------------------------------------------------------
# gain

@dataclass(frozen=True)
class GainEstimate:
    g: float
    err_low: float
    err_high: float
    g_outside: float
    outside_err_low: float
    outside_err_high: float
    source_strength: float

    def __post_init__(self):
        if self.g > self.source_strength + 1e-9:
            raise ValueError("gain cannot exceed the source strength")


def gain(records: Sequence[ShotRecord], labels: str = "truth",
         threshold: float | None = None, resamples: int = DEFAULT_RESAMPLES,
         seed: int = 0) -> GainEstimate:
    """Gate-induced drop in transmitted source photons: the difference of
    the component means of the window-integrated photon number, in
    intracavity units (g) and after outcoupling (g_outside).

    ``labels="truth"`` splits on the stored excitation number;
    ``labels="threshold"`` splits on detected counts above/below
    ``threshold`` the way a measured histogram would be cut.
    """
    m_in = _col(records, "source_transmitted_intracavity")
    m_out = _col(records, "source_transmitted_outside")
    if labels == "truth":
        hi = _col(records, "n_stored") == 0
    elif labels == "threshold":
        if threshold is None:
            raise ValueError("threshold labels need a threshold")
        hi = _detected(records) > threshold
    else:
        raise ValueError(f"unknown label mode {labels!r}")
    lo = ~hi
    if not hi.any() or not lo.any():
        raise ValueError("both histogram components must be populated")

    def estimate(sel_hi, sel_lo):
        return (float(np.mean(m_in[sel_hi])) - float(np.mean(m_in[sel_lo])),
                float(np.mean(m_out[sel_hi])) - float(np.mean(m_out[sel_lo])))

    g_in, g_out = estimate(hi, lo)
    rng = np.random.default_rng(seed)
    boots = np.empty((resamples, 2))
    n = len(records)
    for b, idx in enumerate(_bootstrap(rng, n, resamples)):
        bh = hi[idx]
        if not bh.any() or bh.all():
            boots[b] = (g_in, g_out)
            continue
        boots[b] = (float(np.mean(m_in[idx][bh])) - float(np.mean(m_in[idx][~bh])),
                    float(np.mean(m_out[idx][bh])) - float(np.mean(m_out[idx][~bh])))
    el, eh = _percentile_errors(boots[:, 0], g_in)
    ol, oh = _percentile_errors(boots[:, 1], g_out)
    return GainEstimate(g_in, el, eh, g_out, ol, oh,
                        source_strength=float(np.mean(m_in[hi])))


# ---------------------------------------------------------------------------
# retrieval decay

@dataclass(frozen=True)
class RetrievalCurve:
    source_strengths: tuple[float, ...]
    source_strengths_outside: tuple[float, ...]
    fractions: tuple[float, ...]
    m_s0: float
    m_s0_err_low: float
    m_s0_err_high: float
    m_s0_outside: float
    m_s0_outside_err_low: float
    m_s0_outside_err_high: float
    amplitude: float
    residual_rms: float


def retrieval_curve(point_records: Sequence[Sequence[ShotRecord]],
                    condition_single: bool = False,
                    resamples: int = DEFAULT_RESAMPLES,
                    seed: int = 0) -> RetrievalCurve:
    """Retrieval probability versus source strength, normalized to the
    zero-source point, with the fitted 1/e source photon number in both
    intracavity and outside-cavity units.

    The source strength of each point is measured from its own no-gate
    shots.  ``condition_single`` restricts the retrieval fraction to
    shots that stored exactly one excitation, isolating the one-photon
    destruction constant from multi-excitation admixture.
    """
    if len(point_records) < 3:
        raise ValueError("need at least 3 source-strength points")

    arrays = []
    for records in point_records:
        stored = _col(records, "n_stored")
        if not (stored == 0).any():
            raise ValueError("point has no zero-excitation shots to measure strength")
        arrays.append((stored, _col(records, "retrieved"),
                       _col(records, "source_transmitted_intracavity"),
                       _col(records, "source_transmitted_outside")))

    def point_stats(stored, retr, m_in, m_out, idx=None):
        if idx is not None:
            stored, retr, m_in, m_out = stored[idx], retr[idx], m_in[idx], m_out[idx]
        empty = stored == 0
        if not empty.any():
            raise ValueError("no zero-excitation shots in resample")
        sel = stored == 1 if condition_single else slice(None)
        return (float(np.mean(m_in[empty])), float(np.mean(m_out[empty])),
                float(np.mean(retr[sel])))

    stats = [point_stats(*arr) for arr in arrays]
    xs_in = np.array([s[0] for s in stats])
    xs_out = np.array([s[1] for s in stats])
    raw = np.array([s[2] for s in stats])
    ref = int(np.argmin(xs_in))
    if raw[ref] <= 0:
        raise ValueError("zero retrieval at the reference point")
    fractions = raw / raw[ref]

    def fit_both(xi, xo, fr):
        _, m_in, res = fit_exponential(xi, fr)
        amp, m_out, _ = fit_exponential(xo, fr)
        return m_in, m_out, amp, res

    try:
        m_in, m_out, amp, res = fit_both(xs_in, xs_out, fractions)
    except RuntimeError as exc:
        raise FitError(f"retrieval decay fit failed: {exc}") from exc
    if not (np.isfinite(m_in) and m_in > 0):
        raise FitError("retrieval decay fit failed: non-decreasing data")

    rng = np.random.default_rng(seed)
    boots = np.empty((resamples, 2))
    for b in range(resamples):
        try:
            bs = []
            for arr in arrays:
                idx = rng.integers(0, arr[0].size, size=arr[0].size)
                bs.append(point_stats(*arr, idx=idx))
            bx = np.array([s[0] for s in bs])
            bo = np.array([s[1] for s in bs])
            br = np.array([s[2] for s in bs])
            r0 = br[int(np.argmin(bx))]
            if r0 <= 0:
                raise RuntimeError("empty reference")
            bm_in, bm_out, _, _ = fit_both(bx, bo, br / r0)
            boots[b] = (bm_in, bm_out)
        except (RuntimeError, ValueError):
            boots[b] = (m_in, m_out)
    el, eh = _percentile_errors(boots[:, 0], m_in)
    ol, oh = _percentile_errors(boots[:, 1], m_out)
    return RetrievalCurve(
        source_strengths=tuple(float(x) for x in xs_in),
        source_strengths_outside=tuple(float(x) for x in xs_out),
        fractions=tuple(float(f) for f in fractions),
        m_s0=m_in, m_s0_err_low=el, m_s0_err_high=eh,
        m_s0_outside=m_out, m_s0_outside_err_low=ol, m_s0_outside_err_high=oh,
        amplitude=amp,
        residual_rms=float(np.sqrt(np.mean(res ** 2))),
    )


# ---------------------------------------------------------------------------
# cross-correlation

@dataclass(frozen=True)
class G2Result:
    raw: float
    raw_err_low: float
    raw_err_high: float
    corrected: float
    corrected_err_low: float
    corrected_err_high: float


def g2_cross(gate_counts, source_counts, backgrounds: tuple[float, float] = (0.0, 0.0),
             resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> G2Result:
    """Normalized gate-source cross-correlation <n_g n_s>/(<n_g><n_s>)
    from paired per-shot counts, raw and with the known mean background
    counts per shot subtracted from both channels.  Values below 1 mean
    the two channels anticorrelate.  Uncertainties are bootstrap
    percentiles and generally asymmetric."""
    g = np.asarray(gate_counts, dtype=float)
    s = np.asarray(source_counts, dtype=float)
    if g.shape != s.shape or g.ndim != 1 or g.size < 2:
        raise ValueError("gate and source counts must be equal-length 1-d arrays")
    dg, ds = backgrounds

    def estimate(gv, sv):
        mg, ms = float(np.mean(gv)), float(np.mean(sv))
        if mg <= 0 or ms <= 0:
            raise ValueError("zero mean in a channel")
        raw = float(np.mean(gv * sv)) / (mg * ms)
        if mg - dg <= 0 or ms - ds <= 0:
            raise ValueError("background exceeds a channel mean")
        num = float(np.mean(gv * sv)) - mg * ds - dg * ms + dg * ds
        return raw, num / ((mg - dg) * (ms - ds))

    raw, corrected = estimate(g, s)
    rng = np.random.default_rng(seed)
    boots = np.empty((resamples, 2))
    for b, idx in enumerate(_bootstrap(rng, g.size, resamples)):
        try:
            boots[b] = estimate(g[idx], s[idx])
        except ValueError:
            boots[b] = (raw, corrected)
    rl, rh = _percentile_errors(boots[:, 0], raw)
    cl, ch = _percentile_errors(boots[:, 1], corrected)
    return G2Result(raw, rl, rh, corrected, cl, ch)


# ---------------------------------------------------------------------------
# fits

def fit_exponential(xs, ys) -> tuple[float, float, np.ndarray]:
    """Unweighted least squares of y = A exp(-x/m) on a linear scale.
    Returns (A, m, residuals)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points")
    if np.unique(x).size != x.size:
        raise ValueError("xs must be distinct")
    pos = y > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(x[pos], np.log(y[pos]), 1)
        m0 = -1.0 / slope if slope < 0 else (x.max() - x.min()) or 1.0
        a0 = math.exp(intercept)
    else:
        m0 = (x.max() - x.min()) or 1.0
        a0 = float(y.max()) or 1.0

    def model(xv, a, m):
        return a * np.exp(-xv / m)

    popt, _ = curve_fit(model, x, y, p0=(a0, m0), maxfev=20000)
    a, m = float(popt[0]), float(popt[1])
    return a, m, y - model(x, a, m)


def fit_linear(xs, ys) -> tuple[float, float]:
    """Least-squares line; returns (slope, intercept)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.all(x == x[0]):
        raise ValueError("rank-deficient input: xs are all equal")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
