"""Experiment orchestration: run a preset sweep, derive its observables
and write machine-readable artifacts.

Every run emits into the output directory:

* ``manifest.json``  - fully resolved configuration of every sweep point
  plus seed, shot count and package version,
* ``sweep.csv``      - one summary row per sweep point,
* ``summary.json``   - flat map observable -> {value, err_low, err_high},
* ``histogram.csv``  - (fig3 only) occurrence rates per detuning/count bin.

Identical inputs produce byte-identical files: floats are serialized
with repr, JSON keys sorted, and no timestamps are embedded.  Writes go
through a temporary file and an atomic rename.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, qed, stats
from .config import config_as_dict
from .engine import RunConfig, run_experiment
from .presets import (FIG4AB_LINEAR_POINTS, ExperimentPreset, PresetPoint,
                      REFERENCE_TABLES, scale_point_shots)

SLOPE_ORACLE_SAMPLES = 1_000_000
GAIN_RESAMPLES = 200


class SchemaError(ValueError):
    pass


def _point_seeds(seed: int, n_points: int) -> list[int]:
    state = np.random.SeedSequence(seed).generate_state(n_points, dtype=np.uint64)
    return [int(s) for s in state]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


def _entry(value: float, err_low: float = 0.0, err_high: float = 0.0) -> dict:
    return {"value": float(value), "err_low": float(err_low),
            "err_high": float(err_high)}


# ---------------------------------------------------------------------------
# per-preset analyses

def _analyze_fig2(points, runs):
    by_ng: dict[float, dict[float, list]] = {}
    for point, records in zip(points, runs):
        ng = point.meta["n_g_stored"]
        by_ng.setdefault(ng, {})[point.meta["detuning_mhz"]] = records
    reference = stats.resonant_reference(by_ng[0.0][0.0])
    rows, summary = [], {}
    resonant_means = []
    for ng in sorted(by_ng):
        spectrum = stats.average_spectrum(by_ng[ng], reference)
        for d, m, s in zip(spectrum.detunings, spectrum.mean_transmission, spectrum.sem):
            rows.append([ng, d, m, s])
        idx = spectrum.detunings.index(0.0)
        resonant_means.append(spectrum.mean_transmission[idx])
        summary[f"resonant_transmission_ng_{ng}"] = _entry(
            spectrum.mean_transmission[idx], spectrum.sem[idx], spectrum.sem[idx])
        if ng > 0.0:
            contrast, sigma = stats.switching_contrast(by_ng[ng][0.0], by_ng[0.0][0.0])
            bound = 1.0 - math.exp(-ng)
            summary[f"contrast_ng_{ng}"] = _entry(contrast, sigma, sigma)
            summary[f"contrast_bound_ng_{ng}"] = _entry(bound)
            summary[f"contrast_bound_ratio_ng_{ng}"] = _entry(contrast / bound)
            summary[f"contrast_excess_sigmas_ng_{ng}"] = _entry(
                (contrast - bound) / sigma if sigma > 0 else 0.0)
    margin = min(a - b for a, b in zip(resonant_means, resonant_means[1:]))
    summary["spectra_nested_margin"] = _entry(margin)
    header = ["n_g_stored", "detuning_mhz", "mean_transmission", "sem"]
    return header, rows, summary, {}


def _bootstrap_extinction_factor(records, resamples=400, seed=11):
    stored = np.array([r.n_stored for r in records])
    counts = np.array([r.detected_source for r in records], dtype=float)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(resamples):
        idx = rng.integers(0, counts.size, size=counts.size)
        hi = stored[idx] == 0
        if not hi.any() or hi.all():
            continue
        lo_mean = counts[idx][~hi].mean()
        if lo_mean > 0:
            out.append(counts[idx][hi].mean() / lo_mean)
    return np.array(out) if out else None


def _analyze_fig3(points, runs):
    groups = {p.meta["detuning_mhz"]: records for p, records in zip(points, runs)}
    hist = stats.build_histogram(groups)
    col = hist.column(0.0)
    resonant = groups[0.0]
    p1, p1_err = stats.single_excitation_fraction(resonant)
    factor = hist.extinction_factor[col]
    boots = _bootstrap_extinction_factor(resonant)
    if boots is not None and boots.size:
        f_lo, f_hi = np.percentile(boots, [2.5, 97.5])
        f_errs = (max(factor - f_lo, 0.0), max(f_hi - factor, 0.0))
    else:
        f_errs = (0.0, 0.0)
    rows = []
    for i, d in enumerate(hist.detunings):
        counts = np.array([r.detected_source for r in groups[d]], dtype=float)
        rows.append([d, float(counts.mean()),
                     float(counts.std(ddof=1) / math.sqrt(counts.size)),
                     hist.high_mean[i], hist.low_mean[i], hist.extinction_factor[i]])
    summary = {
        "extinction_factor": _entry(factor, *f_errs),
        "threshold_extinction_factor": _entry(hist.threshold_extinction_factor[col]),
        "p_single_given_present": _entry(p1, p1_err, p1_err),
        "high_component_mean": _entry(hist.high_mean[col]),
        "low_component_mean": _entry(hist.low_mean[col]),
        "high_peak": _entry(hist.high_peak[col]),
        "low_peak": _entry(hist.low_peak[col]),
    }
    header = ["detuning_mhz", "mean_detected", "sem",
              "high_component_mean", "low_component_mean", "extinction_factor"]
    hist_rows = []
    for i, d in enumerate(hist.detunings):
        for c, rate in zip(hist.count_bins, hist.rates[i]):
            hist_rows.append([d, c, float(rate)])
    extra = {"histogram.csv": (["detuning_mhz", "detected_count", "occurrence_rate"],
                               hist_rows)}
    return header, rows, summary, extra


def _gain_slope_prediction(config: RunConfig) -> float:
    rng = np.random.default_rng(2024)
    mean_t = qed.mean_blocked_transmission(
        config.coop, config.gate.stored_mean, SLOPE_ORACLE_SAMPLES, rng)
    return 1.0 - mean_t


def _analyze_fig4ab(points, runs):
    strengths, gains = [], []
    rows = []
    for point, records in zip(points, runs):
        est = stats.gain(records, resamples=GAIN_RESAMPLES)
        strengths.append(est.source_strength)
        gains.append(est)
        rows.append([point.meta["source_strength"], est.source_strength,
                     est.g, est.err_low, est.err_high,
                     est.g_outside, est.outside_err_low, est.outside_err_high])
    xs = np.array(strengths)
    gs = np.array([e.g for e in gains])
    k = FIG4AB_LINEAR_POINTS
    slope, _ = stats.fit_linear(xs[:k], gs[:k])
    prediction = _gain_slope_prediction(points[0].config)
    peak_idx = int(np.argmax(gs))
    plateau = gs[-1]
    sat_scale = float("nan")
    try:
        deficit = np.maximum(plateau - gs, 0.0)
        _, sat_scale, _ = stats.fit_exponential(xs, deficit + plateau * 1e-4)
    except (ValueError, RuntimeError):
        pass
    summary = {
        "gain_slope": _entry(slope),
        "gain_slope_prediction": _entry(prediction),
        "gain_slope_ratio": _entry(slope / prediction),
        "gain_peak_intracavity": _entry(gs[peak_idx], gains[peak_idx].err_low,
                                        gains[peak_idx].err_high),
        "gain_peak_outside": _entry(gains[peak_idx].g_outside,
                                    gains[peak_idx].outside_err_low,
                                    gains[peak_idx].outside_err_high),
        "saturation_scale": _entry(sat_scale),
    }
    header = ["source_strength_nominal", "source_strength_measured",
              "gain_intracavity", "gain_err_low", "gain_err_high",
              "gain_outside", "gain_outside_err_low", "gain_outside_err_high"]
    return header, rows, summary, {}


def _analyze_fig4e(points, runs):
    curve = stats.retrieval_curve(runs, condition_single=True)
    gains = [stats.gain(records, resamples=GAIN_RESAMPLES) for records in runs]
    xs_in = np.array(curve.source_strengths)
    xs_out = np.array(curve.source_strengths_outside)
    g_in = np.array([e.g for e in gains])
    g_out = np.array([e.g_outside for e in gains])
    order = np.argsort(xs_in)
    g_r_in = float(np.interp(curve.m_s0, xs_in[order], g_in[order]))
    order_out = np.argsort(xs_out)
    g_r_out = float(np.interp(curve.m_s0_outside, xs_out[order_out], g_out[order_out]))
    rows = []
    for i in range(len(runs)):
        rows.append([xs_in[i], xs_out[i], curve.fractions[i], g_in[i], g_out[i]])
    summary = {
        "m_s0_intracavity": _entry(curve.m_s0, curve.m_s0_err_low, curve.m_s0_err_high),
        "m_s0_outside": _entry(curve.m_s0_outside, curve.m_s0_outside_err_low,
                               curve.m_s0_outside_err_high),
        "m_s0_unit_ratio": _entry(curve.m_s0_outside / curve.m_s0),
        "g_r_intracavity": _entry(g_r_in),
        "g_r_outside": _entry(g_r_out),
        "retrieval_fit_amplitude": _entry(curve.amplitude),
        "retrieval_fit_residual_rms": _entry(curve.residual_rms),
    }
    header = ["source_strength_intracavity", "source_strength_outside",
              "retrieval_fraction_norm", "gain_intracavity", "gain_outside"]
    return header, rows, summary, {}


def _analyze_g2(points, runs):
    records = runs[0]
    config = points[0].config
    backgrounds = (
        config.detection.gate_dark_rate * config.timing.storage_ramp,
        config.detection.source_dark_rate * config.timing.source_window,
    )
    g = np.array([r.detected_gate for r in records], dtype=float)
    s = np.array([r.detected_source for r in records], dtype=float)
    res = stats.g2_cross(g, s, backgrounds)
    rows = [[float(g.mean()), float(s.mean()), res.raw, res.corrected]]
    summary = {
        "g2_raw": _entry(res.raw, res.raw_err_low, res.raw_err_high),
        "g2_corrected": _entry(res.corrected, res.corrected_err_low,
                               res.corrected_err_high),
        "mean_gate_detected": _entry(float(g.mean())),
        "mean_source_detected": _entry(float(s.mean())),
    }
    header = ["mean_gate_detected", "mean_source_detected", "g2_raw", "g2_corrected"]
    return header, rows, summary, {}


def _analyze_custom(points, runs):
    rows, summary = [], {}
    for point, records in zip(points, runs):
        m_in = float(np.mean([r.source_transmitted_intracavity for r in records]))
        m_out = float(np.mean([r.source_transmitted_outside for r in records]))
        det = float(np.mean([r.detected_source for r in records]))
        ret = float(np.mean([r.retrieved for r in records]))
        rows.append([point.label, m_in, m_out, det, ret])
    summary["mean_transmitted_intracavity"] = _entry(m_in)
    summary["mean_transmitted_outside"] = _entry(m_out)
    summary["mean_detected_source"] = _entry(det)
    summary["retrieved_fraction"] = _entry(ret)
    header = ["label", "mean_transmitted_intracavity", "mean_transmitted_outside",
              "mean_detected_source", "retrieved_fraction"]
    return header, rows, summary, {}


_ANALYZERS = {
    "fig2": _analyze_fig2,
    "fig3": _analyze_fig3,
    "fig4ab": _analyze_fig4ab,
    "fig4e": _analyze_fig4e,
    "g2": _analyze_g2,
    "custom": _analyze_custom,
}


# ---------------------------------------------------------------------------
# orchestration

@dataclass(frozen=True)
class PresetRun:
    preset: ExperimentPreset
    summary: dict
    manifest_path: Path
    sweep_path: Path
    summary_path: Path


def run_preset_points(preset: ExperimentPreset, n_shots: int, seed: int,
                      workers: int = 1) -> list[list]:
    """Execute every sweep point with derived per-point seeds."""
    seeds = _point_seeds(seed, len(preset.points))
    runs = []
    for point, point_seed in zip(preset.points, seeds):
        cfg = scale_point_shots(point, n_shots, point_seed)
        runs.append(run_experiment(cfg, workers=workers))
    return runs


def analyze_preset(preset: ExperimentPreset, runs: list[list]):
    analyzer = _ANALYZERS[preset.name]
    return analyzer(preset.points, runs)


def run_preset(preset: ExperimentPreset, n_shots: int, seed: int,
               out_dir: str | Path, workers: int = 1) -> PresetRun:
    """Run the sweep and write manifest, sweep CSV and summary JSON into
    ``out_dir``.  Identical (preset, n_shots, seed) produce byte-identical
    files."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RuntimeError(f"output directory not writable: {out}") from exc

    runs = run_preset_points(preset, n_shots, seed, workers=workers)
    header, rows, summary, extra = analyze_preset(preset, runs)

    seeds = _point_seeds(seed, len(preset.points))
    manifest = {
        "preset": preset.name,
        "description": preset.description,
        "version": __version__,
        "seed": seed,
        "n_shots_per_point": n_shots,
        "points": [
            {"label": p.label, "meta": p.meta, "master_seed": s,
             "config": config_as_dict(scale_point_shots(p, n_shots, s))}
            for p, s in zip(preset.points, seeds)
        ],
    }
    manifest_path = out / "manifest.json"
    _write_atomic(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    sweep_path = out / "sweep.csv"
    _write_csv(sweep_path, header, rows)
    summary_path = out / "summary.json"
    _write_atomic(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name, (h, r) in extra.items():
        _write_csv(out / name, h, r)
    return PresetRun(preset, summary, manifest_path, sweep_path, summary_path)


# ---------------------------------------------------------------------------
# comparison against reference bands

@dataclass(frozen=True)
class ComparisonReport:
    lines: tuple[str, ...]
    passed: bool

    def __str__(self) -> str:
        return "\n".join(self.lines)


def _load_json(source) -> dict:
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            return json.load(fh)
    return source


def compare_report(summary, reference) -> ComparisonReport:
    """Check every referenced observable against its [lo, hi] band.
    ``summary`` is a summary dict or path to summary.json; ``reference``
    maps observable -> (lo, hi) (dict, or path to an equivalent JSON).
    Observables missing from the summary are a schema mismatch."""
    summary = _load_json(summary)
    reference = _load_json(reference)
    lines = []
    passed = True
    for name in sorted(reference):
        band = reference[name]
        lo, hi = float(band[0]), float(band[1])
        if name not in summary:
            raise SchemaError(f"observable {name!r} missing from summary")
        entry = summary[name]
        value = float(entry["value"]) if isinstance(entry, dict) else float(entry)
        ok = lo <= value <= hi and math.isfinite(value)
        passed &= ok
        status = "PASS" if ok else "FAIL"
        lines.append(f"{status} {name}: {value:.6g} in [{lo:.6g}, {hi:.6g}]")
    return ComparisonReport(tuple(lines), passed)


def reference_for(preset_name: str) -> dict[str, tuple[float, float]]:
    try:
        return REFERENCE_TABLES[preset_name]
    except KeyError:
        raise SchemaError(f"no reference table for preset {preset_name!r}") from None
