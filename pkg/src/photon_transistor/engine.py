"""Shot-by-shot stochastic simulation of the switching experiment.

One shot is the full sequence: a weak coherent gate pulse is stored as a
collective atomic excitation, the spin wave decoheres at its lifetime,
a resonant source beam is gated through the cavity for a fixed window,
the gate excitation is optionally retrieved, and both channels pass
through a lossy counting chain.

The source window is sampled photon by photon.  Each incident photon
either transmits through the cavity (probability T from the dispersive
spectrum), scatters off a blocking atom into free space (probability S),
or is reflected.  A free-space scattering event localizes the excitation
and destroys the collective phase, so retrieval fails, but the atom
stays in the blocking state and keeps switching the beam; it may also
hop to a more weakly coupled sublevel (optical pumping), which is what
eventually saturates the gain.

Sampling is exact but organized in scattering epochs rather than a
literal per-photon loop: between scattering events the blocking
configuration is constant, so the index of the next scattering photon is
geometric in S and the transmitted count among the intervening photons
is binomial in T/(1-S).  This reproduces the per-photon process
distribution at a cost proportional to the number of scattering events.

Every shot draws from its own counter-based random stream keyed by
(master_seed, shot_index), so results are independent of execution order
and identical for serial and parallel runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import qed
from .qed import AtomParams, CavityParams, CooperativityModel, ETA_FLOOR


@dataclass(frozen=True)
class TimingSequence:
    """Durations of the experimental sequence segments, in seconds.

    The decay argument for the spin wave is everything between the end of
    storage and retrieval: hold_before_source + source_window +
    hold_before_retrieval.  storage_ramp is also used as the gate-channel
    counting window (the retrieval pulse mirrors the storage ramp).
    """

    storage_ramp: float
    hold_before_source: float
    source_window: float
    hold_before_retrieval: float

    def __post_init__(self):
        for name in ("storage_ramp", "hold_before_source",
                     "source_window", "hold_before_retrieval"):
            if getattr(self, name) < 0:
                raise ValueError(f"TimingSequence.{name} must be >= 0")

    @property
    def total_storage_time(self) -> float:
        return self.hold_before_source + self.source_window + self.hold_before_retrieval


@dataclass(frozen=True)
class GatePulse:
    """Coherent gate pulse and the storage/retrieval chain efficiencies.

    The stored excitation number is Poissonian with mean
    mean_incident_photons * storage_efficiency.
    """

    mean_incident_photons: float
    storage_efficiency: float
    retrieval_efficiency: float = 1.0

    def __post_init__(self):
        if self.mean_incident_photons < 0:
            raise ValueError("GatePulse.mean_incident_photons must be >= 0")
        if not 0.0 <= self.storage_efficiency <= 1.0:
            raise ValueError("GatePulse.storage_efficiency must be in [0, 1]")
        if not 0.0 <= self.retrieval_efficiency <= 1.0:
            raise ValueError("GatePulse.retrieval_efficiency must be in [0, 1]")

    @property
    def stored_mean(self) -> float:
        return self.mean_incident_photons * self.storage_efficiency


@dataclass
class SpinWave:
    """State of the stored collective excitation during one shot.

    coherent flips to False at the first free-space scattering event and
    never recovers; survived_decay flips to False if the collective phase
    is lost to dephasing before retrieval.  n_scatters and
    first_scatter_photon are diagnostics for the collapse statistics.
    """

    n_exc: int
    etas: list[float] = field(default_factory=list)
    coherent: bool = True
    survived_decay: bool = True
    n_scatters: int = 0
    first_scatter_photon: int | None = None

    def __post_init__(self):
        if self.n_exc < 0:
            raise ValueError("SpinWave.n_exc must be >= 0")
        if len(self.etas) != self.n_exc:
            raise ValueError("SpinWave.etas length must equal n_exc")

    def total_eta(self) -> float:
        return qed.sum_cooperativities(self.etas)


@dataclass(frozen=True)
class SourceDrive:
    """Source beam over one window.  mean_source_photons is the expected
    transmitted photon count with no gate excitation present, i.e. the
    empty-cavity window-integrated photon number before outcoupling."""

    mean_source_photons: float
    detuning: float = 0.0

    def __post_init__(self):
        if self.mean_source_photons < 0:
            raise ValueError("SourceDrive.mean_source_photons must be >= 0")


@dataclass(frozen=True)
class PumpingModel:
    """Optical pumping applied at each scattering event: with probability
    hop_prob_per_scatter the scattering atom's cooperativity is multiplied
    by eta_ratio_after_hop (< 1 moves it toward weaker coupling)."""

    hop_prob_per_scatter: float
    eta_ratio_after_hop: float

    def __post_init__(self):
        if not 0.0 <= self.hop_prob_per_scatter <= 1.0:
            raise ValueError("PumpingModel.hop_prob_per_scatter must be in [0, 1]")
        if not 0.0 <= self.eta_ratio_after_hop <= 1.0:
            raise ValueError("PumpingModel.eta_ratio_after_hop must be in [0, 1]")


@dataclass(frozen=True)
class DetectionChain:
    """Counting-chain model: detected = Binomial(true, efficiency) +
    Poisson(dark_rate * window).  Dark rates are in counts/s and include
    all uncorrelated background (detector darks, leakage, stray light)."""

    gate_path_efficiency: float
    source_path_efficiency: float
    gate_dark_rate: float = 0.0
    source_dark_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gate_path_efficiency <= 1.0:
            raise ValueError("DetectionChain.gate_path_efficiency must be in [0, 1]")
        if not 0.0 <= self.source_path_efficiency <= 1.0:
            raise ValueError("DetectionChain.source_path_efficiency must be in [0, 1]")
        if self.gate_dark_rate < 0 or self.source_dark_rate < 0:
            raise ValueError("DetectionChain dark rates must be >= 0")


@dataclass(slots=True)
class ShotRecord:
    """Everything observable (and the ground truth) for one repetition."""

    shot_index: int
    n_stored: int
    source_transmitted_intracavity: int
    source_transmitted_outside: int
    collapsed: bool
    retrieved: bool
    survived_decay: bool
    detected_source: int
    detected_gate: int


@dataclass(frozen=True)
class RunConfig:
    cavity: CavityParams
    atoms: AtomParams
    coop: CooperativityModel
    timing: TimingSequence
    gate: GatePulse
    source: SourceDrive
    pumping: PumpingModel
    detection: DetectionChain
    n_shots: int
    master_seed: int
    retrieval_mode: bool = False

    def __post_init__(self):
        if self.n_shots < 1:
            raise ValueError("RunConfig.n_shots must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("RunConfig.master_seed must be a 64-bit integer")


def shot_rng(master_seed: int, shot_index: int) -> np.random.Generator:
    """Counter-based substream for one shot; the 128-bit Philox key packs
    (master_seed, shot_index) so streams never depend on call order."""
    if not 0 <= shot_index < 2 ** 64:
        raise ValueError("shot_index must be a 64-bit integer")
    return np.random.Generator(np.random.Philox(key=(master_seed << 64) | shot_index))


def _shot_scratch() -> tuple[np.random.Philox, np.random.Generator]:
    bitgen = np.random.Philox(key=0)
    return bitgen, np.random.Generator(bitgen)


def _rekey_shot_stream(scratch, master_seed: int, shot_index: int) -> np.random.Generator:
    """Reuse one Philox instance across shots by resetting its 128-bit key
    and counter; yields the same stream as a fresh shot_rng() but without
    per-shot construction cost."""
    bitgen, gen = scratch
    state = bitgen.state
    inner = state["state"]
    inner["key"][0] = shot_index
    inner["key"][1] = master_seed
    inner["counter"][:] = 0
    state["buffer_pos"] = 4
    state["has_uint32"] = 0
    state["uinteger"] = 0
    bitgen.state = state
    return gen


def sample_gate_storage(gate: GatePulse, coop: CooperativityModel,
                        rng: np.random.Generator) -> SpinWave:
    """Store the gate pulse: Poissonian excitation number (thinned by the
    storage efficiency), one independent cooperativity per excitation."""
    n_exc = int(rng.poisson(gate.stored_mean))
    etas = [qed.sample_cooperativity(coop, rng) for _ in range(n_exc)]
    return SpinWave(n_exc=n_exc, etas=etas)


def _transmission_and_scatter(delta: float, total_eta: float,
                              cavity: CavityParams, atoms: AtomParams) -> tuple[float, float]:
    """Per-photon transmission and free-space scattering probabilities at
    probe detuning delta, for blockers resonant with the cavity (their
    atomic detuning equals delta).  On resonance these are the closed
    forms extinction() and free_space_scatter_prob(); off resonance the
    scattering scales with the atomic excitation |L|^2 times the
    intracavity buildup, so T + S <= 1 always holds."""
    if delta == 0.0:
        t = qed.extinction(total_eta)
        return t, 2.0 * total_eta * t
    t = qed.cavity_transmission_spectrum(delta, ((total_eta, delta),), cavity, atoms)
    x = 2.0 * delta / atoms.gamma
    lor2 = 1.0 / (1.0 + x * x)
    return t, 2.0 * total_eta * lor2 * t


def evolve_source_window(spin: SpinWave, source: SourceDrive, pumping: PumpingModel,
                         cavity: CavityParams, atoms: AtomParams,
                         rng: np.random.Generator) -> tuple[int, SpinWave]:
    """Send the source beam through the cavity for one window.

    Draws a Poissonian number of incident photons with mean
    source.mean_source_photons; each photon transmits with the current
    dispersive transmission, or scatters off one of the blocking atoms
    with the current free-space scattering probability.  A scattering
    event destroys the collective phase (coherent = False), leaves the
    atom blocking, and applies the pumping hop to the atom that
    scattered (chosen with probability proportional to its
    cooperativity).

    Returns (transmitted_count, updated spin).
    """
    n_attempt = int(rng.poisson(source.mean_source_photons))
    delta = source.detuning
    transmitted = 0
    remaining = n_attempt
    processed = 0
    while remaining > 0:
        total = spin.total_eta()
        if total <= ETA_FLOOR:
            if delta == 0.0:
                transmitted += remaining
            else:
                t_empty = qed.cavity_transmission_spectrum(delta, (), cavity, atoms)
                transmitted += int(rng.binomial(remaining, t_empty))
            break
        t, s = _transmission_and_scatter(delta, total, cavity, atoms)
        if s < 1e-300:
            transmitted += int(rng.binomial(remaining, t))
            break
        gap = int(rng.geometric(s))
        if gap > remaining:
            transmitted += int(rng.binomial(remaining, t / (1.0 - s)))
            break
        if gap > 1:
            transmitted += int(rng.binomial(gap - 1, t / (1.0 - s)))
        processed += gap
        remaining -= gap
        spin.n_scatters += 1
        if spin.first_scatter_photon is None:
            spin.first_scatter_photon = processed
        spin.coherent = False
        # scattering atom chosen proportionally to its cooperativity
        pick = rng.random() * total
        acc = 0.0
        j = 0
        for j, eta in enumerate(spin.etas):
            acc += eta
            if pick <= acc:
                break
        if pumping.hop_prob_per_scatter > 0.0 and (
                pumping.hop_prob_per_scatter >= 1.0
                or rng.random() < pumping.hop_prob_per_scatter):
            spin.etas[j] *= pumping.eta_ratio_after_hop
    return transmitted, spin


def apply_spin_decay(spin: SpinWave, elapsed: float, atoms: AtomParams,
                     rng: np.random.Generator) -> SpinWave:
    """Collective dephasing over ``elapsed`` seconds: with probability
    1 - exp(-elapsed/tau) the excitation is no longer retrievable.  The
    atomic population stays put, so blocking is unaffected."""
    if elapsed < 0:
        raise ValueError("elapsed must be >= 0")
    if spin.n_exc == 0 or elapsed == 0.0:
        return spin
    if rng.random() >= math.exp(-elapsed / atoms.tau_spinwave):
        spin.survived_decay = False
    return spin


def retrieve_gate(spin: SpinWave, retrieval_efficiency: float,
                  rng: np.random.Generator) -> bool:
    """Attempt retrieval of the stored photon.  Succeeds with the given
    efficiency only if an excitation is present, the collective phase is
    intact (no free-space scattering occurred) and dephasing has not
    destroyed it."""
    if not 0.0 <= retrieval_efficiency <= 1.0:
        raise ValueError("retrieval_efficiency must be in [0, 1]")
    if spin.n_exc < 1 or not spin.coherent or not spin.survived_decay:
        return False
    return bool(rng.random() < retrieval_efficiency)


def detect(true_count: int, window: float, efficiency: float, dark_rate: float,
           rng: np.random.Generator) -> int:
    """Counting chain: binomial thinning plus Poissonian background."""
    if true_count < 0:
        raise ValueError("true_count must be >= 0")
    detected = int(rng.binomial(true_count, efficiency)) if efficiency < 1.0 else true_count
    if dark_rate > 0.0 and window > 0.0:
        detected += int(rng.poisson(dark_rate * window))
    return detected


def run_shot(config: RunConfig, shot_index: int, _scratch=None) -> ShotRecord:
    """One full repetition, fully determined by (master_seed, shot_index)."""
    if _scratch is None:
        rng = shot_rng(config.master_seed, shot_index)
    else:
        rng = _rekey_shot_stream(_scratch, config.master_seed, shot_index)
    spin = sample_gate_storage(config.gate, config.coop, rng)
    n_stored = spin.n_exc
    spin = apply_spin_decay(spin, config.timing.total_storage_time, config.atoms, rng)
    transmitted, spin = evolve_source_window(
        spin, config.source, config.pumping, config.cavity, config.atoms, rng)
    outside = int(rng.binomial(transmitted, config.cavity.outcoupling))
    retrieved = False
    if config.retrieval_mode:
        retrieved = retrieve_gate(spin, config.gate.retrieval_efficiency, rng)
    det = config.detection
    detected_source = detect(outside, config.timing.source_window,
                             det.source_path_efficiency, det.source_dark_rate, rng)
    detected_gate = detect(1 if retrieved else 0, config.timing.storage_ramp,
                           det.gate_path_efficiency, det.gate_dark_rate, rng)
    return ShotRecord(
        shot_index=shot_index,
        n_stored=n_stored,
        source_transmitted_intracavity=transmitted,
        source_transmitted_outside=outside,
        collapsed=n_stored > 0 and not spin.coherent,
        retrieved=retrieved,
        survived_decay=spin.survived_decay,
        detected_source=detected_source,
        detected_gate=detected_gate,
    )


def _run_range(args) -> list[ShotRecord]:
    config, start, stop = args
    scratch = _shot_scratch()
    return [run_shot(config, i, scratch) for i in range(start, stop)]


def run_experiment(config: RunConfig, workers: int = 1) -> list[ShotRecord]:
    """All shots of one configuration.  ``workers`` > 1 distributes shots
    over processes; the per-shot substreams make the result identical to
    the serial run."""
    n = config.n_shots
    if workers <= 1:
        scratch = _shot_scratch()
        return [run_shot(config, i, scratch) for i in range(n)]
    chunk = max(1, math.ceil(n / (workers * 4)))
    ranges = [(config, s, min(s + chunk, n)) for s in range(0, n, chunk)]
    records: list[ShotRecord | None] = [None] * n
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_range, ranges):
            for rec in part:
                records[rec.shot_index] = rec
    if any(r is None for r in records):
        raise RuntimeError("incomplete parallel run; no partial results returned")
    return records  # type: ignore[return-value]


def with_source_strength(config: RunConfig, mean_source_photons: float) -> RunConfig:
    """Convenience for sweeping the source strength."""
    return replace(config, source=replace(config.source,
                                          mean_source_photons=mean_source_photons))
