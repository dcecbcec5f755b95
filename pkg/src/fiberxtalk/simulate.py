"""Monte Carlo generation of single-photon time-tag streams and spectral scans.

Randomness comes from the Philox counter-based generator with one substream
per pulse, keyed by ``[seed, pulse_index]``. Any partitioning of the pulse
range therefore reproduces the serial stream bit for bit, which is what makes
``--jobs`` safe and repeated runs byte-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, ParameterError, ResourceError
from .plant import (
    CrosstalkPoint,
    Topology,
    crosstalk_points,
    delay_ps_for_distance,
    path_loss_db,
)
from .units import photon_energy_joules, validate_wavelength_nm

TRIGGER_CHANNEL = 0
DETECTOR_CHANNEL = 1

MAX_SEED = 2**64 - 1
DEFAULT_MAX_TAGS = 50_000_000

_GAUSSIAN_FWHM_TO_SIGMA = 1.0 / 2.355


@dataclass(frozen=True)
class PulsedSource:
    """Pulsed probe laser described by average power, rate, width, wavelength."""

    avg_power_w: float
    rep_rate_hz: float = 1000.0
    pulse_width_ps: float = 100.0
    wavelength_nm: float = 1550.0

    def __post_init__(self):
        if not (math.isfinite(self.avg_power_w) and self.avg_power_w > 0.0):
            raise ParameterError(f"average power must be > 0 W, got {self.avg_power_w}")
        if not (math.isfinite(self.rep_rate_hz) and self.rep_rate_hz > 0.0):
            raise ParameterError(f"repetition rate must be > 0 Hz, got {self.rep_rate_hz}")
        validate_wavelength_nm(self.wavelength_nm)
        if not (math.isfinite(self.pulse_width_ps) and self.pulse_width_ps > 0.0):
            raise ParameterError(f"pulse width must be > 0 ps, got {self.pulse_width_ps}")
        if self.pulse_width_ps >= self.period_ps:
            raise ParameterError(
                f"pulse width {self.pulse_width_ps} ps must be shorter than the "
                f"{self.period_ps} ps pulse period"
            )

    @property
    def period_ps(self) -> int:
        return max(1, int(round(1e12 / self.rep_rate_hz)))

    @property
    def photons_per_pulse(self) -> float:
        return (self.avg_power_w / self.rep_rate_hz) / photon_energy_joules(self.wavelength_nm)


@dataclass(frozen=True)
class Detector:
    """Single-photon detector model: efficiency, darks, jitter, dead time."""

    efficiency: float = 0.85
    dark_rate_hz: float = 100.0
    jitter_sigma_ps: float = 50.0
    dead_time_ps: int = 50_000

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ParameterError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if not (math.isfinite(self.dark_rate_hz) and self.dark_rate_hz >= 0.0):
            raise ParameterError(f"dark rate must be >= 0 Hz, got {self.dark_rate_hz}")
        if not (math.isfinite(self.jitter_sigma_ps) and self.jitter_sigma_ps >= 0.0):
            raise ParameterError(f"jitter sigma must be >= 0 ps, got {self.jitter_sigma_ps}")
        if not (isinstance(self.dead_time_ps, int) and self.dead_time_ps >= 0):
            raise ParameterError(f"dead time must be an integer >= 0 ps, got {self.dead_time_ps}")


@dataclass(frozen=True)
class TunableFilter:
    """Scanning bandpass filter with a Gaussian transmission profile."""

    fwhm_nm: float = 0.8
    insertion_loss_db: float = 3.0
    center_nm: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.fwhm_nm) and self.fwhm_nm > 0.0):
            raise ParameterError(f"filter FWHM must be > 0 nm, got {self.fwhm_nm}")
        if not (math.isfinite(self.insertion_loss_db) and self.insertion_loss_db >= 0.0):
            raise ParameterError(f"insertion loss must be >= 0 dB, got {self.insertion_loss_db}")
        if self.center_nm is not None:
            validate_wavelength_nm(self.center_nm)

    def transmission(self, offset_nm: float) -> float:
        """Power transmission at ``offset_nm`` from the filter center."""
        sigma = self.fwhm_nm * _GAUSSIAN_FWHM_TO_SIGMA
        peak = 10.0 ** (-self.insertion_loss_db / 10.0)
        return peak * math.exp(-0.5 * (offset_nm / sigma) ** 2)


@dataclass(frozen=True)
class LeakLine:
    """A classical laser line leaking into the victim fiber at a fixed rate."""

    wavelength_nm: float
    rate_photons_per_s: float

    def __post_init__(self):
        validate_wavelength_nm(self.wavelength_nm)
        if not (math.isfinite(self.rate_photons_per_s) and self.rate_photons_per_s >= 0.0):
            raise ParameterError(f"leak rate must be >= 0 /s, got {self.rate_photons_per_s}")


@dataclass
class TagStream:
    """Timestamped trigger/detector events, merged and sorted by time.

    ``channels`` uses 0 for trigger and 1 for detector; ``times_ps`` is int64
    picoseconds. Per-channel timestamps are strictly increasing and detector
    tags respect the dead-time gap used at generation.
    """

    channels: np.ndarray
    times_ps: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.times_ps = np.asarray(self.times_ps, dtype=np.int64)
        if self.channels.shape != self.times_ps.shape:
            raise DataError("channels and times arrays must have the same length")

    @property
    def n_records(self) -> int:
        return int(self.times_ps.size)

    @property
    def trigger_times_ps(self) -> np.ndarray:
        return self.times_ps[self.channels == TRIGGER_CHANNEL]

    @property
    def detector_times_ps(self) -> np.ndarray:
        return self.times_ps[self.channels == DETECTOR_CHANNEL]

    def validate(self, dead_time_ps: int | None = None) -> None:
        """Raise if per-channel monotonicity or the dead-time gap is violated."""
        for name, times in (("trigger", self.trigger_times_ps), ("detector", self.detector_times_ps)):
            if times.size > 1 and not (np.diff(times) > 0).all():
                raise DataError(f"{name} timestamps are not strictly increasing")
        if dead_time_ps:
            det = self.detector_times_ps
            if det.size > 1 and int(np.diff(det).min()) < dead_time_ps:
                raise DataError(f"detector tags violate the {dead_time_ps} ps dead time")


def _validate_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MAX_SEED:
        raise ParameterError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return seed


class _PulseStreams:
    """Reusable Philox generator reset to the ``[seed, pulse]`` substream key.

    Resetting the key on one bit-generator object is bit-identical to
    constructing ``Philox(key=[seed, pulse])`` afresh, at a third of the cost.
    """

    def __init__(self, seed: int):
        self._bitgen = np.random.Philox(key=[seed, 0])
        self.generator = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state
        self._state["state"]["key"][0] = np.uint64(seed)

    def select(self, index: int) -> np.random.Generator:
        state = self._state
        state["state"]["counter"][:] = 0
        state["state"]["key"][1] = np.uint64(index)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bitgen.state = state
        return self.generator


def point_mu_optical(topology: Topology, source: PulsedSource, point: CrosstalkPoint) -> float:
    """Mean photons per pulse arriving at the detector from one point.

    Detector efficiency excluded; covers outbound span loss, the coupling at
    the point, and the victim-strand leg back to the near end (or onward to
    the far end when the detector sits there).
    """
    nm = source.wavelength_nm
    total = topology.total_length_m
    position = min(point.position_m, total)
    if topology.detector_end == "near":
        victim_leg = path_loss_db(topology, topology.victim_fiber_id, 0.0, position, nm)
    else:
        victim_leg = path_loss_db(topology, topology.victim_fiber_id, position, total, nm)
    loss_db = (
        path_loss_db(topology, topology.aggressor_fiber_id, 0.0, position, nm)
        + abs(point.coupling_db(nm))
        + victim_leg
    )
    return source.photons_per_pulse * 10.0 ** (-loss_db / 10.0)


def point_delay_ps(topology: Topology, point: CrosstalkPoint) -> float:
    """Arrival delay of a point's photons relative to their pulse.

    Near-end detection is a round trip (out on the aggressor, back on the
    victim), so the delay grows with position; far-end detection always
    traverses the full route, so every point shares one constant delay.
    """
    if topology.detector_end == "near":
        return delay_ps_for_distance(topology, point.position_m)
    return delay_ps_for_distance(topology, topology.total_length_m) / 2.0


def expected_peak_rate(
    topology: Topology, source: PulsedSource, detector: Detector, point: CrosstalkPoint
) -> float:
    """Analytic detected count rate (counts/s) for one crosstalk point."""
    return source.rep_rate_hz * point_mu_optical(topology, source, point) * detector.efficiency


def _timing_sigma_ps(source: PulsedSource, detector: Detector) -> float:
    pulse_sigma = source.pulse_width_ps * _GAUSSIAN_FWHM_TO_SIGMA
    return math.hypot(pulse_sigma, detector.jitter_sigma_ps)


def _simulate_pulse_range(
    start: int,
    stop: int,
    seed: int,
    period: int,
    mus: np.ndarray,
    delays: np.ndarray,
    sigma_ps: float,
    efficiency: float,
    dark_mu: float,
) -> np.ndarray:
    """Detector-candidate arrival times for pulses [start, stop), unsorted."""
    streams = _PulseStreams(seed)
    lam = np.append(mus, dark_mu)
    n_points = mus.size
    chunks: list[np.ndarray] = []
    for pulse in range(start, stop):
        rng = streams.select(pulse)
        counts = rng.poisson(lam)
        if not counts.any():
            continue
        base = pulse * period
        for i in range(n_points):
            n = counts[i]
            if n:
                arrivals = rng.normal(delays[i], sigma_ps, n)
                accepted = arrivals[rng.random(n) < efficiency]
                if accepted.size:
                    chunks.append(base + np.rint(accepted).astype(np.int64))
        n_dark = counts[n_points]
        if n_dark:
            chunks.append(base + np.floor(rng.random(n_dark) * period).astype(np.int64))
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)


def _apply_dead_time(times_sorted: np.ndarray, dead_time_ps: int) -> np.ndarray:
    """Non-paralyzable dead-time sweep over a sorted detector series."""
    if times_sorted.size == 0:
        return times_sorted
    if dead_time_ps <= 1:
        # A zero/one-ps dead time only requires strictly increasing stamps.
        return np.unique(times_sorted)
    kept = []
    last = None
    for t in times_sorted.tolist():
        if last is None or t - last >= dead_time_ps:
            kept.append(t)
            last = t
    return np.asarray(kept, dtype=np.int64)


def simulate_otdr_tags(
    topology: Topology,
    source: PulsedSource,
    detector: Detector,
    duration_s: float,
    seed: int,
    *,
    max_tags: int = DEFAULT_MAX_TAGS,
    jobs: int = 1,
) -> TagStream:
    """Simulate a pulsed-probe crosstalk measurement into a tag stream.

    One trigger tag is emitted per pulse. For every pulse and crosstalk point
    a Poisson number of photons arrives at the round-trip delay, spread by the
    pulse width and detector jitter combined in quadrature; detection
    efficiency thins photons before the dead-time sweep. Dark counts are
    uniform over each pulse period and are not thinned (the dark rate is
    already detector-referred).
    """
    _validate_seed(seed)
    if not (math.isfinite(duration_s) and duration_s > 0.0):
        raise ParameterError(f"duration must be > 0 s, got {duration_s}")
    if not (isinstance(jobs, int) and jobs >= 1):
        raise ParameterError(f"jobs must be an integer >= 1, got {jobs!r}")

    points = crosstalk_points(topology)
    period = source.period_ps
    n_pulses = int(round(duration_s * source.rep_rate_hz))
    if n_pulses < 1:
        raise ParameterError(
            f"duration {duration_s} s yields no pulses at {source.rep_rate_hz} Hz"
        )

    mus = np.array([point_mu_optical(topology, source, p) for p in points], dtype=float)
    delays = np.array([point_delay_ps(topology, p) for p in points], dtype=float)
    sigma_ps = _timing_sigma_ps(source, detector)
    dark_mu = detector.dark_rate_hz * period * 1e-12

    expected_detector = n_pulses * (float(mus.sum()) * detector.efficiency + dark_mu)
    expected_total = n_pulses + expected_detector
    if expected_total > max_tags:
        raise ResourceError(
            f"expected ~{expected_total:.3g} tags exceeds the cap of {max_tags}; "
            "shorten the run or raise max_tags"
        )

    chunk = 65_536
    ranges = [(s, min(s + chunk, n_pulses)) for s in range(0, n_pulses, chunk)]

    def run(span: tuple[int, int]) -> np.ndarray:
        return _simulate_pulse_range(
            span[0], span[1], seed, period, mus, delays, sigma_ps,
            detector.efficiency, dark_mu,
        )

    if jobs > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, ranges))
    else:
        parts = [run(r) for r in ranges]

    candidates = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    negative = int((candidates < 0).sum())
    if negative:
        candidates = candidates[candidates >= 0]
    candidates.sort(kind="stable")
    det_times = _apply_dead_time(candidates, detector.dead_time_ps)

    trig_times = np.arange(n_pulses, dtype=np.int64) * period
    times = np.concatenate([trig_times, det_times])
    channels = np.concatenate([
        np.zeros(trig_times.size, dtype=np.uint8),
        np.ones(det_times.size, dtype=np.uint8),
    ])
    order = np.lexsort((channels, times))

    metadata = {
        "schema_version": 1,
        "kind": "otdr-tags",
        "generator": "philox",
        "seed": seed,
        "duration_s": duration_s,
        "n_pulses": n_pulses,
        "period_ps": period,
        "timing_sigma_ps": sigma_ps,
        "source": asdict(source),
        "detector": asdict(detector),
        "aggressor_fiber": topology.aggressor_fiber_id,
        "victim_fiber": topology.victim_fiber_id,
        "detector_end": topology.detector_end,
        "points": [
            {
                "position_m": p.position_m,
                "source_element": p.source_element,
                "coupling_db": p.coupling_db(source.wavelength_nm),
                "delay_ps": float(d),
                "mu_optical_per_pulse": float(m),
            }
            for p, d, m in zip(points, delays, mus)
        ],
        "n_triggers": int(trig_times.size),
        "n_detector_tags": int(det_times.size),
        "dropped_negative_time": negative,
    }
    return TagStream(channels=channels[order], times_ps=times[order], metadata=metadata)


@dataclass
class SpectralScan:
    """Counts per wavelength from a scanning-filter noise measurement."""

    wavelengths_nm: np.ndarray
    counts: np.ndarray
    dwell_s: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.wavelengths_nm.shape != self.counts.shape:
            raise DataError("wavelength grid and counts must have the same length")
        if (self.counts < 0).any():
            raise DataError("scan counts must be non-negative")


def expected_scan_rate(
    lines: "list[LeakLine] | tuple[LeakLine, ...]",
    filt: TunableFilter,
    detector: Detector,
    center_nm: float,
) -> float:
    """Analytic count rate with the filter parked at ``center_nm``."""
    rate = detector.dark_rate_hz
    for line in lines:
        rate += (
            line.rate_photons_per_s
            * filt.transmission(line.wavelength_nm - center_nm)
            * detector.efficiency
        )
    return rate


def simulate_spectral_scan(
    lines: "list[LeakLine] | tuple[LeakLine, ...]",
    filt: TunableFilter,
    detector: Detector,
    grid_nm: "list[float] | np.ndarray",
    dwell_s: float,
    seed: int,
) -> SpectralScan:
    """Simulate a wavelength scan of leaked classical light plus dark counts.

    Each grid point draws from its own ``[seed, index]`` substream, so the
    scan is deterministic and independent of evaluation order.
    """
    _validate_seed(seed)
    if not (math.isfinite(dwell_s) and dwell_s > 0.0):
        raise ParameterError(f"dwell must be > 0 s, got {dwell_s}")
    grid = np.asarray(grid_nm, dtype=float)
    if grid.size == 0:
        raise ParameterError("wavelength grid must not be empty")
    if grid.size > 1 and not (np.diff(grid) > 0).all():
        raise ParameterError("wavelength grid must be strictly increasing")
    for nm in grid:
        validate_wavelength_nm(float(nm))
    for line in lines:
        if not isinstance(line, LeakLine):
            raise ParameterError(f"expected LeakLine entries, got {type(line).__name__}")

    streams = _PulseStreams(seed)
    counts = np.empty(grid.size, dtype=np.int64)
    for i, center in enumerate(grid):
        lam = expected_scan_rate(lines, filt, detector, float(center)) * dwell_s
        counts[i] = streams.select(i).poisson(lam)

    metadata = {
        "schema_version": 1,
        "kind": "spectral-scan",
        "generator": "philox",
        "seed": seed,
        "dwell_s": dwell_s,
        "filter": asdict(filt),
        "detector": asdict(detector),
        "lines": [asdict(line) for line in lines],
    }
    return SpectralScan(wavelengths_nm=grid, counts=counts, dwell_s=dwell_s, metadata=metadata)
