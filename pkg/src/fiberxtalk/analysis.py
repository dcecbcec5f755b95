"""Analysis pipeline: fold tag streams, detect peaks, localize, estimate coupling.

The chain mirrors a time-correlated single-photon counting workflow: delays
relative to the most recent trigger are folded into a fixed-period histogram,
peaks are picked against a robust median baseline, converted to distances via
the plant's group-index profile, and inverted into coupling levels using the
recorded source/detector parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError
from .plant import Topology, distance_for_delay_ps, path_loss_db
from .simulate import Detector, PulsedSource, SpectralScan, TagStream
from .units import time_to_distance_m

_GAUSSIAN_FWHM_TO_SIGMA = 1.0 / 2.355
_DB_PER_NEPER = 10.0 / math.log(10.0)

DEFAULT_BIN_WIDTH_PS = 100
DEFAULT_K_SIGMA = 5.0
DEFAULT_MIN_SEPARATION_BINS = 3
PERIOD_JITTER_WARN_PPM = 1.0


@dataclass
class FoldDiagnostics:
    """Bookkeeping for tags that did not land in the histogram."""

    dropped_before_first_trigger: int = 0
    dropped_beyond_period: int = 0
    dropped_outside_window: int = 0
    period_jitter_ppm: float = 0.0
    irregular_period: bool = False

    @property
    def dropped_total(self) -> int:
        return (
            self.dropped_before_first_trigger
            + self.dropped_beyond_period
            + self.dropped_outside_window
        )


@dataclass
class Histogram:
    """Folded delay histogram with integer counts over one trigger period."""

    counts: np.ndarray
    bin_width_ps: int
    period_ps: int
    total_triggers: int
    live_time_s: float
    diagnostics: FoldDiagnostics = field(default_factory=FoldDiagnostics)

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    def bin_starts_ps(self) -> np.ndarray:
        return np.arange(self.n_bins, dtype=np.int64) * self.bin_width_ps


@dataclass(frozen=True)
class BaselineEstimate:
    """Robust background level and a Poisson noise scale for thresholding."""

    level: float
    noise_scale: float


@dataclass(frozen=True)
class Peak:
    """A detected excursion above baseline in a counts series."""

    bin_index: int
    centroid_bins: float
    delay_ps: float
    amplitude_counts: float
    background_counts: float
    significance_sigma: float
    fwhm_ps: float


@dataclass(frozen=True)
class LocatedCrosstalk:
    """A peak mapped onto the fiber plant."""

    distance_m: float
    distance_uncertainty_m: float
    coupling_db: float | None = None
    coupling_uncertainty_db: float | None = None
    matched_element: str | None = None


@dataclass(frozen=True)
class CouplingEstimate:
    coupling_db: float
    uncertainty_db: float


@dataclass(frozen=True)
class SpectralLine:
    wavelength_nm: float
    rate_per_s: float
    significance_sigma: float


def suggest_bin_width(period_ps: int, requested_ps: int) -> int:
    """Nearest divisor of the period to the requested bin width (ties go small)."""
    below = None
    for cand in range(min(requested_ps, period_ps), 0, -1):
        if period_ps % cand == 0:
            below = cand
            break
    above = None
    for cand in range(requested_ps + 1, period_ps + 1):
        if period_ps % cand == 0:
            above = cand
            break
    if below is None:
        return above if above is not None else period_ps
    if above is None or requested_ps - below <= above - requested_ps:
        return below
    return above


def fold_histogram(
    tags: TagStream,
    bin_width_ps: int = DEFAULT_BIN_WIDTH_PS,
    window_ps: tuple[int, int] | None = None,
) -> Histogram:
    """Fold detector tags into delays relative to the most recent trigger.

    The trigger period is the median trigger spacing; spacing jitter above
    1 ppm is flagged in the diagnostics but the median is still used. The bin
    width must divide the period exactly, otherwise a nearby divisor is
    suggested. Tags before the first trigger, beyond one period after their
    trigger, or outside the optional delay window are dropped and counted.
    """
    if not (isinstance(bin_width_ps, int) and bin_width_ps >= 1):
        raise ParameterError(f"bin width must be an integer >= 1 ps, got {bin_width_ps!r}")
    trig = np.asarray(tags.trigger_times_ps, dtype=np.int64)
    det = np.asarray(tags.detector_times_ps, dtype=np.int64)
    if trig.size == 0:
        raise DataError("stream contains no trigger events", code="E_NO_TRIGGER")
    if trig.size > 1 and not (np.diff(trig) > 0).all():
        raise DataError("trigger timestamps are not strictly increasing")

    diagnostics = FoldDiagnostics()
    if trig.size > 1:
        spacings = np.diff(trig)
        median = float(np.median(spacings))
        period = int(round(median))
        if period < 1:
            raise DataError("trigger period collapsed to zero")
        jitter_ppm = float(np.abs(spacings - median).max() / median * 1e6)
        diagnostics.period_jitter_ppm = jitter_ppm
        diagnostics.irregular_period = jitter_ppm > PERIOD_JITTER_WARN_PPM
    else:
        # A single trigger cannot define a period; span all following tags.
        if det.size:
            max_delay = int(max(det.max() - trig[0], 0)) + 1
        else:
            max_delay = bin_width_ps
        period = ((max_delay + bin_width_ps - 1) // bin_width_ps) * bin_width_ps

    if period % bin_width_ps:
        suggestion = suggest_bin_width(period, bin_width_ps)
        raise ParameterError(
            f"bin width {bin_width_ps} ps does not divide the {period} ps trigger "
            f"period; nearest divisor is {suggestion} ps",
            code="E_BIN_WIDTH",
        )
    n_bins = period // bin_width_ps

    if window_ps is not None:
        lo, hi = int(window_ps[0]), int(window_ps[1])
        if not 0 <= lo < hi:
            raise ParameterError(f"window must satisfy 0 <= lo < hi, got {window_ps!r}")
    else:
        lo = hi = None

    counts = np.zeros(n_bins, dtype=np.int64)
    if det.size:
        idx = np.searchsorted(trig, det, side="right") - 1
        before = idx < 0
        diagnostics.dropped_before_first_trigger = int(before.sum())
        delays = det[~before] - trig[idx[~before]]
        beyond = delays >= period
        diagnostics.dropped_beyond_period = int(beyond.sum())
        delays = delays[~beyond]
        if lo is not None:
            inside = (delays >= lo) & (delays < hi)
            diagnostics.dropped_outside_window = int(delays.size - int(inside.sum()))
            delays = delays[inside]
        if delays.size:
            counts = np.bincount(delays // bin_width_ps, minlength=n_bins).astype(np.int64)

    return Histogram(
        counts=counts,
        bin_width_ps=bin_width_ps,
        period_ps=period,
        total_triggers=int(trig.size),
        live_time_s=float(trig.size) * period * 1e-12,
        diagnostics=diagnostics,
    )


def estimate_baseline(histogram_or_counts) -> BaselineEstimate:
    """Median background level with a sqrt-of-median Poisson noise scale."""
    if isinstance(histogram_or_counts, Histogram):
        counts = histogram_or_counts.counts
    else:
        counts = np.asarray(histogram_or_counts)
    if counts.size < 16:
        raise ParameterError(
            f"baseline estimation needs >= 16 bins, got {counts.size}"
        )
    level = float(np.median(counts))
    return BaselineEstimate(level=level, noise_scale=max(math.sqrt(max(level, 0.0)), 1.0))


def _runs_above(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) index pairs of contiguous True runs."""
    hits = np.flatnonzero(mask)
    if hits.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(hits) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [hits.size - 1]))
    return [(int(hits[s]), int(hits[e])) for s, e in zip(starts, ends)]


def detect_peaks(
    series: np.ndarray,
    baseline: BaselineEstimate,
    k_sigma: float = DEFAULT_K_SIGMA,
    min_separation_bins: int = DEFAULT_MIN_SEPARATION_BINS,
    bin_width_ps: int = 1,
) -> list[Peak]:
    """Find excursions of ``series`` above baseline + k_sigma * noise.

    Contiguous above-threshold runs become candidate peaks; runs separated by
    fewer than ``min_separation_bins`` below-threshold bins are merged. The
    nominal peak bin is the leftmost maximum of the region, the centroid is
    amplitude-weighted over the region, and the FWHM comes from the weighted
    second moment (floored at one bin).
    """
    if not k_sigma > 0.0:
        raise ParameterError(f"k_sigma must be > 0, got {k_sigma}")
    if not (isinstance(min_separation_bins, int) and min_separation_bins >= 0):
        raise ParameterError(
            f"min_separation_bins must be an integer >= 0, got {min_separation_bins!r}"
        )
    series = np.asarray(series)
    threshold = baseline.level + k_sigma * baseline.noise_scale
    runs = _runs_above(series >= threshold)
    if not runs:
        return []

    merged: list[list[int]] = [list(runs[0])]
    for start, end in runs[1:]:
        gap = start - merged[-1][1] - 1
        if gap < min_separation_bins:
            merged[-1][1] = end
        else:
            merged.append([start, end])

    peaks: list[Peak] = []
    for start, end in merged:
        seg = series[start : end + 1].astype(float)
        weights = np.maximum(seg - baseline.level, 0.0)
        amplitude = float(weights.sum())
        if amplitude <= 0.0:
            continue
        centers = np.arange(start, end + 1, dtype=float) + 0.5
        centroid = float((centers * weights).sum() / amplitude)
        variance = float(((centers - centroid) ** 2 * weights).sum() / amplitude)
        fwhm_bins = max(2.355 * math.sqrt(max(variance, 0.0)), 1.0)
        peak_offset = int(np.argmax(seg))  # argmax returns the leftmost maximum
        peaks.append(
            Peak(
                bin_index=start + peak_offset,
                centroid_bins=centroid,
                delay_ps=centroid * bin_width_ps,
                amplitude_counts=amplitude,
                background_counts=baseline.level * seg.size,
                significance_sigma=float((seg[peak_offset] - baseline.level) / baseline.noise_scale),
                fwhm_ps=fwhm_bins * bin_width_ps,
            )
        )
    return peaks


def _peak_location(peak: Peak, topology: Topology):
    """Distance, its uncertainty, and the matched connector (or None) for a peak."""
    distance = distance_for_delay_ps(topology, peak.delay_ps)
    sigma_t_ps = peak.fwhm_ps * _GAUSSIAN_FWHM_TO_SIGMA
    uncertainty = time_to_distance_m(
        sigma_t_ps, topology.group_index_at(distance), round_trip=True
    )
    matched = None
    if topology.connectors:
        nearest = min(topology.connectors, key=lambda c: abs(c.position_m - distance))
        if abs(nearest.position_m - distance) <= 3.0 * uncertainty:
            matched = nearest
    return distance, uncertainty, matched


def localize(peaks: "list[Peak]", topology: Topology) -> list[LocatedCrosstalk]:
    """Convert peak delays to distances along the plant.

    Only a near-end (co-located) detector sees a distance-dependent delay; a
    far-end detector yields one constant delay for every crosstalk point.
    The nearest connector within three distance uncertainties is reported as
    the matched element.
    """
    if topology.detector_end != "near":
        raise ParameterError(
            "localization impossible: with a far-end detector the delay is "
            "position-independent"
        )
    located = []
    for peak in peaks:
        distance, uncertainty, matched = _peak_location(peak, topology)
        located.append(
            LocatedCrosstalk(
                distance_m=distance,
                distance_uncertainty_m=uncertainty,
                matched_element=matched.id if matched else None,
            )
        )
    return located


def estimate_coupling_db(
    peak: Peak,
    histogram: Histogram,
    topology: Topology,
    source: PulsedSource,
    detector: Detector,
) -> CouplingEstimate:
    """Invert the detected peak amplitude into a coupling level in dB.

    Adds back the outbound and return span losses so the result refers to the
    crosstalk point itself; the uncertainty is the Poisson error of the
    amplitude converted to dB. When the peak matches a connector, losses are
    evaluated at the connector position: millimeter-level noise in the
    estimated distance must not flip whether that connector's own insertion
    loss falls inside the path.
    """
    if peak.amplitude_counts <= 0.0:
        raise ParameterError("coupling undefined for a peak with non-positive amplitude")
    if detector.efficiency <= 0.0:
        raise ParameterError("cannot invert a coupling with zero detector efficiency")
    pulses = histogram.live_time_s * source.rep_rate_hz
    if pulses <= 0.0:
        raise ParameterError("histogram carries no live time")
    raw_distance, _, matched = _peak_location(peak, topology)
    distance = matched.position_m if matched else min(raw_distance, topology.total_length_m)
    nm = source.wavelength_nm
    fraction = peak.amplitude_counts / (pulses * source.photons_per_pulse * detector.efficiency)
    coupling = (
        10.0 * math.log10(fraction)
        + path_loss_db(topology, topology.aggressor_fiber_id, 0.0, distance, nm)
        + path_loss_db(topology, topology.victim_fiber_id, 0.0, distance, nm)
    )
    uncertainty = _DB_PER_NEPER / math.sqrt(peak.amplitude_counts)
    return CouplingEstimate(coupling_db=coupling, uncertainty_db=uncertainty)


def detect_spectral_lines(
    scan: SpectralScan,
    k_sigma: float = DEFAULT_K_SIGMA,
    min_separation_points: int = DEFAULT_MIN_SEPARATION_BINS,
) -> list[SpectralLine]:
    """Run peak detection over a spectral scan and convert centroids to nm."""
    baseline = estimate_baseline(scan.counts)
    peaks = detect_peaks(scan.counts, baseline, k_sigma, min_separation_points, bin_width_ps=1)
    grid = scan.wavelengths_nm
    indices = np.arange(grid.size, dtype=float)
    lines = []
    for peak in peaks:
        idx = min(max(peak.centroid_bins - 0.5, 0.0), float(grid.size - 1))
        lines.append(
            SpectralLine(
                wavelength_nm=float(np.interp(idx, indices, grid)),
                rate_per_s=peak.amplitude_counts / scan.dwell_s,
                significance_sigma=peak.significance_sigma,
            )
        )
    return lines


@dataclass
class OtdrReport:
    """Bundled result of one analysis pass over a tag stream."""

    histogram: Histogram
    baseline: BaselineEstimate
    peaks: list[Peak]
    located: list[LocatedCrosstalk]
    notes: list[str] = field(default_factory=list)

    def to_dict(self, parameters: dict | None = None) -> dict:
        diag = self.histogram.diagnostics
        return {
            "schema_version": 1,
            "kind": "otdr-analysis",
            "parameters": parameters or {},
            "histogram": {
                "bin_width_ps": self.histogram.bin_width_ps,
                "period_ps": self.histogram.period_ps,
                "n_bins": self.histogram.n_bins,
                "total_counts": int(self.histogram.counts.sum()),
                "total_triggers": self.histogram.total_triggers,
                "live_time_s": self.histogram.live_time_s,
            },
            "baseline": {
                "level": self.baseline.level,
                "noise_scale": self.baseline.noise_scale,
            },
            "peaks": [
                {
                    "bin_index": p.bin_index,
                    "delay_ps": p.delay_ps,
                    "amplitude_counts": p.amplitude_counts,
                    "background_counts": p.background_counts,
                    "significance_sigma": p.significance_sigma,
                    "fwhm_ps": p.fwhm_ps,
                }
                for p in self.peaks
            ],
            "located": [
                {
                    "distance_m": loc.distance_m,
                    "distance_uncertainty_m": loc.distance_uncertainty_m,
                    "coupling_db": loc.coupling_db,
                    "coupling_uncertainty_db": loc.coupling_uncertainty_db,
                    "matched_element": loc.matched_element,
                }
                for loc in self.located
            ],
            "diagnostics": {
                "dropped_before_first_trigger": diag.dropped_before_first_trigger,
                "dropped_beyond_period": diag.dropped_beyond_period,
                "dropped_outside_window": diag.dropped_outside_window,
                "period_jitter_ppm": diag.period_jitter_ppm,
                "irregular_period": diag.irregular_period,
                "notes": self.notes,
            },
        }


def run_otdr_analysis(
    tags: TagStream,
    topology: Topology,
    *,
    bin_width_ps: int = DEFAULT_BIN_WIDTH_PS,
    k_sigma: float = DEFAULT_K_SIGMA,
    min_separation_bins: int = DEFAULT_MIN_SEPARATION_BINS,
    window_ps: tuple[int, int] | None = None,
    source: PulsedSource | None = None,
    detector: Detector | None = None,
) -> OtdrReport:
    """Fold, detect, localize, and (when source/detector are known) estimate coupling."""
    histogram = fold_histogram(tags, bin_width_ps, window_ps)
    baseline = estimate_baseline(histogram)
    peaks = detect_peaks(
        histogram.counts, baseline, k_sigma, min_separation_bins, bin_width_ps
    )
    notes: list[str] = []
    if histogram.diagnostics.irregular_period:
        notes.append(
            f"trigger spacing jitter {histogram.diagnostics.period_jitter_ppm:.1f} ppm "
            "exceeds 1 ppm; median period used"
        )
    located: list[LocatedCrosstalk] = []
    if topology.detector_end == "near":
        located = localize(peaks, topology)
        if source is not None and detector is not None:
            enriched = []
            for peak, loc in zip(peaks, located):
                est = estimate_coupling_db(peak, histogram, topology, source, detector)
                enriched.append(
                    LocatedCrosstalk(
                        distance_m=loc.distance_m,
                        distance_uncertainty_m=loc.distance_uncertainty_m,
                        coupling_db=est.coupling_db,
                        coupling_uncertainty_db=est.uncertainty_db,
                        matched_element=loc.matched_element,
                    )
                )
            located = enriched
        else:
            notes.append("source/detector parameters unavailable; couplings not estimated")
    else:
        notes.append("localization impossible: delay is position-independent for a far-end detector")
    return OtdrReport(histogram=histogram, baseline=baseline, peaks=peaks, located=located, notes=notes)
