"""EEG-style signal generation, filtering, epoching, PSD/ITC, and feature assembly.

Filtering is zero-phase frequency-domain masking (FFT -> mask -> inverse):
deterministic, exactly linear, and trivially testable.  The PSD is a
single-window periodogram, PSD(f) = (1/N) |sum_t x(t) e^{-i 2 pi f t / N}|^2,
evaluated at the DFT bins that fall inside the 1-70 Hz analysis band.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from importlib import resources

import numpy as np


BAND_EDGES: dict[str, tuple[float, float]] = {
    "delta": (1.0, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 70.0),
}

ANALYSIS_BAND = (1.0, 70.0)
NOTCH_FREQS = (50.0, 100.0, 150.0)
NOTCH_HALF_WIDTH = 1.0  # Hz masked on each side of a notch frequency


def default_roi_map() -> dict[str, str]:
    """Channel label -> region mapping for the default 32-channel montage."""
    text = resources.files("neurospell.data").joinpath("roi_map.json").read_text()
    return json.loads(text)


def default_channel_labels() -> list[str]:
    return list(default_roi_map().keys())


@dataclass
class MultichannelRecording:
    """Continuous multichannel signal with letter event markers.

    samples is [channels x time] in microvolts; markers are
    (sample_index, letter) pairs.
    """

    samples: np.ndarray
    rate: float = 1000.0
    channel_labels: list[str] = field(default_factory=default_channel_labels)
    markers: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.rate <= 0:
            raise ValueError("sampling rate must be positive")
        if self.samples.ndim != 2:
            raise ValueError("samples must be [channels x time]")
        if len(self.channel_labels) != self.samples.shape[0]:
            raise ValueError("channel label count must match samples")
        n = self.samples.shape[1]
        for idx, letter in self.markers:
            if not 0 <= idx < n:
                raise ValueError(f"marker index {idx} outside recording")
            if letter not in "abcdefghijklmnopqrstuvwxyz":
                raise ValueError(f"marker label {letter!r} not a letter")


@dataclass
class Epoch:
    """One time window cut around a marker, baseline-corrected."""

    samples: np.ndarray  # [channels x window]
    t0: float
    t1: float
    label: str
    rate: float

    def __post_init__(self):
        expected = int(round((self.t1 - self.t0) * self.rate))
        if self.samples.shape[1] != expected:
            raise ValueError(
                f"window length {self.samples.shape[1]} != (t1-t0)*rate = {expected}"
            )


@dataclass
class SpectralFeatures:
    """Per-channel PSD restricted to the analysis band, plus band/ROI maps."""

    psd: np.ndarray  # [channels x frequency bins]
    freqs: np.ndarray
    channel_labels: list[str]
    bands: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(BAND_EDGES)
    )
    roi_map: dict[str, str] = field(default_factory=default_roi_map)

    def __post_init__(self):
        if np.any(self.psd < 0):
            raise ValueError("PSD must be non-negative")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequency bins must be strictly increasing")

    @property
    def rois(self) -> list[str]:
        seen = []
        for region in self.roi_map.values():
            if region not in seen:
                seen.append(region)
        return seen


def preprocess(
    rec: MultichannelRecording,
    band: tuple[float, float] = ANALYSIS_BAND,
    notches: tuple[float, ...] = NOTCH_FREQS,
) -> MultichannelRecording:
    """Zero-phase bandpass + notch filtering via spectral masking."""
    lo, hi = band
    if rec.rate < 2 * hi:
        raise ValueError(f"rate {rec.rate} Hz too low for band up to {hi} Hz")
    n = rec.samples.shape[1]
    freqs = np.fft.rfftfreq(n, d=1.0 / rec.rate)
    mask = (freqs >= lo) & (freqs <= hi)
    for f0 in notches:
        mask &= np.abs(freqs - f0) > NOTCH_HALF_WIDTH
    spec = np.fft.rfft(rec.samples, axis=1)
    spec[:, ~mask] = 0.0
    filtered = np.fft.irfft(spec, n=n, axis=1)
    return MultichannelRecording(
        samples=filtered,
        rate=rec.rate,
        channel_labels=list(rec.channel_labels),
        markers=list(rec.markers),
    )


def epoch(
    rec: MultichannelRecording, t0: float = -1.0, t1: float = 3.0
) -> tuple[list[Epoch], int]:
    """Cut [t0, t1] windows around each marker; returns (epochs, n_skipped).

    Baseline correction subtracts the per-channel mean of the [t0, 0)
    segment.  Markers whose window would leave the recording are skipped
    and counted.
    """
    rate = rec.rate
    pre = int(round(-t0 * rate))
    post = int(round(t1 * rate))
    n = rec.samples.shape[1]
    epochs: list[Epoch] = []
    skipped = 0
    for idx, letter in rec.markers:
        start, stop = idx - pre, idx + post
        if start < 0 or stop > n:
            skipped += 1
            continue
        window = rec.samples[:, start:stop].copy()
        if pre > 0:
            window -= window[:, :pre].mean(axis=1, keepdims=True)
        epochs.append(Epoch(samples=window, t0=t0, t1=t1, label=letter, rate=rate))
    return epochs, skipped


def psd(
    ep: Epoch,
    band: tuple[float, float] = ANALYSIS_BAND,
    bands: dict[str, tuple[float, float]] | None = None,
    roi_map: dict[str, str] | None = None,
    channel_labels: list[str] | None = None,
) -> SpectralFeatures:
    """Single-window periodogram on the DFT bins inside the analysis band."""
    n = ep.samples.shape[1]
    if n < 2:
        raise ValueError("window too short for PSD")
    spec = np.fft.rfft(ep.samples, axis=1)
    power = (np.abs(spec) ** 2) / n
    freqs = np.fft.rfftfreq(n, d=1.0 / ep.rate)
    keep = (freqs >= band[0]) & (freqs <= band[1])
    labels = channel_labels or default_channel_labels()[: ep.samples.shape[0]]
    return SpectralFeatures(
        psd=power[:, keep],
        freqs=freqs[keep],
        channel_labels=labels,
        bands=dict(bands or BAND_EDGES),
        roi_map=dict(roi_map or default_roi_map()),
    )


def _segment_phase(seg: np.ndarray, rate: float, freq: float) -> float:
    n = seg.shape[-1]
    k = int(round(freq * n / rate))
    if not 1 <= k <= n // 2:
        raise ValueError(f"{freq} Hz not resolvable in a {n / rate:.3f} s window")
    return float(np.angle(np.fft.rfft(seg)[k]))


def itc(
    epochs: list[Epoch],
    freq: float,
    window: tuple[float, float] | None = None,
    channel: int = 0,
) -> float:
    """Inter-trial coherence: |mean over trials of e^{i phase}| in [0, 1].

    The phase is the DFT phase of each trial's signal at the bin closest
    to `freq`, over the given time window (seconds relative to marker;
    defaults to the full epoch).
    """
    if len(epochs) < 2:
        raise ValueError("ITC needs at least 2 epochs")
    rate = epochs[0].rate
    phasors = []
    for ep in epochs:
        if window is None:
            seg = ep.samples[channel]
        else:
            a = int(round((window[0] - ep.t0) * rate))
            b = int(round((window[1] - ep.t0) * rate))
            if a < 0 or b > ep.samples.shape[1] or b <= a:
                raise ValueError("ITC window outside epoch")
            seg = ep.samples[channel, a:b]
        phasors.append(np.exp(1j * _segment_phase(seg, rate, freq)))
    # dividing by the mean phasor magnitude (each ~1 up to rounding) keeps
    # the triangle-inequality bound |mean| <= 1 exact: identical trials
    # yield exactly 1.0 instead of 1 - O(eps)
    arr = np.asarray(phasors)
    return float(np.abs(arr.mean()) / np.abs(arr).mean())


def itc_map(
    epochs: list[Epoch],
    freqs: np.ndarray | None = None,
    channel: int = 0,
    seg_len: float = 0.5,
    hop: float = 0.1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time-frequency ITC over Hann-windowed segments.

    Returns (itc [freq x time], freqs, segment center times).
    """
    if len(epochs) < 2:
        raise ValueError("ITC needs at least 2 epochs")
    rate = epochs[0].rate
    if freqs is None:
        freqs = np.arange(2.0, 71.0, 2.0)
    n_seg = int(round(seg_len * rate))
    hann = np.hanning(n_seg)
    t0, t1 = epochs[0].t0, epochs[0].t1
    starts = np.arange(0.0, (t1 - t0) - seg_len + 1e-9, hop)
    out = np.zeros((len(freqs), len(starts)))
    for j, s in enumerate(starts):
        a = int(round(s * rate))
        segs = np.stack([ep.samples[channel, a : a + n_seg] * hann for ep in epochs])
        spec = np.fft.rfft(segs, axis=1)
        bin_freqs = np.fft.rfftfreq(n_seg, d=1.0 / rate)
        for i, f in enumerate(freqs):
            k = int(np.argmin(np.abs(bin_freqs - f)))
            phasors = np.exp(1j * np.angle(spec[:, k]))
            out[i, j] = np.abs(phasors.mean()) / np.abs(phasors).mean()
    centers = t0 + starts + seg_len / 2
    return out, np.asarray(freqs), centers


def select_features(
    feat: SpectralFeatures,
    bands: list[str] | str = "all",
    rois: list[str] | str = "all",
) -> np.ndarray:
    """Flatten the PSD restricted to the selected bands and ROIs."""
    if bands == "all":
        bands = list(feat.bands.keys())
    if rois == "all":
        rois = feat.rois
    for b in bands:
        if b not in feat.bands:
            raise KeyError(f"unknown band {b!r}")
    known_rois = set(feat.roi_map.values())
    for r in rois:
        if r not in known_rois:
            raise KeyError(f"unknown ROI {r!r}")

    bin_mask = np.zeros(len(feat.freqs), dtype=bool)
    for b in bands:
        lo, hi = feat.bands[b]
        # half-open [lo, hi) except the last band keeps its upper edge,
        # so "all bands" covers every bin exactly once
        upper = feat.freqs <= hi if hi >= max(e[1] for e in feat.bands.values()) else feat.freqs < hi
        bin_mask |= (feat.freqs >= lo) & upper
    ch_mask = np.array([feat.roi_map.get(c) in set(rois) for c in feat.channel_labels])
    if not bin_mask.any() or not ch_mask.any():
        raise ValueError("empty band/ROI selection")
    return feat.psd[np.ix_(ch_mask, bin_mask)].ravel()


def _letter_signature(letter: str, n_channels: int) -> list[tuple[int, float]]:
    """Fixed (channel, frequency) bumps for a letter, independent of run seed."""
    idx = ord(letter) - ord("a")
    rng = np.random.default_rng(90_000 + idx)
    channels = rng.choice(n_channels, size=3, replace=False)
    freqs = rng.choice(np.arange(6.0, 46.0, 1.0), size=3, replace=False)
    return list(zip(channels.tolist(), freqs.tolist()))


def synth_eeg(
    letter: str,
    trials: int = 25,
    rate: float = 1000.0,
    snr: float = 2.0,
    seed: int = 0,
    n_channels: int = 32,
    trial_spacing: float = 5.0,
) -> MultichannelRecording:
    """Synthetic recording with letter-specific spectral bumps plus noise.

    Each letter maps to three fixed (channel, frequency) sinusoid bumps
    active for 3 s after each marker.  Sample model: snr * signal + unit
    Gaussian noise; snr=inf disables the noise, snr=0 disables the signal.
    """
    if snr < 0:
        raise ValueError("snr must be >= 0")
    n = int(round((trials * trial_spacing + 2.0) * rate))
    rng = np.random.default_rng(seed)
    if np.isinf(snr):
        samples = np.zeros((n_channels, n))
    else:
        samples = rng.standard_normal((n_channels, n))
    markers = []
    sig = _letter_signature(letter, n_channels)
    amp = 1.0 if np.isinf(snr) else snr
    active = int(round(3.0 * rate))
    t = np.arange(active) / rate
    for k in range(trials):
        start = int(round((1.0 + k * trial_spacing) * rate))
        markers.append((start, letter))
        for ch, f in sig:
            samples[ch, start : start + active] += amp * np.sin(2 * np.pi * f * t)
    labels = default_channel_labels()[:n_channels]
    return MultichannelRecording(
        samples=samples, rate=rate, channel_labels=labels, markers=markers
    )


_REC_MAGIC = b"NSREC"
_REC_VERSION = 1


def save_recording(rec: MultichannelRecording, path: str) -> None:
    """Binary container: header + little-endian float32 channel-major payload.

    Markers go to a JSON sidecar at path + ".markers.json".
    """
    labels_blob = json.dumps(rec.channel_labels).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_REC_MAGIC)
        fh.write(struct.pack("<H", _REC_VERSION))
        fh.write(struct.pack("<d", rec.rate))
        fh.write(struct.pack("<II", rec.samples.shape[0], rec.samples.shape[1]))
        fh.write(struct.pack("<I", len(labels_blob)))
        fh.write(labels_blob)
        fh.write(rec.samples.astype("<f4").tobytes(order="C"))
    with open(path + ".markers.json", "w") as fh:
        json.dump([[int(i), s] for i, s in rec.markers], fh)


def load_recording(path: str) -> MultichannelRecording:
    with open(path, "rb") as fh:
        if fh.read(5) != _REC_MAGIC:
            raise ValueError(f"{path}: not a recording container")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _REC_VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        (rate,) = struct.unpack("<d", fh.read(8))
        n_ch, n_samp = struct.unpack("<II", fh.read(8))
        (label_len,) = struct.unpack("<I", fh.read(4))
        labels = json.loads(fh.read(label_len).decode("utf-8"))
        data = np.frombuffer(fh.read(4 * n_ch * n_samp), dtype="<f4")
    samples = data.reshape(n_ch, n_samp).astype(np.float64)
    try:
        with open(path + ".markers.json") as fh:
            markers = [(int(i), s) for i, s in json.load(fh)]
    except FileNotFoundError:
        markers = []
    return MultichannelRecording(
        samples=samples, rate=rate, channel_labels=labels, markers=markers
    )
