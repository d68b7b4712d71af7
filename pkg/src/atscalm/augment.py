"""Waveform and spectrogram augmentations.

Four transforms: additive Gaussian noise, phase-vocoder time stretch,
pitch shift (stretch + resample), and spectrogram frequency/time masking.
The pipeline derives every random draw from a counter-based RNG keyed by
(seed, clip id, variant index), so augmented corpora are reproducible and
order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .audio_io import AudioClip, resample_signal
from .features import TimeFreqGrid
from .util import PipelineError, keyed_rng

VOCODER_WIN = 1024
VOCODER_HOP = 256


@dataclass
class AugmentConfig:
    noise_sigma_rel: float = 0.01       # sigma as a fraction of max|x|
    noise_sigma_abs: float | None = None
    stretch_range: tuple[float, float] = (0.8, 1.25)
    pitch_range_semitones: float = 2.0
    freq_mask_max: int = 8              # mel bins
    time_mask_max: int = 20             # frames
    variants_per_clip: int = 5
    seed: int = 0
    # window must cover at least one period of the lowest tone of interest,
    # or the vocoder smears it into broadband artifacts
    vocoder_win: int = VOCODER_WIN
    vocoder_hop: int = VOCODER_HOP

    def __post_init__(self):
        a, b = self.stretch_range
        if not (0 < a <= b):
            raise PipelineError(f"invalid stretch range {self.stretch_range}")
        if self.pitch_range_semitones < 0:
            raise PipelineError("pitch range must be >= 0")
        if self.freq_mask_max < 0 or self.time_mask_max < 0:
            raise PipelineError("mask maxima must be >= 0")
        if self.variants_per_clip < 1:
            raise PipelineError("variants_per_clip must be >= 1")
        if self.noise_sigma_rel < 0:
            raise PipelineError("noise sigma must be >= 0")


def add_gaussian_noise(clip: AudioClip, sigma: float,
                       rng: np.random.Generator | int = 0) -> AudioClip:
    """x' = x + N(0, sigma^2), element-wise i.i.d."""
    if sigma < 0:
        raise PipelineError("sigma must be >= 0")
    if not isinstance(rng, np.random.Generator):
        rng = keyed_rng("noise", rng)
    x = clip.samples if sigma == 0 else clip.samples + rng.normal(0.0, sigma, clip.samples.size)
    return AudioClip(x.copy(), clip.rate, clip.label, clip.id)


def _istft_ola(re: np.ndarray, im: np.ndarray, win: int, hop: int) -> np.ndarray:
    """Overlap-add inverse with synthesis windowing and COLA normalization."""
    w = dsp.window("hann", win)
    n_frames = re.shape[1]
    out_len = (n_frames - 1) * hop + win
    out = np.zeros(out_len)
    norm = np.zeros(out_len)
    spec = re + 1j * im
    frames = np.fft.ifft(spec, axis=0).real.T[:, :win]
    for m in range(n_frames):
        out[m * hop : m * hop + win] += frames[m] * w
        norm[m * hop : m * hop + win] += w * w
    return out / np.maximum(norm, 1e-8)


def phase_vocoder(x: np.ndarray, rate_factor: float,
                  win: int = VOCODER_WIN, hop: int = VOCODER_HOP) -> np.ndarray:
    """Stretch a signal in time by 1/rate_factor without moving its pitch.

    Per-bin phase accumulation with magnitude interpolation between frames.
    The input is reflect-padded by half a window so every true sample has
    full overlap-add coverage (partially covered edges otherwise blow up
    under the synthesis-window normalization). Output is trimmed/padded to
    exactly round(N / rate_factor) samples.
    """
    if rate_factor <= 0:
        raise PipelineError("stretch rate must be > 0")
    x = np.asarray(x, dtype=np.float64)
    if x.size < win:
        raise PipelineError(f"clip of {x.size} samples is shorter than one vocoder window ({win})")
    target_len = int(round(x.size / rate_factor))
    if rate_factor == 1.0:
        return x.copy()[:target_len]
    pad = win // 2
    xp = np.pad(x, pad, mode="reflect")
    grid = dsp.stft(xp, win, hop, window_name="hann", n_fft=win)
    spec = grid.re + 1j * grid.im
    n_bins, n_frames = spec.shape
    steps = np.arange(0.0, n_frames - 1, rate_factor)
    expected = 2.0 * np.pi * hop * np.arange(n_bins) / win
    mags = np.abs(spec)
    phases = np.angle(spec)
    out = np.empty((n_bins, steps.size), dtype=np.complex128)
    acc = phases[:, 0].copy()
    for k, s in enumerate(steps):
        i0 = int(np.floor(s))
        i1 = min(i0 + 1, n_frames - 1)
        frac = s - i0
        mag = (1.0 - frac) * mags[:, i0] + frac * mags[:, i1]
        out[:, k] = mag * np.exp(1j * acc)
        dphi = phases[:, i1] - phases[:, i0] - expected
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        acc += expected + dphi
    y = _istft_ola(out.real, out.imag, win, hop)
    start = int(round(pad / rate_factor))
    y = y[start:]
    if y.size >= target_len:
        return y[:target_len]
    return np.concatenate([y, np.zeros(target_len - y.size)])


def time_stretch(clip: AudioClip, rate_factor: float,
                 win: int = VOCODER_WIN, hop: int = VOCODER_HOP) -> AudioClip:
    """Speed the clip up by ``rate_factor`` (output length ~= N / rate_factor)."""
    y = phase_vocoder(clip.samples, rate_factor, win=win, hop=hop)
    return AudioClip(y, clip.rate, clip.label, clip.id)


def pitch_shift(clip: AudioClip, semitones: float,
                win: int = VOCODER_WIN, hop: int = VOCODER_HOP) -> AudioClip:
    """Scale all frequencies by 2^(semitones/12), preserving duration.

    Time-stretch to length N * 2^(s/12) (pitch untouched), then resample
    back to N samples, which multiplies frequencies by the factor.
    """
    if semitones == 0.0:
        return AudioClip(clip.samples.copy(), clip.rate, clip.label, clip.id)
    factor = 2.0 ** (semitones / 12.0)
    stretched = phase_vocoder(clip.samples, 1.0 / factor, win=win, hop=hop)
    y = resample_signal(stretched, clip.rate * factor, clip.rate)
    n = clip.samples.size
    if y.size >= n:
        y = y[:n]
    else:
        y = np.concatenate([y, np.zeros(n - y.size)])
    return AudioClip(y, clip.rate, clip.label, clip.id)


def spec_mask(grid: TimeFreqGrid, f_max: int, t_max: int,
              rng: np.random.Generator | int = 0) -> TimeFreqGrid:
    """Blank one frequency band (width U{0..f_max}) and one time span
    (width U{0..t_max}) to the grid's floor value."""
    if f_max > grid.n_bins or t_max > grid.n_frames:
        raise PipelineError("mask maxima exceed grid shape")
    if not isinstance(rng, np.random.Generator):
        rng = keyed_rng("mask", rng)
    values = grid.values.copy()
    floor = float(values.min())
    fw = int(rng.integers(0, f_max + 1)) if f_max > 0 else 0
    f0 = int(rng.integers(0, grid.n_bins - fw + 1)) if fw > 0 else 0
    tw = int(rng.integers(0, t_max + 1)) if t_max > 0 else 0
    t0 = int(rng.integers(0, grid.n_frames - tw + 1)) if tw > 0 else 0
    if fw > 0:
        values[f0 : f0 + fw, :] = floor
    if tw > 0:
        values[:, t0 : t0 + tw] = floor
    return TimeFreqGrid(values, grid.kind, grid.rate, grid.hop_s, grid.bin_centers_hz.copy())


def make_variant(clip: AudioClip, cfg: AugmentConfig,
                 rng: np.random.Generator) -> AudioClip:
    """One noise + stretch + pitch draw. Masking happens later, on spectrograms."""
    r = float(rng.uniform(*cfg.stretch_range))
    k = cfg.pitch_range_semitones
    s = float(rng.uniform(-k, k)) if k > 0 else 0.0
    if cfg.noise_sigma_abs is not None:
        sigma = cfg.noise_sigma_abs
    else:
        sigma = cfg.noise_sigma_rel * float(np.max(np.abs(clip.samples)))
    out = add_gaussian_noise(clip, sigma, rng)
    if r != 1.0:
        out = time_stretch(out, r, win=cfg.vocoder_win, hop=cfg.vocoder_hop)
    if s != 0.0:
        out = pitch_shift(out, s, win=cfg.vocoder_win, hop=cfg.vocoder_hop)
    return out


def augment_pipeline(clip: AudioClip, cfg: AugmentConfig) -> list[AudioClip]:
    """``variants_per_clip`` independent variants, deterministic per (cfg.seed, clip.id)."""
    variants = []
    for k in range(cfg.variants_per_clip):
        rng = keyed_rng(cfg.seed, clip.id, k)
        var = make_variant(clip, cfg, rng)
        var.id = f"{clip.id}.aug{k}"
        variants.append(var)
    return variants
