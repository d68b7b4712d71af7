"""Audio corpus I/O: WAV codec, manifests, resampling, synthetic corpora.

WAV support is deliberately narrow: PCM 16-bit or IEEE float 32-bit input,
1-2 channels; output is always 16-bit PCM mono. The canonical internal rate
is 16 kHz and downstream modules assume clips were resampled on ingest.
"""

from __future__ import annotations

import enum
import logging
import os
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .util import PipelineError, keyed_rng, read_json, write_json

log = logging.getLogger(__name__)

CANONICAL_RATE = 16000


class ClassLabel(str, enum.Enum):
    SPIRITUAL_MEDITATION = "SpiritualMeditation"
    MUSIC = "Music"
    NORMAL_SILENCE = "NormalSilence"


LABELS = (ClassLabel.SPIRITUAL_MEDITATION, ClassLabel.MUSIC, ClassLabel.NORMAL_SILENCE)

SHORT_CODE = {
    ClassLabel.SPIRITUAL_MEDITATION: "SM",
    ClassLabel.MUSIC: "M",
    ClassLabel.NORMAL_SILENCE: "NS",
}

# Per-class characteristic tone frequency (Hz) used by the synthetic corpus
# and the theoretical reconstruction.
CLASS_TONE_HZ = {
    ClassLabel.SPIRITUAL_MEDITATION: 25.0,
    ClassLabel.MUSIC: 20.0,
    ClassLabel.NORMAL_SILENCE: 30.0,
}

DEFAULT_CLASS_DIRS = {
    ClassLabel.SPIRITUAL_MEDITATION: "Spiritual",
    ClassLabel.MUSIC: "Music",
    ClassLabel.NORMAL_SILENCE: "Normal",
}


def parse_label(name: str) -> ClassLabel:
    try:
        return ClassLabel(name)
    except ValueError:
        raise PipelineError(f"unknown class label {name!r}") from None


@dataclass
class AudioClip:
    samples: np.ndarray
    rate: int
    label: ClassLabel | None = None
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.rate <= 0:
            raise PipelineError(f"clip rate must be positive, got {self.rate}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise PipelineError("clip must hold a non-empty 1-d sample sequence")
        if not np.all(np.isfinite(self.samples)):
            raise PipelineError(f"clip {self.id!r} contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate


def load_wav(path: str) -> AudioClip:
    """Read a RIFF/WAVE file (PCM16 or float32, mono/stereo) as mono float."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise PipelineError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 12 or blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise PipelineError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise PipelineError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise PipelineError(f"{path}: missing fmt or data chunk")
    audio_format, n_ch, rate, _byte_rate, _block_align, bits = fmt
    if n_ch not in (1, 2):
        raise PipelineError(f"{path}: unsupported channel count {n_ch}")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise PipelineError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits}); "
            "expected PCM 16-bit or IEEE float 32-bit"
        )
    if raw.size == 0:
        raise PipelineError(f"{path}: zero-length audio")
    if n_ch == 2:
        raw = raw.reshape(-1, 2).mean(axis=1)
    stem = os.path.splitext(os.path.basename(path))[0]
    return AudioClip(samples=raw, rate=int(rate), id=stem)


def save_wav(clip: AudioClip, path: str) -> None:
    """Write mono 16-bit PCM; values are clamped to [-1, 1] first."""
    x = np.clip(clip.samples, -1.0, 1.0)
    quant = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2")
    try:
        with wave.open(path, "wb") as wav:
            wav.setnchannels(1)
            wav.setsampwidth(2)
            wav.setframerate(clip.rate)
            wav.writeframes(quant.tobytes())
    except OSError as exc:
        raise PipelineError(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class ManifestEntry:
    path: str            # relative to the manifest location
    label: ClassLabel
    duration_s: float
    rate: int

    @property
    def clip_id(self) -> str:
        return os.path.splitext(self.path)[0].replace(os.sep, "/")


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    counts: dict[ClassLabel, int]
    root: str = "."      # directory entry paths are relative to

    def __post_init__(self):
        if sum(self.counts.values()) != len(self.entries):
            raise PipelineError("manifest counts do not sum to the entry count")

    def load_clip(self, entry: ManifestEntry, target_rate: int | None = None) -> AudioClip:
        clip = load_wav(os.path.join(self.root, entry.path))
        clip.label = entry.label
        clip.id = entry.clip_id
        if target_rate is not None and clip.rate != target_rate:
            clip = resample(clip, target_rate)
        return clip


def _entry_for(root: str, rel_path: str, label: ClassLabel) -> ManifestEntry:
    # header-only probe; full decode happens on demand via load_clip
    full = os.path.join(root, rel_path)
    with open(full, "rb") as fh:
        blob = fh.read(64 * 1024)
    if len(blob) < 12 or blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise PipelineError(f"{full}: not a RIFF/WAVE file")
    pos = 12
    rate = None
    n_frames = None
    bits = 16
    n_ch = 1
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        if cid == b"fmt ":
            _, n_ch, rate, _, _, bits = struct.unpack_from("<HHIIHH", blob, pos + 8)
        elif cid == b"data":
            n_frames = size // max(1, n_ch * (bits // 8))
            break
        pos += 8 + size + (size & 1)
    if rate is None or n_frames is None or n_frames == 0:
        raise PipelineError(f"{full}: cannot determine duration from header")
    return ManifestEntry(rel_path, label, n_frames / rate, int(rate))


def build_manifest(root: str, class_dir_map: dict[ClassLabel, str] | None = None) -> CorpusManifest:
    """Scan ``root`` for per-class subdirectories of WAV files.

    Entries are sorted lexicographically by relative path so the manifest is
    deterministic across platforms. Subdirectories not named in the map are
    skipped with a warning.
    """
    if class_dir_map is None:
        class_dir_map = DEFAULT_CLASS_DIRS
    if not os.path.isdir(root):
        raise PipelineError(f"corpus root {root!r} does not exist")
    dir_to_label = {d: lab for lab, d in class_dir_map.items()}
    for d in class_dir_map.values():
        if not os.path.isdir(os.path.join(root, d)):
            raise PipelineError(f"mapped class directory {d!r} missing under {root!r}")
    entries: list[ManifestEntry] = []
    for sub in sorted(os.listdir(root)):
        full = os.path.join(root, sub)
        if not os.path.isdir(full):
            continue
        label = dir_to_label.get(sub)
        if label is None:
            log.warning("skipping unmapped subdirectory %s", full)
            continue
        for name in sorted(os.listdir(full)):
            if not name.lower().endswith(".wav"):
                continue
            entries.append(_entry_for(root, os.path.join(sub, name), label))
    if not entries:
        raise PipelineError(f"empty corpus under {root!r}")
    entries.sort(key=lambda e: e.path)
    counts = {lab: 0 for lab in LABELS}
    for e in entries:
        counts[e.label] += 1
    return CorpusManifest(entries=entries, counts=counts, root=root)


def save_manifest(manifest: CorpusManifest, path: str) -> None:
    obj = {
        "entries": [
            {
                "path": e.path.replace(os.sep, "/"),
                "label": e.label.value,
                "duration_s": e.duration_s,
                "rate": e.rate,
            }
            for e in manifest.entries
        ],
        "counts": {lab.value: manifest.counts.get(lab, 0) for lab in LABELS},
    }
    write_json(path, obj)


def load_manifest(path: str) -> CorpusManifest:
    obj = read_json(path)
    root = os.path.dirname(os.path.abspath(path))
    entries = [
        ManifestEntry(
            path=item["path"],
            label=parse_label(item["label"]),
            duration_s=float(item["duration_s"]),
            rate=int(item["rate"]),
        )
        for item in obj["entries"]
    ]
    counts = {parse_label(k): int(v) for k, v in obj["counts"].items()}
    return CorpusManifest(entries=entries, counts=counts, root=root)


_RESAMPLE_HALF = 32      # 64 taps
_RESAMPLE_BETA = 8.0
_RESAMPLE_PHASES = 512   # kernel table resolution per unit tap offset
_kernel_cache: dict[float, np.ndarray] = {}


def _resample_kernel_table(cutoff: float) -> np.ndarray:
    """(phases+1, 64) table of the Kaiser-windowed sinc at fractional offsets.

    Row p holds the 64 tap weights for fractional position p/phases; rows
    are linearly interpolated at lookup time (error ~1e-6 of peak).
    """
    table = _kernel_cache.get(cutoff)
    if table is None:
        half = _RESAMPLE_HALF
        fracs = np.arange(_RESAMPLE_PHASES + 1) / _RESAMPLE_PHASES
        ks = np.arange(2 * half)
        u = fracs[:, None] + (half - 1) - ks[None, :]
        t = u / half
        win = np.where(
            np.abs(t) <= 1.0,
            np.i0(_RESAMPLE_BETA * np.sqrt(np.maximum(0.0, 1.0 - t * t))) / np.i0(_RESAMPLE_BETA),
            0.0,
        )
        table = cutoff * np.sinc(cutoff * u) * win
        _kernel_cache[cutoff] = table
    return table


def resample_signal(x: np.ndarray, src_rate: float, dst_rate: float) -> np.ndarray:
    """Band-limited resampling: 64-tap Kaiser(beta=8) windowed sinc.

    Cutoff sits at min(src, dst)/2. Output length is round(N * dst/src).
    """
    x = np.asarray(x, dtype=np.float64)
    if dst_rate <= 0:
        raise PipelineError("target rate must be positive")
    if src_rate == dst_rate:
        return x.copy()
    ratio = dst_rate / src_rate
    n_out = int(round(x.size * ratio))
    cutoff = min(1.0, ratio)  # normalized to source Nyquist
    half = _RESAMPLE_HALF
    table = _resample_kernel_table(cutoff)
    out = np.empty(n_out)
    ks = np.arange(2 * half)
    xp = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    for start in range(0, n_out, 65536):
        idx = np.arange(start, min(start + 65536, n_out))
        pos = idx / ratio
        base = np.floor(pos).astype(np.int64)
        frac = pos - base
        fi = frac * _RESAMPLE_PHASES
        fi0 = np.floor(fi).astype(np.int64)
        w = (fi - fi0)[:, None]
        kern = table[fi0] * (1.0 - w) + table[fi0 + 1] * w
        tap_idx = base[:, None] + 1 + ks[None, :]   # offset by zero-pad margin
        out[idx] = np.sum(kern * xp[tap_idx], axis=1)
    return out


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    if target_rate <= 0:
        raise PipelineError("target rate must be positive")
    if target_rate == clip.rate:
        return AudioClip(clip.samples.copy(), clip.rate, clip.label, clip.id)
    y = resample_signal(clip.samples, clip.rate, target_rate)
    return AudioClip(y, target_rate, clip.label, clip.id)


@dataclass
class SynthConfig:
    n_per_class: int = 8
    duration_s: float = 2.0
    seed: int = 0
    snr_db: float | None = None   # None = noise-free
    rate: int = CANONICAL_RATE
    envelope_floor: float = 0.1


def synth_signal(label: ClassLabel, index: int, cfg: SynthConfig) -> np.ndarray:
    """One synthetic clip: slowly modulated tone at the class frequency.

    The envelope is 0.5 plus up to three sinusoids below 2 Hz, clamped to
    the configured floor so the analytic envelope stays well defined; the
    carrier starts at phase 0.
    """
    rng = keyed_rng(cfg.seed, "synth", label.value, index)
    n = int(round(cfg.duration_s * cfg.rate))
    t = np.arange(n) / cfg.rate
    n_comp = int(rng.integers(1, 4))
    freqs = rng.uniform(0.2, 2.0, n_comp)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_comp)
    amps = rng.uniform(0.2, 1.0, n_comp)
    # modest total modulation keeps clip-to-clip RMS nearly constant, so the
    # class tone stays the dominant factor of variation across the corpus
    amps *= rng.uniform(0.1, 0.2) / amps.sum()
    env = 0.5 + sum(a * np.cos(2.0 * np.pi * f * t + p) for a, f, p in zip(amps, freqs, phases))
    env = np.maximum(env, cfg.envelope_floor)
    x = env * np.cos(2.0 * np.pi * CLASS_TONE_HZ[label] * t)
    if cfg.snr_db is not None:
        p_sig = float(np.mean(x * x))
        sigma = np.sqrt(p_sig / (10.0 ** (cfg.snr_db / 10.0)))
        x = x + rng.normal(0.0, sigma, n)
    return x


def synth_corpus(out_dir: str, cfg: SynthConfig,
                 class_dir_map: dict[ClassLabel, str] | None = None) -> CorpusManifest:
    """Generate a labeled synthetic corpus on disk plus its manifest.

    Pure function of the config: the same seed yields bit-identical WAV
    files and manifest.
    """
    if cfg.n_per_class < 1:
        raise PipelineError("n_per_class must be >= 1")
    if class_dir_map is None:
        class_dir_map = DEFAULT_CLASS_DIRS
    os.makedirs(out_dir, exist_ok=True)
    entries: list[ManifestEntry] = []
    for label in LABELS:
        sub = class_dir_map[label]
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
        for i in range(cfg.n_per_class):
            x = synth_signal(label, i, cfg)
            rel = os.path.join(sub, f"clip_{i:03d}.wav")
            save_wav(AudioClip(x, cfg.rate, label), os.path.join(out_dir, rel))
            entries.append(ManifestEntry(rel, label, len(x) / cfg.rate, cfg.rate))
    entries.sort(key=lambda e: e.path)
    counts = {lab: cfg.n_per_class for lab in LABELS}
    manifest = CorpusManifest(entries=entries, counts=counts, root=out_dir)
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
