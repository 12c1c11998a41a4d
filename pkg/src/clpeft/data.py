"""Manifests, PCM16 WAV I/O, stratified folds and the synthetic severity corpus."""

from __future__ import annotations

import json
import wave
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

LABELS = ("normal", "mild", "moderate", "severe")
SPLITS = ("train", "dev", "eval")
SAMPLE_RATE = 16000
# RMS of the nasal branch at unit coupling gain, relative to the unit-RMS oral branch
NASAL_LEVEL = 3.0


class ManifestError(ValueError):
    pass


class WavFormatError(ValueError):
    pass


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if np.size(self.samples) < 1:
            raise ValueError("audio clip has no samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    label: str
    split: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"unknown label {self.label!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")


def load_manifest(path) -> list[ManifestEntry]:
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or not {"id", "path", "label", "split"} <= obj.keys():
                raise ManifestError(f"{path}:{lineno}: entry needs id, path, label, split")
            try:
                entry = ManifestEntry(str(obj["id"]), str(obj["path"]),
                                      str(obj["label"]), str(obj["split"]))
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if entry.id in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate id {entry.id!r} (first on line {seen[entry.id]})")
            seen[entry.id] = lineno
            entries.append(entry)
    return entries


def save_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(json.dumps({"id": e.id, "path": e.path, "label": e.label,
                                 "split": e.split}) + "\n")


def resolve_audio_path(manifest_path, entry: ManifestEntry) -> Path:
    p = Path(entry.path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def manifest_stats(entries) -> dict[str, dict[str, int]]:
    stats = {s: {lab: 0 for lab in LABELS} for s in SPLITS}
    for e in entries:
        stats[e.split][e.label] += 1
    return stats


# ------------------------------------------------------------------------- WAV

def read_wav(path) -> AudioClip:
    try:
        with wave.open(str(path), "rb") as w:
            header = {"channels": w.getnchannels(), "sample_width": w.getsampwidth(),
                      "sample_rate": w.getframerate(), "frames": w.getnframes(),
                      "compression": w.getcomptype()}
            if header["channels"] != 1 or header["sample_width"] != 2 or header["compression"] != "NONE":
                raise WavFormatError(f"{path}: only PCM16 mono is supported; header={header}")
            raw = w.readframes(header["frames"])
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a PCM WAV file ({exc})") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / np.float32(32768.0)
    return AudioClip(samples, header["sample_rate"])


def to_pcm16(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, clip: AudioClip) -> None:
    pcm = to_pcm16(clip.samples)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(clip.sample_rate))
        w.writeframes(pcm.tobytes())


# ----------------------------------------------------------------------- folds

def _id_label(entry):
    if isinstance(entry, ManifestEntry):
        return entry.id, entry.label
    return str(entry[0]), entry[1]


def stratified_folds(entries, k: int, seed: int) -> list[int]:
    """Fold index per entry, aligned with the input order.

    Within each class the ids are sorted, shuffled by a seeded generator and
    dealt round-robin, so the result depends only on (ids, labels, k, seed).
    """
    if k < 2:
        raise StratificationError(f"k must be >= 2, got {k}")
    pairs = [_id_label(e) for e in entries]
    ids = [p[0] for p in pairs]
    if len(set(ids)) != len(ids):
        raise StratificationError("entry ids must be unique")
    by_class: dict = {}
    for i, (eid, lab) in enumerate(pairs):
        by_class.setdefault(lab, []).append((eid, i))
    for lab, members in by_class.items():
        if len(members) < k:
            raise StratificationError(
                f"class {lab!r} has {len(members)} examples, fewer than k={k}")
    rng = np.random.default_rng(seed)
    folds = [0] * len(pairs)
    for lab in sorted(by_class, key=str):
        members = sorted(by_class[lab])
        order = rng.permutation(len(members))
        for pos, j in enumerate(order):
            folds[members[j][1]] = pos % k
    return folds


# ------------------------------------------------------------------- synthesis

@dataclass
class SynthConfig:
    n_per_class: int = 50
    duration_s: float = 3.0
    seed: int = 7
    f0_range: tuple[float, float] = (200.0, 300.0)
    nasal_gain: tuple[float, ...] = (0.0, 0.15, 0.35, 0.6)
    noise_mix: tuple[float, ...] = (0.01, 0.05, 0.10, 0.18)
    f1_range: tuple[float, float] = (400.0, 900.0)
    f2_range: tuple[float, float] = (1000.0, 2600.0)
    noise_scale: float = 1.0
    background_level: float = 0.02

    def __post_init__(self):
        self.f0_range = tuple(float(x) for x in self.f0_range)
        self.f1_range = tuple(float(x) for x in self.f1_range)
        self.f2_range = tuple(float(x) for x in self.f2_range)
        self.nasal_gain = tuple(float(x) for x in self.nasal_gain)
        self.noise_mix = tuple(float(x) for x in self.noise_mix)
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        lo, hi = self.f0_range
        if not 0 < lo <= hi < SAMPLE_RATE / 2:
            raise ValueError(f"invalid f0_range {self.f0_range}")
        for name in ("nasal_gain", "noise_mix"):
            seq = getattr(self, name)
            if len(seq) != len(LABELS):
                raise ValueError(f"{name} needs {len(LABELS)} values")
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise ValueError(f"{name} must be strictly increasing normal -> severe")

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


def _resonator(freq: float, bw: float, fs: int = SAMPLE_RATE):
    """Second-order all-pole resonator with unit gain at DC."""
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a


def _clip_rng(seed: int, clip_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(clip_id.encode())]))


def synthesize_clip(clip_id: str, label: str, config: SynthConfig) -> AudioClip:
    """Source-filter vowel with severity-scaled nasal coupling and aspiration noise."""
    cls = LABELS.index(label)
    rng = _clip_rng(config.seed, clip_id)
    fs = SAMPLE_RATE
    n = int(round(config.duration_s * fs))
    t = np.arange(n) / fs

    f0 = rng.uniform(*config.f0_range)
    f0_track = f0 * (1.0 + 0.04 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t
                                         + rng.uniform(0, 2 * np.pi)))
    phase = np.cumsum(f0_track) / fs
    source = np.zeros(n)
    source[1:][np.diff(np.floor(phase)) > 0] = 1.0
    # glottal tilt varies per speaker and is independent of severity
    source = signal.lfilter([1.0], [1.0, -rng.uniform(0.85, 0.98)], source)

    f1 = rng.uniform(*config.f1_range)
    f2 = rng.uniform(*config.f2_range)
    oral = signal.lfilter(*_resonator(f1, rng.uniform(60.0, 120.0)), source)
    oral = signal.lfilter(*_resonator(f2, rng.uniform(90.0, 160.0)), oral)
    oral /= np.sqrt(np.mean(oral ** 2)) + 1e-12

    g_nasal = config.nasal_gain[cls]
    nasal = signal.lfilter(*_resonator(rng.uniform(230.0, 270.0), 60.0), source)
    nasal *= NASAL_LEVEL / (np.sqrt(np.mean(nasal ** 2)) + 1e-12)
    voiced = oral + g_nasal * nasal

    # antiresonance: subtract a band-passed copy around ~1 kHz, depth grows with severity
    notch_f = rng.uniform(900.0, 1100.0)
    bb, ba = signal.iirpeak(notch_f, Q=8.0, fs=fs)
    voiced = voiced - g_nasal * signal.lfilter(bb, ba, voiced)

    env = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(3.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    ramp = min(n // 2, int(0.05 * fs))
    if ramp:
        env[:ramp] *= np.linspace(0.0, 1.0, ramp)
        env[-ramp:] *= np.linspace(1.0, 0.0, ramp)
    voiced = voiced * env

    noise = signal.lfilter([1.0, -0.9], [1.0], rng.standard_normal(n))
    noise /= np.sqrt(np.mean(noise ** 2)) + 1e-12
    y = voiced + config.noise_mix[cls] * config.noise_scale * noise * env

    # room noise floor, class independent
    floor = signal.lfilter([1.0], [1.0, -rng.uniform(0.0, 0.95)], rng.standard_normal(n))
    floor /= np.sqrt(np.mean(floor ** 2)) + 1e-12
    y = y + config.background_level * rng.uniform(0.0, 1.0) * floor

    y *= rng.uniform(0.3, 0.8) / (np.max(np.abs(y)) + 1e-12)
    return AudioClip(y.astype(np.float32), fs)


def assign_splits(ids_by_label: dict[str, list[str]], seed: int,
                  ratios=(0.6, 0.2, 0.2)) -> dict[str, str]:
    rng = np.random.default_rng(seed)
    split_of = {}
    for label in LABELS:
        ids = sorted(ids_by_label.get(label, []))
        order = rng.permutation(len(ids))
        n_train = int(round(ratios[0] * len(ids)))
        n_dev = int(round(ratios[1] * len(ids)))
        for pos, j in enumerate(order):
            split_of[ids[j]] = ("train" if pos < n_train else
                                "dev" if pos < n_train + n_dev else "eval")
    return split_of


def synthesize_dataset(config: SynthConfig, out_dir) -> tuple[Path, list[ManifestEntry]]:
    """Write one WAV per clip under ``out_dir/audio`` plus ``out_dir/manifest.jsonl``."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    ids_by_label = {lab: [f"{lab}_{i:04d}" for i in range(config.n_per_class)] for lab in LABELS}
    split_of = assign_splits(ids_by_label, config.seed)
    entries = []
    for label in LABELS:
        for clip_id in ids_by_label[label]:
            rel = f"audio/{clip_id}.wav"
            write_wav(out_dir / rel, synthesize_clip(clip_id, label, config))
            entries.append(ManifestEntry(clip_id, rel, label, split_of[clip_id]))
    manifest = out_dir / "manifest.jsonl"
    save_manifest(entries, manifest)
    return manifest, entries


def band_energy_ratio(samples, lo: float = 200.0, hi: float = 300.0,
                      fs: int = SAMPLE_RATE) -> float:
    """Fraction of total spectral power that falls in ``[lo, hi]`` Hz."""
    spec = np.abs(np.fft.rfft(np.asarray(samples, dtype=np.float64))) ** 2
    freqs = np.fft.rfftfreq(len(samples), 1.0 / fs)
    total = spec.sum()
    return float(spec[(freqs >= lo) & (freqs <= hi)].sum() / total) if total > 0 else 0.0
