"""Corpus ingestion, frame-target rasterization, and synthetic corpora.

On-disk layout (TUT-style, tab separated):
  meta.tsv                one line per clip: clip_id <TAB> path <TAB> scene_label
                          (path is a wav file or an .lmel feature cache,
                          relative to the meta file's directory)
  ann/<clip_id>.ann       one line per event: onset <TAB> offset <TAB> label

A frame is active for an event when their intervals overlap at all:
z[n, t] = 1 iff onset < t*hop + frame_len and offset > t*hop.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import audio
from .errors import SceneSedError

HOP_SECONDS = 0.02
FRAME_SECONDS = 0.04


class CorpusError(SceneSedError):
    pass


class DuplicateClipIdError(CorpusError):
    pass


class AnnotationIntervalError(CorpusError):
    pass


class UnknownEventLabelError(CorpusError):
    pass


@dataclass
class EventAnnotation:
    onset: float
    offset: float
    label: str


@dataclass
class ClipRecord:
    clip_id: str
    path: str
    scene_label: str
    annotations: list = field(default_factory=list)


class EventVocabulary:
    """Fixed ordering of event labels; index n per label is stable."""

    def __init__(self, labels):
        labels = list(labels)
        if len(set(labels)) != len(labels):
            raise CorpusError("event vocabulary labels must be unique")
        self.labels = tuple(labels)
        self.index = {lab: i for i, lab in enumerate(labels)}

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label):
        return label in self.index


def _read_annotations(path, vocab=None):
    annotations = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise CorpusError(f"{path}:{lineno}: expected onset<TAB>offset<TAB>label, got {len(parts)} fields")
            try:
                onset, offset = float(parts[0]), float(parts[1])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-numeric onset/offset") from None
            if offset <= onset:
                raise AnnotationIntervalError(f"{path}:{lineno}: offset {offset} <= onset {onset}")
            label = parts[2]
            if vocab is not None and label not in vocab:
                raise UnknownEventLabelError(f"{path}:{lineno}: label {label!r} not in the supplied vocabulary")
            annotations.append(EventAnnotation(onset, offset, label))
    return annotations


def load_corpus(meta_path, annotations_dir, vocab=None):
    """Read meta.tsv plus per-clip annotation files.

    Returns (records sorted by clip_id, vocabulary). Without an explicit
    vocabulary the sorted set of all annotated labels is used.
    """
    records = []
    seen = set()
    with open(meta_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise CorpusError(f"{meta_path}:{lineno}: expected clip_id<TAB>path<TAB>scene_label")
            clip_id, path, scene = parts
            if clip_id in seen:
                raise DuplicateClipIdError(f"{meta_path}:{lineno}: duplicate clip_id {clip_id!r}")
            if not scene:
                raise CorpusError(f"{meta_path}:{lineno}: empty scene label")
            seen.add(clip_id)
            ann_path = os.path.join(annotations_dir, clip_id + ".ann")
            annotations = _read_annotations(ann_path, vocab) if os.path.exists(ann_path) else []
            records.append(ClipRecord(clip_id, path, scene, annotations))
    records.sort(key=lambda r: r.clip_id)
    if vocab is None:
        labels = sorted({a.label for r in records for a in r.annotations})
        vocab = EventVocabulary(labels)
    return records, vocab


def rasterize_targets(annotations, vocab, n_frames, hop=HOP_SECONDS, frame_len=FRAME_SECONDS):
    """Binary (N, T) activity matrix under the interval-overlap rule."""
    z = np.zeros((len(vocab), n_frames))
    for ann in annotations:
        n = vocab.index[ann.label]
        # candidate frame range, then verify the exact inequalities per frame
        t_lo = max(0, int(np.floor((ann.onset - frame_len) / hop)))
        t_hi = min(n_frames, int(np.ceil(ann.offset / hop)) + 1)
        for t in range(t_lo, t_hi):
            if ann.onset < t * hop + frame_len and ann.offset > t * hop:
                z[n, t] = 1.0
    return z


@dataclass
class Corpus:
    root: str
    records: list
    vocab: EventVocabulary

    def features(self, record):
        path = os.path.join(self.root, record.path)
        if path.endswith(".lmel"):
            return audio.read_feature_cache(path)
        return audio.log_mel(audio.load_wav(path))

    def targets(self, record, n_frames):
        return rasterize_targets(record.annotations, self.vocab, n_frames)

    def scene_labels(self):
        return sorted({r.scene_label for r in self.records})


def open_corpus(root, vocab=None):
    """Load the standard corpus layout rooted at `root`."""
    records, vocab = load_corpus(os.path.join(root, "meta.tsv"), os.path.join(root, "ann"), vocab)
    return Corpus(root=root, records=records, vocab=vocab)


def batches(clips, batch_size, shuffle_seed, epoch):
    """Deterministic shuffled batches for one epoch; visits every clip once."""
    if not clips:
        raise CorpusError("cannot iterate batches over an empty corpus")
    if batch_size < 1:
        raise CorpusError("batch_size must be >= 1")
    rng = np.random.default_rng((int(shuffle_seed), int(epoch)))
    order = rng.permutation(len(clips))
    for start in range(0, len(clips), batch_size):
        yield [clips[i] for i in order[start:start + batch_size]]


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass
class EventSpec:
    prob: float               # per-clip occurrence probability
    dur_range: tuple          # (min, max) seconds
    band: int | None = None   # band group; events sharing a group share mel bands


@dataclass
class SceneProfile:
    name: str
    events: dict  # label -> EventSpec


def builtin_profiles(name):
    """Canned scene profiles for desk experiments.

    two_scene: two scenes whose dominant events are disjoint, with each
    dominant event sharing its mel bands with the other scene's twin, so
    audio alone cannot tell the twins apart and the scene context is the
    disambiguator.
    """
    if name == "two_scene":
        park = {
            "birdsong": EventSpec(0.9, (0.1, 0.5), band=0),
            "dog_bark": EventSpec(0.85, (0.1, 0.5), band=1),
            "wind_gust": EventSpec(0.8, (0.1, 0.5), band=2),
            "dish_clatter": EventSpec(0.05, (0.1, 0.5), band=0),
            "water_tap": EventSpec(0.05, (0.1, 0.5), band=1),
            "fridge_hum": EventSpec(0.05, (0.1, 0.5), band=2),
        }
        kitchen = {
            "birdsong": EventSpec(0.05, (0.1, 0.5), band=0),
            "dog_bark": EventSpec(0.05, (0.1, 0.5), band=1),
            "wind_gust": EventSpec(0.05, (0.1, 0.5), band=2),
            "dish_clatter": EventSpec(0.9, (0.1, 0.5), band=0),
            "water_tap": EventSpec(0.85, (0.1, 0.5), band=1),
            "fridge_hum": EventSpec(0.8, (0.1, 0.5), band=2),
        }
        return [SceneProfile("park", park), SceneProfile("kitchen", kitchen)]
    if name == "four_scene":
        def spec(p, band):
            return EventSpec(p, (0.1, 0.5), band=band)
        return [
            SceneProfile("home", {
                "dishes": spec(0.9, 0), "vacuum": spec(0.6, 1),
                "traffic": spec(0.05, 2), "keyboard": spec(0.05, 3)}),
            SceneProfile("office", {
                "keyboard": spec(0.9, 3), "printer": spec(0.6, 4),
                "dishes": spec(0.05, 0), "birds": spec(0.05, 5)}),
            SceneProfile("city center", {
                "traffic": spec(0.9, 2), "footsteps": spec(0.6, 6),
                "birds": spec(0.1, 5), "vacuum": spec(0.05, 1)}),
            SceneProfile("residential area", {
                "birds": spec(0.9, 5), "footsteps": spec(0.4, 6),
                "traffic": spec(0.3, 2), "printer": spec(0.05, 4)}),
        ]
    raise CorpusError(f"unknown builtin profile set {name!r}")


def _band_slices(vocab, specs_by_label, n_mels):
    groups = {}
    for i, label in enumerate(vocab):
        band = specs_by_label[label].band
        groups[label] = band if band is not None else i
    n_groups = max(groups.values()) + 1
    width = max(2, n_mels // n_groups)
    slices = {}
    for label, g in groups.items():
        lo = min(g * width, n_mels - width)
        slices[label] = slice(lo, lo + width)
    return slices


def make_synthetic_corpus(out_dir, seed, n_clips, profiles, n_frames=audio.N_FRAMES,
                          n_mels=audio.N_MELS, wav_mode=False):
    """Generate a deterministic corpus on disk and return its root.

    Each clip gets a scene (round-robin over the profiles), Bernoulli-
    sampled events with uniform onsets and durations, and features built
    directly in log-mel space: a noisy floor plus a band-limited boost
    wherever an event is active, so the features and the rasterized
    targets agree by construction. With wav_mode the same events are
    rendered as band-limited tones into 10 s PCM files instead.
    """
    for prof in profiles:
        for label, spec in prof.events.items():
            if not 0.0 <= spec.prob <= 1.0:
                raise CorpusError(f"profile {prof.name!r}, event {label!r}: probability {spec.prob} outside [0, 1]")
    if len(profiles) < 2:
        raise CorpusError("need at least 2 scene profiles")
    if wav_mode and n_frames != audio.N_FRAMES:
        raise CorpusError("wav_mode renders 10 s clips; n_frames must be 500")

    os.makedirs(os.path.join(out_dir, "ann"), exist_ok=True)
    sub = "audio" if wav_mode else "features"
    os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    all_specs = {}
    for prof in profiles:
        for label, spec in prof.events.items():
            all_specs.setdefault(label, spec)
    vocab = EventVocabulary(sorted(all_specs))
    slices = _band_slices(vocab, all_specs, n_mels)

    clip_seconds = n_frames * HOP_SECONDS
    rng = np.random.default_rng(seed)
    meta_lines = []
    for i in range(n_clips):
        prof = profiles[i % len(profiles)]
        clip_id = f"clip_{i:04d}"
        annotations = []
        for label in vocab:
            spec = prof.events.get(label)
            if spec is None or rng.random() >= spec.prob:
                continue
            dur = rng.uniform(*spec.dur_range)
            dur = min(dur, clip_seconds)
            onset = round(rng.uniform(0.0, clip_seconds - dur), 6)
            offset = round(min(onset + dur, clip_seconds), 6)
            if offset <= onset:
                continue
            annotations.append(EventAnnotation(onset, offset, label))
        with open(os.path.join(out_dir, "ann", clip_id + ".ann"), "w", encoding="utf-8") as fh:
            for ann in annotations:
                fh.write(f"{ann.onset:.6f}\t{ann.offset:.6f}\t{ann.label}\n")
        targets = rasterize_targets(annotations, vocab, n_frames)
        if wav_mode:
            path = f"{sub}/{clip_id}.wav"
            _render_wav(os.path.join(out_dir, path), targets, vocab, slices, n_mels, rng)
        else:
            # zero-centered floor: keeps default-initialized Swish units live
            path = f"{sub}/{clip_id}.lmel"
            feats = rng.normal(0.0, 0.3, size=(n_frames, n_mels))
            for n, label in enumerate(vocab):
                active = targets[n] > 0
                if active.any():
                    feats[np.ix_(active, np.arange(n_mels)[slices[label]])] += rng.uniform(4.0, 6.0)
            audio.write_feature_cache(os.path.join(out_dir, path), feats)
        meta_lines.append(f"{clip_id}\t{path}\t{prof.name}\n")
    with open(os.path.join(out_dir, "meta.tsv"), "w", encoding="utf-8") as fh:
        fh.writelines(meta_lines)
    return out_dir


def _render_wav(path, targets, vocab, slices, n_mels, rng):
    n_frames = targets.shape[1]
    n_samples = audio.FRAME_LEN + (n_frames - 1) * audio.HOP
    t = np.arange(n_samples) / audio.SAMPLE_RATE
    wave = rng.normal(0.0, 1e-4, size=n_samples)
    nyquist = audio.SAMPLE_RATE / 2.0
    for n, label in enumerate(vocab):
        active = targets[n] > 0
        if not active.any():
            continue
        band = slices[label]
        center_mel = audio.mel_scale(nyquist) * (band.start + band.stop) / (2.0 * n_mels)
        freq = float(audio.mel_to_hz(center_mel))
        tone = 0.1 * np.sin(2.0 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
        gate = np.repeat(active, audio.HOP)[:n_samples]
        pad = n_samples - gate.size
        if pad > 0:
            gate = np.concatenate([gate, np.zeros(pad, dtype=bool)])
        wave += tone * gate
    audio.write_wav(path, np.clip(wave, -1.0, 1.0))
