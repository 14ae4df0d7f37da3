"""Experiment orchestration: the training loop over the joint objective,
evaluation, unseen-context inference, the conditioning method matrix, and
embedding-space plot data.

Runs are deterministic for a fixed seed: parameter init, batch shuffling,
and the synthetic corpus all derive from explicit seeds, so rerunning a
config reproduces checkpoints and manifests byte for byte. Wall-clock
time, which obviously cannot be reproducible, goes to a separate
timing.json sidecar.
"""

import dataclasses
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, context as ctx, data, losses, metrics, model
from .autodiff import backward
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import SceneSedError
from .optim import AdaBelief

log = logging.getLogger("scenesed")


class ExperimentError(SceneSedError):
    pass


@dataclass
class ExperimentConfig:
    corpus_dir: str
    out_dir: str
    scene_mode: str = "none"        # none | onehot | table:<path>
    fusion: str = "direct"          # direct | aligned
    alpha: float = losses.DEFAULT_ALPHA
    beta: float = losses.DEFAULT_BETA
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0
    threshold: float = 0.5
    validation_split: float = 0.0
    normalize_features: bool = False  # per-band standardization from training stats
    model: dict = field(default_factory=dict)  # SedNetworkConfig/AlignmentConfig overrides

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ExperimentError("alpha and beta must be non-negative")
        if self.fusion not in ("direct", "aligned"):
            raise ExperimentError(f"unknown fusion {self.fusion!r}")
        if self.fusion == "aligned" and self.scene_mode == "none":
            raise ExperimentError("aligned fusion requires a scene representation (onehot or table:<path>)")
        mode = self.scene_mode
        if mode not in ("none", "onehot") and not mode.startswith("table:"):
            raise ExperimentError(f"unknown scene_mode {mode!r}")

    @staticmethod
    def from_dict(raw, source="config"):
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ExperimentError(f"{source}: unknown config keys {sorted(unknown)}")
        return ExperimentConfig(**raw)

    @staticmethod
    def from_json(path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return ExperimentConfig.from_dict(raw, source=path)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class LoadedClip:
    clip_id: str
    scene_label: str
    features: np.ndarray
    targets: np.ndarray


class ContextSource:
    """Maps a scene label to the raw representation vector for one mode."""

    def __init__(self, mode, codebook=None, table=None, table_path=None):
        self.mode = mode
        self.codebook = codebook
        self.table = table
        self.table_path = table_path

    @property
    def dim(self):
        if self.mode == "none":
            return 0
        if self.mode == "onehot":
            return self.codebook.dim
        return self.table.dim

    def vector(self, scene_label):
        if self.mode == "none":
            return None
        if self.mode == "onehot":
            return ctx.onehot(self.codebook, ctx.normalize_label(scene_label))
        return ctx.lookup(self.table, scene_label)

    def describe(self):
        return {
            "mode": self.mode,
            "codebook": list(self.codebook.labels) if self.codebook else None,
            "table_path": self.table_path,
        }


def build_context_source(scene_mode, training_scenes):
    if scene_mode == "none":
        return ContextSource("none")
    if scene_mode == "onehot":
        labels = sorted({ctx.normalize_label(s) for s in training_scenes})
        return ContextSource("onehot", codebook=ctx.OneHotCodebook(labels))
    path = scene_mode.split(":", 1)[1]
    table = ctx.load_table(path)
    return ContextSource("table", table=table, table_path=path)


def restore_context_source(info, table_path=None):
    mode = info["mode"]
    if mode == "none":
        return ContextSource("none")
    if mode == "onehot":
        return ContextSource("onehot", codebook=ctx.OneHotCodebook(info["codebook"]))
    path = table_path or info["table_path"]
    return ContextSource("table", table=ctx.load_table(path), table_path=path)


def _split_fraction(clip_id):
    digest = hashlib.sha1(clip_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") / 2.0 ** 32


def load_clips(corpus, feature_norm=None):
    clips = []
    n_frames = None
    for record in corpus.records:
        feats = corpus.features(record)
        if feature_norm is not None:
            feats = (feats - np.asarray(feature_norm["mean"])) / np.asarray(feature_norm["std"])
        if n_frames is None:
            n_frames = feats.shape[0]
        targets = corpus.targets(record, feats.shape[0])
        clips.append(LoadedClip(record.clip_id, record.scene_label, feats, targets))
    if not clips:
        raise ExperimentError(f"{corpus.root}: corpus has no clips")
    return clips


def _fit_feature_norm(clips):
    stacked = np.concatenate([c.features for c in clips], axis=0)
    std = stacked.std(axis=0)
    return {"mean": stacked.mean(axis=0).tolist(),
            "std": np.where(std > 1e-12, std, 1.0).tolist()}


def _build_network(config, clips, vocab, source):
    n_frames, n_mels = clips[0].features.shape
    overrides = dict(config.model)
    align_overrides = overrides.pop("align", None)
    net_cfg = model.SedNetworkConfig(
        n_events=len(vocab), n_mels=n_mels, n_frames=n_frames,
        fusion="none" if config.scene_mode == "none" else config.fusion,
        context_dim=source.dim,
        **{k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()})
    align_cfg = None
    if net_cfg.fusion == "aligned":
        align_cfg = model.AlignmentConfig(**{
            k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
            for k, v in (align_overrides or {}).items()})
    return model.SedNetwork(net_cfg, align=align_cfg, seed=config.seed)


def _clip_loss(net, clip, source, config):
    vec = source.vector(clip.scene_label)
    trace = net.forward(clip.features, vec)
    sed = losses.loss_sed(clip.targets, trace.logits)
    if net.config.fusion == "aligned":
        recon = losses.loss_ae(clip.features, trace.reconstruction)
        align = losses.loss_align(trace.context_shared, trace.acoustic_shared)
        return losses.total_loss(sed, recon, align, config.alpha, config.beta, aligned=True)
    return losses.total_loss(sed)


def evaluate_clips(net, clips, source, vocab, threshold=0.5, context_label=None):
    counts = metrics.SegmentCounts.zeros(len(vocab))
    for clip in clips:
        label = context_label if context_label is not None else clip.scene_label
        vec = source.vector(label)
        trace = net.forward(clip.features, vec)
        pred = model.predict_events(trace.logits.data, threshold)
        counts = counts + metrics.segment_counts(clip.targets, pred)
    return metrics.score_report(counts, list(vocab))


def _atomic_json(path, payload):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def train(config):
    """Train per the config; returns (checkpoint dir, run manifest dict).

    Every configuration problem (bad mode, missing embedding for a training
    scene, ...) surfaces before the first gradient step.
    """
    started = time.time()
    corpus = data.open_corpus(config.corpus_dir)
    clips = load_clips(corpus)
    train_clips = clips
    val_clips = []
    if config.validation_split > 0:
        train_clips = [c for c in clips if _split_fraction(c.clip_id) >= config.validation_split]
        val_clips = [c for c in clips if _split_fraction(c.clip_id) < config.validation_split]
        if not train_clips:
            raise ExperimentError("validation split left no training clips")
    feature_norm = None
    if config.normalize_features:
        feature_norm = _fit_feature_norm(train_clips)
        for clip in clips:
            clip.features = (clip.features - np.asarray(feature_norm["mean"])) / np.asarray(feature_norm["std"])

    source = build_context_source(config.scene_mode, [c.scene_label for c in train_clips])
    for scene in sorted({c.scene_label for c in clips}):
        source.vector(scene)  # fail fast on any unrepresentable scene
    net = _build_network(config, clips, corpus.vocab, source)
    opt = AdaBelief(net.parameters(), lr=config.lr)

    epoch_losses = []
    best_micro = -1.0
    os.makedirs(config.out_dir, exist_ok=True)
    ckpt_dir = os.path.join(config.out_dir, "checkpoint")
    extra = {
        "experiment": config.to_dict(),
        "context_source": source.describe(),
        "vocab": list(corpus.vocab),
        "feature_norm": feature_norm,
    }
    for epoch in range(config.epochs):
        sums = np.zeros(4)
        for batch in data.batches(train_clips, config.batch_size, config.seed, epoch):
            opt.zero_grad()
            scale = 1.0 / len(batch)
            for clip in batch:
                total, parts = _clip_loss(net, clip, source, config)
                backward(total * scale)
                sums += (parts.sed, parts.recon, parts.align, parts.total)
            opt.step()
        mean = sums / len(train_clips)
        epoch_losses.append({"sed": mean[0], "recon": mean[1], "align": mean[2], "total": mean[3]})
        log.debug("epoch %d: total=%.5f sed=%.5f recon=%.5f align=%.5f", epoch, mean[3], mean[0], mean[1], mean[2])
        if val_clips:
            report = evaluate_clips(net, val_clips, source, corpus.vocab, config.threshold)
            if report.micro_f > best_micro:
                best_micro = report.micro_f
                save_checkpoint(os.path.join(config.out_dir, "checkpoint_best"), net, extra)

    save_checkpoint(ckpt_dir, net, extra)
    eval_clips = val_clips if val_clips else train_clips
    final_report = evaluate_clips(net, eval_clips, source, corpus.vocab, config.threshold)
    manifest = {
        "code_version": __version__,
        "config": config.to_dict(),
        "context_source": source.describe(),
        "stride_schedule": [list(s) for s in net.decoder_strides] if net.decoder_strides else None,
        "epoch_losses": epoch_losses,
        "final_scores": final_report.to_dict(),
        "evaluated_on": "validation" if val_clips else "training",
    }
    _atomic_json(os.path.join(config.out_dir, "run_manifest.json"), manifest)
    _atomic_json(os.path.join(config.out_dir, "timing.json"),
                 {"wall_clock_sec": time.time() - started})
    return ckpt_dir, manifest


def evaluate(ckpt_dir, corpus_dir, context_label=None, table_path=None, threshold=None):
    """Score a checkpoint over a corpus using each clip's scene context (or
    one fixed context label for every clip)."""
    net, manifest = load_checkpoint(ckpt_dir)
    vocab = data.EventVocabulary(manifest["vocab"])
    corpus = data.open_corpus(corpus_dir, vocab=vocab)
    clips = load_clips(corpus, manifest.get("feature_norm"))
    source = restore_context_source(manifest["context_source"], table_path)
    if net.config.fusion != "none" and source.dim != net.config.context_dim:
        raise ExperimentError(
            f"context source dimension {source.dim} does not match the checkpoint's "
            f"context dim {net.config.context_dim}")
    if threshold is None:
        threshold = manifest["experiment"]["threshold"]
    return evaluate_clips(net, clips, source, vocab, threshold, context_label)


def infer_unseen(ckpt_dir, features, context_label, table):
    """Detect events in one clip under an arbitrary context label.

    The label only has to exist in the embedding table; it does not have to
    have occurred in training. Requires an aligned-fusion checkpoint that
    was trained on table embeddings.
    """
    net, manifest = load_checkpoint(ckpt_dir)
    if net.config.fusion != "aligned" or manifest["context_source"]["mode"] != "table":
        raise ExperimentError(
            "infer requires a checkpoint trained with fusion=aligned and scene_mode=table:<path>")
    if table.dim != net.config.context_dim:
        raise ExperimentError(
            f"table dimension {table.dim} does not match the checkpoint's context dim {net.config.context_dim}")
    norm = manifest.get("feature_norm")
    if norm is not None:
        features = (features - np.asarray(norm["mean"])) / np.asarray(norm["std"])
    vec = ctx.lookup(table, context_label)
    trace = net.forward(features, vec)
    logits = trace.logits.data
    activations = 1.0 / (1.0 + np.exp(-logits))
    threshold = manifest["experiment"]["threshold"]
    decisions = model.predict_events(logits, threshold)
    return activations, decisions, manifest["vocab"]


def run_matrix(base_config, variants, n_seeds, out_path=None):
    """Train and score each (scene representation, fusion) variant over
    several seeds; mirrors the conditioning comparison as a TSV table."""
    if base_config.validation_split <= 0:
        base_config = dataclasses.replace(base_config, validation_split=0.2)
    rows = []
    for variant in variants:
        scene_mode = variant["scene_mode"]
        fusion = variant.get("fusion", "direct")
        micros, macros = [], []
        for k in range(n_seeds):
            run_dir = os.path.join(base_config.out_dir,
                                   f"{scene_mode.split(':')[0]}_{fusion}_seed{base_config.seed + k}")
            cfg = dataclasses.replace(
                base_config, scene_mode=scene_mode,
                fusion=fusion if scene_mode != "none" else "direct",
                seed=base_config.seed + k, out_dir=run_dir)
            _, manifest = train(cfg)
            micros.append(manifest["final_scores"]["micro_f"])
            macros.append(manifest["final_scores"]["macro_f"])
            log.info("matrix: %s/%s seed %d -> micro %.4f macro %.4f",
                     scene_mode, fusion, cfg.seed, micros[-1], macros[-1])
        rows.append({
            "scene_mode": scene_mode,
            "fusion": fusion if scene_mode != "none" else "-",
            "micro_mean": float(np.mean(micros)),
            "micro_std": float(np.std(micros)),
            "macro_mean": float(np.mean(macros)),
            "macro_std": float(np.std(macros)),
            "seeds": n_seeds,
        })
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("scene_mode\tfusion\tmicro_mean\tmicro_std\tmacro_mean\tmacro_std\tseeds\n")
            for r in rows:
                fh.write(f"{r['scene_mode']}\t{r['fusion']}\t{r['micro_mean']:.6f}\t{r['micro_std']:.6f}"
                         f"\t{r['macro_mean']:.6f}\t{r['macro_std']:.6f}\t{r['seeds']}\n")
    return rows


def emit_embedding_plot(ckpt_dir, corpus_dir, table_path, out_dir, subset="both"):
    """Project context vectors (one per table label) and acoustic bottleneck
    vectors (one per clip) into 2-D via PCA; write CSV points, a pairwise
    distance matrix over the projections, and an SVG scatter."""
    net, manifest = load_checkpoint(ckpt_dir)
    if net.config.fusion != "aligned":
        raise ExperimentError("plot-embeddings requires an aligned-fusion checkpoint")
    table = ctx.load_table(table_path)
    if table.dim != net.config.context_dim:
        raise ExperimentError(
            f"table dimension {table.dim} does not match the checkpoint's context dim {net.config.context_dim}")
    if subset == "both" and net.align.proj_out != net.align.encoder_channels:
        raise ExperimentError(
            f"joint plot needs matching context ({net.align.proj_out}) and acoustic "
            f"({net.align.encoder_channels}) widths; use --subset semantic or acoustic")
    corpus = data.open_corpus(corpus_dir, vocab=data.EventVocabulary(manifest["vocab"]))

    labels, vectors = [], []
    if subset in ("both", "semantic"):
        for label in table.entries:
            labels.append(f"scene:{label}")
            vectors.append(net.project_context(table.entries[label]).data)
    if subset in ("both", "acoustic"):
        for record in corpus.records:
            labels.append(f"clip:{record.clip_id}")
            vectors.append(net.acoustic_embedding(corpus.features(record)).data)
    proj, fractions = metrics.pca_2d(np.array(vectors))
    dists = metrics.pairwise_distances(proj)

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "embeddings.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("label,pc1,pc2\n")
        for label, (p1, p2) in zip(labels, proj):
            fh.write(f"{label},{p1:.12g},{p2:.12g}\n")
    dist_path = os.path.join(out_dir, "distances.tsv")
    with open(dist_path, "w", encoding="utf-8") as fh:
        fh.write("label\t" + "\t".join(labels) + "\n")
        for label, row in zip(labels, dists):
            fh.write(label + "\t" + "\t".join(f"{v:.12g}" for v in row) + "\n")
    svg_path = os.path.join(out_dir, "embeddings.svg")
    _write_scatter_svg(svg_path, labels, proj, fractions)
    return {"csv": csv_path, "distances": dist_path, "svg": svg_path}


def _write_scatter_svg(path, labels, proj, fractions, width=640, height=480, margin=50):
    lo = proj.min(axis=0)
    hi = proj.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)

    def sx(v):
        return margin + (v - lo[0]) / span[0] * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - lo[1]) / span[1] * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{margin}" y="20" font-size="12">PC1 {fractions[0] * 100:.1f}% / '
        f'PC2 {fractions[1] * 100:.1f}% of variance</text>',
    ]
    for label, (p1, p2) in zip(labels, proj):
        color = "#c0392b" if label.startswith("scene:") else "#2980b9"
        x, y = sx(p1), sy(p2)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{color}"/>')
        if label.startswith("scene:"):
            parts.append(f'<text x="{x + 6:.2f}" y="{y - 4:.2f}" font-size="10">{label[6:]}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
