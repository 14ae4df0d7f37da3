"""The three-module detector network.

(a) a CNN-BiGRU-FFN sound event detector over (T, F) log-mel features,
(b) a projection of the scene representation into a compact context vector,
(c) a convolutional autoencoder whose bottleneck summarizes the clip's
    acoustics, plus one affine head per side mapping into a shared space
    where the two embeddings are pulled together by an L1 loss.

Conditioning modes ("fusion"):
  none     the detector ignores any scene information
  direct   the raw scene vector is concatenated to every frame entering
           the first FFN layer
  aligned  the projected context vector is concatenated instead, and the
           autoencoder + shared-space heads become part of the network

Feature maps are channel-first (C, T, F'); pooling in the detector stack
runs along frequency only, so the per-frame time resolution survives to
the output layer.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import GradientError, Parameter, Tensor
from .errors import SceneSedError


class ConfigError(SceneSedError):
    pass


@dataclass
class SedNetworkConfig:
    n_events: int = 25
    n_mels: int = 64
    n_frames: int = 500
    cnn_channels: tuple = (128, 128, 128)
    cnn_kernel: tuple = (3, 3)
    freq_pooling: tuple = (8, 2, 2)
    gru_units: int = 32                # per direction
    ffn_units: tuple = (128, 48)
    fusion: str = "none"               # none | direct | aligned
    context_dim: int = 0               # raw scene-representation width


@dataclass
class AlignmentConfig:
    proj_hidden: int = 256             # context projection hidden width
    proj_out: int = 64                 # context vector fed to the detector
    shared_dim: int = 32               # width of the shared comparison space
    encoder_channels: int = 64         # also the bottleneck width
    encoder_kernel: tuple = (3, 3)
    time_pool: int = 25                # encoder max-pool window along time
    decoder_channels: tuple = (128, 128, 128)
    decoder_kernels: tuple = ((3, 3), (4, 3), (4, 3))


@dataclass
class ForwardTrace:
    logits: Tensor                       # (N, T)
    feature_map: Tensor                  # (C, T, F') output of the last CNN block
    reconstruction: Tensor = None        # (T, F), aligned mode only
    acoustic_embedding: Tensor = None    # bottleneck vector
    context_projection: Tensor = None    # projected context vector
    context_shared: Tensor = None        # shared-space context
    acoustic_shared: Tensor = None       # shared-space acoustics
    shapes: dict = field(default_factory=dict)


def plan_axis_strides(seed_extent, kernel_extents, target, max_stride=8):
    """Strides for a chain of transposed convs along one axis.

    Picks the stride tuple whose final extent is the smallest one >= target
    (the overshoot is cropped away); ties prefer cheaper intermediates,
    then lexicographic order. Deterministic, so the schedule in the run
    manifest is reproducible.
    """
    n = len(kernel_extents)
    best = None
    for combo in np.ndindex(*([max_stride] * n)):
        strides = tuple(s + 1 for s in combo)
        extents = []
        cur = seed_extent
        for k, s in zip(kernel_extents, strides):
            cur = (cur - 1) * s + k
            extents.append(cur)
        if cur < target:
            continue
        key = (cur, sum(extents[:-1]), strides)
        if best is None or key < best[0]:
            best = (key, strides)
    if best is None:
        raise ConfigError(
            f"no stride schedule reaches extent {target} from seed {seed_extent} "
            f"with kernels {kernel_extents} and strides <= {max_stride}")
    return best[1]


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class GruParams:
    w_update: Parameter
    u_update: Parameter
    b_update: Parameter
    w_reset: Parameter
    u_reset: Parameter
    b_reset: Parameter
    w_cand: Parameter
    u_cand: Parameter
    b_cand: Parameter


class SedNetwork:
    """Parameter container plus the forward pass."""

    def __init__(self, config, align=None, seed=0):
        if config.fusion not in ("none", "direct", "aligned"):
            raise ConfigError(f"unknown fusion mode {config.fusion!r}")
        if config.fusion != "none" and config.context_dim < 1:
            raise ConfigError(f"fusion {config.fusion!r} needs a scene representation (context_dim >= 1)")
        if config.fusion == "aligned" and align is None:
            align = AlignmentConfig()
        pool_prod = 1
        for p in config.freq_pooling:
            pool_prod *= p
        if config.n_mels % pool_prod != 0 or config.n_mels // pool_prod < 1:
            raise ConfigError(f"{config.n_mels} mel bands not divisible by pooling {config.freq_pooling}")
        self.config = config
        self.align = align if config.fusion == "aligned" else None
        self.freq_out = config.n_mels // pool_prod
        self.params = {}
        self._rng = np.random.default_rng(seed)
        self._build()

    # -- construction -------------------------------------------------------

    def _param(self, name, shape, fan_in=None):
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        if fan_in is None:
            data = np.zeros(shape)
        else:
            data = _uniform_init(self._rng, shape, fan_in)
        p = Parameter(name, data)
        self.params[name] = p
        return p

    def _affine(self, name, n_in, n_out):
        w = self._param(f"{name}.weight", (n_in, n_out), fan_in=n_in)
        b = self._param(f"{name}.bias", (n_out,))
        return w, b

    def _gru_dir(self, prefix, n_in, n_hidden):
        def wmat(gate, shape, fan):
            return self._param(f"{prefix}.{gate}", shape, fan_in=fan)
        return GruParams(
            w_update=wmat("w_update", (n_hidden, n_in), n_in),
            u_update=wmat("u_update", (n_hidden, n_hidden), n_hidden),
            b_update=self._param(f"{prefix}.b_update", (n_hidden,)),
            w_reset=wmat("w_reset", (n_hidden, n_in), n_in),
            u_reset=wmat("u_reset", (n_hidden, n_hidden), n_hidden),
            b_reset=self._param(f"{prefix}.b_reset", (n_hidden,)),
            w_cand=wmat("w_cand", (n_hidden, n_in), n_in),
            u_cand=wmat("u_cand", (n_hidden, n_hidden), n_hidden),
            b_cand=self._param(f"{prefix}.b_cand", (n_hidden,)),
        )

    def _build(self):
        cfg = self.config
        kh, kw = cfg.cnn_kernel
        in_ch = 1
        for i, out_ch in enumerate(cfg.cnn_channels, start=1):
            self._param(f"sed.cnn{i}.weight", (out_ch, in_ch, kh, kw), fan_in=in_ch * kh * kw)
            self._param(f"sed.cnn{i}.bias", (out_ch,))
            in_ch = out_ch
        gru_in = cfg.cnn_channels[-1] * self.freq_out
        self.gru_fwd = self._gru_dir("sed.gru.fwd", gru_in, cfg.gru_units)
        self.gru_bwd = self._gru_dir("sed.gru.bwd", gru_in, cfg.gru_units)
        self.fusion_dim = 0
        if cfg.fusion == "direct":
            self.fusion_dim = cfg.context_dim
        elif cfg.fusion == "aligned":
            self.fusion_dim = self.align.proj_out
        ffn_in = 2 * cfg.gru_units + self.fusion_dim
        self._affine("sed.ffn1", ffn_in, cfg.ffn_units[0])
        self._affine("sed.ffn2", cfg.ffn_units[0], cfg.ffn_units[1])
        self._affine("sed.out", cfg.ffn_units[1], cfg.n_events)

        self.decoder_strides = None
        if cfg.fusion == "aligned":
            al = self.align
            self._affine("ctx.proj1", cfg.context_dim, al.proj_hidden)
            self._affine("ctx.proj2", al.proj_hidden, al.proj_out)
            self._affine("align.context_head", al.proj_out, al.shared_dim)
            self._affine("align.acoustic_head", al.encoder_channels, al.shared_dim)
            ekh, ekw = al.encoder_kernel
            self._param("ae.enc.weight", (al.encoder_channels, cfg.cnn_channels[-1], ekh, ekw),
                        fan_in=cfg.cnn_channels[-1] * ekh * ekw)
            self._param("ae.enc.bias", (al.encoder_channels,))
            self.seed_time = cfg.n_frames // al.time_pool
            if self.seed_time < 1:
                raise ConfigError(f"time_pool {al.time_pool} exceeds {cfg.n_frames} frames")
            self.seed_freq = self.freq_out
            seed_ch = al.decoder_channels[0]
            self._affine("ae.seed", al.encoder_channels, seed_ch * self.seed_time * self.seed_freq)
            time_strides = plan_axis_strides(
                self.seed_time, [k[0] for k in al.decoder_kernels], cfg.n_frames)
            freq_strides = plan_axis_strides(
                self.seed_freq, [k[1] for k in al.decoder_kernels], cfg.n_mels)
            self.decoder_strides = tuple(zip(time_strides, freq_strides))
            in_ch = seed_ch
            for i, (out_ch, (dkh, dkw)) in enumerate(zip(al.decoder_channels, al.decoder_kernels), start=1):
                self._param(f"ae.dec{i}.weight", (in_ch, out_ch, dkh, dkw), fan_in=in_ch * dkh * dkw)
                self._param(f"ae.dec{i}.bias", (out_ch,))
                in_ch = out_ch
            self._param("ae.out.weight", (1, in_ch, 1, 1), fan_in=in_ch)
            self._param("ae.out.bias", (1,))

    # -- inspection ----------------------------------------------------------

    def parameters(self):
        return list(self.params.values())

    def parameter_count(self):
        return sum(p.data.size for p in self.params.values())

    # -- forward pieces ------------------------------------------------------

    def _conv_block(self, x, index, pool):
        w = self.params[f"sed.cnn{index}.weight"]
        b = self.params[f"sed.cnn{index}.bias"]
        pad = (w.shape[2] // 2, w.shape[3] // 2)
        return ad.max_pool2d(ad.swish(ad.conv2d(x, w, b, padding=pad)), pool)

    def _ffn(self, x, name, activate=True):
        w = self.params[f"{name}.weight"]
        b = self.params[f"{name}.bias"]
        out = ad.matmul(x, w) + b
        return ad.swish(out) if activate else out

    def project_context(self, scene_vec):
        """Two affine layers (Swish after the first) mapping the raw scene
        representation to the compact context vector."""
        if self.config.fusion != "aligned":
            raise ConfigError("project_context requires an aligned-fusion network")
        e = scene_vec if isinstance(scene_vec, Tensor) else Tensor(scene_vec)
        if e.shape != (self.config.context_dim,):
            raise GradientError(f"context has shape {e.shape}, expected ({self.config.context_dim},)")
        hidden = ad.swish(ad.matmul(e, self.params["ctx.proj1.weight"]) + self.params["ctx.proj1.bias"])
        return ad.matmul(hidden, self.params["ctx.proj2.weight"]) + self.params["ctx.proj2.bias"]

    def context_to_shared(self, projected):
        return ad.matmul(projected, self.params["align.context_head.weight"]) \
            + self.params["align.context_head.bias"]

    def acoustic_to_shared(self, bottleneck):
        return ad.matmul(bottleneck, self.params["align.acoustic_head.weight"]) \
            + self.params["align.acoustic_head.bias"]

    def encode_bottleneck(self, feature_map):
        """Last CNN map -> conv+Swish -> max-pool along time -> global average
        per channel."""
        w = self.params["ae.enc.weight"]
        b = self.params["ae.enc.bias"]
        pad = (w.shape[2] // 2, w.shape[3] // 2)
        enc = ad.swish(ad.conv2d(feature_map, w, b, padding=pad))
        pooled = ad.max_pool2d(enc, (self.align.time_pool, 1))
        return ad.tmean(pooled, axis=(1, 2))

    def decode_reconstruction(self, bottleneck):
        al = self.align
        cfg = self.config
        seed_ch = al.decoder_channels[0]
        seeded = ad.matmul(bottleneck, self.params["ae.seed.weight"]) + self.params["ae.seed.bias"]
        x = ad.swish(ad.reshape(seeded, (seed_ch, self.seed_time, self.seed_freq)))
        for i, stride in enumerate(self.decoder_strides, start=1):
            x = ad.swish(ad.transposed_conv2d(
                x, self.params[f"ae.dec{i}.weight"], stride=stride, b=self.params[f"ae.dec{i}.bias"]))
        x = ad.conv2d(x, self.params["ae.out.weight"], self.params["ae.out.bias"], padding=(0, 0))
        x = ad.crop2d(x, cfg.n_frames, cfg.n_mels)
        return ad.reshape(x, (cfg.n_frames, cfg.n_mels))

    # -- full forward --------------------------------------------------------

    def _cnn_stack(self, feats, shapes):
        cfg = self.config
        x = ad.reshape(feats, (1, cfg.n_frames, cfg.n_mels))
        for i, pool in enumerate(cfg.freq_pooling, start=1):
            x = self._conv_block(x, i, (1, pool))
            shapes[f"cnn{i}"] = x.shape
        return x

    def acoustic_embedding(self, features):
        """Bottleneck vector for a clip, without running the detector head."""
        if self.config.fusion != "aligned":
            raise ConfigError("acoustic_embedding requires an aligned-fusion network")
        feats = features if isinstance(features, Tensor) else Tensor(features)
        feature_map = self._cnn_stack(feats, {})
        return self.encode_bottleneck(feature_map)

    def forward(self, features, context=None):
        """Run the detector (and, in aligned mode, the alignment module).

        `features` is a (T, F) array; `context` is the raw scene
        representation vector for the clip's scene, ignored in mode none.
        """
        cfg = self.config
        feats = features if isinstance(features, Tensor) else Tensor(features)
        if feats.shape != (cfg.n_frames, cfg.n_mels):
            raise GradientError(f"features have shape {feats.shape}, expected ({cfg.n_frames}, {cfg.n_mels})")
        shapes = {"input": feats.shape}
        feature_map = self._cnn_stack(feats, shapes)

        frames = ad.reshape(ad.transpose(feature_map, (1, 0, 2)),
                            (cfg.n_frames, cfg.cnn_channels[-1] * self.freq_out))
        shapes["frames"] = frames.shape
        h0 = Tensor(np.zeros(cfg.gru_units))
        fwd = ad.gru_sequence(frames, h0, self.gru_fwd)
        bwd = ad.flip_rows(ad.gru_sequence(ad.flip_rows(frames), h0, self.gru_bwd))
        recurrent = ad.concat([fwd, bwd], axis=1)
        shapes["bigru"] = recurrent.shape

        trace = ForwardTrace(logits=None, feature_map=feature_map, shapes=shapes)
        fused = recurrent
        if cfg.fusion != "none":
            if context is None:
                raise GradientError(f"fusion {cfg.fusion!r} needs a context vector")
            ctx = context if isinstance(context, Tensor) else Tensor(context)
            if ctx.shape != (cfg.context_dim,):
                raise GradientError(f"context has shape {ctx.shape}, expected ({cfg.context_dim},)")
            if cfg.fusion == "direct":
                fusion_vec = ctx
            else:
                projected = self.project_context(ctx)
                trace.context_projection = projected
                trace.context_shared = self.context_to_shared(projected)
                shapes["context_projection"] = projected.shape
                shapes["context_shared"] = trace.context_shared.shape
                fusion_vec = projected
            fused = ad.concat([recurrent, ad.tile_rows(fusion_vec, cfg.n_frames)], axis=1)
        shapes["ffn_input"] = fused.shape

        hidden = self._ffn(fused, "sed.ffn1")
        hidden = self._ffn(hidden, "sed.ffn2")
        logits = ad.transpose(self._ffn(hidden, "sed.out", activate=False), (1, 0))
        trace.logits = logits
        shapes["logits"] = logits.shape

        if cfg.fusion == "aligned":
            z = self.encode_bottleneck(feature_map)
            trace.acoustic_embedding = z
            trace.acoustic_shared = self.acoustic_to_shared(z)
            trace.reconstruction = self.decode_reconstruction(z)
            shapes["acoustic_embedding"] = z.shape
            shapes["acoustic_shared"] = trace.acoustic_shared.shape
            shapes["reconstruction"] = trace.reconstruction.shape
        return trace


def predict_events(logits, threshold=0.5):
    """Binarize detector outputs: active iff sigmoid(logit) > threshold.

    At the default 0.5 this is the same rule as logit > 0.
    """
    y = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    out = np.empty_like(y)
    pos = y >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    ev = np.exp(y[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out > threshold


def config_to_dict(config, align):
    d = asdict(config)
    d["align"] = asdict(align) if align is not None else None
    return d


def config_from_dict(d):
    d = dict(d)
    align_d = d.pop("align", None)
    config = SedNetworkConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
    align = None
    if align_d is not None:
        align_d = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
                   for k, v in align_d.items()}
        align = AlignmentConfig(**align_d)
    return config, align
