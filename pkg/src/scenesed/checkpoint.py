"""Checkpoints: a directory holding manifest.json plus one raw little-endian
float64 blob per parameter. The manifest echoes the network configuration
and the decoder stride schedule, so a checkpoint is self-describing.
"""

import json
import os

import numpy as np

from .errors import SceneSedError
from .model import SedNetwork, config_from_dict, config_to_dict

FORMAT = "scenesed-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(SceneSedError):
    pass


def save_checkpoint(ckpt_dir, network, extra=None):
    os.makedirs(ckpt_dir, exist_ok=True)
    entries = []
    for name, p in network.params.items():
        blob = name + ".bin"
        with open(os.path.join(ckpt_dir, blob), "wb") as fh:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        entries.append({"name": name, "shape": list(p.data.shape), "file": blob})
    manifest = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "dtype": "f64",
        "config": config_to_dict(network.config, network.align),
        "stride_schedule": [list(s) for s in network.decoder_strides] if network.decoder_strides else None,
        "params": entries,
    }
    if extra:
        manifest.update(extra)
    tmp = os.path.join(ckpt_dir, "manifest.json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(ckpt_dir, "manifest.json"))
    return ckpt_dir


def load_manifest(ckpt_dir):
    path = os.path.join(ckpt_dir, "manifest.json")
    if not os.path.exists(path):
        raise CheckpointError(f"{ckpt_dir}: no manifest.json (not a checkpoint directory)")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unexpected format {manifest.get('format')!r}")
    return manifest


def load_checkpoint(ckpt_dir):
    manifest = load_manifest(ckpt_dir)
    config, align = config_from_dict(manifest["config"])
    network = SedNetwork(config, align=align, seed=0)
    for entry in manifest["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in network.params:
            raise CheckpointError(f"{ckpt_dir}: unknown parameter {name!r} in manifest")
        blob = os.path.join(ckpt_dir, entry["file"])
        data = np.frombuffer(open(blob, "rb").read(), dtype="<f8").reshape(shape)
        if data.shape != network.params[name].data.shape:
            raise CheckpointError(f"{ckpt_dir}: shape mismatch for {name!r}")
        network.params[name].data = data.astype(np.float64).copy()
    return network, manifest
