"""Command-line entry point.

Subcommands: train, eval, infer, matrix, plot-embeddings, make-synthetic.
Exit status 0 on success; on failure one machine-parsable line goes to
stderr ("error: <ErrorType>: <message>") and the status is nonzero.
"""

import argparse
import json
import logging
import os
import sys

from . import audio, context as ctx, data, train as tr
from .errors import SceneSedError


def _add_train(sub):
    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True, help="JSON file mirroring ExperimentConfig")
    p.set_defaults(func=_cmd_train)


def _cmd_train(args):
    config = tr.ExperimentConfig.from_json(args.config)
    ckpt, manifest = tr.train(config)
    print(json.dumps({"checkpoint": ckpt, "final_scores": manifest["final_scores"]}, indent=1))


def _add_eval(sub):
    p = sub.add_parser("eval", help="score a checkpoint over a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--context-label", default=None,
                   help="use this scene context for every clip instead of each clip's own label")
    p.add_argument("--table", default=None, help="embedding table overriding the one used in training")
    p.set_defaults(func=_cmd_eval)


def _cmd_eval(args):
    report = tr.evaluate(args.ckpt, args.corpus, context_label=args.context_label,
                         table_path=args.table)
    print(json.dumps(report.to_dict(), indent=1))


def _add_infer(sub):
    p = sub.add_parser("infer", help="detect events in one clip under an arbitrary context label")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--clip", required=True, help="clip id (with --corpus) or path to a .lmel/.wav file")
    p.add_argument("--context-label", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--corpus", default=None, help="corpus root for resolving a clip id")
    p.add_argument("--out", default=None, help="write the full activation/decision matrices here")
    p.set_defaults(func=_cmd_infer)


def _resolve_clip_features(args):
    if os.path.exists(args.clip):
        if args.clip.endswith(".lmel"):
            return audio.read_feature_cache(args.clip)
        return audio.log_mel(audio.load_wav(args.clip))
    if args.corpus is None:
        raise SceneSedError(f"clip {args.clip!r} is not a file; pass --corpus to resolve it as a clip id")
    corpus = data.open_corpus(args.corpus)
    for record in corpus.records:
        if record.clip_id == args.clip:
            return corpus.features(record)
    raise SceneSedError(f"clip id {args.clip!r} not found in {args.corpus}")


def _cmd_infer(args):
    features = _resolve_clip_features(args)
    table = ctx.load_table(args.table)
    activations, decisions, vocab = tr.infer_unseen(args.ckpt, features, args.context_label, table)
    summary = {
        "context_label": args.context_label,
        "events": [
            {"label": label, "active_frames": int(decisions[n].sum()),
             "mean_activation": float(activations[n].mean())}
            for n, label in enumerate(vocab)
        ],
    }
    if args.out:
        payload = dict(summary)
        payload["activations"] = activations.round(6).tolist()
        payload["decisions"] = decisions.astype(int).tolist()
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
    print(json.dumps(summary, indent=1))


def _add_matrix(sub):
    p = sub.add_parser("matrix", help="train/score every conditioning variant over several seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default=None, help="TSV output path (default <out_dir>/matrix.tsv)")
    p.set_defaults(func=_cmd_matrix)


DEFAULT_VARIANTS = [
    {"scene_mode": "none"},
    {"scene_mode": "onehot", "fusion": "direct"},
    {"scene_mode": "onehot", "fusion": "aligned"},
]


def _cmd_matrix(args):
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    variants = raw.pop("variants", None)
    config = tr.ExperimentConfig.from_dict(raw, source=args.config)
    if variants is None:
        variants = list(DEFAULT_VARIANTS)
        if config.scene_mode.startswith("table:"):
            variants += [
                {"scene_mode": config.scene_mode, "fusion": "direct"},
                {"scene_mode": config.scene_mode, "fusion": "aligned"},
            ]
    out_path = args.out or os.path.join(config.out_dir, "matrix.tsv")
    os.makedirs(config.out_dir, exist_ok=True)
    rows = tr.run_matrix(config, variants, args.seeds, out_path)
    print(json.dumps(rows, indent=1))


def _add_plot(sub):
    p = sub.add_parser("plot-embeddings", help="PCA projection of context and acoustic embeddings")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", default=None, help="default: <ckpt>/../embedding_plot")
    p.add_argument("--subset", choices=["both", "semantic", "acoustic"], default="both")
    p.set_defaults(func=_cmd_plot)


def _cmd_plot(args):
    out_dir = args.out_dir or os.path.join(os.path.dirname(os.path.abspath(args.ckpt)), "embedding_plot")
    paths = tr.emit_embedding_plot(args.ckpt, args.corpus, args.table, out_dir, args.subset)
    print(json.dumps(paths, indent=1))


def _add_synth(sub):
    p = sub.add_parser("make-synthetic", help="generate a deterministic synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clips", type=int, default=200)
    p.add_argument("--frames", type=int, default=100, help="frames per clip (100 = 2 s)")
    p.add_argument("--profile", default="two_scene",
                   help="builtin profile set name (two_scene, four_scene) or a JSON profile file")
    p.add_argument("--wav", action="store_true", help="render 10 s wav files instead of feature caches")
    p.set_defaults(func=_cmd_synth)


def _load_profiles(selector):
    if os.path.exists(selector):
        with open(selector, encoding="utf-8") as fh:
            raw = json.load(fh)
        profiles = []
        for scene in raw["scenes"]:
            events = {
                label: data.EventSpec(e["prob"], tuple(e["dur"]), e.get("band"))
                for label, e in scene["events"].items()
            }
            profiles.append(data.SceneProfile(scene["name"], events))
        return profiles
    return data.builtin_profiles(selector)


def _cmd_synth(args):
    profiles = _load_profiles(args.profile)
    n_frames = audio.N_FRAMES if args.wav else args.frames
    root = data.make_synthetic_corpus(args.out, args.seed, args.clips, profiles,
                                      n_frames=n_frames, wav_mode=args.wav)
    print(json.dumps({"corpus": root, "clips": args.clips, "frames": n_frames}))


def build_parser():
    parser = argparse.ArgumentParser(prog="scenesed",
                                     description="Scene-informed sound event detection")
    parser.add_argument("-v", "--verbose", action="store_true", help="per-epoch loss logging")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_infer(sub)
    _add_matrix(sub)
    _add_plot(sub)
    _add_synth(sub)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (SceneSedError, OSError, json.JSONDecodeError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
