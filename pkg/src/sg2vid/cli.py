"""Command-line entry points for every pipeline stage.

Each verb fronts one module-level operation. Configuration comes from an
optional JSON file of per-verb sections, overridable with environment
variables prefixed ``SG2VID_<SECTION>_<KEY>`` and then flags. Every run
writes a provenance record (config hash, seed, package/library versions)
into its output directory. Failures exit nonzero with one machine-parsable
error line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

ENV_PREFIX = "SG2VID"


class CliError(ValueError):
    """Bad invocation (missing files, invalid config keys)."""


def _load_config(path: str | None, section: str) -> dict:
    config: dict = {}
    if path:
        file = Path(path)
        if not file.exists():
            raise CliError(f"config file not found: {file}")
        try:
            doc = json.loads(file.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {file}: invalid JSON ({exc})")
        section_doc = doc.get(section, {})
        if not isinstance(section_doc, dict):
            raise CliError(f"config section {section!r} must be an object")
        config.update(section_doc)
    prefix = f"{ENV_PREFIX}_{section.upper().replace('-', '_')}_"
    for key, value in os.environ.items():
        if key.startswith(prefix):
            name = key[len(prefix):].lower()
            try:
                config[name] = json.loads(value)
            except json.JSONDecodeError:
                config[name] = value
    return config


def _apply_config(cls, config: dict, **overrides):
    """Build a dataclass config, rejecting unknown keys with their path."""
    known = {f.name for f in dataclasses.fields(cls)}
    merged = dict(config)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    unknown = sorted(set(merged) - known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in merged:
            value = merged[f.name]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[f.name] = value
    return cls(**kwargs)


def _write_provenance(out_dir: Path, verb: str, config_obj, seed) -> None:
    import torch

    out_dir.mkdir(parents=True, exist_ok=True)
    config_doc = dataclasses.asdict(config_obj) if dataclasses.is_dataclass(config_obj) else dict(config_obj)
    record = {
        "verb": verb,
        "config": config_doc,
        "config_hash": hashlib.sha256(
            json.dumps(config_doc, sort_keys=True, default=str).encode()
        ).hexdigest(),
        "seed": seed,
        "versions": {"sg2vid": __version__, "torch": torch.__version__,
                     "numpy": np.__version__},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out_dir / "run_provenance.json").write_text(json.dumps(record, indent=1, sort_keys=True))


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"missing {what}: {p}")
    return p


def cmd_synth_data(args) -> int:
    from .data_synth import SynthConfig, dataset_hash, make_dataset

    config = _apply_config(SynthConfig, _load_config(args.config, "synth"),
                           seed=args.seed)
    out = Path(args.out)
    make_dataset(config, out)
    _write_provenance(out, "synth-data", config, config.seed)
    print(json.dumps({"dataset": str(out), "hash": dataset_hash(out)}))
    return 0


def cmd_extract_graphs(args) -> int:
    from .data_synth import (
        FileBackedProvider,
        GroundTruthProvider,
        clip_to_graph_sequence,
        load_clip,
        load_index,
    )
    from .sg_core import serialize

    dataset = _require(args.dataset, "dataset directory")
    index = load_index(dataset)
    class_names = tuple(index["class_names"])
    count = 0
    for entry in index["clips"]:
        clip_dir = dataset / entry["dir"]
        clip, _ = load_clip(clip_dir)
        provider = (FileBackedProvider(clip_dir) if args.provider == "file_backed"
                    else GroundTruthProvider())
        seq = clip_to_graph_sequence(clip, provider, class_names,
                                     min_area=args.min_area)
        (clip_dir / "graph.json").write_text(serialize(seq))
        count += 1
    print(json.dumps({"dataset": str(dataset), "graphs_written": count}))
    return 0


def cmd_train_codec(args) -> int:
    from .diffusion.codec import CodecConfig, train_codec

    config = _apply_config(CodecConfig, _load_config(args.config, "codec"),
                           seed=args.seed, steps=args.steps)
    dataset = _require(args.dataset, "dataset directory")
    out = Path(args.out)
    result = train_codec(dataset, config, out)
    _write_provenance(out, "train-codec", config, config.seed)
    print(json.dumps({"checkpoint": result["checkpoint"],
                      "heldout_psnr_db": result["heldout_psnr_db"]}))
    return 0


def cmd_pretrain_encoders(args) -> int:
    from .pretraining import PretrainConfig, pretrain

    config = _apply_config(PretrainConfig, _load_config(args.config, "pretrain"),
                           seed=args.seed, steps=args.steps)
    dataset = _require(args.dataset, "dataset directory")
    out = Path(args.out)
    result = pretrain(dataset, config, out)
    _write_provenance(out, "pretrain-encoders", config, config.seed)
    print(json.dumps({"checkpoint": result["checkpoint"]}))
    return 0


def cmd_train_diffusion(args) -> int:
    from .diffusion.training import DiffusionConfig, train_diffusion

    config = _apply_config(DiffusionConfig, _load_config(args.config, "diffusion"),
                           seed=args.seed, steps=args.steps, mode=args.mode)
    dataset = _require(args.dataset, "dataset directory")
    encoders = _require(args.encoders, "encoder checkpoint")
    codec = _require(args.codec, "codec checkpoint")
    out = Path(args.out)
    result = train_diffusion(dataset, encoders, codec, config, out)
    _write_provenance(out, "train-diffusion", config, config.seed)
    print(json.dumps({"checkpoint": result["checkpoint"]}))
    return 0


def _load_first_frame(path: str | None, resolution: int):
    if path is None:
        return None
    from PIL import Image

    img = Image.open(_require(path, "first frame image")).convert("RGB")
    if img.size != (resolution, resolution):
        raise CliError(
            f"first frame size {img.size} does not match checkpoint resolution"
            f" ({resolution}, {resolution})"
        )
    return np.asarray(img, dtype=np.float32) / 255.0


def _write_frames(out: Path, frames: np.ndarray):
    from PIL import Image

    out.mkdir(parents=True, exist_ok=True)
    for k in range(frames.shape[0]):
        frame8 = np.clip(frames[k] * 255.0 + 0.5, 0, 255).astype(np.uint8)
        Image.fromarray(frame8, mode="RGB").save(out / f"frame_{k:02d}.png")


def cmd_sample(args) -> int:
    from .diffusion.sampling import sample
    from .diffusion.training import load_generation_checkpoint
    from .sg_core import deserialize

    ckpt_path = _require(args.checkpoint, "checkpoint")
    stack = load_generation_checkpoint(ckpt_path)
    seq = deserialize(_require(args.graph, "graph document").read_text())
    first = _load_first_frame(args.first_frame, stack.manifest["resolution"])
    frames, provenance = sample(stack, seq, first_frame=first, seed=args.seed,
                                steps=args.steps)
    out = Path(args.out)
    _write_frames(out, frames)
    provenance["checkpoint_hash"] = hashlib.sha256(ckpt_path.read_bytes()).hexdigest()[:16]
    (out / "provenance.json").write_text(json.dumps(provenance, sort_keys=True))
    _write_provenance(out, "sample", {"seed": args.seed, "steps": args.steps},
                      args.seed)
    print(json.dumps({"frames": int(frames.shape[0]), "out": str(out)}))
    return 0


def cmd_autoregress(args) -> int:
    from .diffusion.sampling import autoregress
    from .diffusion.training import load_generation_checkpoint
    from .sg_core import deserialize

    ckpt_path = _require(args.checkpoint, "checkpoint")
    stack = load_generation_checkpoint(ckpt_path)
    seqs = [deserialize(_require(p, "graph document").read_text())
            for p in args.graphs]
    first = _load_first_frame(args.first_frame, stack.manifest["resolution"])
    if first is None:
        raise CliError("autoregress requires --first-frame")
    frames, provenances = autoregress(stack, seqs, first, seed=args.seed,
                                      steps=args.steps)
    out = Path(args.out)
    _write_frames(out, frames)
    (out / "provenance.json").write_text(json.dumps(provenances, sort_keys=True))
    _write_provenance(out, "autoregress", {"seed": args.seed, "steps": args.steps},
                      args.seed)
    print(json.dumps({"frames": int(frames.shape[0]), "out": str(out)}))
    return 0


def cmd_eval(args) -> int:
    from .evaluation import EvalConfig, eval_report

    config = _apply_config(EvalConfig, _load_config(args.config, "eval"),
                           seed=args.seed, split=args.split)
    checkpoint = _require(args.checkpoint, "checkpoint")
    dataset = _require(args.dataset, "dataset directory")
    out = Path(args.out)
    report = eval_report(checkpoint, dataset, config, out)
    _write_provenance(out, "eval", config, config.seed)
    print(json.dumps({"report": str(out / "report.json"),
                      "metrics": report["metrics"]}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        data_dir=Path(args.data_dir),
        checkpoint_dir=_require(args.checkpoints, "checkpoint directory"),
        queue_capacity=args.queue_capacity,
        default_steps=args.steps,
    )
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sg2vid",
        description="Scene-graph-conditioned video synthesis pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True, seed=True):
        if config:
            p.add_argument("--config", help="JSON config file with per-verb sections")
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth-data", help="render the synthetic dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("extract-graphs", help="rebuild graph sequences for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--provider", choices=["ground_truth", "file_backed"],
                   default="ground_truth")
    p.add_argument("--min-area", type=int, default=4)
    p.set_defaults(fn=cmd_extract_graphs)

    p = sub.add_parser("train-codec", help="train the latent codec")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(fn=cmd_train_codec)

    p = sub.add_parser("pretrain-encoders", help="pretrain both graph encoders")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(fn=cmd_pretrain_encoders)

    p = sub.add_parser("train-diffusion", help="train the video denoiser")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--encoders", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--mode", choices=["conditioned", "ximg"], default=None)
    p.set_defaults(fn=cmd_train_diffusion)

    p = sub.add_parser("sample", help="generate one clip from a graph document")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--first-frame", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("autoregress", help="chain clips into a longer video")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graphs", nargs="+", required=True)
    p.add_argument("--first-frame", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(fn=cmd_autoregress)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--queue-capacity", type=int, default=8)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        error = {"error": str(exc), "type": type(exc).__name__}
        print(f"sg2vid-error: {json.dumps(error)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
