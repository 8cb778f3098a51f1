"""Command-line interface: one subcommand per pipeline stage plus
`pipeline`, `sweep` and the synthetic-scene generator.

Stage subcommands exchange fixed artifact names inside --out-dir, so
running them one after another reproduces `pipeline` bitwise.  All
commands exit 0 on success and nonzero with a single-line diagnostic on
any violated precondition.
"""

from __future__ import annotations

import argparse
import sys

from .errors import HypercdError
from .pipeline import (
    PipelineConfig,
    config_from_dict,
    load_manifest_config,
    parse_config_text,
    run_pipeline,
    run_synth,
    stage_evaluate,
    stage_features,
    stage_graph,
    stage_predict,
    stage_segment,
    stage_stack,
    stage_train,
    sweep,
)

_CONFIG_FLAGS: list[tuple[str, type | None]] = [
    ("t1", str),
    ("t2", str),
    ("reference", str),
    ("feature_map", str),
    ("out_dir", str),
    ("fine_scale", None),  # float or "auto"
    ("coarse_scale", None),
    ("shape", float),
    ("compactness", float),
    ("radius", int),
    ("standardize", None),  # bool words
    ("bandwidth", None),
    ("label_ratio", float),
    ("stratified", None),
    ("threshold", float),
    ("hidden", int),
    ("epochs", int),
    ("learning_rate", float),
    ("weight_decay", float),
    ("dropout", float),
    ("alpha", float),
    ("gamma", float),
    ("optimizer", str),
    ("momentum", float),
    ("seed", int),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    for name, typ in _CONFIG_FLAGS:
        flag = "--" + name.replace("_", "-")
        if typ is None:
            parser.add_argument(flag, dest=name, default=None)
        else:
            parser.add_argument(flag, dest=name, type=typ, default=None)


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            raw.update(parse_config_text(f.read()))
    for name, _ in _CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value if isinstance(value, str) else value
    return config_from_dict(raw)


def _cmd_synth(args) -> int:
    paths = run_synth(
        args.height, args.width, args.n_changes, args.noise_sigma,
        seed=args.seed, out_dir=args.out_dir,
    )
    print("\n".join(paths))
    return 0


def _cmd_segment(args) -> int:
    cfg = _build_config(args)
    stacked = stage_stack(cfg)
    _, coarse, _, (s1, s2) = stage_segment(cfg, stacked)
    print(f"scales {s1:g}/{s2:g}: {coarse.n_regions} coarse regions")
    return 0


def _cmd_features(args) -> int:
    cfg = _build_config(args)
    nf = stage_features(cfg)
    print(f"{nf.n} nodes x {nf.d} features")
    return 0


def _cmd_graph(args) -> int:
    cfg = _build_config(args)
    hg = stage_graph(cfg)
    print(f"{hg.n} vertices, {hg.l} hyperedges")
    return 0


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    _, history, mask = stage_train(cfg)
    print(f"{mask.n_labeled} labeled nodes, final loss {history[-1]:.6f}")
    return 0


def _cmd_predict(args) -> int:
    cfg = _build_config(args)
    probs = stage_predict(cfg)
    print(f"{(probs >= cfg.threshold).sum()} of {len(probs)} nodes changed")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _build_config(args)
    counts, scores = stage_evaluate(cfg)
    print(
        f"FAR={scores.far:.4f} MAR={scores.mar:.4f} "
        f"OA={scores.oa:.4f} Kappa={scores.kappa:.4f}"
    )
    return 0


def _cmd_pipeline(args) -> int:
    if args.from_manifest:
        cfg = load_manifest_config(args.from_manifest)
        if args.out_dir is not None:
            from dataclasses import replace

            cfg = replace(cfg, out_dir=args.out_dir)
    else:
        cfg = _build_config(args)
    _, scores = run_pipeline(cfg)
    print(
        f"FAR={scores.far:.4f} MAR={scores.mar:.4f} "
        f"OA={scores.oa:.4f} Kappa={scores.kappa:.4f}"
    )
    return 0


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    parameter = {"s2": "coarse_scale", "label_ratio": "label_ratio"}[args.parameter]
    values = [float(v) for v in args.values.split(",") if v.strip()]
    results = sweep(cfg, parameter, values)
    print("value,FAR,MAR,OA,Kappa")
    for value, m in results:
        print(f"{value:g},{m.far:.6f},{m.mar:.6f},{m.oa:.6f},{m.kappa:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypercd",
        description="Object-level hypergraph-convolution change detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bi-temporal scene")
    p.add_argument("height", type=int)
    p.add_argument("width", type=int)
    p.add_argument("n_changes", type=int)
    p.add_argument("noise_sigma", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="scene")
    p.set_defaults(func=_cmd_synth)

    for name, func, help_text in (
        ("segment", _cmd_segment, "stack the pair and segment at both scales"),
        ("features", _cmd_features, "pixel features and per-region pooling"),
        ("graph", _cmd_graph, "dual-neighborhood hypergraph construction"),
        ("train", _cmd_train, "semi-supervised training on sampled labels"),
        ("predict", _cmd_predict, "node probabilities and painted change map"),
        ("evaluate", _cmd_evaluate, "confusion counts and FAR/MAR/OA/Kappa"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="all stages end to end, with manifest")
    _add_config_flags(p)
    p.add_argument("--from-manifest", help="re-run the config recorded in a manifest")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sweep", help="one pipeline run per parameter value")
    _add_config_flags(p)
    p.add_argument("--parameter", choices=("s2", "label_ratio"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HypercdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
