"""End-to-end orchestration: stages, config, seeds, manifest, sweeps.

Every stage reads and writes fixed artifact names inside the run's output
directory, so chaining the stage subcommands by hand is bitwise-identical
to one `pipeline` invocation.  All randomness flows from one root seed,
split per stage with fixed labels ("segment", "labels", "init",
"dropout"); changing one stage's behaviour never perturbs another's
draws.

Scale conventions: region merging operates in 8-bit value units (the
stacked [0, 1] raster scaled by 255), so the customary scale settings
carry over; `auto` derives the fine scale from a robust noise estimate
and keeps the default 15:8 coarse/fine ratio.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import FormatError, ParameterError, TrainingError
from .features import NodeFeatures, baseline_features, pool, zscore
from .hypergraph import (
    Hypergraph,
    auto_bandwidth,
    build_hyperedges,
    degrees,
    hyperedge_weights,
    propagation_operator,
    read_hypergraph,
    write_hypergraph,
)
from .metrics import ConfusionCounts, Metrics, confusion, metrics, metrics_json, metrics_table, paint
from .model import (
    LabelMask,
    TrainConfig,
    init_model,
    load_checkpoint,
    predict,
    sample_labels,
    save_checkpoint,
    train,
)
from .raster import Raster, read_raster, stack, write_raster
from .segmentation import (
    SegParams,
    coarsen,
    read_hierarchy,
    segment,
    segmentation_from_label_map,
    write_hierarchy,
)
from .synth import synth_scene

VALUE_UNITS = 255.0  # merge thresholds are expressed in 8-bit value units

ARTIFACTS = {
    "t1": "t1.pgm",
    "t2": "t2.pgm",
    "reference": "reference.pgm",
    "stacked": "stacked.dnhg",
    "labels_fine": "labels_fine.dnhg",
    "labels_coarse": "labels_coarse.dnhg",
    "hierarchy": "hierarchy.txt",
    "features_pixels": "features_pixels.dnhg",
    "features_nodes": "features_nodes.dnhg",
    "hypergraph": "hypergraph.txt",
    "model": "model.dnhm",
    "loss_history": "loss_history.txt",
    "labels_nodes": "labels_nodes.txt",
    "node_probs": "node_probs.dnhg",
    "change_map": "change_map.pgm",
    "metrics_json": "metrics.json",
    "metrics_table": "metrics.txt",
}


def split_seed(root: int, label: str) -> int:
    """Derive an independent stage seed from the root seed."""
    digest = hashlib.sha256(f"{root}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


@dataclass
class PipelineConfig:
    """Everything one run needs; mirrors the flat key = value config file.

    fine_scale / coarse_scale / bandwidth accept None for the auto modes.
    """

    t1: str = ""
    t2: str = ""
    reference: str | None = None
    feature_map: str | None = None
    out_dir: str = "run"
    fine_scale: float | None = 8.0
    coarse_scale: float | None = 15.0
    shape: float = 0.1
    compactness: float = 0.5
    radius: int = 2
    standardize: bool = False
    bandwidth: float | None = 1.0
    label_ratio: float = 0.05
    stratified: bool = False
    threshold: float = 0.5
    hidden: int = 64
    epochs: int = 400
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    alpha: float = 0.2
    gamma: float = 2.0
    optimizer: str = "adam"
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if (
            self.fine_scale is not None
            and self.coarse_scale is not None
            and self.coarse_scale <= self.fine_scale
        ):
            raise ParameterError("coarse scale must exceed fine scale")
        if not 0 < self.label_ratio <= 1:
            raise ParameterError(
                f"label ratio must be in (0, 1], got {self.label_ratio}"
            )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            alpha=self.alpha,
            gamma=self.gamma,
            optimizer=self.optimizer,
            momentum=self.momentum,
            seed=split_seed(self.seed, "dropout"),
        )


_AUTO_FIELDS = {"fine_scale", "coarse_scale", "bandwidth"}
_OPTIONAL_STR = {"reference", "feature_map"}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat "key = value" lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {line_no} has no '=': {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def config_from_dict(raw: dict[str, str | float | int | bool | None]) -> PipelineConfig:
    """Build a config from string (or already-typed) values."""
    kwargs = {}
    by_name = {f.name: f for f in fields(PipelineConfig)}
    for key, value in raw.items():
        if key not in by_name:
            raise ParameterError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _coerce(key, value)
        kwargs[key] = value
    return PipelineConfig(**kwargs)


def _coerce(key: str, value: str):
    if key in _AUTO_FIELDS and value.lower() == "auto":
        return None
    if key in _OPTIONAL_STR and value.lower() in ("", "none"):
        return None
    if key in ("t1", "t2", "out_dir", "optimizer") or key in _OPTIONAL_STR:
        return value
    if key in ("standardize", "stratified"):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ParameterError(f"config key {key} wants a boolean, got {value!r}")
    if key in ("radius", "hidden", "epochs", "seed"):
        return int(value)
    return float(value)


def config_to_dict(cfg: PipelineConfig) -> dict:
    """Serializable form with auto modes spelled out."""
    d = asdict(cfg)
    for key in _AUTO_FIELDS:
        if d[key] is None:
            d[key] = "auto"
    return d


# ---------------------------------------------------------------------------
# Auto scale selection
# ---------------------------------------------------------------------------


def estimate_noise(values: np.ndarray) -> float:
    """Robust per-channel noise sigma via median absolute pixel differences."""
    sigmas = []
    for c in range(values.shape[2]):
        diffs = np.abs(np.diff(values[:, :, c], axis=1)).ravel()
        sigmas.append(np.median(diffs) * 1.4826 / np.sqrt(2.0))
    return float(np.median(sigmas))


def auto_scales(values_8bit: np.ndarray) -> tuple[float, float]:
    """Noise-calibrated fine scale with the default 15:8 coarse ratio.

    The 0.9 multiplier keeps the fine regions safely inside the noise
    floor (moderate over-segmentation): merging two flat same-value
    regions costs about one noise sigma, so a threshold just below sigma
    stops fine merging right where real structure starts.
    """
    sigma = estimate_noise(values_8bit)
    fine = max(2.0, 0.9 * sigma)
    return fine, fine * (15.0 / 8.0)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _path(cfg: PipelineConfig, key: str) -> str:
    return os.path.join(cfg.out_dir, ARTIFACTS[key])


def stage_stack(cfg: PipelineConfig) -> Raster:
    os.makedirs(cfg.out_dir, exist_ok=True)
    t1 = read_raster(cfg.t1)
    t2 = read_raster(cfg.t2)
    stacked = stack(t1, t2)
    write_raster(stacked, _path(cfg, "stacked"))
    return stacked


def resolve_scales(cfg: PipelineConfig, stacked: Raster) -> tuple[float, float]:
    values = np.asarray(stacked.data, dtype=np.float64) * VALUE_UNITS
    if cfg.fine_scale is None or cfg.coarse_scale is None:
        s1_auto, s2_auto = auto_scales(values)
        s1 = cfg.fine_scale if cfg.fine_scale is not None else s1_auto
        s2 = cfg.coarse_scale if cfg.coarse_scale is not None else s2_auto
    else:
        s1, s2 = cfg.fine_scale, cfg.coarse_scale
    if s2 <= s1:
        raise ParameterError("coarse scale must exceed fine scale")
    return s1, s2


def stage_segment(cfg: PipelineConfig, stacked: Raster):
    s1, s2 = resolve_scales(cfg, stacked)
    values = Raster.from_array(
        (np.asarray(stacked.data, dtype=np.float64) * VALUE_UNITS).astype(np.float32)
    )
    fine = segment(
        values,
        SegParams(scale=s1, shape=cfg.shape, compactness=cfg.compactness),
        seed=split_seed(cfg.seed, "segment"),
    )
    coarse, hier = coarsen(
        fine, values, SegParams(scale=s2, shape=cfg.shape, compactness=cfg.compactness)
    )
    write_raster(fine.label_map, _path(cfg, "labels_fine"))
    write_raster(coarse.label_map, _path(cfg, "labels_coarse"))
    write_hierarchy(hier, _path(cfg, "hierarchy"))
    return fine, coarse, hier, (s1, s2)


def _load_fine(cfg: PipelineConfig, stacked: Raster):
    label_map = read_raster(_path(cfg, "labels_fine"))
    s1, _ = resolve_scales(cfg, stacked)
    params = SegParams(scale=s1, shape=cfg.shape, compactness=cfg.compactness)
    return segmentation_from_label_map(label_map, stacked, params)


def stage_features(cfg: PipelineConfig, stacked: Raster | None = None) -> NodeFeatures:
    if stacked is None:
        stacked = read_raster(_path(cfg, "stacked"))
    if cfg.feature_map is not None:
        fm = read_raster(cfg.feature_map)
        if (fm.height, fm.width) != (stacked.height, stacked.width):
            raise ParameterError(
                f"feature map {cfg.feature_map} is {fm.height}x{fm.width}, "
                f"input is {stacked.height}x{stacked.width}"
            )
    else:
        fm = baseline_features(stacked, radius=cfg.radius)
    write_raster(fm, _path(cfg, "features_pixels"))
    fine = _load_fine(cfg, stacked)
    nf = pool(fm, fine)
    if cfg.standardize:
        nf = zscore(nf)
    write_raster(nf.to_raster(), _path(cfg, "features_nodes"))
    return nf


def stage_graph(cfg: PipelineConfig) -> Hypergraph:
    nf = NodeFeatures.from_raster(read_raster(_path(cfg, "features_nodes")))
    labels_fine = read_raster(_path(cfg, "labels_fine"))
    hier = read_hierarchy(_path(cfg, "hierarchy"))
    n = int(labels_fine.plane(0).max()) + 1
    if nf.n != n or len(hier.parent) != n:
        raise ParameterError(
            f"inconsistent artifacts: {n} regions, {nf.n} feature rows, "
            f"{len(hier.parent)} hierarchy entries"
        )
    from .segmentation import _adjacency_sets  # stage rebuilds adjacency from labels

    adjacency = _adjacency_sets(labels_fine.plane(0), n)
    h = build_hyperedges(adjacency, hier)
    bw = cfg.bandwidth if cfg.bandwidth is not None else auto_bandwidth(h, nf)
    w = hyperedge_weights(h, nf, bw)
    d, delta = degrees(h, w)
    hg = Hypergraph(n=n, incidence=h, weights=w, vertex_degrees=d, edge_degrees=delta)
    write_hypergraph(hg, _path(cfg, "hypergraph"))
    return hg


def node_truth_from_reference(reference: Raster, labels_fine: Raster) -> np.ndarray:
    """Majority vote of reference pixels per fine region (ties -> unchanged)."""
    labels = labels_fine.plane(0).ravel()
    changed = (reference.plane(0).ravel() == 255).astype(np.float64)
    n = int(labels.max()) + 1
    votes = np.zeros(n)
    np.add.at(votes, labels, changed)
    counts = np.bincount(labels, minlength=n)
    return (votes / counts > 0.5).astype(np.int8)


def stage_train(cfg: PipelineConfig):
    if cfg.reference is None:
        raise TrainingError("training requires a reference change map")
    hg = read_hypergraph(_path(cfg, "hypergraph"))
    op = propagation_operator(
        hg.incidence, hg.weights, hg.vertex_degrees, hg.edge_degrees
    )
    nf = NodeFeatures.from_raster(read_raster(_path(cfg, "features_nodes")))
    labels_fine = read_raster(_path(cfg, "labels_fine"))
    reference = read_raster(cfg.reference)
    truth = node_truth_from_reference(reference, labels_fine)
    mask = sample_labels(
        hg.n,
        cfg.label_ratio,
        seed=split_seed(cfg.seed, "labels"),
        reference=truth,
        stratified=cfg.stratified,
    )
    model = init_model(
        nf.d,
        hidden=cfg.hidden,
        dropout_rate=cfg.dropout,
        seed=split_seed(cfg.seed, "init"),
    )
    model, history = train(model, op, nf.matrix, mask, cfg.train_config())
    save_checkpoint(model, _path(cfg, "model"))
    with open(_path(cfg, "loss_history"), "w") as f:
        f.write("\n".join(repr(v) for v in history) + "\n")
    with open(_path(cfg, "labels_nodes"), "w") as f:
        for node, lab in enumerate(mask.labels.tolist()):
            f.write(f"{node} {lab}\n")
    return model, history, mask


def stage_predict(cfg: PipelineConfig) -> np.ndarray:
    model = load_checkpoint(_path(cfg, "model"))
    hg = read_hypergraph(_path(cfg, "hypergraph"))
    op = propagation_operator(
        hg.incidence, hg.weights, hg.vertex_degrees, hg.edge_degrees
    )
    nf = NodeFeatures.from_raster(read_raster(_path(cfg, "features_nodes")))
    probs = predict(model, op, nf.matrix)
    write_raster(
        Raster(len(probs), 1, 1, "float32", probs.astype(np.float32)[:, None, None]),
        _path(cfg, "node_probs"),
    )
    stacked = read_raster(_path(cfg, "stacked"))
    fine = _load_fine(cfg, stacked)
    change_map = paint(probs, fine, threshold=cfg.threshold)
    write_raster(change_map, _path(cfg, "change_map"), "pgm")
    return probs


def stage_evaluate(cfg: PipelineConfig) -> tuple[ConfusionCounts, Metrics]:
    if cfg.reference is None:
        raise ParameterError("evaluation requires a reference change map")
    pred = read_raster(_path(cfg, "change_map"))
    reference = read_raster(cfg.reference)
    counts = confusion(pred, reference)
    scores = metrics(counts)
    with open(_path(cfg, "metrics_json"), "w") as f:
        f.write(metrics_json(counts, scores) + "\n")
    with open(_path(cfg, "metrics_table"), "w") as f:
        f.write(metrics_table(counts, scores) + "\n")
    return counts, scores


# ---------------------------------------------------------------------------
# Full pipeline, manifest, sweep
# ---------------------------------------------------------------------------


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(cfg: PipelineConfig, extra: dict | None = None) -> str:
    """Record config, stage seeds and artifact checksums for the run."""
    artifacts = {}
    for name in sorted(ARTIFACTS.values()):
        path = os.path.join(cfg.out_dir, name)
        if os.path.exists(path):
            artifacts[name] = _sha256(path)
    manifest = {
        "config": config_to_dict(cfg),
        "stage_seeds": {
            label: split_seed(cfg.seed, label)
            for label in ("segment", "labels", "init", "dropout")
        },
        "artifacts": artifacts,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(cfg.out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_manifest_config(path: str) -> PipelineConfig:
    with open(path) as f:
        manifest = json.load(f)
    raw = dict(manifest["config"])
    for key in _AUTO_FIELDS:
        if raw.get(key) == "auto":
            raw[key] = None
    return config_from_dict(raw)


def run_pipeline(cfg: PipelineConfig) -> tuple[ConfusionCounts, Metrics]:
    """stack -> segment -> features -> graph -> train -> predict -> evaluate."""
    stacked = stage_stack(cfg)
    _, _, _, scales = stage_segment(cfg, stacked)
    stage_features(cfg, stacked)
    stage_graph(cfg)
    stage_train(cfg)
    stage_predict(cfg)
    counts, scores = stage_evaluate(cfg)
    write_manifest(cfg, extra={"resolved_scales": list(scales)})
    return counts, scores


def sweep(
    cfg: PipelineConfig, parameter: str, values: list[float]
) -> list[tuple[float, Metrics]]:
    """One pipeline run per value of S2 or of the label ratio, shared seed.

    Writes sweep.csv under the base output directory with the header
    value,FAR,MAR,OA,Kappa.
    """
    if parameter not in ("coarse_scale", "label_ratio"):
        raise ParameterError(
            f"sweep parameter must be coarse_scale or label_ratio, got {parameter!r}"
        )
    if not values:
        raise ParameterError("sweep needs at least one value")
    os.makedirs(cfg.out_dir, exist_ok=True)
    results: list[tuple[float, Metrics]] = []
    for value in values:
        sub = replace(
            cfg,
            out_dir=os.path.join(cfg.out_dir, f"sweep_{parameter}_{value:g}"),
            **{parameter: value},
        )
        _, scores = run_pipeline(sub)
        results.append((value, scores))
    csv_path = os.path.join(cfg.out_dir, "sweep.csv")
    with open(csv_path, "w") as f:
        f.write("value,FAR,MAR,OA,Kappa\n")
        for value, m in results:
            f.write(f"{value:g},{m.far:.6f},{m.mar:.6f},{m.oa:.6f},{m.kappa:.6f}\n")
    return results


def run_synth(
    height: int,
    width: int,
    n_changes: int,
    noise_sigma: float,
    seed: int,
    out_dir: str,
) -> tuple[str, str, str]:
    """Generate a scene and write t1/t2/reference as PGM files."""
    os.makedirs(out_dir, exist_ok=True)
    t1, t2, ref = synth_scene(height, width, n_changes, noise_sigma, seed)
    paths = (
        os.path.join(out_dir, ARTIFACTS["t1"]),
        os.path.join(out_dir, ARTIFACTS["t2"]),
        os.path.join(out_dir, ARTIFACTS["reference"]),
    )
    for raster, path in zip((t1, t2, ref), paths):
        write_raster(raster, path, "pgm")
    return paths
