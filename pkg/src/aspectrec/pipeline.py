"""Five-stage pipeline orchestration and evaluation reports.

Stages: sequence construction -> per-image descriptor -> trained reduction
-> bidirectional sequence classification -> independent per-step softmax
decisions. This module wires the stage modules together, owns the trained
model bundle and its file format, and produces evaluation reports.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import blstm, mlp
from .config import PipelineConfig, config_from_text, format_kv, parse_kv
from .dataio import build_sequences, contaminate, subsample_aspects
from .features import extract, feature_dim
from .numkit import Rng, derive_seed
from .serialize import FormatError, read_container, write_container

MLP_SEED_KEY = 1
BLSTM_SEED_KEY = 2
NOISE_SEED_KEY = 3


@dataclass
class ModelBundle:
    """Trained reducer and sequence classifier plus the config snapshot the
    pair was trained under."""

    config: PipelineConfig
    mlp_params: mlp.MlpParams
    blstm_model: blstm.BlstmModel


@dataclass
class EvalReport:
    """Confusion matrix (rows = actual class) with run metadata."""

    confusion: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def classes(self):
        return self.confusion.shape[0]

    @property
    def total_steps(self):
        return int(self.confusion.sum())

    @property
    def total_accuracy(self):
        total = self.confusion.sum()
        if total == 0:
            return math.nan
        return float(np.trace(self.confusion) / total)

    def per_class_accuracy(self):
        """Fraction correct per actual class; nan for absent classes."""
        row_sums = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(row_sums > 0,
                            np.diag(self.confusion) / row_sums, math.nan)

    def format_table(self):
        lines = []
        if self.total_steps == 0:
            lines.append("no samples")
            for key in sorted(self.metadata):
                lines.append(f"{key}: {self.metadata[key]}")
            return "\n".join(lines) + "\n"
        width = max(6, len(str(int(self.confusion.max()))) + 1)
        header = "actual\\pred" + "".join(f"{c:>{width}}" for c in range(self.classes))
        lines.append(header + f"{'acc%':>8}")
        acc = self.per_class_accuracy()
        for c in range(self.classes):
            row = "".join(f"{int(v):>{width}}" for v in self.confusion[c])
            pct = f"{100.0 * acc[c]:.2f}" if np.isfinite(acc[c]) else "-"
            lines.append(f"{c:>11}" + row + f"{pct:>8}")
        lines.append(f"total accuracy: {100.0 * self.total_accuracy:.2f}%  "
                     f"({int(np.trace(self.confusion))}/{self.total_steps} steps)")
        for key in sorted(self.metadata):
            lines.append(f"{key}: {self.metadata[key]}")
        return "\n".join(lines) + "\n"

    def to_kv_pairs(self):
        pairs = [("report.classes", str(self.classes)),
                 ("report.total_steps", str(self.total_steps)),
                 ("report.total_accuracy",
                  "nan" if math.isnan(self.total_accuracy)
                  else f"{self.total_accuracy:.6f}")]
        acc = self.per_class_accuracy()
        for c in range(self.classes):
            value = "nan" if not np.isfinite(acc[c]) else f"{acc[c]:.6f}"
            pairs.append((f"report.class_accuracy.{c}", value))
        for c in range(self.classes):
            pairs.append((f"report.confusion.{c}",
                          ",".join(str(int(v)) for v in self.confusion[c])))
        for key in sorted(self.metadata):
            pairs.append((f"report.{key}", str(self.metadata[key])))
        return pairs

    def to_kv_text(self):
        return format_kv(self.to_kv_pairs())


def _validate_labels(images):
    class_ids = sorted({img.class_id for img in images})
    if len(class_ids) < 2:
        raise ValueError("training needs at least 2 classes, "
                         f"got {len(class_ids)}")
    expected = list(range(len(class_ids)))
    if class_ids != expected:
        raise ValueError(f"class ids must be contiguous from 0, got {class_ids}")
    return len(class_ids)


def extract_features(images, fcfg):
    """Descriptor matrix, one row per image, in input order."""
    return np.stack([extract(img.pixels, fcfg) for img in images])


def _to_sequence(members, row_of, reduced, key):
    rows = [row_of[id(img)] for img in members]
    return blstm.AspectSequence(
        steps=reduced[rows],
        labels=np.full(len(rows), members[0].class_id, dtype=np.int64),
        target_id=f"{key[0]}/{key[1]}/{key[2]}",
        class_id=members[0].class_id,
    )


def _labelled_sequences(images, reduced, circles, subsample_intervals=()):
    """Reduced-feature step sequences grouped into sweeps; labels repeat the
    class id at every step.

    For training, subsample_intervals adds sparse resamples of every sweep
    (one per interval, full aspect range) so sequences with widely spaced
    aspects are in-distribution for the recurrent layers, not just the
    dense collection the sweeps came from.
    """
    row_of = {id(img): i for i, img in enumerate(images)}
    seqset = build_sequences(images, circles=circles)
    out = []
    for key, members in seqset.iter_sequences():
        out.append(_to_sequence(members, row_of, reduced, key))
        for interval in subsample_intervals:
            sparse = subsample_aspects(members, (0.0, 360.0), interval)
            if sparse and len(sparse) < len(members):
                out.append(_to_sequence(sparse, row_of, reduced, key))
    return out


def train_pipeline(images, cfg):
    """Train reducer then sequence classifier; returns (bundle, logs)."""
    _validate_labels(images)
    features = extract_features(images, cfg.feature_config())
    return train_from_features(cfg, images, features)


def evaluate(bundle, images, noise_level=None, noise_seed=0,
             aspect_range=None, aspect_interval=None):
    """Per-step independent evaluation over constructed test sequences.

    Optional protocols: contaminate every test image at noise_level (one
    child noise stream per image, keyed by its position in the evaluation
    order), and/or subsample each sequence to an aspect range/interval.
    Returns an EvalReport; an empty test set yields a zero-step report.
    """
    cfg = bundle.config
    fcfg = cfg.feature_config()
    seqset = build_sequences(images, circles=cfg.circles)
    confusion = np.zeros((cfg.classes, cfg.classes), dtype=np.int64)
    metadata = {}
    if noise_level is not None:
        metadata["noise_level"] = noise_level
    if aspect_range is not None:
        metadata["aspect_range"] = f"{aspect_range[0]}:{aspect_range[1]}"
    if aspect_interval is not None:
        metadata["aspect_interval"] = aspect_interval
    image_counter = 0
    n_sequences = 0
    for _, members in seqset.iter_sequences():
        if aspect_range is not None or aspect_interval is not None:
            lo, hi = aspect_range if aspect_range is not None else (0.0, 360.0)
            interval = aspect_interval if aspect_interval is not None else 0.0
            interval = max(interval, 1e-9)
            members = subsample_aspects(members, (lo, hi), interval)
            if not members:
                continue
        if noise_level is not None:
            members = [contaminate(img, noise_level,
                                   derive_seed(noise_seed, NOISE_SEED_KEY,
                                               image_counter + k))
                       for k, img in enumerate(members)]
        image_counter += len(members)
        feats = extract_features(members, fcfg)
        reduced = mlp.reduce(bundle.mlp_params, feats)
        if reduced.shape[1] != bundle.blstm_model.input_dim:
            raise ValueError(f"reduced dim {reduced.shape[1]} does not match "
                             f"model input {bundle.blstm_model.input_dim}")
        _, predicted = blstm.classify(bundle.blstm_model, reduced)
        actual = np.array([img.class_id for img in members])
        for a, p in zip(actual, predicted):
            confusion[a, p] += 1
        n_sequences += 1
    metadata["sequences"] = n_sequences
    return EvalReport(confusion=confusion, metadata=metadata)


def single_image_report(bundle, images, noise_level=None, noise_seed=0):
    """Single-aspect baseline: classify each image alone with the reducer's
    softmax head (no sequence context)."""
    cfg = bundle.config
    fcfg = cfg.feature_config()
    confusion = np.zeros((cfg.classes, cfg.classes), dtype=np.int64)
    for k, img in enumerate(images):
        if noise_level is not None:
            img = contaminate(img, noise_level,
                              derive_seed(noise_seed, NOISE_SEED_KEY, k))
        probs = mlp.forward(bundle.mlp_params, extract(img.pixels, fcfg))
        confusion[img.class_id, int(np.argmax(probs))] += 1
    return EvalReport(confusion=confusion,
                      metadata={"mode": "single-image"})


# ---------------------------------------------------------------------------
# model persistence


def _bundle_tensors(bundle):
    tensors = [(f"mlp.{name}", t) for name, t in bundle.mlp_params.named_tensors()]
    tensors += [(f"blstm.{name}", t)
                for name, t in bundle.blstm_model.named_tensors()]
    return tensors


def save_model(bundle, path):
    """Write the bundle with its config snapshot; see serialize module."""
    write_container(path, bundle.config.to_text(), _bundle_tensors(bundle))


def load_model(path):
    """Read a bundle back, checking tensor shapes against the snapshot."""
    config_text, tensors = read_container(path)
    cfg = config_from_text(config_text)
    if cfg.classes < 2:
        raise FormatError(f"{path}: config snapshot has no trained classes")
    by_name = dict(tensors)
    if len(by_name) != len(tensors):
        raise FormatError(f"{path}: duplicate tensor names")

    def take(name, shape):
        if name not in by_name:
            raise FormatError(f"{path}: missing tensor '{name}'")
        tensor = by_name.pop(name)
        if tensor.shape != shape:
            raise FormatError(f"{path}: tensor '{name}' has shape "
                              f"{tensor.shape}, config implies {shape}")
        return tensor

    input_dim = feature_dim(cfg.image_size, cfg.image_size,
                            cfg.feature_config())
    hidden = cfg.mlp_hidden
    params = mlp.MlpParams(
        w1=take("mlp.w1", (hidden, input_dim)),
        b1=take("mlp.b1", (hidden,)),
        w2=take("mlp.w2", (cfg.classes, hidden)),
        b2=take("mlp.b2", (cfg.classes,)),
    )
    model = blstm.zero_model(hidden, list(cfg.blstm_layers), cfg.classes)
    for name, tensor in model.named_tensors():
        loaded = take(f"blstm.{name}", tensor.shape)
        tensor[...] = loaded
    if by_name:
        raise FormatError(f"{path}: unexpected tensors {sorted(by_name)}")
    return ModelBundle(config=cfg, mlp_params=params, blstm_model=model)


# ---------------------------------------------------------------------------
# feature archives


def save_feature_archive(path, cfg, images, features):
    """One record per image, named by its source path; metadata rows ride in
    the config block so training can rebuild sequences without pixels."""
    pairs = [("kind", "feature-archive"), ("count", str(len(images)))]
    pairs += cfg.to_pairs()
    for i, img in enumerate(images):
        pairs.append((f"row.{i}",
                      f"{img.source},{img.class_id},{img.serial},"
                      f"{img.depression_deg},{img.aspect_deg}"))
    names = [img.source for img in images]
    write_container(path, format_kv(pairs),
                    list(zip(names, np.asarray(features))))


def load_feature_archive(path):
    """Returns (config, metadata rows, feature matrix)."""
    from .dataio import AspectImage

    config_text, tensors = read_container(path)
    pairs = parse_kv(config_text)
    lookup = {}
    rows = []
    for key, value in pairs:
        if key.startswith("row."):
            rows.append((int(key[4:]), value))
        else:
            lookup[key] = value
    if lookup.get("kind") != "feature-archive":
        raise FormatError(f"{path}: not a feature archive")
    cfg_pairs = [(k, v) for k, v in pairs
                 if not k.startswith("row.") and k not in ("kind", "count")]
    cfg = config_from_text(format_kv(cfg_pairs))
    rows.sort()
    if len(rows) != len(tensors):
        raise FormatError(f"{path}: {len(rows)} metadata rows for "
                          f"{len(tensors)} records")
    images = []
    for (_, row), (name, _) in zip(rows, tensors):
        fname, class_id, serial, depression, aspect = row.split(",")
        if fname != name:
            raise FormatError(f"{path}: record '{name}' does not match "
                              f"metadata row '{fname}'")
        images.append(AspectImage(pixels=np.zeros((1, 1)),
                                  aspect_deg=float(aspect),
                                  depression_deg=float(depression),
                                  class_id=int(class_id),
                                  serial=serial,
                                  source=fname))
    features = np.stack([t for _, t in tensors])
    return cfg, images, features


def train_from_features(cfg, images, features):
    """train_pipeline body for precomputed descriptors (archive path)."""
    classes = _validate_labels(images)
    cfg = replace(cfg, classes=classes)
    labels = np.array([img.class_id for img in images], dtype=np.int64)
    mlp_params, mlp_log = mlp.train(
        features, labels, cfg.mlp_hidden,
        cfg.mlp_hyper(seed=derive_seed(cfg.seed, MLP_SEED_KEY)))
    reduced = mlp.reduce(mlp_params, features)
    sequences = _labelled_sequences(images, reduced, cfg.circles,
                                    cfg.train_subsample_intervals)
    model = blstm.init_model(cfg.mlp_hidden, list(cfg.blstm_layers), classes,
                             Rng(derive_seed(cfg.seed, BLSTM_SEED_KEY)))
    model, blstm_log = blstm.train(
        model, sequences,
        cfg.blstm_hyper(seed=derive_seed(cfg.seed, BLSTM_SEED_KEY)))
    bundle = ModelBundle(config=cfg, mlp_params=mlp_params, blstm_model=model)
    return bundle, {"mlp": mlp_log, "blstm": blstm_log}
