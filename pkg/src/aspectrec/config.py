"""Pipeline configuration and the key-value text format.

The text format is one ``key = value`` per line, ``#`` comments, blank
lines ignored. It serves three places: user config files, the config
snapshot embedded in model files, and synthetic dataset specs.
"""

from dataclasses import dataclass, fields, replace

from .blstm import BlstmHyper
from .features import (DEFAULT_ORIENTATIONS, FeatureConfig, GaborParams,
                       TplbpParams)
from .mlp import MlpHyper


def parse_kv(text):
    """Ordered (key, value) pairs from key-value text; repeats allowed."""
    pairs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {line_no}: expected 'key = value', "
                             f"got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def format_kv(pairs):
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def _parse_bool(value):
    if value.lower() in ("true", "1", "yes"):
        return True
    if value.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    return str(value)


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the five-stage pipeline, with defaults reproducing the
    reference configuration: 6 orientations at multiples of pi/6, ring codes
    with radius 12 / 8 patches of side 3 / alpha 1 / 20x20 histogram blocks
    (75264 features on a 128x128 chip), a 1024-unit reducer, and 512/256/128
    bidirectional layers."""

    classes: int = 0  # fixed when a model is trained
    image_size: int = 128
    gabor_wavelength: float = 8.0
    gabor_sigma: float = None
    gabor_aspect_ratio: float = 0.5
    gabor_phase: float = 0.0
    gabor_kernel_size: int = None
    orientations: tuple = DEFAULT_ORIENTATIONS
    tplbp_radius: int = 12
    tplbp_patch_count: int = 8
    tplbp_patch_size: int = 3
    tplbp_alpha: int = 1
    tplbp_tau: float = 0.01
    block_size: int = 20
    normalize_magnitudes: bool = True
    mlp_hidden: int = 1024
    mlp_learning_rate: float = 1e-3
    mlp_batch_size: int = 32
    mlp_max_epochs: int = 200
    mlp_stop_error_rate: float = 0.10
    blstm_layers: tuple = (512, 256, 128)
    blstm_learning_rate: float = 1e-7
    blstm_epochs: int = 100
    blstm_clip_norm: float = 5.0
    blstm_stop_accuracy: float = None
    train_subsample_intervals: tuple = (18.0, 45.0, 72.0)
    circles: int = 4
    seed: int = 0

    def feature_config(self):
        return FeatureConfig(
            gabor=GaborParams(wavelength=self.gabor_wavelength,
                              phase=self.gabor_phase,
                              aspect_ratio=self.gabor_aspect_ratio,
                              sigma=self.gabor_sigma,
                              kernel_size=self.gabor_kernel_size),
            orientations=self.orientations,
            tplbp=TplbpParams(radius=self.tplbp_radius,
                              patch_count=self.tplbp_patch_count,
                              patch_size=self.tplbp_patch_size,
                              alpha=self.tplbp_alpha,
                              tau=self.tplbp_tau,
                              block_size=self.block_size),
            normalize_magnitudes=self.normalize_magnitudes,
        )

    def mlp_hyper(self, seed):
        return MlpHyper(learning_rate=self.mlp_learning_rate,
                        batch_size=self.mlp_batch_size,
                        max_epochs=self.mlp_max_epochs,
                        stop_error_rate=self.mlp_stop_error_rate,
                        seed=seed)

    def blstm_hyper(self, seed):
        return BlstmHyper(learning_rate=self.blstm_learning_rate,
                          epochs=self.blstm_epochs,
                          clip_norm=self.blstm_clip_norm,
                          seed=seed,
                          stop_accuracy=self.blstm_stop_accuracy)

    def to_pairs(self):
        return [(f.name, _fmt(getattr(self, f.name))) for f in fields(self)]

    def to_text(self):
        return format_kv(self.to_pairs())


_INT_FIELDS = {"classes", "image_size", "gabor_kernel_size", "tplbp_radius",
               "tplbp_patch_count", "tplbp_patch_size", "tplbp_alpha",
               "block_size", "mlp_hidden", "mlp_batch_size", "mlp_max_epochs",
               "blstm_epochs", "circles", "seed"}
_FLOAT_FIELDS = {"gabor_wavelength", "gabor_sigma", "gabor_aspect_ratio",
                 "gabor_phase", "tplbp_tau", "mlp_learning_rate",
                 "mlp_stop_error_rate", "blstm_learning_rate",
                 "blstm_clip_norm", "blstm_stop_accuracy"}
_BOOL_FIELDS = {"normalize_magnitudes"}
_OPTIONAL_FIELDS = {"gabor_sigma", "gabor_kernel_size", "blstm_stop_accuracy",
                    "blstm_clip_norm"}


def config_from_pairs(pairs, base=None):
    """Apply key-value overrides on top of a base PipelineConfig."""
    cfg = base if base is not None else PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    updates = {}
    for key, value in pairs:
        if key not in known:
            raise ValueError(f"unknown configuration key {key!r}")
        if value.lower() == "none" and key in _OPTIONAL_FIELDS:
            updates[key] = None
        elif key == "orientations":
            updates[key] = tuple(float(v) for v in value.split(","))
        elif key == "train_subsample_intervals":
            updates[key] = tuple(float(v) for v in value.split(",")) \
                if value else ()
        elif key == "blstm_layers":
            updates[key] = tuple(int(v) for v in value.split(","))
        elif key in _INT_FIELDS:
            updates[key] = int(value)
        elif key in _FLOAT_FIELDS:
            updates[key] = float(value)
        elif key in _BOOL_FIELDS:
            updates[key] = _parse_bool(value)
        else:
            raise ValueError(f"unhandled configuration key {key!r}")
    return replace(cfg, **updates)


def config_from_file(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return config_from_pairs(parse_kv(fh.read()), base=base)


def config_from_text(text, base=None):
    return config_from_pairs(parse_kv(text), base=base)
