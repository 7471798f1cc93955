"""Declarative run configuration.

A run is fully described by ``key = value`` lines in a config file plus
command-line overrides (flags win). Unknown keys are rejected, and every
command writes its fully resolved configuration next to its outputs, so any
run can be reproduced from that echo file alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError

__all__ = ["ConfigKey", "SCHEMA", "RunConfig", "parse_config_file", "resolve"]


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: '{text}'")


def _parse_int_tuple(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise UsageError(f"not a comma-separated integer list: '{text}'")


@dataclass(frozen=True)
class ConfigKey:
    name: str
    parse: object
    default: object
    help: str


def _key(name, parse, default, help):
    return ConfigKey(name, parse, default, help)


SCHEMA = {
    k.name: k
    for k in [
        _key("dataset_dir", str, None, "input dataset directory"),
        _key("out_dir", str, None, "output directory for this command"),
        _key("K", int, 40, "frames per clip"),
        _key("M", int, 3, "number of expression classes"),
        _key("T", int, 1000, "diffusion timesteps"),
        _key("beta1", float, 1e-4, "first beta of the linear schedule"),
        _key("betaT", float, 0.02, "last beta of the linear schedule"),
        _key("t_s", int, 400, "late-start timestep for frames beyond the first"),
        _key("epochs", int, 200, "training epochs"),
        _key("stop_epoch", int, 0, "stop early at this epoch for later resume (0 = run all)"),
        _key("batch_size", int, 32, "training batch size"),
        _key("steps_per_epoch", int, 0, "training steps per epoch (0 = auto)"),
        _key("lr_initial", float, 1e-3, "initial learning rate"),
        _key("lr_final", float, 1e-4, "final learning rate"),
        _key("hidden_widths", _parse_int_tuple, (16, 32, 64, 128), "denoiser channel widths"),
        _key("spiral_lengths", _parse_int_tuple, (9, 9, 12, 12), "denoiser spiral lengths"),
        _key("d_idx", int, 8, "vertex index embedding size"),
        _key("d_t", int, 64, "timestep embedding size"),
        _key("d_id", int, 16, "identity latent size"),
        _key("use_identity", _parse_bool, False, "condition on an identity latent"),
        _key("noise_mode", str, "shared", "shared | independent reverse-step noise"),
        _key("intensity_mode", str, "global", "global | local | varying intensity"),
        _key("intensity", float, 1.0, "generation intensity in (0, 1]"),
        _key("data_seed", int, 0, "synthetic data / split seed"),
        _key("init_seed", int, 1, "network initialization seed"),
        _key("train_seed", int, 2, "training draw seed"),
        _key("noise_seed", int, 3, "sampling noise seed"),
        _key("eval_seed", int, 4, "classifier training seed"),
        _key("n_subjects", int, 6, "synthetic subjects"),
        _key("n_target", int, 162, "minimum synthetic vertex count"),
        _key("n_train", int, 0, "training subjects in the split (0 = 3/4 of all)"),
        _key("unit_scale", float, 1.0, "coordinate multiplier applied on load"),
        _key("landmarks_path", str, None, "landmark vertex index file"),
        _key("neutral_path", str, None, "neutral mesh for generation"),
        _key("signal_path", str, None, "explicit expression signal file"),
        _key("expression_class", int, 0, "class to generate"),
        _key("count", int, 1, "animations to generate"),
        _key("subject_id", str, "generated", "subject id stamped on generated clips"),
        _key("generated_dir", str, None, "generated clips to evaluate"),
        _key("reference_dir", str, None, "ground-truth clips to evaluate against"),
        _key("checkpoint", str, None, "checkpoint file to load / resume from"),
        _key("threads", int, 1, "worker threads for frame sampling"),
        _key("force", _parse_bool, False, "overwrite non-empty output directories"),
        _key("clf_epochs", int, 300, "classifier training epochs"),
        _key("clf_hidden", int, 64, "classifier LSTM hidden size"),
        _key("pca_variance", float, 0.99, "variance fraction for PCA size choice"),
    ]
}


class RunConfig:
    """Resolved configuration: attribute access for every schema key."""

    def __init__(self, values: dict):
        unknown = set(values) - set(SCHEMA)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for name, key in SCHEMA.items():
            setattr(self, name, values.get(name, key.default))

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in SCHEMA}

    def echo(self, out_dir) -> Path:
        """Write the resolved config next to the run outputs."""
        lines = []
        for name in sorted(SCHEMA):
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{name} = {value}")
        path = Path(out_dir) / "resolved.cfg"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) in (None, "")]
        if missing:
            raise UsageError(f"missing required config keys: {missing}")


def parse_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such config file: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
        name, _, text = line.partition("=")
        name = name.strip()
        if name not in SCHEMA:
            raise UsageError(f"{path}: line {lineno}: unknown config key '{name}'")
        values[name] = SCHEMA[name].parse(text.strip())
    return values


def resolve(config_path=None, overrides: dict | None = None) -> RunConfig:
    """Config file values overridden by flag values."""
    values = parse_config_file(config_path) if config_path else {}
    for name, text in (overrides or {}).items():
        if name not in SCHEMA:
            raise UsageError(f"unknown config key '{name}'")
        values[name] = SCHEMA[name].parse(text) if isinstance(text, str) else text
    return RunConfig(values)
