"""Experiment configuration files (YAML).

Schema (every section optional unless a command needs it)::

    code:
      name: turbo-757            # or explicit f1: [1, 0, 1] and f2: [1, 1, 1]
      block_length: 100
      permutation: {kind: random, seed: 0}
    channel:                     # {type, sigma | (nu, sigma) | (sigma1, sigma2, p)}
      type: awgn                 # leave out sigma / sigma1 to derive it from each SNR
    model: {variant: deepturbo, iterations: 6, posterior_width: 5, num_layers: 2,
            hidden: 100, kernel: 5, shared_weights: false, residual: true, init_seed: 0}
    training: {batch_size: 500, batches_per_epoch: 100, epochs: 200, lr: 0.001,
               lr_decay_factor: 10, patience_epochs: 10, min_improvement: 0.0001,
               snr_schedule: [[0.0, null], [-1.5, null]], loss: bce, seed: 0,
               validation_size: 5000, validation_seed: 12345,
               checkpoint: model.json, history: history.csv}
    decoders:                    # `eval` uses the first entry, `sweep` uses all
      - {kind: turbo, iterations: 6, id: turbo-i6}
      - {kind: checkpoint, path: model.json, id: deepturbo}
    eval: {snr_list: [-1.5, 0.0, 1.5], min_block_errors: 100, max_blocks: 1000000,
           master_seed: 0, workers: 1, chunk_blocks: 200, out: results.csv}
    probe: {checkpoint: model.json, iterations: [1, 2, 3], train_snr_db: 0.0,
            eval_snr_db: 0.0, steps: 300, batch_size: 128, lr: 0.01, eval_blocks: 2000, seed: 0}

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .channel import ChannelTemplate, channel_from_dict
from .code import RscSpec, get_spec

SECTIONS = {"code", "channel", "model", "training", "decoders", "decoder", "eval", "probe"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    code: RscSpec
    block_length: int
    permutation_kind: str
    permutation_seed: int | None
    channel: Any  # ChannelTemplate or a fixed channel model
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    decoders: list = field(default_factory=list)
    eval: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _section(doc, name, kind=dict):
    value = doc.get(name, kind())
    if value is None:
        value = kind()
    if not isinstance(value, kind):
        raise ConfigError(f"section {name!r} must be a {kind.__name__}")
    return value


def parse_config(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(doc) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    code = _section(doc, "code")
    try:
        if "f1" in code or "f2" in code:
            spec = RscSpec(f1=tuple(code["f1"]), f2=tuple(code["f2"]), name=str(code.get("name", "")))
        else:
            spec = get_spec(str(code.get("name", "turbo-757")))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"code: {e}") from None
    perm = code.get("permutation") or {}
    block_length = code.get("block_length", 100)
    if not isinstance(block_length, int) or block_length < 1:
        raise ConfigError("code.block_length must be a positive integer")

    ch = _section(doc, "channel") or {"type": "awgn"}
    try:
        if "sigma" in ch or "sigma1" in ch:
            channel = channel_from_dict(ch)
        else:
            channel = ChannelTemplate.from_dict(ch)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"channel: {e}") from None

    decoders = doc.get("decoders")
    if decoders is None:
        decoders = [doc["decoder"]] if doc.get("decoder") else []
    if not isinstance(decoders, list) or not all(isinstance(d, dict) for d in decoders):
        raise ConfigError("decoders must be a list of mappings")
    for d in decoders:
        if d.get("kind") not in ("turbo", "checkpoint"):
            raise ConfigError(f"decoder kind must be 'turbo' or 'checkpoint', got {d.get('kind')!r}")
        if d["kind"] == "checkpoint" and "path" not in d:
            raise ConfigError("checkpoint decoder needs a 'path'")

    return ExperimentConfig(
        code=spec,
        block_length=block_length,
        permutation_kind=str(perm.get("kind", "random")),
        permutation_seed=perm.get("seed", 0),
        channel=channel,
        model=_section(doc, "model"),
        training=_section(doc, "training"),
        decoders=decoders,
        eval=_section(doc, "eval"),
        probe=_section(doc, "probe"),
        base_dir=base_dir,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    return parse_config(doc or {}, base_dir=path.parent)
