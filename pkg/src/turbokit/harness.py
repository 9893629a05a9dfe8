"""Monte-Carlo BER/BLER evaluation and result files.

Block ``b`` at SNR index ``k`` is simulated from its own stream
``default_rng(SeedSequence([master_seed, k, b]))``: first the ``L`` message
bits (``integers(0, 2)``), then the channel noise for the three stacked
streams. Results therefore do not depend on chunking or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Union

import numpy as np

from .channel import ChannelModel, ChannelTemplate, ReceivedBlock, channel_noise, modulate
from .code import Permutation, RscSpec, TURBO_757, build_trellis, make_permutation, turbo_encode

DEFAULT_MIN_BLOCK_ERRORS = 100
DEFAULT_MAX_BLOCKS = 1_000_000


@dataclass(frozen=True)
class EvalConfig:
    """``channel`` is either a template (noise scale set from each SNR) or a
    fixed channel model, in which case ``snr_list`` entries only label rows."""

    snr_list: tuple[float, ...]
    block_length: int = 100
    channel: Union[ChannelTemplate, ChannelModel] = field(default_factory=ChannelTemplate)
    code: RscSpec = TURBO_757
    permutation_kind: str = "random"
    permutation_seed: int | None = 0
    min_block_errors: int = DEFAULT_MIN_BLOCK_ERRORS
    max_blocks: int = DEFAULT_MAX_BLOCKS
    master_seed: int = 0
    workers: int = 1
    chunk_blocks: int = 200

    def __post_init__(self):
        object.__setattr__(self, "snr_list", tuple(float(s) for s in self.snr_list))
        if not self.snr_list:
            raise ValueError("snr_list must not be empty")
        if self.min_block_errors < 1 or self.max_blocks < 1:
            raise ValueError("min_block_errors and max_blocks must be at least 1")
        if self.block_length < 1 or self.workers < 1 or self.chunk_blocks < 1:
            raise ValueError("block_length, workers and chunk_blocks must be positive")

    def channel_at(self, snr_db: float) -> ChannelModel:
        if isinstance(self.channel, ChannelTemplate):
            return self.channel.at_snr(snr_db)
        return self.channel

    @property
    def permutation(self) -> Permutation:
        return make_permutation(self.block_length, self.permutation_kind, self.permutation_seed)


def channel_id(channel) -> str:
    d = channel.to_dict()
    kind = d.pop("type")
    return "-".join([kind] + [f"{k}{v:g}" for k, v in sorted(d.items())])


@dataclass
class BerRecord:
    snr_db: float
    decoder_id: str
    channel_id: str
    block_length: int
    num_blocks: int
    num_bits: int
    num_bit_errors: int
    num_block_errors: int
    ber: float
    bler: float
    seed: int
    stop_reason: str = ""

    CSV_COLUMNS = ("snr_db", "decoder_id", "channel_id", "block_length", "num_blocks", "num_bits",
                   "num_bit_errors", "num_block_errors", "ber", "bler", "seed")


def simulate_blocks(cfg: EvalConfig, snr_index: int, start: int, stop: int):
    """Messages and received blocks for block indices ``start..stop-1``."""
    channel = cfg.channel_at(cfg.snr_list[snr_index])
    L = cfg.block_length
    msgs = np.empty((stop - start, L), dtype=np.int8)
    noise = np.empty((stop - start, 3, L))
    for i, b in enumerate(range(start, stop)):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, snr_index, b]))
        msgs[i] = rng.integers(0, 2, size=L, dtype=np.int8)
        noise[i] = channel_noise((3, L), channel, rng)
    cw = turbo_encode(msgs, build_trellis(cfg.code), cfg.permutation)
    y = modulate(cw.stacked()) + noise
    return msgs, ReceivedBlock.from_stacked(y), channel


def _chunk_errors(decoder, cfg: EvalConfig, snr_index: int, start: int, stop: int) -> np.ndarray:
    msgs, rx, channel = simulate_blocks(cfg, snr_index, start, stop)
    bits = decoder.decode(rx, channel)
    return np.count_nonzero(bits != msgs, axis=1)


def evaluate(decoder, cfg: EvalConfig) -> list[BerRecord]:
    """One record per SNR, stopping at the first block where ``min_block_errors``
    block errors have accumulated, or after ``max_blocks`` blocks."""
    if decoder.block_length != cfg.block_length:
        raise ValueError(f"decoder block length {decoder.block_length} != evaluation block length "
                         f"{cfg.block_length}")
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    records = []
    try:
        for k, snr in enumerate(cfg.snr_list):
            counts: list[np.ndarray] = []
            n_blocks = bit_errs = blk_errs = 0
            reason = "max_blocks"
            next_start = 0
            done = False
            while not done and next_start < cfg.max_blocks:
                ranges = []
                for _ in range(cfg.workers):
                    if next_start >= cfg.max_blocks:
                        break
                    stop = min(next_start + cfg.chunk_blocks, cfg.max_blocks)
                    ranges.append((next_start, stop))
                    next_start = stop
                if pool is None:
                    results = [_chunk_errors(decoder, cfg, k, a, b) for a, b in ranges]
                else:
                    futs = [pool.submit(_chunk_errors, decoder, cfg, k, a, b) for a, b in ranges]
                    results = [f.result() for f in futs]
                for errs in results:
                    for e in errs:
                        n_blocks += 1
                        bit_errs += int(e)
                        blk_errs += int(e > 0)
                        if blk_errs >= cfg.min_block_errors:
                            reason, done = "min_block_errors", True
                            break
                    if done:
                        break
            channel = cfg.channel_at(snr)
            n_bits = n_blocks * cfg.block_length
            records.append(BerRecord(
                snr_db=snr, decoder_id=decoder.decoder_id, channel_id=channel_id(channel),
                block_length=cfg.block_length, num_blocks=n_blocks, num_bits=n_bits,
                num_bit_errors=bit_errs, num_block_errors=blk_errs,
                ber=bit_errs / n_bits, bler=blk_errs / n_blocks, seed=cfg.master_seed, stop_reason=reason))
    finally:
        if pool is not None:
            pool.shutdown()
    return records


# --- result files ---

_INT_FIELDS = {"block_length", "num_blocks", "num_bits", "num_bit_errors", "num_block_errors", "seed"}
_FLOAT_FIELDS = {"snr_db", "ber", "bler"}


def _fmt(name, value):
    return repr(float(value)) if name in _FLOAT_FIELDS else str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BerRecord.CSV_COLUMNS)
    for r in records:
        w.writerow([_fmt(c, getattr(r, c)) for c in BerRecord.CSV_COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    return json.dumps([asdict(r) for r in records], indent=1) + "\n"


def _record_from_mapping(d) -> BerRecord:
    kw = {}
    for f in fields(BerRecord):
        if f.name not in d:
            if f.name == "stop_reason":
                continue
            raise ValueError(f"result row missing field {f.name!r}")
        v = d[f.name]
        if f.name in _INT_FIELDS:
            v = int(v)
        elif f.name in _FLOAT_FIELDS:
            v = float(v)
        kw[f.name] = v
    return BerRecord(**kw)


def write_results(records, path, format: str | None = None) -> Path:
    path = Path(path)
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown result format {fmt!r}")
    text = records_to_csv(records) if fmt == "csv" else records_to_json(records)
    try:
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write results to {path}: {e.strerror or e}") from e
    return path


def read_results(path, format: str | None = None) -> list[BerRecord]:
    path = Path(path)
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    try:
        text = path.read_text()
    except OSError as e:
        raise OSError(f"cannot read results from {path}: {e.strerror or e}") from e
    if fmt == "json":
        return [_record_from_mapping(d) for d in json.loads(text)]
    rows = csv.DictReader(io.StringIO(text))
    if tuple(rows.fieldnames or ()) != BerRecord.CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header {rows.fieldnames}")
    return [_record_from_mapping(r) for r in rows]


def uncoded_bpsk_ber(snr_db: float) -> float:
    """Q(1/sigma) under the SNR convention of :mod:`turbokit.channel`."""
    sigma = 10.0 ** (-snr_db / 20.0)
    return 0.5 * math.erfc(1.0 / (sigma * math.sqrt(2.0)))
