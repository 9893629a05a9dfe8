"""Command-line entry point: ``turbokit <command> [--config PATH] ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 config error.
Failures print one JSON line on stderr: ``{"error": kind, "exit": code, "message": ...}``.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .channel import ChannelTemplate
from .classical import ClassicalTurboDecoder
from .code import TURBO_757, get_spec, make_permutation, turbo_encode
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .deepturbo import (CheckpointError, ModelConfig, NeuralTurboDecoder, build_model, load_checkpoint,
                        save_checkpoint)
from .harness import EvalConfig, evaluate, records_to_csv, write_results
from .training import PretrainConfig, ProbeConfig, TrainConfig, auxiliary_probe, bcjr_imitation_pretrain, train
from .verify import TOL, run_gradient_suite

EXIT_RUNTIME, EXIT_USAGE, EXIT_CONFIG = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, code: int, message: str) -> int:
    print(json.dumps({"error": kind, "exit": code, "message": message}), file=sys.stderr)
    return code


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file (YAML)")
    common.add_argument("--seed", type=int, help="override training seed / evaluation master seed")
    common.add_argument("--out", type=Path, help="output file")
    common.add_argument("--workers", type=int, help="evaluation worker processes")
    common.add_argument("--deterministic", action="store_true",
                        help="pin BLAS to one thread so floating-point reductions are reproducible")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="turbokit", description="Turbo-code decoding experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("encode-demo", parents=[common], help="print the codeword of a message")
    p.add_argument("--message", default="1,0,0,0,0,0", help="comma-separated bits or a 0/1 string")
    p.add_argument("--code", default=None, help="turbo-757 or turbo-lte")
    p.add_argument("--identity", action="store_true", help="use the identity interleaver")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of all layers")
    sub.add_parser("train", parents=[common], help="train a neural decoder from the config")
    sub.add_parser("eval", parents=[common], help="BER/BLER of the first configured decoder")
    p = sub.add_parser("probe", parents=[common], help="auxiliary linear probes on a checkpoint")
    p.add_argument("--checkpoint", type=Path)
    sub.add_parser("sweep", parents=[common], help="BER/BLER of all configured decoders, one results file")
    return parser


def _parse_bits(text: str) -> np.ndarray:
    text = text.replace(",", "").replace(" ", "")
    if not text or set(text) - {"0", "1"}:
        raise UsageError(f"--message must consist of 0/1 bits, got {text!r}")
    return np.array([int(c) for c in text], dtype=np.int8)


def _require_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError(f"{args.command} needs --config PATH")
    return load_config(args.config)


def _pick(d: dict, cls, ignore=()):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names - set(ignore)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields {sorted(unknown)}")
    return {k: v for k, v in d.items() if k in names}


def _model_config(cfg: ExperimentConfig) -> tuple[ModelConfig, int]:
    m = dict(cfg.model)
    init_seed = int(m.pop("init_seed", 0))
    variant = m.pop("variant", "deepturbo")
    try:
        return ModelConfig.preset(variant, block_length=cfg.block_length, **_pick(m, ModelConfig)), init_seed
    except (TypeError, ValueError) as e:
        raise ConfigError(f"model: {e}") from None


def _train_config(cfg: ExperimentConfig, seed: int | None) -> TrainConfig:
    t = dict(cfg.training)
    extra = ("checkpoint", "history", "pretrain_samples", "pretrain_epochs", "pretrain_snr_db")
    kw = _pick(t, TrainConfig, ignore=extra)
    if isinstance(cfg.channel, ChannelTemplate):
        kw["channel"] = cfg.channel
    else:
        raise ConfigError("training needs a channel family: leave out sigma/sigma1 so the SNR schedule applies")
    if "snr_schedule" in kw:
        kw["snr_schedule"] = tuple(tuple(e) for e in kw["snr_schedule"])
    if seed is not None:
        kw["seed"] = seed
    try:
        return TrainConfig(block_length=cfg.block_length, code=cfg.code, **kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"training: {e}") from None


def _eval_config(cfg: ExperimentConfig, args) -> EvalConfig:
    kw = _pick(dict(cfg.eval), EvalConfig, ignore=("out",))
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.workers is not None:
        kw["workers"] = args.workers
    if "snr_list" not in kw:
        raise ConfigError("eval.snr_list is required")
    try:
        return EvalConfig(block_length=cfg.block_length, channel=cfg.channel, code=cfg.code,
                          permutation_kind=cfg.permutation_kind, permutation_seed=cfg.permutation_seed, **kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"eval: {e}") from None


def _decoders(cfg: ExperimentConfig, ecfg: EvalConfig):
    out = []
    for d in cfg.decoders:
        if d["kind"] == "turbo":
            out.append(ClassicalTurboDecoder(cfg.code, ecfg.permutation, iterations=int(d.get("iterations", 6)),
                                             max_log=bool(d.get("max_log", False)), decoder_id=d.get("id")))
        else:
            path = cfg.resolve(d["path"])
            try:
                model = load_checkpoint(path)
            except OSError as e:
                raise ConfigError(f"cannot read checkpoint {path}: {e.strerror or e}") from None
            if model.block_length != ecfg.block_length:
                raise ConfigError(f"checkpoint {path} is bound to L={model.block_length}, "
                                  f"config uses L={ecfg.block_length}")
            if (model.perm_kind, model.perm_seed) != (ecfg.permutation_kind, ecfg.permutation_seed):
                raise ConfigError(f"checkpoint {path} uses a different interleaver than the config")
            out.append(NeuralTurboDecoder(model, decoder_id=d.get("id")))
    if not out:
        raise ConfigError("no decoders configured")
    return out


def cmd_encode_demo(args) -> int:
    spec, perm_seed, kind = TURBO_757, 0, "random"
    if args.config is not None:
        cfg = load_config(args.config)
        spec, perm_seed, kind = cfg.code, cfg.permutation_seed, cfg.permutation_kind
    if args.code:
        try:
            spec = get_spec(args.code)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    if args.seed is not None:
        perm_seed = args.seed
    msg = _parse_bits(args.message)
    perm = make_permutation(len(msg), "identity" if args.identity else kind, perm_seed)
    cw = turbo_encode(msg, spec, perm)
    lines = [f"code {spec.name or 'custom'} L={len(msg)}", "u  " + "".join(map(str, msg))]
    lines += [f"{n}  " + "".join(map(str, getattr(cw, n))) for n in ("x1", "x2", "x3")]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_suite(seed=args.seed or 0)
    lines = [f"{name:18s} max_rel_err={err:.3e} {'PASS' if err < TOL else 'FAIL'}" for name, err in results]
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if all(err < TOL for _, err in results) else EXIT_RUNTIME


def cmd_train(args) -> int:
    cfg = _require_config(args)
    mcfg, init_seed = _model_config(cfg)
    tcfg = _train_config(cfg, args.seed)
    model = build_model(mcfg, seed=init_seed, perm_seed=cfg.permutation_seed, perm_kind=cfg.permutation_kind)
    t = cfg.training
    if t.get("pretrain_samples"):
        if mcfg.posterior_width != 1:
            raise ConfigError("BCJR imitation pretraining needs posterior_width 1")
        pcfg = PretrainConfig(num_samples=int(t["pretrain_samples"]), epochs=int(t.get("pretrain_epochs", 5)),
                              block_length=cfg.block_length)
        for net in model.sisos:
            bcjr_imitation_pretrain(net, cfg.code, float(t.get("pretrain_snr_db", 0.0)), seed=tcfg.seed, cfg=pcfg)
    model, history = train(model, tcfg)
    ckpt = args.out or cfg.resolve(t.get("checkpoint", "model.json"))
    save_checkpoint(model, ckpt)
    hist = cfg.resolve(t["history"]) if "history" in t else Path(ckpt).with_suffix(".history.csv")
    history.write_csv(hist)
    print(f"checkpoint {ckpt}\nhistory {hist}\ninitial_val_loss {history.initial_val_loss!r}")
    if history.records:
        print(f"final_val_loss {history.records[-1].val_loss!r}")
    return 0


def _run_eval(args, all_decoders: bool) -> int:
    cfg = _require_config(args)
    ecfg = _eval_config(cfg, args)
    decoders = _decoders(cfg, ecfg)
    if not all_decoders:
        decoders = decoders[:1]
    records = []
    for dec in decoders:
        records += evaluate(dec, ecfg)
    out = args.out or cfg.resolve(cfg.eval.get("out", "results.csv"))
    write_results(records, out)
    sys.stdout.write(records_to_csv(records))
    return 0


def cmd_probe(args) -> int:
    cfg = load_config(args.config) if args.config is not None else parse_config({})
    p = dict(cfg.probe)
    path = args.checkpoint or (cfg.resolve(p["checkpoint"]) if "checkpoint" in p else None)
    if path is None:
        raise ConfigError("probe needs --checkpoint or probe.checkpoint")
    try:
        model = load_checkpoint(path)
    except OSError as e:
        raise ConfigError(f"cannot read checkpoint {path}: {e.strerror or e}") from None
    iterations = p.pop("iterations", list(range(1, model.cfg.iterations + 1)))
    kw = _pick({k: v for k, v in p.items() if k != "checkpoint"}, ProbeConfig)
    if args.seed is not None:
        kw["seed"] = args.seed
    channel = cfg.channel if isinstance(cfg.channel, ChannelTemplate) else ChannelTemplate()
    pcfg = ProbeConfig(channel=channel, code=cfg.code, **kw)
    lines = ["iteration,ber"]
    for i in iterations:
        _, ber = auxiliary_probe(model, int(i), pcfg)
        lines.append(f"{int(i)},{ber!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _emit(text: str, out: Path | None):
    sys.stdout.write(text)
    if out is not None:
        Path(out).write_text(text)


COMMANDS = {
    "encode-demo": cmd_encode_demo,
    "gradcheck": cmd_gradcheck,
    "train": cmd_train,
    "eval": lambda a: _run_eval(a, all_decoders=False),
    "sweep": lambda a: _run_eval(a, all_decoders=True),
    "probe": cmd_probe,
}


@contextlib.contextmanager
def _thread_limit(enabled: bool):
    if not enabled:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=1):
        yield


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as e:
        return _fail("usage", EXIT_USAGE, str(e))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args.deterministic):
            return COMMANDS[args.command](args)
    except UsageError as e:
        return _fail("usage", EXIT_USAGE, str(e))
    except ConfigError as e:
        return _fail("config", EXIT_CONFIG, str(e))
    except CheckpointError as e:
        return _fail("checkpoint", EXIT_CONFIG, f"{type(e).__name__}: {e}")
    except Exception as e:  # noqa: BLE001 - report every failure as one line
        return _fail("runtime", EXIT_RUNTIME, f"{type(e).__name__}: {e}")


if __name__ == "__main__":
    sys.exit(main())
