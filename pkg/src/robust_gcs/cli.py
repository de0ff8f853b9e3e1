"""Command line interface: ``robust-gcs {qam,train,sweep,envelope,plot}``.

Every subcommand accepts ``--config FILE`` (TOML with ``[train]``,
``[sweep]`` and ``[bps]`` tables); explicit flags override the file.
Errors are reported on stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import autoencoder as ae
from . import constellation as cst
from . import experiments as ex
from . import trainer
from .cpe import BpsConfig
from .metrics import envelope


class ConfigError(ValueError):
    pass


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _merge(section: dict, args: argparse.Namespace, mapping: dict[str, str]) -> dict:
    """Config values overridden by any flag that was given explicitly."""
    out = dict(section)
    for flag, key in mapping.items():
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    return out


def _build(cls, values: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{where}] configuration: {exc}") from exc


# -- subcommands -------------------------------------------------------------

def cmd_qam(args, conf) -> int:
    c = cst.square_qam(args.order)
    cst.save(c, args.out)
    return 0


def _schedule(args, conf) -> trainer.TrainingSchedule:
    values = _merge(conf.get("train", {}), args, {
        "mode": "mode", "order": "order", "snr": "snr_db", "rpn_var": "rpn_var", "epochs": "epochs",
        "lr": "lr", "seed": "seed",
    })
    for key in ("snr_range_db", "rpn_var_range"):
        if key in values:
            values[key] = tuple(values[key])
    if args.snr_range is not None:
        values["snr_range_db"] = tuple(args.snr_range)
    if args.rpn_range is not None:
        values["rpn_var_range"] = tuple(args.rpn_range)
    for key in ("rpn_set", "snr_set"):
        values.pop(key, None)
    return _build(trainer.TrainingSchedule, values, "train")


def cmd_train(args, conf) -> int:
    s = _schedule(args, conf)
    rpn_set = args.rpn_set or conf.get("train", {}).get("rpn_set")
    if rpn_set:
        if args.per_rpn_at_snr is not None:
            snr_set = [args.per_rpn_at_snr]
        else:
            snr_set = args.snr_set or conf.get("train", {}).get("snr_set") or list(ex.DEFAULT_SNR_GRID)
        out_dir = Path(args.out_dir or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        for res in trainer.train_fixed_grid(rpn_set, snr_set, s):
            cst.save(res.constellation, out_dir / f"{res.constellation.label}.const")
        return 0
    if not args.out:
        raise ConfigError("train needs --out (or --rpn-set with --out-dir)")
    res = trainer.train(s, label=args.label)
    cst.save(res.constellation, args.out)
    if args.model_out:
        ae.save_model(res.encoder, res.decoder, args.model_out)
    if args.loss_csv:
        with open(args.loss_csv, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss_nats\n")
            fh.writelines(f"{i + 1},{v:.6g}\n" for i, v in enumerate(res.loss_history))
    return 0


def _sweep_config(args, conf) -> tuple[ex.SweepConfig, dict]:
    sweep = dict(conf.get("sweep", {}))
    outputs = {k: sweep.pop(k) for k in ("csv", "plot_lw", "plot_snr") if k in sweep}
    values = _merge(sweep, args, {
        "snr": "snr_grid_db", "lw": "lw_grid_hz", "runs": "runs", "symbols": "symbols_per_run",
        "seed": "seed", "workers": "workers", "phase_ambiguity": "phase_ambiguity",
    })
    consts = list(values.get("constellations", []))
    if args.const:
        consts = list(args.const)
    if consts:
        values["constellations"] = consts
    values["bps"] = _build(BpsConfig, dict(conf.get("bps", {})), "bps")
    cfg = _build(ex.SweepConfig, values, "sweep")
    for key in ("out", "plot_lw", "plot_snr"):
        val = getattr(args, key, None)
        if val:
            outputs["csv" if key == "out" else key] = val
    return cfg, outputs


def cmd_sweep(args, conf) -> int:
    cfg, outputs = _sweep_config(args, conf)
    if "csv" not in outputs:
        raise ConfigError("sweep needs an output CSV (--out or [sweep] csv)")
    try:
        consts = [ex.resolve_constellation(s) for s in cfg.constellations]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load constellation: {exc}") from exc
    table = ex.run_sweep(cfg, consts)
    ex.emit_csv(table, outputs["csv"])
    if "plot_lw" in outputs:
        ex.emit_plot(table, "vs_lw_at_fixed_snr", outputs["plot_lw"])
    if "plot_snr" in outputs:
        ex.emit_plot(table, "vs_snr_per_lw", outputs["plot_snr"])
    failed = [r for r in table if r.failed]
    for r in failed:
        print(json.dumps({"error": "cell_failed", "constellation": r.label, "snr_db": r.snr_db,
                          "lw_hz": r.linewidth_hz, "message": r.error}), file=sys.stderr)
    return 1 if failed else 0


def cmd_envelope(args, conf) -> int:
    table = ex.read_csv(args.csv)
    rpn = {}
    for path in args.const or []:
        c = cst.load(path)
        rpn[c.label] = float(c.metadata.get("rpn_var", "nan"))
    candidates = set(args.candidates.split(",")) if args.candidates else set(rpn)
    if not candidates:
        candidates = {r.label for r in table if r.label.startswith("ae-fixed")}
    rows = [dataclasses.replace(r, rpn_var=rpn.get(r.label, math.nan)) for r in table if r.label in candidates]
    if not rows:
        raise ConfigError("no envelope candidates found in the CSV")
    ex.emit_envelope_csv(envelope(rows), args.out)
    return 0


def cmd_plot(args, conf) -> int:
    ex.emit_plot(ex.read_csv(args.csv), args.axis, args.out, snr_db=args.snr)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _fail("usage", message, 2)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="robust-gcs", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("qam", help="write a square-QAM baseline constellation")
    q.add_argument("--order", type=int, default=64)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_qam)

    t = sub.add_parser("train", help="train a constellation with the autoencoder")
    t.add_argument("--config")
    t.add_argument("--mode", choices=trainer.MODES)
    t.add_argument("--order", type=int)
    t.add_argument("--snr", type=float, help="fixed SNR in dB (fixed and lw_robust modes)")
    t.add_argument("--snr-range", type=float, nargs=2, metavar=("LO", "HI"))
    t.add_argument("--rpn-var", type=float)
    t.add_argument("--rpn-range", type=float, nargs=2, metavar=("LO", "HI"))
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--label")
    t.add_argument("--out")
    t.add_argument("--model-out")
    t.add_argument("--loss-csv")
    t.add_argument("--rpn-set", type=_floats, help="train one fixed constellation per RPN value")
    t.add_argument("--snr-set", type=_floats, help="SNRs for --rpn-set (default 15..20 dB)")
    t.add_argument("--per-rpn-at-snr", type=float, help="with --rpn-set: train only at this SNR")
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="Monte-Carlo MI sweep over SNR x linewidth")
    s.add_argument("--config")
    s.add_argument("--const", nargs="+", help="constellation files or built-ins (qam64)")
    s.add_argument("--snr", type=_floats)
    s.add_argument("--lw", type=_floats, help="linewidths in Hz")
    s.add_argument("--runs", type=int)
    s.add_argument("--symbols", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--phase-ambiguity", choices=ex.AMBIGUITY_MODES)
    s.add_argument("--out")
    s.add_argument("--plot-lw")
    s.add_argument("--plot-snr")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("envelope", help="per-cell best MI over fixed-RPN candidates")
    e.add_argument("--config")
    e.add_argument("--csv", required=True)
    e.add_argument("--const", nargs="*", help="candidate constellation files (for RPN annotation)")
    e.add_argument("--candidates", help="comma-separated candidate labels")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_envelope)

    pl = sub.add_parser("plot", help="SVG plot from a sweep CSV")
    pl.add_argument("--config")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--axis", choices=ex.PLOT_AXES, required=True)
    pl.add_argument("--snr", type=float)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = _load_config(getattr(args, "config", None))
        return args.func(args, conf)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        return _fail("invalid_config", str(exc), 2)
    except cst.ConstellationError as exc:
        return _fail("constellation", str(exc), 2)
    except (OSError, ValueError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
