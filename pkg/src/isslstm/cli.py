"""Command-line entry point ``isslstm``.

Subcommands: simulate, train, eval, check-iss, gradcheck.

Exit codes: 0 success, 1 I/O error, 2 parse/usage error,
3 no stable checkpoint, 4 failed check (ISS verdict or gradient audit).
Log verbosity comes from ``ISSLSTM_LOG_LEVEL`` (default WARNING).
"""

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data, thermal, training
from .checkpoint import CheckpointError, ConfigError, load_checkpoint, load_config, make_checkpoint, save_checkpoint
from .data import CsvParseError, atomic_write_text
from .lstm import forward, init_params
from .numerics import DomainError

EXIT_OK = 0
EXIT_IO = 1
EXIT_PARSE = 2
EXIT_NO_STABLE = 3
EXIT_CHECK_FAILED = 4
GRADCHECK_TOL = 1e-6

log = logging.getLogger("isslstm")


def _setup_logging():
    level = os.environ.get("ISSLSTM_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    template = thermal.load_template(args.params) if args.params else None
    hours = (args.duration_h,) if args.duration_h is not None else (2.0, 2.5, 3.0)
    kind = None if args.signals == "benchmark" else args.signals
    ds = thermal.make_benchmark(args.seed, args.noise, template, hours, kind)
    out = Path(args.out)
    data.save_dataset(ds, out)
    print(f"wrote {len(ds.sequences)} sequences and {data.MANIFEST} to {out}")
    return EXIT_OK


def _load_split(directory):
    ds = data.load_dataset(directory)
    if not ds.train or not ds.val:
        raise DomainError(f"{directory}: dataset needs nonempty train and val splits")
    return ds


def cmd_train(args):
    rc = load_config(args.config)
    ds = _load_split(args.data).normalized()
    if ds.sequences[0].inputs.shape[1] != rc.arch.n_u or ds.sequences[0].outputs.shape[1] != rc.arch.n_y:
        raise ConfigError("config n_u / n_y do not match the dataset channels")
    u_max = np.ones(rc.arch.n_u)
    p0 = init_params(rc.arch, rc.train.seed, gate_scale=rc.init_scale)
    out = Path(args.out)
    history_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    try:
        result = training.train(p0, ds.train, ds.val, rc.train, u_max)
    except training.NoStableCheckpoint as exc:
        training.write_history_csv(exc.history, history_path, rc.arch.n_layers)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_STABLE
    training.write_history_csv(result.history, history_path, rc.arch.n_layers)
    ck = make_checkpoint(result.best_params, ds.norm, rc.to_dict(), u_max, rc.train.seed)
    save_checkpoint(ck, out)
    print(
        f"stored checkpoint {out} (val mse {result.best_val_mse:.6g}, {result.iterations_run} iterations, "
        f"stop: {result.stop_reason}, iss_verdict={str(result.iss_verdict).lower()})"
    )
    return EXIT_OK


def evaluate(ck, ds, split="test"):
    """Per-channel Fit rows ``(sequence, channel, fit)`` plus summary numbers."""
    if ck.norm is None:
        raise CheckpointError("checkpoint has no normalization statistics")
    seqs = ds.subset(split)
    if not seqs:
        raise DomainError(f"dataset has no {split!r} sequences")
    rows, normed = [], []
    for s in seqs:
        ns = data.apply_norm(s, ck.norm)
        normed.append(ns)
        pred = data.invert_outputs(forward(ck.params, ns.inputs).outputs, ck.norm)
        for j, f in enumerate(data.fit_per_channel(s.outputs, pred), start=1):
            rows.append((s.id, j, f))
    fits = np.array([r[2] for r in rows])
    report = ck.iss_report()
    summary = {
        "split": split,
        "n_sequences": len(seqs),
        "median_fit": float(np.median(fits)),
        "mean_fit": float(np.mean(fits)),
        "mse_normalized": training.mse(ck.params, normed),
        "iss_verdict": report.verdict,
    }
    return rows, summary, report


def cmd_eval(args):
    ck = load_checkpoint(args.ckpt)
    ds = data.load_dataset(args.data)
    rows, summary, report = evaluate(ck, ds, args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sequence", "output", "fit"])
    for sid, j, f in rows:
        w.writerow([sid, f"y{j}", repr(f)])
    atomic_write_text(out / "fits.csv", buf.getvalue())
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in summary.items()]
    text = "\n".join(lines) + "\n"
    atomic_write_text(out / "summary.txt", text + "\n" + report.to_text())
    sys.stdout.write(text)
    return EXIT_OK


def cmd_check_iss(args):
    ck = load_checkpoint(args.ckpt)
    report = ck.iss_report()
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.verdict else EXIT_CHECK_FAILED


def cmd_gradcheck(args):
    errs = training.gradient_audit(args.seed)
    worst = max(errs.values())
    for rho, e in errs.items():
        print(f"rho={rho:g}: max relative error {e:.3e}")
    ok = worst <= GRADCHECK_TOL
    print(f"gradcheck {'PASS' if ok else 'FAIL'} (tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="isslstm", description="ISS-constrained LSTM identification toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate the synthetic thermal benchmark as CSV files")
    p.add_argument("--params", help="thermal template YAML (default: built-in template)")
    p.add_argument("--signals", default="benchmark", choices=("benchmark",) + thermal.SIGNAL_KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1, help="output noise std in degC")
    p.add_argument("--duration-h", type=float, help="fixed duration of every experiment in hours")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train an LSTM with stability-gated early stopping")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (JSON)")
    p.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-output Fit, MSE and ISS verdict of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=data.SPLITS)
    p.add_argument("--out", required=True, help="report directory (fits.csv, summary.txt)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check-iss", help="print the per-layer stability certificate")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_check_iss)

    p = sub.add_parser("gradcheck", help="audit BPTT gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CheckpointError, ConfigError, CsvParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        name = exc.filename or ""
        print(f"error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
