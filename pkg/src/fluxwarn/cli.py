"""fluxwarn command line: generate, train, thresholds, alarm, evaluate, correlate.

Every command writes its outputs through temporary files that are renamed
into place only after all of them succeed, followed by a JSON run manifest.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .alarm import read_thresholds, thresholds_for_matrix, write_thresholds
from .correlation import (
    daily_correlation,
    lag_scan,
    read_hourly_csv,
    rebin_to_hourly,
    write_daily_csv,
    write_hourly_csv,
    write_lag_csv,
)
from .data import (
    MATRIX_MAGIC,
    fit_norm,
    impute,
    load_matrix,
    make_windows,
    parse_timestamp,
    save_matrix_csv,
    write_matrix,
)
from .errors import FluxwarnError
from .forecast import TrainConfig, load_model, train, write_model
from .synthetic import CitySpec, generate_pollution, generate_traffic
from .workflow import alarm_table, read_table, score_table, write_table

log = logging.getLogger("fluxwarn")


class Outputs:
    """Stage output files and publish them together, plus a manifest."""

    def __init__(self, manifest_path: Path, command: str, args: argparse.Namespace):
        self.manifest_path = Path(manifest_path)
        self.command = command
        self.args = args
        self.staged: list[tuple[Path, Path]] = []
        self.t0 = getattr(args, "_started", time.perf_counter())

    def open(self, path, mode="w"):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        os.close(fd)
        os.chmod(tmp, 0o644)
        self.staged.append((Path(tmp), path))
        return open(tmp, mode, encoding="utf-8", newline="")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for tmp, _ in self.staged:
                tmp.unlink(missing_ok=True)
            return False
        for tmp, final in self.staged:
            os.replace(tmp, final)
        self._write_manifest()
        return False

    def _write_manifest(self):
        config = {k: (str(v) if isinstance(v, Path) else v)
                  for k, v in vars(self.args).items() if k != "func" and not k.startswith("_")}
        doc = {
            "command": self.command,
            "config": config,
            "inputs": [str(p) for p in _input_paths(self.args)],
            "outputs": [str(final) for _, final in self.staged],
            "seed": getattr(self.args, "seed", None),
            "tool_version": __version__,
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "finished_at": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        }
        self.manifest_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{self.manifest_path.name}.", dir=self.manifest_path.parent)
        os.chmod(tmp, 0o644)
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, default=str)
            fh.write("\n")
        os.replace(tmp, self.manifest_path)


def _input_paths(args):
    keys = ["data", "thresholds", "table"]
    if args.command == "correlate":
        keys.append("pollution")
    out = [getattr(args, k) for k in keys if getattr(args, k, None)]
    out.extend(getattr(args, "model", None) or [])
    return out


def _manifest_for(path) -> Path:
    path = Path(path)
    if path.suffix == "" and (path.is_dir() or not path.exists()):
        return path / "manifest.json"
    return path.with_name(path.name + ".manifest.json")


def _when(text):
    return parse_timestamp(text) if text else None


def _load(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    return load_matrix(path)


# commands

def cmd_generate(args):
    spec = CitySpec(n_segments=args.segments, n_weeks=args.weeks, seed=args.seed,
                    weekend_factor=args.weekend_factor, noise=args.noise, skewness=args.skewness)
    matrix = generate_traffic(spec)
    out = Path(args.out)
    with Outputs(_manifest_for(out), "generate", args) as outputs:
        with outputs.open(out) as fh:
            if out.suffix == "." + MATRIX_MAGIC:
                write_matrix(matrix, fh)
            else:
                save_matrix_csv(matrix, fh)
        if args.pollution:
            hourly = rebin_to_hourly(matrix, args.pollution_segment or matrix.segments[0])
            pol = generate_pollution(hourly, args.background, args.coupling, args.pollution_noise,
                                     args.seed if args.pollution_seed is None else args.pollution_seed)
            with outputs.open(args.pollution) as fh:
                write_hourly_csv(pol, fh)
    log.info("wrote %d x %d matrix to %s", matrix.n_times, matrix.n_segments, out)


def _train_one(matrix, target, args):
    windows = make_windows(matrix, target, args.lookback, args.horizon)
    config = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
                         validation_split=args.val_split, hidden_size=args.hidden, seed=args.seed)
    return train(windows, config, norm=fit_norm(matrix))


def _history_csv(model, fh):
    fh.write("epoch,train_loss,val_loss\n")
    for e, tr, va in model.training_history:
        fh.write(f"{e},{tr!r},{va!r}\n")


def cmd_train(args):
    matrix = impute(_load(args.data))
    if args.until:
        matrix = matrix.until(parse_timestamp(args.until))
    targets = args.target
    for t in targets:
        matrix.column(t)
    out = Path(args.out)
    if len(targets) == 1:
        paths = {targets[0]: out}
        manifest = _manifest_for(out)
    else:
        paths = {t: out / f"{t}.fluxmodel" for t in targets}
        manifest = out / "manifest.json"

    workers = min(args.parallel_targets, len(targets), _thread_cap())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(_train_one, [matrix] * len(targets), targets, [args] * len(targets)))
    else:
        models = [_train_one(matrix, t, args) for t in targets]

    with Outputs(manifest, "train", args) as outputs:
        for t, model in zip(targets, models):
            with outputs.open(paths[t]) as fh:
                write_model(model, fh)
            with outputs.open(paths[t].with_name(paths[t].name + ".history.csv")) as fh:
                _history_csv(model, fh)
            last = model.training_history[-1]
            log.info("%s: epoch %d train %.5f val %.5f", t, *last)


def _thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("FLUXWARN_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def cmd_thresholds(args):
    matrix = _load(args.data)
    ths = thresholds_for_matrix(matrix, parse_timestamp(args.as_of), since=_when(args.since))
    with Outputs(_manifest_for(args.out), "thresholds", args) as outputs:
        with outputs.open(args.out) as fh:
            write_thresholds(list(ths.values()), fh)


def cmd_alarm(args):
    matrix = impute(_load(args.data))
    with open(args.thresholds, encoding="utf-8") as fh:
        ths = read_thresholds(fh)
    models = [load_model(p) for p in args.model]
    rows = alarm_table(models, matrix, ths, _when(args.start), _when(args.end))
    with Outputs(_manifest_for(args.out), "alarm", args) as outputs:
        with outputs.open(args.out) as fh:
            write_table(rows, fh)
    log.info("wrote %d alarm rows to %s", len(rows), args.out)


def cmd_evaluate(args):
    with open(args.table, encoding="utf-8") as fh:
        rows = read_table(fh)
    cm = score_table(rows, daytime_only=args.daytime_only)
    text = cm.to_json()
    if args.out:
        with Outputs(_manifest_for(args.out), "evaluate", args) as outputs:
            with outputs.open(args.out) as fh:
                fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_correlate(args):
    matrix = impute(_load(args.data))
    traffic = rebin_to_hourly(matrix, args.segment)
    with open(args.pollution, encoding="utf-8") as fh:
        pollution = read_hourly_csv(fh)
    if pollution.start != traffic.start:
        raise FluxwarnError("traffic and pollution series must start at the same hour")
    n = min(len(traffic), len(pollution))
    traffic = type(traffic)(traffic.start, traffic.values[:n])
    pollution = type(pollution)(pollution.start, pollution.values[:n])
    scan = lag_scan(traffic, pollution, args.max_lag)
    out = Path(args.out)
    with Outputs(out / "manifest.json", "correlate", args) as outputs:
        with outputs.open(out / "lag.csv") as fh:
            write_lag_csv(scan, fh)
        if n % 24 == 0 and traffic.start.hour == 0:
            with outputs.open(out / "daily.csv") as fh:
                write_daily_csv(daily_correlation(traffic, pollution), fh)
        else:
            log.warning("series do not cover whole days; daily.csv skipped")
    log.info("best lag %d h, rho %.4f", scan.best_lag, scan.at(scan.best_lag))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fluxwarn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"fluxwarn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic city traffic file")
    g.add_argument("--segments", type=int, default=24)
    g.add_argument("--weeks", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--weekend-factor", type=float, default=0.6)
    g.add_argument("--skewness", type=float, default=2.0)
    g.add_argument("--out", required=True, help="CSV, or .fluxmatrix for the columnar format")
    g.add_argument("--pollution", help="also write an hourly pollution CSV here")
    g.add_argument("--pollution-segment")
    g.add_argument("--background", type=float, default=20.0)
    g.add_argument("--coupling", type=float, default=0.1)
    g.add_argument("--pollution-noise", type=float, default=15.0)
    g.add_argument("--pollution-seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train per-segment forecast models")
    t.add_argument("--data", required=True)
    t.add_argument("--target", required=True, action="append")
    t.add_argument("--out", required=True, help="model file; a directory when several targets")
    t.add_argument("--until", help="use rows strictly before this timestamp")
    t.add_argument("--lookback", type=int, default=6)
    t.add_argument("--horizon", type=int, default=3)
    t.add_argument("--lr", type=float, default=1e-5)
    t.add_argument("--epochs", type=int, default=11000)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--val-split", type=float, default=0.10)
    t.add_argument("--hidden", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--parallel-targets", type=int, default=1)
    t.set_defaults(func=cmd_train)

    th = sub.add_parser("thresholds", help="per-segment daytime p50/p75 thresholds")
    th.add_argument("--data", required=True)
    th.add_argument("--as-of", required=True)
    th.add_argument("--since", help="default: January 1st of the as-of year")
    th.add_argument("--out", required=True)
    th.set_defaults(func=cmd_thresholds)

    a = sub.add_parser("alarm", help="true vs forecast alarm level table")
    a.add_argument("--model", required=True, action="append")
    a.add_argument("--data", required=True)
    a.add_argument("--thresholds", required=True)
    a.add_argument("--start")
    a.add_argument("--end")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_alarm)

    e = sub.add_parser("evaluate", help="confusion matrix JSON from a level table")
    e.add_argument("--table", required=True)
    e.add_argument("--daytime-only", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("correlate", help="lag scan and daily correlation against pollution")
    c.add_argument("--data", required=True)
    c.add_argument("--segment", required=True)
    c.add_argument("--pollution", required=True)
    c.add_argument("--max-lag", type=int, default=24)
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_correlate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args._started = time.perf_counter()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (FluxwarnError, OSError, ValueError, KeyError) as exc:
        print(f"fluxwarn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
