"""Command-line harness: ``bounce run``, ``bounce analyze`` and ``bounce prob``.

Configuration for ``run`` comes from flags or a JSON file (``--config``) whose
keys are the long flag names with dashes replaced by underscores; flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis
from .benchmarks import UnknownBenchmark, get_benchmark, random_search_baseline
from .benchmarks.maxsat import WcnfError
from .optimizer import Bounce, BounceConfig, RunRecord

CSV_HEADER = ("seed", "eval", "batch", "stage_dim", "value", "best_value", "L_cont", "L_comb", "restarts")
LONG_RUN_BENCHMARKS = ("labs", "clusterexpansion")


@dataclass
class RunConfig:
    benchmark: str = "labs"
    method: str = "bounce"
    randomize: int | None = None
    instance_seed: int = 0
    evals: int | None = None
    batch: int = 1
    m_d: int | None = None
    d_init: int = 2
    b: int = 1
    n_init: int = 5
    seeds: list[int] = field(default_factory=lambda: list(range(50)))
    low_sequency: bool = False
    legacy_tr: bool = False
    output: str = "trace.csv"
    wcnf: str | None = None
    jobs: int = 1

    def resolved(self) -> "RunConfig":
        """Fill in benchmark- and batch-dependent defaults and validate."""
        evals = self.evals
        if evals is None:
            evals = 500 if self.benchmark.lower() in LONG_RUN_BENCHMARKS else 200
        m_d = self.m_d if self.m_d is not None else (100 if self.batch <= 5 else 25 * self.batch)
        cfg = RunConfig(**{**asdict(self), "evals": evals, "m_d": m_d})
        if cfg.batch < 1:
            raise ValueError("batch must be >= 1")
        if cfg.d_init < 1:
            raise ValueError("d_init must be >= 1")
        if cfg.evals < cfg.n_init:
            raise ValueError(f"evals ({cfg.evals}) must be at least n_init ({cfg.n_init})")
        if cfg.method not in ("bounce", "random"):
            raise ValueError(f"unknown method {cfg.method!r}")
        return cfg


def batch_study_defaults(B: int) -> dict:
    """Evaluation budget and budget-to-D used for a batch-size study."""
    return {"batch": B, "evals": min(2000, 200 * B), "m_d": 100 if B <= 5 else 25 * B}


def run_seed(cfg: RunConfig, seed: int) -> list[RunRecord]:
    bench = get_benchmark(cfg.benchmark, cfg.wcnf, cfg.instance_seed, cfg.randomize)
    if cfg.method == "random":
        return random_search_baseline(bench, cfg.evals, seed)
    opt_cfg = BounceConfig(d_init=cfg.d_init, b=cfg.b, m_D=cfg.m_d, n_init=cfg.n_init, batch_size=cfg.batch,
                           low_sequency=cfg.low_sequency, legacy_tr=cfg.legacy_tr)
    return Bounce(bench.space, opt_cfg, seed=seed).run(bench, cfg.evals)


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_records(records: Sequence[RunRecord], handle) -> None:
    writer = csv.writer(handle, lineterminator="\r\n")
    for r in records:
        writer.writerow([r.seed, r.eval, r.batch, r.stage_dim, _fmt(r.value), _fmt(r.best_value),
                         _fmt(r.L_cont), _fmt(r.L_comb), r.restarts])


def run(cfg: RunConfig) -> Path:
    """Run every seed and write one CSV trace, rows ordered by seed then eval."""
    cfg = cfg.resolved()
    get_benchmark(cfg.benchmark, cfg.wcnf, cfg.instance_seed, cfg.randomize)  # fail fast
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [run_seed(cfg, s) for s in cfg.seeds]
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\r\n").writerow(CSV_HEADER)
        for records in results:
            write_records(records, fh)
    return out


def read_trace(path: str | Path) -> dict[int, list[tuple[int, float]]]:
    """Per-seed lists of (eval, best_value) from a trace file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        traces: dict[int, list[tuple[int, float]]] = {}
        for row in reader:
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}: row with {len(row)} fields")
            traces.setdefault(int(row[0]), []).append((int(row[1]), float(row[5])))
    for seed, rows in traces.items():
        best = [b for _, b in sorted(rows)]
        if any(b2 > b1 for b1, b2 in zip(best, best[1:])):
            raise ValueError(f"{path}: best_value increases for seed {seed}")
    return traces


def summarize(paths: Sequence[str | Path]) -> list[tuple[int, int, float, float]]:
    """Mean best value and its standard error per evaluation index."""
    curves = []
    for p in paths:
        for _, rows in sorted(read_trace(p).items()):
            curves.append(dict(rows))
    if not curves:
        raise ValueError("no traces to summarize")
    evals = sorted(set().union(*curves))
    out = []
    for e in evals:
        vals = np.array([c[e] for c in curves if e in c])
        sem = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append((e, len(vals), float(vals.mean()), sem))
    return out


def format_summary(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(("eval", "n", "mean_best", "sem_best"))
    for e, n, mean, sem in rows:
        writer.writerow((e, n, _fmt(mean), _fmt(sem)))
    return buf.getvalue()


# -- argument parsing ----------------------------------------------------------


def parse_seeds(text: str) -> list[int]:
    """``"0-49"``, ``"1,3,5"`` or a mix such as ``"0-4,10"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in {text!r}")
    return seeds


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bounce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an optimization study and write a CSV trace")
    S = argparse.SUPPRESS
    r.add_argument("--config", help="JSON file with run settings (flags override it)")
    r.add_argument("--benchmark", default=S)
    r.add_argument("--method", choices=("bounce", "random"), default=S)
    r.add_argument("--randomize", type=int, default=S, metavar="SEED", help="relocate the optimum with this seed")
    r.add_argument("--instance-seed", type=int, default=S)
    r.add_argument("--evals", type=int, default=S)
    r.add_argument("--batch", type=int, default=S)
    r.add_argument("--m-d", type=int, default=S, help="evaluations until the input dimension is reached")
    r.add_argument("--d-init", type=int, default=S)
    r.add_argument("--b", type=int, default=S, help="bins added per split")
    r.add_argument("--n-init", type=int, default=S)
    r.add_argument("--seeds", type=parse_seeds, default=S, help="e.g. 0-49 or 1,2,3")
    r.add_argument("--seed", type=int, default=S, help="single seed (shorthand for --seeds N)")
    r.add_argument("--low-sequency", action="store_true", default=S)
    r.add_argument("--legacy-tr", action="store_true", default=S)
    r.add_argument("--output", default=S)
    r.add_argument("--wcnf", default=S, help="WCNF file for MaxSAT benchmarks")
    r.add_argument("--jobs", type=int, default=S, help="seeds run in parallel processes")

    a = sub.add_parser("analyze", help="mean best-value curve with standard errors")
    a.add_argument("traces", nargs="+")
    a.add_argument("--output", help="summary CSV path (default: stdout)")

    p = sub.add_parser("prob", help="dictionary-embedding probability calculators")
    psub = p.add_subparsers(dest="calc", required=True)
    z = psub.add_parser("zero-sequency")
    z.add_argument("--d", type=int, required=True)
    z.add_argument("--m", type=int, required=True)
    c = psub.add_parser("all-category")
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--m", type=int, required=True)
    c.add_argument("--tau", type=int, required=True)
    c.add_argument("--specific", action="store_true", help="count only one given label")
    h = psub.add_parser("bias-hist")
    h.add_argument("--d", type=int, required=True)
    h.add_argument("--tau", type=int, required=True)
    h.add_argument("--trials", type=int, default=1_000_000)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--unbiased", action="store_true")
    h.add_argument("--output")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    settings: dict = {}
    if getattr(ns, "config", None):
        settings.update(json.loads(Path(ns.config).read_text()))
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    if "seed" in flags:
        flags["seeds"] = [flags.pop("seed")]
    settings.update(flags)
    if "seeds" in settings and isinstance(settings["seeds"], str):
        settings["seeds"] = parse_seeds(settings["seeds"])
    known = {f.name for f in fields(RunConfig)}
    unknown = set(settings) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return RunConfig(**settings)


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "run":
            path = run(config_from_args(ns))
            print(path)
        elif ns.command == "analyze":
            text = format_summary(summarize(ns.traces))
            if ns.output:
                Path(ns.output).write_text(text, newline="")
            else:
                sys.stdout.write(text)
        elif ns.calc == "zero-sequency":
            print(format(analysis.p_zero_sequency(ns.d, ns.m), ".17g"))
        elif ns.calc == "all-category":
            print(format(analysis.p_all_one_category(ns.d, ns.m, ns.tau, ns.specific), ".17g"))
        else:
            hist = analysis.rounding_bias_histogram(ns.d, ns.tau, ns.trials, ns.seed, ns.unbiased)
            if ns.output:
                Path(ns.output).write_text(hist.to_csv())
            else:
                sys.stdout.write(hist.to_csv())
    except (ValueError, OSError, UnknownBenchmark, WcnfError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"bounce: error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
