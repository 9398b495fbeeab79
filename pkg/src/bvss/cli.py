"""Command-line interface: ``bvss fit | simulate | benchmark``.

Settings come from an optional JSON config (``--config``) and are overridden
by command-line flags. Every output file carries the seed, a hash of the
resolved configuration and the package version, so a run can be repeated
exactly. Errors are reported on stderr as one line::

    error: code=<code> message=<text>
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import fit_lasso_cv, fit_ols, fit_qp
from .inference import counterfactual_path, diagnostics, effective_sample_size, summary_json
from .linalg import FactorizationError
from .model import Hyperparams
from .panel import PanelBoundsError, PanelData, PanelError, load_panel
from .sampler import SamplerError, run_chain
from .simgen import METHODS, DgpSpec, aggregate, generate, run_replicates, write_metrics_csv
from .simgen import summary_json as sim_summary_json

log = logging.getLogger("bvss")

EXIT_CODES = {"usage": 2, "config": 2, "io": 3, "parse": 3, "bounds": 3, "numerical": 4, "internal": 1}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Resolved settings for one command."""

    command: str
    data_path: str | None = None
    treatment_at: int | None = None
    output_dir: str = "."
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    n_iter: int = 1000
    n_burnin: int = 500
    seed: int = 0
    methods: tuple = ()
    dgp: DgpSpec | None = None
    n_rep: int = 100
    threads: int = 1
    level: float = 0.95

    def validate(self):
        if self.command in ("fit",) or (self.command == "benchmark" and self.dgp is None):
            if not self.data_path:
                raise CliError("config", f"{self.command} requires --data")
            if self.treatment_at is None:
                raise CliError("config", f"{self.command} requires --treatment-at")
        if self.command == "simulate" and self.dgp is None:
            raise CliError("config", "simulate requires a 'dgp' section in the config")
        if not self.n_iter > self.n_burnin >= 0:
            raise CliError("config", "need iters > burnin >= 0")
        if self.n_rep < 1:
            raise CliError("config", "n_rep must be at least 1")
        if self.threads < 1:
            raise CliError("config", "threads must be at least 1")
        if not 0 < self.level < 1:
            raise CliError("config", "level must lie in (0, 1)")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise CliError("config", f"unknown methods {bad}; choose from {list(METHODS)}")

    def canonical(self) -> dict:
        """Settings that determine the outputs (excludes paths and thread count)."""
        d = {
            "command": self.command,
            "treatment_at": self.treatment_at,
            "hyperparams": self.hyperparams.to_dict(),
            "n_iter": self.n_iter,
            "n_burnin": self.n_burnin,
            "seed": self.seed,
            "methods": list(self.methods),
            "level": self.level,
        }
        if self.dgp is not None:
            d["dgp"] = self.dgp.to_dict()
        if self.command == "simulate":
            d["n_rep"] = self.n_rep
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def metadata(self) -> dict:
        return {"seed": self.seed, "config_hash": self.config_hash(), "version": __version__}

    def header_lines(self) -> list:
        m = self.metadata()
        return [f"{k}={m[k]}" for k in ("seed", "config_hash", "version")]


_CONFIG_KEYS = {
    "data", "treatment_at", "out", "hyperparams", "iters", "burnin", "seed",
    "methods", "dgp", "n_rep", "threads", "level", "theta",
}


def _read_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError("io", f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError("config", f"invalid JSON in {path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise CliError("config", "config must be a JSON object")
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise CliError("config", f"unknown config keys: {sorted(unknown)}")
    return cfg


def resolve_config(args) -> RunConfig:
    """Merge the JSON config with command-line flags (flags win)."""
    cfg = _read_config(args.config) if args.config else {}

    def pick(flag, key, default=None):
        v = getattr(args, flag, None)
        return v if v is not None else cfg.get(key, default)

    try:
        hp = dict(cfg.get("hyperparams", {}))
        theta = pick("theta", "theta")
        if theta is not None:
            hp["theta"] = theta
        h = Hyperparams.from_dict(hp)
        dgp = DgpSpec.from_dict(cfg["dgp"]) if "dgp" in cfg else None
    except (TypeError, ValueError) as exc:
        raise CliError("config", str(exc)) from None
    methods = pick("methods", "methods")
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]
    if methods is None:
        methods = list(METHODS) if args.command == "simulate" else ["bvs_ss"]
    rc = RunConfig(
        command=args.command,
        data_path=pick("data", "data"),
        treatment_at=pick("treatment_at", "treatment_at"),
        output_dir=pick("out", "out", "."),
        hyperparams=h,
        n_iter=int(pick("iters", "iters", 1000)),
        n_burnin=int(pick("burnin", "burnin", 500)),
        seed=int(pick("seed", "seed", 0)),
        methods=tuple(methods),
        dgp=dgp,
        n_rep=int(pick("n_rep", "n_rep", 100)),
        threads=int(pick("threads", "threads", os.cpu_count() or 1)),
        level=float(pick("level", "level", 0.95)),
    )
    rc.validate()
    return rc


def _load(cfg: RunConfig) -> PanelData:
    try:
        return load_panel(cfg.data_path, cfg.treatment_at)
    except FileNotFoundError:
        raise CliError("io", f"data file not found: {cfg.data_path}") from None
    except OSError as exc:
        raise CliError("io", f"cannot read {cfg.data_path}: {exc.strerror}") from None
    except PanelBoundsError as exc:
        raise CliError("bounds", str(exc)) from None
    except PanelError as exc:
        raise CliError("parse", str(exc)) from None


def _outdir(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"cannot create output directory {p}: {exc.strerror}") from None
    return p


def _write_counterfactual(path, out, data, cfg):
    mean, lo, hi = counterfactual_path(out, data, cfg.level)
    Yobs = np.concatenate([data.Y, data.Ypost1])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in cfg.header_lines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "period", "observed", "counterfactual_mean", "lo", "hi"])
        for t, label in enumerate(data.time_labels):
            post = t >= data.M
            row = [label, "post" if post else "pre", repr(float(Yobs[t])), repr(float(mean[t]))]
            if post:
                k = t - data.M
                row += [repr(float(lo[k])), repr(float(hi[k]))]
            else:
                row += ["", ""]
            w.writerow(row)


def _baseline_results(data, methods, seed) -> dict:
    res = {}
    for m in methods:
        if m == "lasso":
            fit = fit_lasso_cv(data, seed=seed)
        elif m == "ols":
            fit = fit_ols(data)
        elif m == "qp":
            fit = fit_qp(data)
        elif m in ("oracle_ols", "oracle_qp"):
            log.warning("%s needs the true model and is skipped for observed data", m)
            continue
        else:
            continue
        res[m] = fit.to_dict()
    return res


def cmd_fit(cfg: RunConfig) -> int:
    data = _load(cfg)
    outdir = _outdir(cfg)
    log.info("fitting N=%d M=%d M_post=%d", data.N, data.M, data.M_post)
    out = run_chain(data, cfg.hyperparams, cfg.n_iter, cfg.n_burnin, cfg.seed)
    meta = {
        **cfg.metadata(),
        "hyperparams": cfg.hyperparams.to_dict(),
        "sampler": out.meta,
        "panel": {"N": data.N, "M": data.M, "M_post": data.M_post},
    }
    text = summary_json(out, data, cfg.level, True, meta)
    baselines = _baseline_results(data, [m for m in cfg.methods if m != "bvs_ss"], cfg.seed)
    if baselines:
        d = json.loads(text)
        d["baselines"] = baselines
        text = json.dumps(d, indent=2, sort_keys=True)
    out.write_trace(outdir / "trace.csv", data.unit_names, cfg.header_lines())
    (outdir / "summary.json").write_text(text + "\n", encoding="utf-8")
    _write_counterfactual(outdir / "counterfactual.csv", out, data, cfg)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    outdir = _outdir(cfg)
    spec = cfg.dgp
    results = run_replicates(
        spec, cfg.methods, cfg.n_rep, cfg.seed, cfg.hyperparams,
        cfg.n_iter, cfg.n_burnin, n_workers=cfg.threads,
    )
    summary = aggregate(results, cfg.methods)
    write_metrics_csv(results, summary, outdir / "metrics.csv", cfg.header_lines())
    meta = {**cfg.metadata(), "hyperparams": cfg.hyperparams.to_dict(), "factor_init": "zero states, no burn-in"}
    (outdir / "summary.json").write_text(sim_summary_json(spec, summary, meta) + "\n", encoding="utf-8")
    return 0


def cmd_benchmark(cfg: RunConfig) -> int:
    """Time one chain; timing rows are wall-clock and vary between runs."""
    if cfg.dgp is not None and not cfg.data_path:
        data, _ = generate(cfg.dgp)
    else:
        data = _load(cfg)
    outdir = _outdir(cfg)
    t0 = time.perf_counter()
    out = run_chain(data, cfg.hyperparams, cfg.n_iter, cfg.n_burnin, cfg.seed)
    elapsed = time.perf_counter() - t0
    diag = diagnostics(out)
    rows = [
        ("n_iter", cfg.n_iter),
        ("pair_updates", out.meta["pair_updates"]),
        ("ess_tau", diag["tau"]["ess"]),
        ("ess_phi", diag["phi"]["ess"]),
        ("acceptance_rate_tau", out.acceptance_rate_tau),
        ("wall_seconds", elapsed),
        ("iterations_per_sec", cfg.n_iter / elapsed),
        ("pair_updates_per_sec", out.meta["pair_updates"] / elapsed),
        ("ess_per_sec_tau", diag["tau"]["ess"] / elapsed),
        ("ess_per_sec_phi", diag["phi"]["ess"] / elapsed),
    ]
    with open(outdir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        for line in cfg.header_lines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "metric", "value", "replicate"])
        for k, v in rows:
            w.writerow(["bvs_ss", k, repr(float(v)) if isinstance(v, float) else v, "all"])
    for k, v in rows:
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "benchmark": cmd_benchmark}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bvss",
        description="Bayesian synthetic control with a soft simplex spike-and-slab prior.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "fit the model to a panel CSV",
        "simulate": "run simulation replicates",
        "benchmark": "time the sampler",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--data", help="panel CSV (time, treated, controls...)")
        p.add_argument("--treatment-at", dest="treatment_at", type=int,
                       help="number of pre-treatment rows")
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--seed", type=int)
        p.add_argument("--iters", type=int, help="total iterations (default 1000)")
        p.add_argument("--burnin", type=int, help="burn-in iterations (default 500)")
        p.add_argument("--theta", type=float, help="prior inclusion probability")
        p.add_argument("--threads", type=int, help="worker processes for replicates")
        p.add_argument("--methods", help="comma-separated: " + ",".join(METHODS))
        if name == "simulate":
            p.add_argument("--n-rep", dest="n_rep", type=int, help="replicates (default 100)")
    return parser


def _setup_logging():
    level = os.environ.get("BVSS_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _fail(code: str, message: str) -> int:
    msg = " ".join(str(message).split())
    print(f"error: code={code} message={msg}", file=sys.stderr)
    return EXIT_CODES.get(code, 1)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except CliError as exc:
        return _fail(exc.code, str(exc))
    except (FactorizationError, SamplerError) as exc:
        return _fail("numerical", str(exc))
    except OSError as exc:
        return _fail("io", f"{exc.filename or ''}: {exc.strerror or exc}")


if __name__ == "__main__":
    sys.exit(main())
