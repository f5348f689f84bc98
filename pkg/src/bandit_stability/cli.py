"""Command-line entry point: ``bandit-stability <subcommand>``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from . import config as C
from .batched import sample_limit_Y
from .concentration import bound_table
from .diagnostics import (
    ks_normality,
    ks_two_sample,
    run_ensemble,
    stability_report,
    standardized_errors,
    wald_coverage,
    witness_probability,
)
from .env import (
    RNG_ALGORITHM,
    ROLE_CONCENTRATION,
    ROLE_LIMIT,
    ConfigurationError,
    derive_stream,
)

log = logging.getLogger("bandit_stability")

SEED_ENV = "BANDIT_STABILITY_SEED"
MANIFEST = "manifest.json"
SUMMARY = "summary.json"
REFERENCE_POLICIES = (
    "ucb1", "moss", "anytime_moss", "vanilla_moss", "oc_ucb", "ada_ucb",
    "kl_moss", "kl_ucb_pp", "kl_ucb_switch", "anytime_kl_ucb_switch",
)
# which CSV files each ensemble subcommand emits
OUTPUTS = {
    "run": ("histogram", "stability", "coverage", "witness"),
    "stability": ("histogram", "stability"),
    "coverage": ("coverage",),
    "reproduce-paper": ("histogram", "stability", "coverage", "witness"),
}


class OutputExistsError(RuntimeError):
    pass


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path: Path, rows: list[dict], columns: list[str] | None = None) -> None:
    rows = list(rows)
    columns = columns or list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(C.jsonable(obj), indent=2, sort_keys=True) + "\n")


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _prepare(dest: Path, force: bool) -> None:
    if dest.exists() and any(dest.iterdir()):
        if not force:
            raise OutputExistsError(f"{dest} already holds results; pass --force to overwrite")
        for p in dest.iterdir():
            if p.is_file():
                p.unlink()
    dest.mkdir(parents=True, exist_ok=True)


def _simulate(exp: C.Experiment, workers: int):
    t0 = time.perf_counter()
    ens = run_ensemble(exp.config, workers)
    log.info("%s: %d replications in %.1fs", exp.policy_name, exp.config.replications,
             time.perf_counter() - t0)
    return ens


def _ensemble_outputs(exp: C.Experiment, dest: Path, which, workers: int, ens=None) -> dict:
    cfg = exp.config
    if ens is None:
        ens = _simulate(exp, workers)
    summary: dict = {"policy": exp.policy_name, "T": cfg.T, "K": cfg.K, "R": cfg.replications,
                     "mean_total_pulls": float(ens.pulls.sum(axis=1).mean()),
                     "mean_regret": float(ens.regret.mean())}
    if "histogram" in which or "stability" in which:
        rep = stability_report(ens, cfg.deltas, cfg.bins)
        write_csv(dest / "histogram.csv", list(rep.histogram_rows()))
        write_csv(dest / "stability.csv", list(rep.rows()))
        summary["band_probability"] = {f"{d:g}": float(rep.band_probability[0, i])
                                       for i, d in enumerate(rep.deltas)}
    if "coverage" in which:
        covs = [wald_coverage(ens, a, cfg.level, variance_mode=cfg.variance_mode) for a in range(cfg.K)]
        write_csv(dest / "coverage.csv", [c.row() for c in covs])
        summary["coverage"] = [c.coverage for c in covs]
        z = standardized_errors(ens, 0)
        if z.size >= 100:
            ks = ks_normality(z)
            summary["ks_normality_arm1"] = {"statistic": ks.statistic, "pvalue": ks.pvalue}
    if "witness" in which:
        w = witness_probability(ens)
        write_csv(dest / "witness.csv", [w.row()])
        summary["witness_probability"] = w.probability
        summary["tail_event_probability"] = w.tail_event_probability
    if "p2" in ens.extra:
        summary["mean_p2"] = float(ens.extra["p2"].mean())
        summary["assignment_redraws"] = int(ens.extra["redraws"].sum())
    return summary


def _batched_outputs(exp: C.Experiment, dest: Path, workers: int) -> dict:
    ens = _simulate(exp, workers)
    summary = _ensemble_outputs(exp, dest, ("histogram", "stability", "coverage"), workers, ens)
    errs = standardized_errors(ens, 0)
    limit = exp.config.policy.limit
    draws = sample_limit_Y(limit, derive_stream(exp.seed, 0, ROLE_LIMIT), size=exp.limit_samples)
    ks = ks_two_sample(errs, draws)
    write_csv(dest / "limit.csv", [{
        "kind": limit.kind, "n_errors": errs.size, "n_limit": draws.size,
        "ks_statistic": ks.statistic, "ks_pvalue": ks.pvalue,
        "errors_mean": float(errs.mean()), "errors_var": float(errs.var()),
        "limit_mean": float(draws.mean()), "limit_var": float(draws.var()),
    }])
    summary["limit_ks"] = {"statistic": ks.statistic, "pvalue": ks.pvalue}
    return summary


def _concentration_outputs(exp: C.Experiment, dest: Path, workers: int) -> dict:
    spec = exp.config
    rows = bound_table(spec, exp.lambdas, exp.replications,
                       derive_stream(exp.seed, 0, ROLE_CONCENTRATION), workers)
    write_csv(dest / "bounds.csv", rows)
    return {"window": [spec.lo, spec.hi], "N": spec.N, "R": exp.replications,
            "dominated": all(r["mc_estimate"] <= r["gaussian_bound"] + 3 * r["mc_se"] for r in rows)}


def execute(exp: C.Experiment, command: str, out: Path, workers: int, force: bool) -> Path:
    """Run one experiment and write its outputs and manifest under ``out/<name>/<policy>``."""
    dest = out / exp.name / exp.policy_name
    _prepare(dest, force)
    started = datetime.now(timezone.utc).isoformat()
    if exp.kind == C.CONCENTRATION:
        summary = _concentration_outputs(exp, dest, workers)
    elif exp.kind == C.BATCHED:
        summary = _batched_outputs(exp, dest, workers)
    else:
        summary = _ensemble_outputs(exp, dest, OUTPUTS.get(command, OUTPUTS["run"]), workers)
    write_json(dest / SUMMARY, summary)
    files = sorted(p.name for p in dest.iterdir() if p.name != MANIFEST)
    write_json(dest / MANIFEST, {
        "command": command,
        "config": exp.echo,
        "base_seed": exp.seed,
        "rng_algorithm": RNG_ALGORITHM,
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "workers": workers,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": {f: sha256(dest / f) for f in files},
    })
    log.info("wrote %s", dest)
    return dest


def _load(args) -> tuple[C.Experiment, str | None, dict | None]:
    """Experiment from --config (YAML file or a previous manifest) plus seed overrides."""
    path = Path(args.config)
    manifest = None
    command = None
    if path.suffix == ".json":
        try:
            manifest = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"config: cannot read manifest {path}: {exc}") from None
        exp = C.from_mapping(manifest["config"])
        command = manifest["command"]
    else:
        exp = C.parse_config(path)
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV) and manifest is None:
        seed = os.environ[SEED_ENV]
    if seed is not None:
        try:
            exp = exp.with_seed(int(seed))
        except ValueError:
            raise ConfigurationError(f"seed: expected an unsigned 64-bit integer, got {seed!r}") from None
    return exp, command, manifest


def verify(manifest: dict, dest: Path) -> list[str]:
    """Names of recorded outputs whose checksum differs in ``dest``."""
    bad = []
    for name, digest in manifest["outputs"].items():
        p = dest / name
        if name == SUMMARY and not p.exists():
            bad.append(name)
        elif not p.exists() or sha256(p) != digest:
            bad.append(name)
    return bad


def cmd_run(args, command: str = "run") -> int:
    exp, recorded, manifest = _load(args)
    if recorded is not None:
        command = recorded
    dest = execute(exp, command, Path(args.out), args.workers, args.force)
    if manifest is not None:
        bad = verify(manifest, dest)
        if bad:
            log.error("outputs differ from manifest: %s", ", ".join(bad))
            return 2
        log.info("all %d outputs match the manifest", len(manifest["outputs"]))
    return 0


def cmd_reproduce_paper(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, 0))
    t0 = time.perf_counter()
    for p in REFERENCE_POLICIES:
        execute(C.reference_grid(p, seed).with_seed(seed), "reproduce-paper", Path(args.out), args.workers, args.force)
    log.info("reproduce-paper finished in %.1fs", time.perf_counter() - t0)
    return 0


def cmd_report(args) -> int:
    root = Path(args.dir)
    rows = []
    for s in sorted(root.glob("**/" + SUMMARY)):
        doc = json.loads(s.read_text())
        rel = s.parent.relative_to(root)
        row = {"experiment": str(rel.parent) if str(rel.parent) != "." else "", "policy": rel.name}
        for k, v in sorted(doc.items()):
            if isinstance(v, dict):
                for kk, vv in v.items():
                    row[f"{k}_{kk}"] = vv
            elif isinstance(v, list):
                for i, vv in enumerate(v):
                    row[f"{k}_{i + 1}"] = vv
            else:
                row[k] = v
        rows.append(row)
    if not rows:
        raise ConfigurationError(f"dir: no {SUMMARY} files under {root}")
    cols = []
    for r in rows:
        cols += [c for c in r if c not in cols]
    out = Path(args.output) if args.output else root / "report.csv"
    write_csv(out, [{c: r.get(c, "") for c in cols} for r in rows], cols)
    log.info("merged %d summaries into %s", len(rows), out)
    return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandit-stability",
        description="Simulate optimism-based bandit policies and measure the stability of their pull counts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only report errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="YAML experiment file or a manifest.json to rerun")
        p.add_argument("--seed", type=int, default=None,
                       help=f"base seed (overrides the config and ${SEED_ENV})")
        p.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1)
        p.add_argument("--out", default="out", help="output root (default: ./out)")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    for name, text in [
        ("run", "run the full pipeline for one experiment"),
        ("stability", "pull-count histogram and stability bands only"),
        ("coverage", "Wald coverage only"),
        ("batched", "batched policy and limit-law comparison"),
        ("concentration", "maximal-inequality bound table"),
    ]:
        common(sub.add_parser(name, help=text))
    common(sub.add_parser("reproduce-paper", help="two identical N(0,1) arms, T=10000, R=5000, all 10 policies"),
           needs_config=False)
    rp = sub.add_parser("report", help="merge every summary.json under DIR into one CSV")
    rp.add_argument("dir")
    rp.add_argument("--output", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "reproduce-paper":
            return cmd_reproduce_paper(args)
        if args.command == "report":
            return cmd_report(args)
        exp_kind = {"batched": C.BATCHED, "concentration": C.CONCENTRATION}.get(args.command)
        if exp_kind is not None and not str(args.config).endswith(".json"):
            kind = C.parse_config(args.config).kind
            if kind != exp_kind:
                raise ConfigurationError(f"policy: {args.command} needs a {exp_kind} config, got {kind}")
        return cmd_run(args, args.command)
    except (ConfigurationError, OutputExistsError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
