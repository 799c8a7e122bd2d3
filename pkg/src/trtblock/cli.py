"""Command-line entry points.

``trtblock run <cfg>``
    Solve the configured problem and write a run directory.
``trtblock compare <runA> <runB>``
    Relative L2 differences of T and E at the saved steps both runs share.
``trtblock rates <run> <ref>``
    Average outer contraction rates of a run with stored iterates against a
    converged reference run.

Every command exits with status 0 on success, 1 when ``compare --tol`` is
exceeded and 2 with a message on stderr for any error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, bundled_configs, load_config, parse_config
from .diagnostics import (
    GridMismatchError, RateEstimationError, block_errors, rates_from_errors, relative_l2,
)
from .driver import ConvergenceFailure, run_problem
from .grid import ConfigurationError
from .output import (
    OutputError, field_path, read_fields, read_itercount, read_iterates, saved_steps,
    write_outputs, write_rates,
)

logger = logging.getLogger("trtblock")


class CommandError(RuntimeError):
    """A command could not complete; the message is shown to the user."""


def _reference_history(ref_dir: Path, steps, ncells: int):
    """``(E, T)`` arrays ``(len(steps), ncells)`` read from a reference run."""
    E, T = [], []
    for n in steps:
        path = field_path(ref_dir, int(n))
        if not path.exists():
            raise CommandError(f"reference {ref_dir} has no fields for step {n} "
                               "(it must save every step)")
        f = read_fields(path)
        if f["T"].size != ncells:
            raise GridMismatchError(f"reference has {f['T'].size} cells, run has {ncells}")
        E.append(f["E"])
        T.append(f["T"])
    return np.array(E), np.array(T)


def _reference_epsilon(ref_dir: Path):
    cfg = ref_dir / "run.cfg"
    if not cfg.exists():
        return None
    return parse_config(cfg.read_text(encoding="utf-8")).epsilon


def _noise_level(eps_run, ref_dir, override):
    if override is not None:
        return override
    eps_ref = _reference_epsilon(ref_dir)
    return 1e3 * max(eps_run, eps_ref if eps_ref is not None else eps_run)


def _errors_and_rates(blocks, ref_dir: Path, ncells: int, noise: float):
    """Per-block errors and ``(rho_E, rho_T)`` (``None`` when no iteration
    pair lies above the noise floor)."""
    errs = []
    for b, (steps, E_it, T_it) in blocks:
        E_ref, T_ref = _reference_history(ref_dir, steps, ncells)
        errs.append(block_errors(steps, E_it, T_it, E_ref, T_ref, block=b))
    try:
        rates = rates_from_errors(errs, noise)
    except RateEstimationError as exc:
        logger.warning("no rate estimate: %s", exc)
        rates = None
    return errs, rates


# ------------------------------------------------------------------ commands
def cmd_run(args) -> int:
    cfg = load_config(args.config)
    changes = {}
    if args.out is not None:
        changes["output_dir"] = Path(args.out)
    if args.block_len is not None:
        changes["block_len"] = args.block_len
    if args.epsilon is not None:
        changes.update(epsilon=args.epsilon, inner_epsilon=None)
    if args.reference is not None:
        changes["reference"] = Path(args.reference)
    if args.iterates:
        changes["iterates"] = True
    cfg = dataclasses.replace(cfg, **changes)

    problem = cfg.build_problem()
    partition = cfg.build_partition()
    criteria = cfg.build_criteria()
    ref_dir = cfg.reference
    if ref_dir is not None and not (ref_dir / "fields_0.csv").exists():
        raise CommandError(f"reference run directory {ref_dir} has no fields")

    print(f"{problem.mesh.nx}x{problem.mesh.ny} cells, {problem.groups.count} groups, "
          f"{problem.quad.count} directions, {partition.nsteps} steps in "
          f"{partition.nblocks} blocks of {partition.block_sizes[0]}")
    t0 = time.perf_counter()
    record = run_problem(problem, partition, criteria, store_iterates=True,
                         keep_block_intensities=False)
    elapsed = time.perf_counter() - t0

    errs = rates = None
    if ref_dir is not None:
        blocks = [(b.block, (b.steps, b.E_iterates, b.T_iterates)) for b in record.blocks]
        noise = _noise_level(cfg.epsilon, ref_dir, None)
        errs, rates = _errors_and_rates(blocks, ref_dir, problem.mesh.ncells, noise)

    text = cfg.source_text
    out = write_outputs(record, cfg.output_dir, config_text=text, errors=errs,
                        save_every=cfg.save_every, iterates=cfg.iterates, rates=rates)
    counts = record.iteration_counts
    print(f"outer iterations per block: mean {counts.mean():.2f}, max {counts.max()}; "
          f"{elapsed:.1f} s")
    if rates is not None:
        print(f"rho_E = {rates[0]:.4g}, rho_T = {rates[1]:.4g}")
    print(f"results written to {out}")
    return 0


def cmd_compare(args) -> int:
    a, b = Path(args.run_a), Path(args.run_b)
    for d in (a, b):
        if not d.is_dir():
            raise CommandError(f"run directory not found: {d}")
    common = sorted(set(saved_steps(a)) & set(saved_steps(b)))
    if not common:
        raise CommandError("the two runs share no saved step")
    worst_T = worst_E = 0.0
    last = None
    for n in common:
        fa, fb = read_fields(field_path(a, n)), read_fields(field_path(b, n))
        if fa["shape"] != fb["shape"]:
            raise GridMismatchError(f"meshes differ: {fa['shape']} vs {fb['shape']}")
        dT, dE = relative_l2(fa["T"], fb["T"]), relative_l2(fa["E"], fb["E"])
        worst_T, worst_E = max(worst_T, dT), max(worst_E, dE)
        last = (n, dT, dE)
    n, dT, dE = last
    print(f"{len(common)} common steps")
    print(f"step {n}: rel L2 T = {dT:.3e}, E = {dE:.3e}")
    print(f"max over steps: rel L2 T = {worst_T:.3e}, E = {worst_E:.3e}")
    if args.tol is not None and max(dT, dE) > args.tol:
        print(f"final-step difference exceeds tolerance {args.tol:g}", file=sys.stderr)
        return 1
    return 0


def cmd_rates(args) -> int:
    run, ref = Path(args.run), Path(args.ref)
    for d in (run, ref):
        if not d.is_dir():
            raise CommandError(f"run directory not found: {d}")
    iterates = read_iterates(run)
    counts = read_itercount(run / "itercount.csv")
    first = read_fields(field_path(run, 0))
    eps_run = parse_config((run / "run.cfg").read_text(encoding="utf-8")).epsilon \
        if (run / "run.cfg").exists() else None
    if eps_run is None and args.noise is None:
        raise CommandError(f"{run} has no run.cfg; pass --noise")
    noise = _noise_level(eps_run, ref, args.noise)
    blocks = [(b - 1, data) for b, data in iterates.items()]
    _, rates = _errors_and_rates(blocks, ref, first["T"].size, noise)
    if rates is None:
        raise CommandError("no outer iteration lies above the noise floor")
    n_b = int(counts[0, 1])
    write_rates(run / "rates.csv", [(n_b, *rates)])
    print(f"n_b = {n_b}: rho_E = {rates[0]:.6g}, rho_T = {rates[1]:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trtblock", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="log block progress (-v) or every outer iteration (-vv)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a configured problem")
    r.add_argument("config", help=f"configuration file or bundled name ({', '.join(bundled_configs())})")
    r.add_argument("--out", help="output directory (overrides [output] directory)")
    r.add_argument("--block-len", type=float, help="time block length in ns")
    r.add_argument("--epsilon", type=float, help="outer tolerance")
    r.add_argument("--reference", help="converged run directory for iterate errors and rates")
    r.add_argument("--iterates", action="store_true", help="also write iterates.npz")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="difference of two runs")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--tol", type=float, help="fail when the final-step difference exceeds this")
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("rates", help="outer contraction rates against a reference run")
    t.add_argument("run", help="run directory with iterates.npz")
    t.add_argument("ref", help="converged reference run directory")
    t.add_argument("--noise", type=float,
                   help="relative error floor below which iterations are ignored")
    t.set_defaults(func=cmd_rates)
    return p


_USER_ERRORS = (CommandError, ConfigError, ConfigurationError, OutputError, GridMismatchError,
                RateEstimationError, ConvergenceFailure, ValueError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"trtblock {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
