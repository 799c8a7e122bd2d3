"""Run directories: CSV results in round-trip precision plus an optional
binary dump of the outer iterates.

Layout of a run directory::

    run.cfg          copy of the configuration text
    fields_<n>.csv   cell, i, j, T, E, E_1 ... E_G at saved step n
    itercount.csv    block, steps, outer_iterations
    conv.csv         block, j, n, xi_E, xi_T, err_E, err_T
    rates.csv        n_b, rho_E, rho_T          (when a reference is known)
    iterates.npz     E_<b>, T_<b>, steps_<b>    (optional)

``xi`` is empty for the zeroth iterate and the ``err`` columns are empty
without a reference.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


class OutputError(OSError):
    """A run directory could not be written or read."""


def _fmt(x) -> str:
    """Shortest text that reads back to the same double."""
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def _num(text: str) -> float:
    return float("nan") if text == "" else float(text)


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _read_csv(path: Path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise OutputError(f"{path} is empty")
    return rows[0], rows[1:]


def field_path(run_dir, n: int) -> Path:
    return Path(run_dir) / f"fields_{n}.csv"


def write_fields(path, shape, T, E, Eg):
    """One row per cell (C order) with ``T``, ``E`` and the group ``E_g``."""
    nx, ny = shape
    G = Eg.shape[0]
    header = ["cell", "i", "j", "T", "E"] + [f"E_{g + 1}" for g in range(G)]
    rows = []
    for k in range(nx * ny):
        i, j = divmod(k, ny)
        rows.append([k, i, j, _fmt(T[k]), _fmt(E[k])] + [_fmt(v) for v in Eg[:, k]])
    _write_csv(Path(path), header, rows)


def read_fields(path) -> dict:
    """Inverse of :func:`write_fields`: ``{"T", "E", "Eg", "shape"}``."""
    header, rows = _read_csv(Path(path))
    data = np.array([[_num(v) for v in r[3:]] for r in rows]).reshape(len(rows), -1)
    ij = np.array([[int(r[1]), int(r[2])] for r in rows]).reshape(len(rows), 2)
    shape = (int(ij[:, 0].max()) + 1, int(ij[:, 1].max()) + 1) if len(rows) else (0, 0)
    return {"T": data[:, 0], "E": data[:, 1], "Eg": data[:, 2:].T.copy(), "shape": shape,
            "groups": len(header) - 5}


def write_outputs(record, run_dir, config_text: str = "", errors=None,
                  save_every: int = 1, iterates: bool = False, rates=None) -> Path:
    """Write all result files of ``record`` into ``run_dir``.

    ``errors`` (per-block :class:`~trtblock.diagnostics.BlockErrors`
    against a reference) fills the error columns of ``conv.csv``; ``rates``
    is an ``(rho_E, rho_T)`` pair for ``rates.csv``.
    """
    out = Path(run_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc}") from exc
    if config_text:
        try:
            (out / "run.cfg").write_text(config_text, encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot write {out / 'run.cfg'}: {exc}") from exc

    shape = record.problem.mesh.shape
    N = len(record.states) - 1
    for n, st in enumerate(record.states):
        if n % save_every == 0 or n == N:
            write_fields(field_path(out, n), shape, st.T, st.E, st.Eg)

    _write_csv(out / "itercount.csv", ["block", "steps", "outer_iterations"],
               [[b.block + 1, len(b.steps), b.outer_iterations] for b in record.blocks])

    errs = errors
    rows = []
    for bi, blk in enumerate(record.blocks):
        J = blk.outer_iterations
        for j in range(J + 1):
            for k, n in enumerate(blk.steps):
                xe = blk.xi_E[j - 1, k] if j > 0 else np.nan
                xt = blk.xi_T[j - 1, k] if j > 0 else np.nan
                if errs is not None:
                    ee, et = errs[bi].step_E[j, k], errs[bi].step_T[j, k]
                else:
                    ee = et = np.nan
                rows.append([blk.block + 1, j, n, _fmt(xe), _fmt(xt), _fmt(ee), _fmt(et)])
    _write_csv(out / "conv.csv", ["block", "j", "n", "xi_E", "xi_T", "err_E", "err_T"], rows)

    if rates is not None:
        write_rates(out / "rates.csv", [(record.partition.block_sizes[0], *rates)])

    if iterates:
        arrays = {}
        for blk in record.blocks:
            if blk.E_iterates is None:
                raise OutputError("iterates were requested but not stored during the run")
            arrays[f"E_{blk.block + 1}"] = blk.E_iterates
            arrays[f"T_{blk.block + 1}"] = blk.T_iterates
            arrays[f"steps_{blk.block + 1}"] = np.asarray(blk.steps)
        try:
            np.savez_compressed(out / "iterates.npz", **arrays)
        except OSError as exc:
            raise OutputError(f"cannot write {out / 'iterates.npz'}: {exc}") from exc
    return out


def write_rates(path, rows):
    _write_csv(Path(path), ["n_b", "rho_E", "rho_T"],
               [[int(n), _fmt(a), _fmt(b)] for n, a, b in rows])


def read_rates(path):
    _, rows = _read_csv(Path(path))
    return [(int(r[0]), _num(r[1]), _num(r[2])) for r in rows]


def read_itercount(path) -> np.ndarray:
    """``(B, 3)`` integer array of block, steps, outer iterations."""
    _, rows = _read_csv(Path(path))
    return np.array([[int(v) for v in r] for r in rows], dtype=int).reshape(len(rows), 3)


def read_conv(path) -> dict:
    """Columns of ``conv.csv`` as arrays (empty cells become NaN)."""
    header, rows = _read_csv(Path(path))
    cols = {h: [] for h in header}
    for r in rows:
        for h, v in zip(header, r):
            cols[h].append(v)
    out = {}
    for h, vals in cols.items():
        out[h] = np.array([int(v) for v in vals]) if h in ("block", "j", "n") else \
            np.array([_num(v) for v in vals])
    return out


def read_iterates(run_dir) -> dict:
    """``{block: (steps, E_iterates, T_iterates)}`` from ``iterates.npz``."""
    path = Path(run_dir) / "iterates.npz"
    if not path.exists():
        raise OutputError(f"{path} not found; rerun with 'iterates = true' under [output]")
    with np.load(path) as z:
        blocks = sorted({int(k.split("_")[1]) for k in z.files})
        return {b: (z[f"steps_{b}"], z[f"E_{b}"], z[f"T_{b}"]) for b in blocks}


def saved_steps(run_dir) -> list[int]:
    return sorted(int(p.stem.split("_")[1]) for p in Path(run_dir).glob("fields_*.csv"))
