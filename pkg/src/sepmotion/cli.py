"""Batch runner: ``sepmotion <command> --config run.ini --output outdir``.

The config is an INI file with a ``[model]`` section, an optional ``[grid]``
section and a section named after the command. Every key is validated before
any computation starts; unknown sections or keys are rejected. Results go to
CSV files plus ``manifest.json`` holding the fully resolved config.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, _kernels
from .errors import InputError, NumericalError
from .model import ModelSpec, fmt

COMMANDS = ("exact", "clamped-scan", "channels", "hunter", "partition", "gcm", "microscope",
            "rate", "diagnostics")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


# -- schema: key -> (parser, default) -----------------------------------------------


def _float(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _int(v):
    return int(str(v).strip())


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [_float(x) for x in str(v).replace(",", " ").split()]


def _ints(v):
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [_int(x) for x in str(v).replace(",", " ").split()]


def _words(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [w for w in str(v).replace(",", " ").split()]


def _str(v):
    return str(v).strip()


MODEL_SCHEMA = {
    "kappa": (_float, 0.5),
    "a": (_float, 1.0),
    "slow_potential": (_str, "harmonic"),
    "alpha": (_float, 1.0),
    "beta": (_float, 0.25),
}

GRID_SCHEMA = {
    "spacing": (_float, 0.05),
    "fast_half_width": (_float, 6.5),
    "slow_half_width": (_float, None),  # None: sized from the model
}

COMMAND_SCHEMAS = {
    "exact": {"k": (_int, 6), "extrapolate": (_bool, True)},
    "clamped-scan": {"n_channels": (_int, 4), "x_min": (_float, -3.0), "x_max": (_float, 3.0),
                     "n_points": (_int, 121), "method": (_str, "analytic")},
    "channels": {"n_channels": (_int, 8), "k": (_int, 3),
                 "modes": (_words, ["crude", "diagonal_only", "full"]),
                 "extrapolate": (_bool, True), "method": (_str, "analytic")},
    "hunter": {"states": (_ints, [0, 1, 2]), "threshold": (_float, 1e-6), "n_channels": (_int, 8)},
    "partition": {"source": (_str, "random"), "count": (_int, 100), "max_dim": (_int, 12),
                  "p_size": (_int, 2), "seed": (_int, 0), "n_channels": (_int, 8),
                  "x_spacing": (_float, 0.05)},
    "gcm": {"n_centers": (_int, 17), "center_min": (_float, None), "center_max": (_float, None),
            "width": (_float, None), "width_factor": (_float, 1.0), "channel": (_int, 0),
            "k": (_int, 2), "extrapolate": (_bool, False)},
    "microscope": {"channel": (_int, 0), "levels": (_ints, [0, 1, 2]), "order": (_int, 2)},
    "rate": {"potential": (_str, "harmonic"), "barrier": (_float, 5.0),
             "betas": (_floats, [1.0, 1.5, 2.0, 2.5, 3.0]), "bath_frequency": (_float, None)},
    "diagnostics": {"box_sizes": (_floats, [6.0, 9.0, 12.0]), "threshold": (_float, 2.5),
                    "fast_spacing": (_float, 0.1), "slow_spacing": (_float, 0.2),
                    "full_slow_spacing": (_float, 0.05)},
}


def _resolve_section(raw: dict, schema: dict, name: str) -> dict:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise InputError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    out = {}
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                out[key] = parse(raw[key])
            except (TypeError, ValueError) as exc:
                raise InputError(f"[{name}] {key} = {raw[key]!r}: {exc}") from None
        else:
            out[key] = default
    return out


def resolve_config(command: str, text: str | None) -> dict:
    """Parse INI text and fill every default explicitly."""
    if command not in COMMANDS:
        raise InputError(f"unknown command {command!r}")
    cp = configparser.ConfigParser(interpolation=None)
    if text:
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise InputError(f"cannot parse config: {exc}") from None
    allowed = {"model", "grid", command}
    extra = sorted(set(cp.sections()) - allowed)
    if extra:
        raise InputError(f"unknown section(s) for {command}: {', '.join(extra)}")

    def raw(name):
        return dict(cp[name]) if cp.has_section(name) else {}

    cfg = {
        "command": command,
        "model": _resolve_section(raw("model"), MODEL_SCHEMA, "model"),
        "grid": _resolve_section(raw("grid"), GRID_SCHEMA, "grid"),
        command: _resolve_section(raw(command), COMMAND_SCHEMAS[command], command),
    }
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    ModelSpec(**cfg["model"])  # raises InputError on bad model values
    g = cfg["grid"]
    if g["spacing"] <= 0:
        raise InputError("[grid] spacing must be positive")
    if g["fast_half_width"] <= 0 or (g["slow_half_width"] is not None and g["slow_half_width"] <= 0):
        raise InputError("[grid] half widths must be positive")
    c = cfg[cfg["command"]]
    cmd = cfg["command"]
    positive = [k for k in ("k", "n_channels", "n_points", "n_centers", "count", "p_size") if k in c]
    for k in positive:
        if c[k] < 1:
            raise InputError(f"[{cmd}] {k} must be >= 1")
    if cmd == "channels":
        bad = [m for m in c["modes"] if m not in ("crude", "diagonal_only", "full")]
        if bad or not c["modes"]:
            raise InputError(f"[channels] modes must be among crude, diagonal_only, full (got {bad})")
    if cmd in ("clamped-scan", "channels") and c["method"] not in ("analytic", "grid"):
        raise InputError("method must be analytic or grid")
    if cmd == "clamped-scan" and c["x_max"] <= c["x_min"]:
        raise InputError("[clamped-scan] x_max must exceed x_min")
    if cmd == "clamped-scan" and c["n_points"] < 8:
        raise InputError("[clamped-scan] n_points must be >= 8")
    if cmd == "hunter" and any(s < 0 for s in c["states"]):
        raise InputError("[hunter] states must be >= 0")
    if cmd == "hunter" and not 0 < c["threshold"] < 1:
        raise InputError("[hunter] threshold must lie in (0, 1)")
    if cmd == "partition":
        if c["source"] not in ("random", "model"):
            raise InputError("[partition] source must be random or model")
        if c["source"] == "random" and not c["p_size"] < 3 <= c["max_dim"]:
            raise InputError("[partition] need p_size < 3 <= max_dim")
    if cmd == "gcm":
        if c["n_centers"] < 2 and c["width"] is None:
            raise InputError("[gcm] a single center needs an explicit width")
        if c["width"] is not None and c["width"] <= 0:
            raise InputError("[gcm] width must be positive")
        if c["width_factor"] <= 0:
            raise InputError("[gcm] width_factor must be positive")
    if cmd == "microscope":
        if not 0 <= c["order"] <= 2:
            raise InputError("[microscope] order must be 0, 1 or 2")
        if any(n < 0 for n in c["levels"]):
            raise InputError("[microscope] levels must be >= 0")
    if cmd == "rate":
        if c["potential"] not in ("harmonic", "double_well"):
            raise InputError("[rate] potential must be harmonic or double_well")
        if c["barrier"] <= 0 or not c["betas"] or any(b <= 0 for b in c["betas"]):
            raise InputError("[rate] barrier and betas must be positive")
    if cmd == "diagnostics":
        Ls = c["box_sizes"]
        if len(Ls) < 3 or any(b <= a for a, b in zip(Ls, Ls[1:])):
            raise InputError("[diagnostics] need at least 3 increasing box sizes")
        if min(c["fast_spacing"], c["slow_spacing"], c["full_slow_spacing"]) <= 0:
            raise InputError("[diagnostics] spacings must be positive")


# -- command implementations ---------------------------------------------------------


def _spec(cfg) -> ModelSpec:
    return ModelSpec(**cfg["model"])


def _grid(cfg, spec):
    from .model import default_grid

    g = cfg["grid"]
    return default_grid(spec, g["spacing"], g["fast_half_width"], g["slow_half_width"])


def _write_rows(path: Path, header, rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else ("" if v is None else v) for v in r])


def _run_exact(cfg, out: Path, threads: int) -> list[str]:
    from .model import closed_form_solution, exact_solve

    spec = _spec(cfg)
    c = cfg["exact"]
    es = exact_solve(spec, _grid(cfg, spec), c["k"], extrapolate=c["extrapolate"])
    closed, labels = (None, None)
    if spec.slow_potential == "harmonic":
        closed, labels = closed_form_solution(spec).lowest_levels(c["k"])
    rows = []
    for i, e in enumerate(es.spectrum.eigenvalues):
        lab = labels[i] if labels else (None, None)
        rows.append([i, float(e), float(closed[i]) if closed is not None else None, lab[0], lab[1]])
    _write_rows(out / "exact.csv", ["state", "energy", "closed_form", "n_fast", "n_slow"], rows)
    return ["exact.csv"]


def _run_scan(cfg, out: Path, threads: int) -> list[str]:
    from .adiabatic import coupling_matrix
    from .model import scan_clamped
    from .numerics import Grid1D

    spec = _spec(cfg)
    c = cfg["clamped-scan"]
    scan = scan_clamped(spec, Grid1D(c["x_min"], c["x_max"], c["n_points"]), c["n_channels"],
                        method=c["method"])
    scan.write_csv(out / "clamped_scan.csv")
    coupling_matrix(scan).write_csv(out / "couplings.csv")
    return ["clamped_scan.csv", "couplings.csv"]


def _run_channels(cfg, out: Path, threads: int) -> list[str]:
    from .adiabatic import coupled_channel_levels, coupling_matrix
    from .model import closed_form_solution, scan_clamped
    from .parallel import parallel_map

    spec = _spec(cfg)
    c = cfg["channels"]
    Xg = _grid(cfg, spec).slow
    exact = None
    if spec.slow_potential == "harmonic":
        exact = closed_form_solution(spec).lowest_levels(c["k"])[0]

    def one(mode):
        n_ch = c["n_channels"] if mode == "full" else 1
        return coupled_channel_levels(spec, Xg, n_ch, c["k"], mode, c["extrapolate"], method=c["method"])

    results = parallel_map(one, c["modes"], threads)
    rows = []
    for mode, levels in zip(c["modes"], results):
        n_ch = c["n_channels"] if mode == "full" else 1
        for s, e in enumerate(levels):
            rows.append([mode, n_ch, s, float(e), float(exact[s]) if exact is not None else None])
    _write_rows(out / "channels.csv", ["mode", "n_channels", "state", "energy", "exact"], rows)
    scan = scan_clamped(spec, Xg, c["n_channels"], method=c["method"])
    coupling_matrix(scan).write_csv(out / "couplings.csv")
    return ["channels.csv", "couplings.csv"]


def _run_hunter(cfg, out: Path, threads: int) -> list[str]:
    from .adiabatic import coupling_matrix, solve_coupled_channels
    from .factorization import detect_spikes, exact_potential, hunter_factorize, hunter_grid, nodes
    from .model import exact_solve, scan_clamped

    spec = _spec(cfg)
    c = cfg["hunter"]
    g = hunter_grid(spec, cfg["grid"]["spacing"])
    k = max(c["states"]) + 1
    es = exact_solve(spec, g, k)
    method = "analytic" if spec.slow_potential == "harmonic" else "grid"
    scan = scan_clamped(spec, g.slow, c["n_channels"], fast_grid=g.fast, method=method)
    sol = solve_coupled_channels(scan, coupling_matrix(scan), spec, k, "full")
    files, rows = [], []
    for v in c["states"]:
        fact = hunter_factorize(es.wavefield(v), c["threshold"])
        exact_potential(fact, spec, "full")
        exact_potential(fact, spec, "clamped")
        name = f"hunter_state{v}.csv"
        fact.write_csv(out / name)
        files.append(name)
        node_list = nodes(sol.amplitudes[v, 0], scan.X)
        for variant, U in (("full", fact.U), ("clamped", fact.U_clamped)):
            for X in detect_spikes(U, scan):
                near = float(node_list[np.argmin(np.abs(node_list - X))]) if node_list.size else None
                rows.append([v, variant, float(X), near])
    _write_rows(out / "spikes.csv", ["state", "variant", "X", "nearest_node"], rows)
    return files + ["spikes.csv"]


def _run_partition(cfg, out: Path, threads: int) -> list[str]:
    from .errors import NumericalError as NumErr
    from .partitioning import PartitionScheme, random_symmetric, solve_partitioned

    c = cfg["partition"]
    rows = []
    if c["source"] == "random":
        import scipy.linalg as la

        for case in range(c["count"]):
            dim = 3 + (c["seed"] + case) % (c["max_dim"] - 2)
            H = random_symmetric(dim, c["seed"] + case)
            sch = PartitionScheme(H, np.arange(c["p_size"]))
            start = la.eigvalsh(sch.blocks()[0])
            for b in range(c["p_size"]):
                try:
                    r = solve_partitioned(sch, b, float(start[b]))
                    rows.append([case, dim, b, float(start[b]), r.energy, r.iterations, r.residual, "converged"])
                except NumErr as exc:
                    rows.append([case, dim, b, float(start[b]), None, None, None, type(exc).__name__])
    else:
        from .adiabatic import block_operator, coupling_matrix, solve_coupled_channels
        from .model import scan_clamped
        from .numerics import Grid1D

        spec = _spec(cfg)
        Xg = _grid(cfg, spec).slow
        Xg = Grid1D(Xg.x_min, Xg.x_max, int(round((Xg.x_max - Xg.x_min) / c["x_spacing"])) + 1)
        scan = scan_clamped(spec, Xg, c["n_channels"])
        cm = coupling_matrix(scan)
        H = block_operator(scan, cm, spec.kappa, "full").toarray()
        n = Xg.n_interior
        sch = PartitionScheme(H, np.arange(n))
        E0 = solve_coupled_channels(scan, cm, spec, 1, "diagonal_only", n_channels=1).energies.ground
        r = solve_partitioned(sch, 0, E0)
        ref = solve_coupled_channels(scan, cm, spec, 1, "full").energies.ground
        rows.append(["model", H.shape[0], 0, E0, r.energy, r.iterations, r.residual, f"{ref:.17g}"])
    _write_rows(out / "partition.csv",
                ["case", "dimension", "branch", "start", "energy", "iterations", "residual", "status"], rows)
    return ["partition.csv"]


def _run_gcm(cfg, out: Path, threads: int) -> list[str]:
    from .adiabatic import effective_nuclear_levels
    from .gcm import GcmBasis, gcm_levels, run_gcm
    from .model import closed_form_solution, scan_clamped

    spec = _spec(cfg)
    c = cfg["gcm"]
    g = _grid(cfg, spec)
    half = 0.6 * g.slow.x_max
    lo = c["center_min"] if c["center_min"] is not None else -half
    hi = c["center_max"] if c["center_max"] is not None else half
    basis = GcmBasis.uniform(lo, hi, c["n_centers"], c["width"], c["channel"], c["width_factor"])
    scan = scan_clamped(spec, g.slow, c["channel"] + 1, fast_grid=g.fast,
                        method="analytic" if spec.slow_potential == "harmonic" else "grid")
    sol = run_gcm(basis, spec, scan, c["k"])
    sol.write_csv(out / "gcm_weights.csv", basis.centers)
    energies = gcm_levels(basis, spec, g, c["k"]) if c["extrapolate"] else sol.energies.eigenvalues
    eff = effective_nuclear_levels(spec, g.slow, c["channel"], c["k"], extrapolate=c["extrapolate"])
    exact = closed_form_solution(spec).lowest_levels(c["k"])[0] if spec.slow_potential == "harmonic" else None
    rows = [[s, float(energies[s]), sol.parities[s], float(eff[s]),
             float(exact[s]) if exact is not None else None] for s in range(c["k"])]
    _write_rows(out / "gcm.csv", ["state", "energy", "parity", "effective_nuclear", "exact"], rows)
    return ["gcm_weights.csv", "gcm.csv"]


def _run_microscope(cfg, out: Path, threads: int) -> list[str]:
    from .microscope import asymptotic_levels, exact_slow_levels, model_expansion, write_levels_csv

    spec = _spec(cfg)
    c = cfg["microscope"]
    exp = model_expansion(spec, c["channel"])
    terms = asymptotic_levels(exp, spec, c["levels"], c["order"])
    exact = exact_slow_levels(spec, c["levels"]) if c["channel"] == 0 else None
    write_levels_csv(out / "microscope.csv", c["levels"], terms, exact)
    return ["microscope.csv"]


def _run_rate(cfg, out: Path, threads: int) -> list[str]:
    from dataclasses import replace

    from .marcelin import RateProblem, rate_backward, rate_forward, symmetric_double_well, write_rates_csv
    from .parallel import parallel_map

    c = cfg["rate"]
    if c["potential"] == "harmonic":
        base = RateProblem(lambda q: q * q, math.sqrt(c["barrier"]), 1.0,
                           bath_frequency=c["bath_frequency"])
    else:
        base = replace(symmetric_double_well(c["barrier"]), bath_frequency=c["bath_frequency"])

    def one(beta):
        p = replace(base, beta=beta)
        back = rate_backward(p) if c["potential"] == "double_well" else None
        return beta, rate_forward(p), back

    write_rates_csv(out / "rate.csv", parallel_map(one, c["betas"], threads))
    return ["rate.csv"]


def _run_diagnostics(cfg, out: Path, threads: int) -> list[str]:
    from .model import continuum_diagnostic

    spec = _spec(cfg)
    c = cfg["diagnostics"]
    d = continuum_diagnostic(spec, c["box_sizes"], c["threshold"], c["fast_spacing"], c["slow_spacing"],
                             c["full_slow_spacing"], threads=threads)
    rows = [[float(L), float(h), int(n0), int(n1)]
            for L, h, n0, n1 in zip(d.box_sizes, d.slow_spacings, d.counts_clamped, d.counts_full)]
    _write_rows(out / "diagnostics.csv", ["box_size", "slow_spacing", "count_clamped", "count_full"], rows)
    return ["diagnostics.csv"]


RUNNERS = {
    "exact": _run_exact,
    "clamped-scan": _run_scan,
    "channels": _run_channels,
    "hunter": _run_hunter,
    "partition": _run_partition,
    "gcm": _run_gcm,
    "microscope": _run_microscope,
    "rate": _run_rate,
    "diagnostics": _run_diagnostics,
}


def run(command: str, config_text: str | None, output: str | os.PathLike, threads: int | None = None) -> int:
    """Run one command; returns the exit status. Errors go to stderr."""
    out = Path(output)
    created_dir = False
    before: set = set(out.iterdir()) if out.is_dir() else set()
    try:
        cfg = resolve_config(command, config_text)
        if threads is not None and threads < 1:
            raise InputError("--threads must be >= 1")
        n_threads = threads or (os.cpu_count() or 1)
        if not out.exists():
            out.mkdir(parents=True)
            created_dir = True
        elif not out.is_dir():
            raise InputError(f"output path {out} is not a directory")
        t0 = time.perf_counter()
        with threadpool_limits(limits=1):
            names = RUNNERS[command](cfg, out, n_threads)
        manifest = {
            "command": command,
            "config": cfg,
            "version": __version__,
            "backend": _kernels.backend(),
            "threads": n_threads,
            "outputs": names,
            "wall_time_s": time.perf_counter() - t0,
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return EXIT_OK
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    _cleanup(out, before, created_dir)
    return code


def _cleanup(out: Path, before: set, created_dir: bool) -> None:
    """Remove every file this run added to ``out``."""
    if not out.is_dir():
        return
    for p in out.iterdir():
        if p not in before and p.is_file():
            p.unlink()
    if created_dir and not any(out.iterdir()):
        out.rmdir()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sepmotion", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [model], [grid] and [%s] sections" % name)
        p.add_argument("--output", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = None
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"input error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_INPUT
    return run(args.command, text, args.output, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
