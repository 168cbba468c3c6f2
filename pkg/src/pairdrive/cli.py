"""Command-line front end.

Energies are in units of U unless ``--si`` is given, in which case the
config values are taken as absolute and reported unchanged.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .model import ModelSpec, load_config, spec_from_mapping, spectrum_of
from .moments import ResonanceError, correlators, default_displacements, pcs_residual
from .specialfn import SeriesError

SCHEMA_VERSION = "1"
AXIS_FIELDS = {"N", "U", "Delta", "kappa", "G", "Lam", "g_re", "g_im", "lambda_re", "lambda_im"}
_ALIASES = {
    "n": "N",
    "big_u": "U",
    "delta": "Delta",
    "lambda": "Lam",
    "g": "G",
    "lam": "Lam",
}

log = logging.getLogger("pairdrive")


class CLIError(Exception):
    pass


# ----------------------------------------------------------------------------
# sweep specification


@dataclass
class Axis:
    name: str
    start: float
    stop: float
    count: int
    scale: str = "linear"

    def __post_init__(self):
        self.name = _ALIASES.get(self.name, self.name)
        if self.name not in AXIS_FIELDS:
            raise CLIError(f"unknown sweep parameter {self.name!r}")
        if self.count < 1:
            raise CLIError("axis count must be at least 1")
        if self.scale not in ("linear", "log"):
            raise CLIError("axis scale must be linear or log")
        if self.scale == "log" and not self.start * self.stop > 0:
            raise CLIError("log axis needs start and stop of the same sign, both nonzero")

    def values(self) -> np.ndarray:
        if self.count == 1:
            return np.array([self.start], dtype=float)
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)


@dataclass
class SweepSpec:
    config: Path
    axes: List[Axis]
    observables: List[str] = field(default_factory=lambda: ["nbar", "g2_inf"])
    out: Optional[Path] = None
    threads: int = 1


def parse_axis(text: str) -> Axis:
    """name:start:stop:count[:linear|log]"""
    parts = text.split(":")
    if len(parts) not in (4, 5):
        raise CLIError(f"axis {text!r} is not name:start:stop:count[:scale]")
    scale = parts[4] if len(parts) == 5 else "linear"
    try:
        return Axis(parts[0], float(parts[1]), float(parts[2]), int(parts[3]), scale)
    except ValueError as exc:
        raise CLIError(f"axis {text!r}: {exc}") from exc


def _apply(spec: ModelSpec, name: str, value: float) -> ModelSpec:
    if name == "N":
        n = int(round(value))
        dims = spec.dims
        if spec.D:
            L = round(n ** (1 / spec.D))
            if L ** spec.D != n:
                raise CLIError(f"N={n} is not a perfect {spec.D}-th power")
            dims = (L,) * spec.D
        return spec.with_(N=n, dims=dims, M_override=None)
    if name in ("g_re", "g_im"):
        g = spec.G
        g = complex(value, g.imag) if name == "g_re" else complex(g.real, value)
        return spec.with_(G=g)
    if name in ("lambda_re", "lambda_im"):
        L = spec.Lam
        L = complex(value, L.imag) if name == "lambda_re" else complex(L.real, value)
        return spec.with_(Lam=L)
    return spec.with_(**{name: value})


# ----------------------------------------------------------------------------
# shared evaluation


def safe_kappa(spec: ModelSpec) -> float:
    """Suggested loss rate u/100, which moves delta off the real axis by 1/400."""
    return 0.01 * abs(spec.U / spec.N)


def evaluate(spec: ModelSpec, tol: float, displacements=None) -> dict:
    """Observables for one parameter point as a flat dict."""
    spectrum = spectrum_of(spec)
    delta = spec.derived.delta
    obs = correlators(spec, spectrum, delta, displacements, tol=tol)
    out = {
        "nbar": obs.nbar,
        "g2_inf": obs.g2_inf if obs.g2 else 0.0,
        "g2_K": obs.g2_K,
        "g2_phi": obs.g2_phi,
        "one_particle": {str(r): [v.real, v.imag] for r, v in obs.one_particle.items()},
        "pairing": {str(r): [v.real, v.imag] for r, v in obs.pairing.items()},
        "g2": {str(r): v for r, v in obs.g2.items()},
        "flags": list(obs.flags),
    }
    if spectrum.lam.min() > 0:
        out["pcs_residual"] = pcs_residual(spec, spectrum, delta, 200)
    if obs.nbar > 0:
        from .wigner import max_pairing_concentration

        out["concentration"] = max_pairing_concentration(spec, spectrum, delta, tol)
    return out


def _git_rev() -> str:
    try:
        r = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).resolve().parent,
            timeout=5,
        )
        return r.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _metadata(args, extra: dict = None) -> List[str]:
    lines = [
        f"# pairdrive {__version__}",
        f"# schema_version {SCHEMA_VERSION}",
        f"# git_revision {_git_rev()}",
        f"# tol {args.tol:g}",
        f"# max_terms {args.max_terms}",
        "# units energies in U" if not getattr(args, "si", False) else "# units absolute",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} {v}")
    return lines


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write(path: Optional[str], text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _resonance_message(spec: ModelSpec, exc: Exception) -> str:
    return f"{exc}; try kappa >= {safe_kappa(spec):.3g}"


def _load(args) -> ModelSpec:
    if not args.config:
        raise CLIError("--config is required")
    spec = load_config(args.config)
    for item in getattr(args, "set", None) or []:
        k, _, v = item.partition("=")
        spec = _apply(spec, _ALIASES.get(k, k), float(v))
    return spec


# ----------------------------------------------------------------------------
# commands


def cmd_observables(args) -> int:
    spec = _load(args)
    try:
        res = evaluate(spec, args.tol)
    except ResonanceError as exc:
        raise CLIError(_resonance_message(spec, exc)) from exc
    if args.oracle:
        if spec.N > 3:
            raise CLIError("--oracle needs N <= 3")
        from .checks import _oracle_for
        from .moments import _displaced_pairs

        ss = _oracle_for(spec, res["nbar"])
        ref = ss.site_correlations()
        orc = {"nbar": float(ref["n"].mean()), "truncation_error": ss.truncation_error}
        for r in default_displacements(spec):
            I, K = np.array(_displaced_pairs(spec, r)).T
            v = ref["pairing"][I, K].mean()
            orc.setdefault("pairing", {})[str(r)] = [v.real, v.imag]
            v = ref["one"][I, K].mean()
            orc.setdefault("one_particle", {})[str(r)] = [v.real, v.imag]
        res = {"exact": res, "oracle": orc}
        flat = res["exact"]
        print(f"{'quantity':<20}{'exact':>24}{'oracle':>24}")
        print(f"{'nbar':<20}{flat['nbar']:>24.15g}{orc['nbar']:>24.15g}")
        for r, v in flat["pairing"].items():
            o = orc["pairing"][r]
            print(f"{'pairing[' + r + ']':<20}{abs(complex(*v)):>24.15g}{abs(complex(*o)):>24.15g}")
    else:
        for k, v in res.items():
            print(f"{k} = {v}")
    if args.out:
        _write(args.out, json.dumps(res, indent=2, sort_keys=True) + "\n")
    return 0


def _row(spec: ModelSpec, tol: float, observables: List[str], with_chi: bool):
    ev = evaluate(spec, tol, displacements=None)
    row = [ev.get(o) if not isinstance(ev.get(o), dict) else None for o in observables]
    if with_chi:
        h = 1e-4 * abs(spec.U)
        a = evaluate(spec.with_(Delta=spec.Delta + h), tol, [0])["nbar"]
        b = evaluate(spec.with_(Delta=spec.Delta - h), tol, [0])["nbar"]
        row.append((a - b) / (2 * h))
    return row


def cmd_sweep(args) -> int:
    spec0 = _load(args)
    axes = [parse_axis(a) for a in args.axis] or [Axis("Delta", spec0.Delta, spec0.Delta, 1)]
    observables = args.observables.split(",") if args.observables else ["nbar", "g2_inf", "g2_K"]
    with_chi = "chi" in observables
    observables = [o for o in observables if o != "chi"]
    grids = [ax.values() for ax in axes]
    points = list(np.stack(np.meshgrid(*grids, indexing="ij"), -1).reshape(-1, len(axes)))

    def work(vals):
        try:
            spec = spec0
            for ax, v in zip(axes, vals):
                spec = _apply(spec, ax.name, float(v))
            return _row(spec, args.tol, observables, with_chi), None
        except (ResonanceError, SeriesError, ValueError, ArithmeticError, CLIError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    # results are collected in submission order so threading never reorders rows
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(work, points))
    cols = [ax.name for ax in axes] + observables + (["chi"] if with_chi else [])
    buf = io.StringIO()
    for line in _metadata(args, {"config": Path(args.config).name}):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    failures = []
    width = len(cols) - len(axes)
    for vals, (row, err) in zip(points, results):
        if err is not None:
            failures.append((vals, err))
            row = [math.nan] * width
        w.writerow([_fmt(float(v)) for v in vals] + [_fmt(x) for x in row])
    _write(args.out, buf.getvalue())
    if failures:
        side = Path(args.out + ".log") if args.out and args.out != "-" else None
        text = "".join(f"{list(map(float, v))}: {e}\n" for v, e in failures)
        if side:
            side.write_text(text, encoding="utf-8")
        else:
            sys.stderr.write(text)
        return 3
    return 0


def cmd_critical(args) -> int:
    from .meanfield import (
        ScanError,
        critical_point,
        critical_point_closed_form,
        exact_critical_estimate,
        fit_exponent,
        susceptibility_scan,
    )

    spec = _load(args)
    if spec.D != 0:
        raise CLIError("critical scan needs d = 0")
    sizes = [int(x) for x in args.sizes.split(",")]
    kappas = [float(x) for x in args.kappas.split(",")] if args.kappas else None
    mf = critical_point(spec.G, spec.U)
    cf = critical_point_closed_form(spec.G, spec.U)
    if kappas is None:
        kappas = [mf.kappa_star * f for f in (0.6, 0.8, 1.2, 1.5, 2.0)]
    grid = np.linspace(0.0, 2 * mf.delta_star + 2 * abs(spec.U), args.delta_points)
    buf = io.StringIO()
    meta = {"kappa_star_mf": mf.kappa_star, "delta_star_mf": mf.delta_star, "kappa_star_closed": cf.kappa_star}
    for line in _metadata(args, meta):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kappa"] + [f"chi_max_N{n}" for n in sizes])
    status = 0
    for k in kappas:
        try:
            r = susceptibility_scan(spec, sizes, k, grid)
            w.writerow([_fmt(k)] + [_fmt(r.chi_max[n]) for n in sizes])
        except ScanError as exc:
            sys.stderr.write(f"kappa={k:g}: {exc}\n")
            w.writerow([_fmt(k)] + ["nan"] * len(sizes))
            status = 3
    taus = [0.025, 0.05, 0.1, 0.2]
    big = max(sizes)
    chis = [susceptibility_scan(spec, [big], mf.kappa_star * (1 + t), grid).chi_max[big] for t in taus]
    gamma = fit_exponent(taus, chis)
    kc = exact_critical_estimate(spec.G, spec.U, sizes=(sizes[-2], sizes[-1]) if len(sizes) > 1 else (big // 2, big))
    buf.write(f"# kappa_c_exact {kc!r}\n# gamma {gamma!r}\n")
    _write(args.out, buf.getvalue())
    print(f"mean-field kappa_* = {mf.kappa_star:.6g} U at Delta_* = {mf.delta_star:.6g} U", file=sys.stderr)
    print(f"exact-scan kappa_c = {kc:.4g} U, fitted gamma = {gamma:.3f}", file=sys.stderr)
    return status


def cmd_oracle_check(args) -> int:
    from .checks import draw_suite, full_suite

    spec = _load(args) if args.config else None
    if spec is not None and spec.N > 3:
        raise CLIError("oracle checks need N <= 3")
    if spec is not None and spec.kappa <= 0:
        raise CLIError("kappa = 0 is resonant for the exact solution and singular for the oracle; use kappa > 0")
    if spec is not None:
        from .checks import random_spec

        rng = np.random.default_rng(args.seed)
        specs = [random_spec(rng, spec.N, spec.D, spec.U) for _ in range(args.draws)]
    else:
        specs = draw_suite(args.seed, args.draws)
    failed = 0
    for i, s in enumerate(specs):
        print(f"draw {i}: N={s.N} D={s.D} Delta={s.Delta:.4g} kappa={s.kappa:.4g} G={s.G:.3g} Lam={s.Lam:.3g}")
        try:
            results = full_suite(s, tol=args.tol)
        except Exception as exc:  # a crashing check is a failed check
            print(f"  FAIL {type(exc).__name__}: {exc}")
            failed += 1
            continue
        for r in results:
            print("  " + r.line())
            failed += not r.passed
    print(f"{'all checks passed' if not failed else f'{failed} check(s) failed'}")
    return 1 if failed else 0


def cmd_semiclassics(args) -> int:
    from .semiclassics import fixed_point, ring_radii, stability_eigenvalues, stable_sphere

    spec = _load(args)
    spectrum = spectrum_of(spec)
    out = {"lam_star": float(spectrum.lam_star), "s": spectrum.s, "fixed_points": []}
    sph = stable_sphere(spec, spectrum)
    out["stable_sphere"] = None if sph is None else {"R": sph[0], "theta": sph[1], "s": sph[2]}
    for ci, members in enumerate(spectrum.classes):
        lam = float(spectrum.lam[members[0]])
        for root, R in ring_radii(spec, lam):
            fp = fixed_point(spec, spectrum, ci, None, root)
            ev = stability_eigenvalues(spec, spectrum, fp, verify=spec.N <= 64)
            out["fixed_points"].append(
                {
                    "class": ci,
                    "lam": lam,
                    "root": root,
                    "R": R,
                    "theta": fp.theta,
                    "stable": fp.stable,
                    "max_re_eig": float(ev.real.max()),
                }
            )
    text = json.dumps(out, indent=2) + "\n"
    _write(args.out, text)
    return 0


def cmd_wigner_grid(args) -> int:
    from .wigner import wigner_grid

    spec = _load(args)
    if spec.N > 2:
        raise CLIError("wigner-grid tabulates N <= 2 (second mode fixed at the origin)")
    spectrum = spectrum_of(spec)
    x = np.linspace(-args.radius, args.radius, args.points)
    X, Y = np.meshgrid(x, x, indexing="ij")
    a = (X + 1j * Y)[..., None]
    if spec.N == 2:
        a = np.concatenate([a, np.zeros_like(a)], axis=-1)
    try:
        W = wigner_grid(spec, spectrum, spec.derived.delta, a, args.tol)
    except ResonanceError as exc:
        raise CLIError(_resonance_message(spec, exc)) from exc
    buf = io.StringIO()
    for line in _metadata(args):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re_alpha", "im_alpha", "W"])
    for i in range(len(x)):
        for j in range(len(x)):
            w.writerow([_fmt(float(x[i])), _fmt(float(x[j])), _fmt(float(W[i, j]))])
    _write(args.out, buf.getvalue())
    return 0


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pairdrive", description="Exact steady states of pair-driven Kerr lattices.")
    p.add_argument("--version", action="version", version=f"pairdrive {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML model file")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--tol", type=float, default=1e-12, help="series tolerance")
    common.add_argument("--max-terms", type=int, default=2_000_000, help="series term budget")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--oracle", action="store_true", help="compare with the Fock-space solver")
    common.add_argument("--si", action="store_true", help="treat config energies as absolute units")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a model field")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("observables", parents=[common], help="single-point observables (JSON)")
    s = sub.add_parser("sweep", parents=[common], help="parameter grid (CSV)")
    s.add_argument("--axis", action="append", default=[], help="name:start:stop:count[:linear|log]")
    s.add_argument("--observables", help="comma list from nbar,g2_inf,g2_K,g2_phi,pcs_residual,concentration,chi")
    c = sub.add_parser("critical", parents=[common], help="susceptibility scan near the critical point")
    c.add_argument("--sizes", default="250,500,1000,2000")
    c.add_argument("--kappas", help="comma list of loss rates")
    c.add_argument("--delta-points", type=int, default=61)
    o = sub.add_parser("oracle-check", parents=[common], help="closed forms against the Fock solver")
    o.add_argument("--draws", type=int, default=20)
    sub.add_parser("semiclassics", parents=[common], help="fixed points and stability (JSON)")
    g = sub.add_parser("wigner-grid", parents=[common], help="Wigner function on a square grid (CSV)")
    g.add_argument("--radius", type=float, default=3.0)
    g.add_argument("--points", type=int, default=41)
    return p


COMMANDS = {
    "observables": cmd_observables,
    "sweep": cmd_sweep,
    "critical": cmd_critical,
    "oracle-check": cmd_oracle_check,
    "semiclassics": cmd_semiclassics,
    "wigner-grid": cmd_wigner_grid,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    from . import moments, specialfn

    specialfn.MAX_TERMS = args.max_terms
    moments.MAX_CUTOFF = args.max_terms
    try:
        return COMMANDS[args.command](args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResonanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
