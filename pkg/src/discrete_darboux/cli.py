"""Command-line interface.

Exit codes: 0 success, 1 bad input, 2 a numerical check failed.
``DISCRETE_DARBOUX_TOL`` overrides the comparison tolerance of the
``examples`` and ``verify`` subcommands.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import fixtures
from .darboux import DefinitenessError, add_bound_state, apply_request, remove_bound_state
from .gelfand_levitan import gl_kernel_from_densities, gl_transform, solve_gl
from .lattice import Potential
from .oracle import match_bound_states, oracle_norming_constant, orthogonality_check, truncated_spectrum
from .spectral import (
    BoundaryZeroWarning,
    NotAJostFunctionError,
    SpectralDensity,
    analyze,
    potential_from_jost_polynomial,
    residue_norming_constant,
)

TOL_ENV = "DISCRETE_DARBOUX_TOL"
EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2


def _tolerance(default: float) -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return default
    value = float(raw)
    if not value > 0:
        raise ValueError(f"{TOL_ENV} must be positive")
    return value


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(x) for x in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_plain) + "\n"


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _read_potential(path: str) -> Potential:
    return Potential.from_json(_read_json(path))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if not isinstance(x, (int, np.integer)) else int(x) for x in row])


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text, encoding="utf-8")


def spectral_report(data, grid: int = 512) -> tuple[dict, tuple]:
    """Report dictionary plus ``(theta, phi)`` of the phase shift."""
    theta, phi, lev = data.levinson(grid)
    report = {
        "N": len(data.bounds),
        "bound_states": [b.to_json() for b in data.bounds],
        "mu_plus": data.endpoints.mu_plus,
        "mu_minus": data.endpoints.mu_minus,
        "levinson_ok": lev.ok,
        "levinson": {
            "delta_arg_f0": lev.delta_arg_f0,
            "expected": lev.expected,
        },
        "continuous_mass": data.density.continuous_mass(),
        "jost": data.jost.as_rational().to_json(),
        "potential": data.potential.to_json(),
    }
    return report, (theta, phi)


def cmd_analyze(args) -> int:
    V = _read_potential(args.potential)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryZeroWarning)
        data = analyze(V)
        report, (theta, phi) = spectral_report(data, args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps(report), encoding="utf-8")
    _write_csv(out / "phase.csv", ["theta", "phi"], zip(theta, phi))
    lam, _, _ = data.density.theta_nodes()
    order = np.argsort(lam)
    _write_csv(out / "density.csv", ["lambda", "weight"], zip(lam[order], data.density.weight(lam[order])))
    if not report["levinson_ok"]:
        print("Levinson winding does not match the bound-state count", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _write_transform(result, out: str | None) -> None:
    _emit(dumps(result.to_json()), out, "result.json")
    if out is not None:
        _write_csv(
            Path(out) / "potential.csv",
            ["n", "V"],
            ((n, v) for n, v in enumerate(result.V_tilde, start=1)),
        )


def cmd_add(args) -> int:
    data = analyze(_read_potential(args.potential))
    _write_transform(add_bound_state(data, args.lam, args.c2, args.n_max), args.out)
    return EXIT_OK


def cmd_remove(args) -> int:
    data = analyze(_read_potential(args.potential))
    if args.request:
        result = apply_request(data, _read_json(args.request))
    else:
        result = remove_bound_state(data, args.index, args.n_max)
    _write_transform(result, args.out)
    return EXIT_OK


def cmd_gl_transform(args) -> int:
    rho_obj = _read_json(args.rho)
    if "potential" not in rho_obj:
        raise ValueError("the rho file must carry the 'potential' it belongs to")
    V = Potential.from_json(rho_obj["potential"])
    rho = SpectralDensity.from_json(rho_obj)
    rho_tilde = SpectralDensity.from_json(_read_json(args.rho_tilde))
    kernel = gl_kernel_from_densities(V, rho, rho_tilde, args.n_max)
    tr = gl_transform(V, solve_gl(kernel), args.n_max)
    out = {
        "V_tilde": [float(v) for v in tr.V_tilde],
        "kernel_nodes": kernel.nodes,
        "max_condition": float(np.max(tr.solution.conditions)),
        "determinant_ratio_residual": tr.solution.determinant_ratio_residual,
    }
    _emit(dumps(out), args.out, "gl.json")
    return EXIT_OK


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def example_rows(tol: float) -> list[tuple[str, bool, str]]:
    """``(label, passed, detail)`` for each reference transform and spectrum."""
    rows = []
    for V1 in (0.5, -0.7):
        r = add_bound_state(analyze(fixtures.one_site(V1)), 2 + V1 + 1 / V1, 1 - V1**2, 32)
        err = max(_rel(r.V_tilde[0], 1 / V1), float(np.max(np.abs(r.V_tilde[1:]))))
        rows.append((f"add z=-V1 to ({V1}), C2=1-V1^2", err < tol, f"V1~={r.V_tilde[0]:.12g}, err {err:.2e}"))

    V1, C2 = 0.5, 0.5
    data = analyze(fixtures.one_site(V1))
    r = add_bound_state(data, 2 + V1 + 1 / V1, C2, 12)
    exact = np.array([fixtures.added_state_potential(V1, C2, n) for n in range(1, 13)])
    tr = gl_transform(data.potential, solve_gl(gl_kernel_from_densities(data.potential, data.density, r.density_tilde, 12)), 12)
    err = max(float(np.max(np.abs(r.V_tilde - exact) / np.abs(exact))), float(np.max(np.abs(tr.V_tilde - exact) / np.abs(exact))))
    rows.append((f"add z=-V1 to ({V1}), C2={C2}", err < tol, f"closed form and kernel path, err {err:.2e}"))

    data = analyze(fixtures.two_site_two_bound())
    zs = sorted(b.z_s for b in data.bounds)
    C2s = {round(b.z_s, 6): b.C2 for b in data.bounds}
    exact = fixtures.two_site_norming_constants()
    err = max(abs(zs[0] + 0.5), abs(zs[1] - 0.5), _rel(C2s[-0.5], exact[0]), _rel(C2s[0.5], exact[1]))
    rows.append(("two-site potential: z=-1/2, 1/2 and C2 pair", err < tol, f"err {err:.2e}"))

    try:
        potential_from_jost_polynomial(fixtures.inconsistent_cubic())
        rows.append(("(1-z)^3 realizability", False, "unexpectedly realised"))
    except NotAJostFunctionError:
        rows.append(("(1-z)^3 realizability", True, "not a Jost function"))
    V = potential_from_jost_polynomial(fixtures.complex_root_cubic())
    z1, C2 = fixtures.two_site_one_bound_constant()
    b = analyze(V).bounds
    err = float("inf") if len(b) != 1 else max(abs(b[0].z_s - z1), _rel(b[0].C2, C2))
    rows.append(("cubic with complex roots: one bound state", err < tol, f"err {err:.2e}"))

    r = remove_bound_state(analyze(fixtures.one_site(1.25)), n_max=32)
    err = max(_rel(r.V_tilde[0], 0.8), float(np.max(np.abs(r.V_tilde[1:]))))
    rows.append(("remove the bound state of (1.25)", err < tol, f"V1~={r.V_tilde[0]:.12g}, err {err:.2e}"))

    data = analyze(fixtures.two_site_two_bound())
    idx = [i for i, b in enumerate(data.bounds) if b.z_s > 0][0]
    r = remove_bound_state(data, idx, 32)
    exact = fixtures.removed_state_potential()
    err = float(np.max(np.abs(r.V_tilde[:5] - exact) / np.abs(exact)))
    ok = err < tol and r.compactness == "non-compact"
    rows.append(("remove z=1/2 from the two-site potential", ok, f"{r.compactness}, err {err:.2e}"))
    return rows


def cmd_examples(args) -> int:
    tol = _tolerance(1e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryZeroWarning)
        rows = example_rows(tol)
    width = max(len(r[0]) for r in rows)
    for label, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {label:<{width}}  {detail}")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_CHECK


def verify_rows(M: int, tol: float, potentials: dict[str, Potential]) -> list[dict]:
    rows = []
    for name, V in potentials.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryZeroWarning)
            data = analyze(V)
        spec = truncated_spectrum(V, M)
        row = {"fixture": name, "N": len(data.bounds), "eigen_residual": spec.residual}
        try:
            row["lambda_gap"] = match_bound_states(spec, [b.lambda_s for b in data.bounds], tol)
        except ValueError:
            row["lambda_gap"] = math.inf
        order = np.argsort(spec.outside)
        ours = sorted(data.bounds, key=lambda b: b.lambda_s)
        gaps = [0.0]
        if len(ours) == spec.outside.size:
            for k, b in zip(order, ours):
                gaps.append(_rel(oracle_norming_constant(spec, int(k)), b.C2))
                res, cond = residue_norming_constant(data.jost, b.z_s)
                if cond * 1e-16 < 1e-2 * tol:
                    gaps.append(_rel(res, b.c2))
        row["C2_gap"] = max(gaps)
        row["orthogonality"] = orthogonality_check(spec)
        row["ok"] = bool(
            row["lambda_gap"] <= tol and row["C2_gap"] <= 1e-6 and row["orthogonality"] <= 1e-8
        )
        rows.append(row)
    return rows


def cmd_verify(args) -> int:
    tol = _tolerance(1e-8)
    if args.size < 10:
        raise ValueError("--size must be at least 10")
    pots = dict(fixtures.FIXTURES)
    if args.potential:
        pots = {Path(args.potential).stem: _read_potential(args.potential)}
    rows = verify_rows(args.size, tol, pots)
    print(f"{'fixture':<20} {'N':>2} {'lambda_gap':>11} {'C2_gap':>11} {'orthog':>11} {'resid':>11}  result")
    for r in rows:
        print(
            f"{r['fixture']:<20} {r['N']:>2} {r['lambda_gap']:>11.2e} {r['C2_gap']:>11.2e} "
            f"{r['orthogonality']:>11.2e} {r['eigen_residual']:>11.2e}  {'PASS' if r['ok'] else 'FAIL'}"
        )
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_CHECK


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="discrete-darboux", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="spectral report, phase and density curves")
    a.add_argument("--potential", required=True)
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--grid", type=_positive_int, default=512, help="phase samples (doubled as needed)")
    a.set_defaults(func=cmd_analyze)

    a = sub.add_parser("add", help="add a bound state")
    a.add_argument("--potential", required=True)
    a.add_argument("--lambda", dest="lam", type=float, required=True)
    a.add_argument("--c2", type=float, required=True)
    a.add_argument("--n-max", type=_positive_int, default=32)
    a.add_argument("--out", help="output directory (default: JSON on stdout)")
    a.set_defaults(func=cmd_add)

    a = sub.add_parser("remove", help="remove a bound state")
    a.add_argument("--potential", required=True)
    a.add_argument("--index", type=int, default=-1)
    a.add_argument("--n-max", type=_positive_int, default=32)
    a.add_argument("--request", help="transform request JSON (overrides --index/--n-max)")
    a.add_argument("--out", help="output directory (default: JSON on stdout)")
    a.set_defaults(func=cmd_remove)

    a = sub.add_parser("gl-transform", help="transform between two spectral densities")
    a.add_argument("--rho", required=True, help="density JSON with a 'potential' entry")
    a.add_argument("--rho-tilde", required=True)
    a.add_argument("--n-max", type=_positive_int, default=12)
    a.add_argument("--out", help="output directory (default: JSON on stdout)")
    a.set_defaults(func=cmd_gl_transform)

    a = sub.add_parser("examples", help="reproduce the reference transforms")
    a.set_defaults(func=cmd_examples)

    a = sub.add_parser("verify", help="compare against the truncated-matrix oracle")
    a.add_argument("--size", type=_positive_int, default=2000)
    a.add_argument("--potential", help="check this potential instead of the built-in set")
    a.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, DefinitenessError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
