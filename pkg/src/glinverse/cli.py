"""Batch command-line front end.

Every command reads JSON inputs, writes CSV/JSON artifacts into ``--out``
and a JSON sidecar ``<command>.json`` with parameters, input digests and
diagnostics.  Exit codes: 0 success, 2 validation failure, 3 numerical
failure, 4 I/O failure.  Failures print a JSON error report on stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import formats as fm
from .direct import TestFunction, parseval_residual, solve_ivp, uniform_grid
from .glsolve import COND_MAX, SpectralMeasure, inverse_solve
from .linalg import BlockSignature, NumericalError, PotentialSpec, ValidationError, validate_bc
from .oracle import StepPotential
from .sigma import multiplicity_measure, sigma_free
from .transform import goursat_kernel

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("validate-bc", "direct", "kernel", "inverse", "oracle", "parseval",
            "sigma-make", "roundtrip")


class _IOFailure(Exception):
    def __init__(self, message, **details):
        super().__init__(message)
        self.report = {"error": "io", "message": message, **details}


def _positive(kind):
    def conv(s):
        v = kind(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return conv


def _float_list(s):
    try:
        return [float(t) for t in s.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad lambda list {s!r}") from exc


def build_parser():
    p = argparse.ArgumentParser(prog="glinverse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--h", type=_positive(float), default=1e-3, help="x step")
        sp.add_argument("--xmax", type=_positive(float), default=2.0, help="interval length")
        sp.add_argument("--tol", type=_positive(float), default=None, help="tolerance")
        return sp

    sp = common(sub.add_parser("validate-bc", help="check B1 = H* B2 H"))
    sp.add_argument("--system", type=Path, required=True)

    sp = common(sub.add_parser("direct", help="solve L Y = lam Y by RK4"))
    sp.add_argument("--system", type=Path, required=True)
    sp.add_argument("--lambda", dest="lam", type=_float_list, default=[0.0])

    sp = common(sub.add_parser("kernel", help="transformation kernel via the Goursat problem"))
    sp.add_argument("--system", type=Path, required=True)

    for name, text in (("inverse", "reconstruct Q from a measure"),
                       ("oracle", "closed-form Q for step measures"),
                       ("roundtrip", "inverse solve checked against the closed form")):
        sp = common(sub.add_parser(name, help=text))
        sp.add_argument("--sigma", type=Path, required=True)
        sp.add_argument("--system", type=Path, default=None,
                        help="free base signature and H (default scalar Dirac)")
        if name != "oracle":
            sp.add_argument("--cond-max", type=_positive(float), default=COND_MAX)

    sp = common(sub.add_parser("parseval", help="Parseval identity for test functions"))
    sp.add_argument("--system", type=Path, required=True)
    sp.add_argument("--sigma", type=Path, default=None)
    sp.add_argument("--f", type=Path, default=None, help="test function JSON")
    sp.add_argument("--g", type=Path, default=None, help="test function JSON")
    sp.add_argument("--Lambda", type=_positive(float), default=400.0)
    sp.add_argument("--lambda-step", type=_positive(float), default=0.01)
    sp.add_argument("--seed", type=int, default=0)

    sp = common(sub.add_parser("sigma-make", help="build a spectral measure"))
    sp.add_argument("--system", type=Path, default=None)
    sp.add_argument("--breakpoints", type=Path, default=None,
                    help='{"x": [...], "mu": [...], "p": int}; omitted gives sigma0')
    sp.add_argument("--nodes-per-cell", type=_positive(int), default=4)
    return p


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------

def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _IOFailure("cannot read input", path=str(path), reason=exc.strerror) from exc
    try:
        return json.loads(text), hashlib.sha256(text.encode()).hexdigest()
    except json.JSONDecodeError as exc:
        raise ValidationError("input is not valid JSON", path=str(path), line=exc.lineno) from exc


class _Run:
    def __init__(self, args):
        self.args = args
        self.inputs = {}
        self.artifacts = []

    def load(self, key, path):
        d, digest = _read_json(path)
        self.inputs[key] = {"path": str(path), "sha256": digest}
        return d

    def write(self, name, text):
        out = self.args.out
        try:
            out.mkdir(parents=True, exist_ok=True)
            with open(out / name, "w", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise _IOFailure("cannot write output", path=str(out / name),
                             reason=exc.strerror) from exc
        self.artifacts.append(name)

    def sidecar(self, diagnostics, **extra):
        params = {k: (str(v) if isinstance(v, Path) else v)
                  for k, v in sorted(vars(self.args).items()) if k not in ("out",)}
        doc = {"command": self.args.command, "version": __version__, "parameters": params,
               "inputs": self.inputs, "artifacts": list(self.artifacts),
               "diagnostics": _jsonable(diagnostics), **_jsonable(extra)}
        self.write(f"{self.args.command}.json", fm.dumps(doc))
        return doc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _system(run, path):
    return fm.system_from_dict(run.load("system", path))


def _measure_and_base(run, args):
    d = run.load("sigma", args.sigma)
    system = _system(run, args.system) if args.system is not None else None
    base = fm.base_from_dict(d, system, args.xmax, args.h)
    return fm.measure_from_dict(d, base.signature), base


def _oracle_potential(base, Sigma):
    if not base.is_free() or Sigma.density is not None:
        raise ValidationError("the closed form covers finitely many jumps on the free base")
    return StepPotential(base.signature, base.system.boundary.H, Sigma.jumps)


def _sup_error(Q, x, ref):
    diff = Q.values - ref.evaluate(x)
    return float(np.linalg.norm(diff, 2, axis=(1, 2)).max())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_validate_bc(run):
    d = run.load("system", run.args.system)
    fm._require(d, "n", "B1", "B2", what="system")
    n = int(d["n"])
    H = fm.complex_from_json(d["H"]) if "H" in d else np.eye(n)
    ok, residual = validate_bc(fm.complex_from_json(d["B1"]), fm.complex_from_json(d["B2"]), H)
    run.sidecar({"ok": ok, "residual": residual})
    print(fm.dumps({"ok": ok, "residual": residual}), end="")
    if not ok:
        raise ValidationError("B1 = H* B2 H fails", residual=residual)


def cmd_direct(run):
    a = run.args
    system = _system(run, a.system)
    for k, lam in enumerate(a.lam):
        sol = solve_ivp(system, lam, a.xmax, a.h)
        run.write(f"Y_{k}.csv", fm.solution_csv(sol))
    run.sidecar({}, lambdas=list(a.lam))


def cmd_kernel(run):
    a = run.args
    system = _system(run, a.system)
    K = goursat_kernel(system, a.xmax, a.h)
    run.write("kernel.csv", fm.kernel_csv(K))
    run.sidecar(K.diagnostics, header=fm.kernel_header(K))


def cmd_inverse(run):
    a = run.args
    Sigma, base = _measure_and_base(run, a)
    res = inverse_solve(base, Sigma, a.xmax, a.h, cond_max=a.cond_max)
    run.write("potential.csv", fm.potential_csv(res.potential))
    run.sidecar(res.diagnostics)
    return res, base, Sigma


def cmd_oracle(run):
    a = run.args
    Sigma, base = _measure_and_base(run, a)
    ref = _oracle_potential(base, Sigma)
    x = uniform_grid(a.xmax, a.h)
    pot = PotentialSpec.sampled(x, ref.evaluate(x))
    run.write("potential.csv", fm.potential_csv(pot))
    run.sidecar({"jumps": len(Sigma.jumps)})


def cmd_roundtrip(run):
    a = run.args
    tol = 1e-4 if a.tol is None else a.tol
    Sigma, base = _measure_and_base(run, a)
    ref = _oracle_potential(base, Sigma)
    res = inverse_solve(base, Sigma, a.xmax, a.h, cond_max=a.cond_max)
    err = _sup_error(res.potential, res.potential.x, ref)
    run.write("potential.csv", fm.potential_csv(res.potential))
    report = {"max_Q_error": err, "tol": tol, "passed": err <= tol}
    run.sidecar(res.diagnostics, report=report)
    print(fm.dumps(report), end="")
    if err > tol:
        raise NumericalError("round trip misses the closed form", max_Q_error=err, tol=tol)


def _random_test_function(rng, n, h, b=1.0, bumps=3):
    """Sum of a few tents with random centres, widths and complex weights."""
    f = None
    for _ in range(bumps):
        comp = int(rng.integers(2 * n))
        c = float(rng.uniform(0.2, 0.8) * b)
        w = float(rng.uniform(0.1, 0.2) * b)
        coef = complex(rng.normal(), rng.normal())
        t = TestFunction.hat(n, comp, c - w, c + w, h, b=b, coef=coef)
        f = t if f is None else f + t
    return f


def cmd_parseval(run):
    a = run.args
    system = _system(run, a.system)
    if a.sigma is not None:
        d = run.load("sigma", a.sigma)
        sigma = fm.measure_from_dict(d, system.signature)
    elif system.potential.is_zero():
        sigma = sigma_free(system.signature)
    elif isinstance(system.potential.source, StepPotential):
        sigma = SpectralMeasure(system.signature, system.potential.source.jumps)
    else:
        raise ValidationError("give --sigma for a system without a known spectral measure")
    rng = np.random.default_rng(a.seed)
    f = (fm.test_function_from_dict(run.load("f", a.f)) if a.f is not None
         else _random_test_function(rng, system.n, a.h))
    g = (fm.test_function_from_dict(run.load("g", a.g)) if a.g is not None
         else _random_test_function(rng, system.n, a.h))
    res = parseval_residual(system, sigma, f, g, a.Lambda, a.lambda_step)
    report = {"space": complex(res.space), "spectral": complex(res.spectral),
              "residual": res.residual, "tail": res.tail}
    if a.tol is not None:
        report["tol"] = a.tol
        report["passed"] = res.residual <= a.tol
    run.write("f.json", fm.dumps(fm.test_function_to_dict(f)))
    run.write("g.json", fm.dumps(fm.test_function_to_dict(g)))
    run.sidecar(res.parts, report=report)
    print(fm.dumps(_jsonable(report)), end="")
    if a.tol is not None and res.residual > a.tol:
        raise NumericalError("Parseval residual above tolerance", residual=res.residual, tol=a.tol)


def cmd_sigma_make(run):
    a = run.args
    if a.system is not None:
        sig = _system(run, a.system).signature
    else:
        sig = BlockSignature.dirac(1)
    if a.breakpoints is None:
        run.write("sigma.json", fm.dumps(fm.measure_to_dict(sigma_free(sig))))
        run.sidecar({})
        return
    bp = fm.breakpoints_from_dict(run.load("breakpoints", a.breakpoints))
    mm = multiplicity_measure(sig, bp.p, bp, nodes_per_cell=a.nodes_per_cell)
    run.write("sigma.json", fm.dumps(fm.measure_to_dict(mm.measure)))
    run.sidecar(mm.diagnostics)


_DISPATCH = {
    "validate-bc": cmd_validate_bc, "direct": cmd_direct, "kernel": cmd_kernel,
    "inverse": cmd_inverse, "oracle": cmd_oracle, "parseval": cmd_parseval,
    "sigma-make": cmd_sigma_make, "roundtrip": cmd_roundtrip,
}


def main(argv=None):
    """Entry point; returns the exit status."""
    args = build_parser().parse_args(argv)
    run = _Run(args)
    try:
        _DISPATCH[args.command](run)
    except ValidationError as exc:
        code, report = EXIT_VALIDATION, exc.report
    except NumericalError as exc:
        code, report = EXIT_NUMERICAL, exc.report
    except _IOFailure as exc:
        code, report = EXIT_IO, exc.report
    else:
        return EXIT_OK
    print(fm.dumps(_jsonable({"command": args.command, **report})), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
