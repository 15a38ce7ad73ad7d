"""JSON and CSV representations of the package's objects.

Complex numbers are ``{"re": .., "im": ..}`` in JSON and paired re/im columns
in CSV.  Everything here is a pure conversion to and from text or plain
dicts; reading and writing files is left to the command-line front end.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .direct import TestFunction
from .glsolve import BaseSystem, Density, SpectralMeasure
from .linalg import BlockSignature, BoundaryMatrix, PotentialSpec, SystemSpec, ValidationError
from .oracle import StepPotential
from .sigma import AdmissibleBreakpoints

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# complex values
# ---------------------------------------------------------------------------

def complex_to_json(a):
    """Nested lists of ``{"re", "im"}`` pairs for any complex array or scalar."""
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        z = complex(a)
        return {"re": z.real, "im": z.imag}
    return [complex_to_json(x) for x in a]


def complex_from_json(obj):
    """Inverse of :func:`complex_to_json`; bare numbers are read as real."""
    def conv(o):
        if isinstance(o, dict):
            if set(o) - {"re", "im"}:
                raise ValidationError("complex entries need only 're' and 'im' keys",
                                      keys=sorted(o))
            return complex(float(o.get("re", 0.0)), float(o.get("im", 0.0)))
        if isinstance(o, (list, tuple)):
            return [conv(x) for x in o]
        if isinstance(o, (int, float)):
            return complex(o)
        raise ValidationError("cannot read a complex value", value=repr(o))
    return np.asarray(conv(obj), dtype=complex)


def dumps(obj):
    """Deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, indent=1, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _require(d, *keys, what="object"):
    for k in keys:
        if k not in d:
            raise ValidationError(f"{what} is missing the key '{k}'", key=k)


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------

def jumps_to_json(jumps):
    return [{"a": float(a), "A": complex_to_json(A)} for a, A in jumps]


def jumps_from_json(items):
    out = []
    for it in items:
        _require(it, "a", "A", what="jump")
        out.append((float(it["a"]), complex_from_json(it["A"])))
    return out


def system_to_dict(system):
    sig = system.signature
    pot = system.potential
    if pot.kind == "zero":
        q = {"kind": "zero"}
    elif pot.kind == "sampled":
        q = {"kind": "sampled", "x": pot.x.tolist(), "values": complex_to_json(pot.values)}
    elif isinstance(pot.source, StepPotential):
        q = {"kind": "oracle", "jumps": jumps_to_json(pot.source.jumps), "base": "free"}
    else:
        raise ValidationError("only step-function oracles on the free base can be written")
    return {"n": sig.n, "B1": complex_to_json(sig.B1), "B2": complex_to_json(sig.B2),
            "H": complex_to_json(system.boundary.H), "Q": q}


def system_from_dict(d):
    """Build a :class:`SystemSpec` from its JSON dict.

    ``Q`` defaults to zero; ``H`` defaults to the identity.
    """
    _require(d, "n", "B1", "B2", what="system")
    n = int(d["n"])
    sig = BlockSignature(complex_from_json(d["B1"]), complex_from_json(d["B2"]))
    if sig.n != n:
        raise ValidationError("declared n does not match B1", n=n, B1_size=sig.n)
    H = complex_from_json(d["H"]) if "H" in d else np.eye(n)
    q = d.get("Q", {"kind": "zero"})
    kind = q.get("kind", "zero")
    if kind == "zero":
        pot = PotentialSpec.zero(n)
    elif kind == "sampled":
        _require(q, "x", "values", what="sampled potential")
        pot = PotentialSpec.sampled(np.asarray(q["x"], dtype=float), complex_from_json(q["values"]))
    elif kind == "oracle":
        if q.get("base", "free") != "free":
            raise ValidationError("oracle potentials are only available on the free base")
        BoundaryMatrix(H)
        pot = PotentialSpec.oracle(StepPotential(sig, H, jumps_from_json(q.get("jumps", []))), n)
    else:
        raise ValidationError("unknown potential kind", kind=kind)
    return SystemSpec(sig, BoundaryMatrix(H), pot)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def measure_to_dict(Sigma, base="free"):
    d = {"jumps": jumps_to_json(Sigma.jumps), "base": base}
    if Sigma.density is not None:
        den = Sigma.density
        d["density"] = {"lambda": den.lam.tolist(), "Phi": complex_to_json(den.Phi),
                        "weights": den.weights.tolist()}
    return d


def measure_from_dict(d, signature):
    """``SpectralMeasure`` from its dict; density weights default to trapezoid."""
    density = None
    if d.get("density") is not None:
        den = d["density"]
        _require(den, "lambda", "Phi", what="density")
        lam = np.asarray(den["lambda"], dtype=float)
        Phi = complex_from_json(den["Phi"])
        if "weights" in den:
            density = Density(lam, Phi, np.asarray(den["weights"], dtype=float))
        else:
            density = Density.trapezoid(lam, Phi)
    return SpectralMeasure(signature, tuple(jumps_from_json(d.get("jumps", []))), density)


def base_from_dict(d, system=None, x_max=None, h=None):
    """Base system named by the ``base`` entry of a measure dict.

    For ``"free"`` the signature and ``H`` come from ``system``, else from a
    ``"system"`` entry of ``d``, else a Dirac system ``B1 = B2 = I, H = I`` of
    the size of the first jump.  A nested base is
    ``{"system": {...}, "sigma": {...}}`` sampled on ``0, h, ..., x_max``.
    """
    b = d.get("base", "free")
    if b == "free":
        if system is None and "system" in d:
            system = system_from_dict(d["system"])
        if system is None:
            n = 1
            if d.get("jumps"):
                n = complex_from_json(d["jumps"][0]["A"]).shape[0]
            elif d.get("density"):
                n = complex_from_json(d["density"]["Phi"]).shape[-1]
            return BaseSystem.free(BlockSignature.dirac(n))
        return BaseSystem.free(system.signature, system.boundary.H)
    if not isinstance(b, dict):
        raise ValidationError("base must be 'free' or an object", base=repr(b))
    _require(b, "system", "sigma", what="base")
    if x_max is None or h is None:
        raise ValidationError("a non-free base needs a grid (x_max, h)")
    bsys = system_from_dict(b["system"])
    sigma1 = measure_from_dict(b["sigma"], bsys.signature)
    return BaseSystem(bsys, sigma1, float(x_max), float(h))


# ---------------------------------------------------------------------------
# test functions and breakpoints
# ---------------------------------------------------------------------------

def test_function_to_dict(f):
    return {"b": f.b, "grid_step": f.step, "values": complex_to_json(f.values)}


def test_function_from_dict(d):
    _require(d, "b", "grid_step", "values", what="test function")
    return TestFunction(float(d["b"]), float(d["grid_step"]), complex_from_json(d["values"]))


test_function_to_dict.__test__ = False
test_function_from_dict.__test__ = False


def breakpoints_to_dict(bp):
    d = {"x": bp.x.tolist(), "p": bp.p}
    if bp.mu is not None:
        d["mu"] = bp.mu.tolist()
    return d


def breakpoints_from_dict(d):
    _require(d, "x", what="breakpoints")
    return AdmissibleBreakpoints(np.asarray(d["x"], dtype=float), int(d.get("p", 1)),
                                 None if d.get("mu") is None else np.asarray(d["mu"], dtype=float))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _entry_names(rows, cols, prefix):
    names = []
    for r in range(rows):
        for c in range(cols):
            names += [f"re_{prefix}{r + 1}{c + 1}", f"im_{prefix}{r + 1}{c + 1}"]
    return names


def _pairs(a):
    """Flatten trailing axes and interleave re/im columns."""
    a = np.asarray(a, dtype=complex)
    flat = a.reshape(a.shape[0], -1)
    out = np.empty((flat.shape[0], 2 * flat.shape[1]))
    out[:, 0::2] = flat.real
    out[:, 1::2] = flat.imag
    return out


def _csv(header, table):
    buf = io.StringIO()
    np.savetxt(buf, table, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def matrix_series_csv(x, values, label="x", prefix="Y"):
    """CSV with column ``label`` then re/im pairs of each matrix entry (row-major)."""
    values = np.asarray(values)
    rows, cols = values.shape[1], values.shape[2]
    table = np.column_stack([np.asarray(x, dtype=float), _pairs(values)])
    return _csv([label] + _entry_names(rows, cols, prefix), table)


def solution_csv(sol):
    return matrix_series_csv(sol.grid, sol.values, "x", "Y")


def potential_csv(pot):
    return matrix_series_csv(pot.x, pot.values, "x", "Q")


def transform_csv(tf):
    """Columns ``lambda, re(F_1), im(F_1), ...``."""
    v = np.asarray(tf.values)
    names = []
    for k in range(v.shape[1]):
        names += [f"re_F{k + 1}", f"im_F{k + 1}"]
    return _csv(["lambda"] + names, np.column_stack([tf.lambda_grid, _pairs(v)]))


def kernel_csv(K):
    """Lower triangle ``j <= i`` in row-major order: ``i, j`` then re/im entries."""
    i, j = np.tril_indices(K.N)
    m = K.m
    table = np.column_stack([i, j, _pairs(K.values[i, j])])
    header = ["i", "j"] + _entry_names(m, m, "K")
    buf = io.StringIO()
    fmt = ["%d", "%d"] + [FLOAT_FMT] * (2 * m * m)
    np.savetxt(buf, table, fmt=fmt, delimiter=",", header=",".join(header), comments="")
    return buf.getvalue()


def kernel_header(K):
    return {"h": K.h, "N": K.N, "n": K.n}


def read_csv(text):
    """Parse CSV text produced here; returns ``(header, table)``."""
    lines = text.splitlines()
    header = lines[0].split(",")
    table = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    return header, table


def complex_columns(table, start):
    """Recombine re/im column pairs beginning at column ``start``."""
    return table[:, start::2] + 1j * table[:, start + 1::2]
