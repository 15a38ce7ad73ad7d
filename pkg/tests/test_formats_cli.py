import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from glinverse import (AdmissibleBreakpoints, BlockSignature, BoundaryMatrix, PotentialSpec,
                       SpectralMeasure, SystemSpec, TestFunction, ValidationError, goursat_kernel,
                       step_potential)
from glinverse import formats as fm
from glinverse.cli import main
from glinverse.glsolve import Density

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(hnp.arrays(complex, hnp.array_shapes(min_dims=0, max_dims=3, max_side=3),
                  elements=st.complex_numbers(allow_nan=False, allow_infinity=False)))
def test_complex_json_round_trip(a):
    back = fm.complex_from_json(json.loads(json.dumps(fm.complex_to_json(a))))
    assert back.shape == a.shape and np.array_equal(back, a)


def test_complex_json_rejects_garbage():
    with pytest.raises(ValidationError):
        fm.complex_from_json([{"re": 1, "imag": 2}])
    with pytest.raises(ValidationError):
        fm.complex_from_json(["x"])


def _systems():
    sig = BlockSignature.dirac(1, 2.0, 0.5)
    H = [[2.0]]
    x = np.linspace(0, 1, 3)
    Q = np.zeros((3, 2, 2), dtype=complex)
    Q[:, 0, 1] = [1j, 2, 3 - 1j]
    Q[:, 1, 0] = Q[:, 0, 1].conj()
    return [SystemSpec.free(sig, H),
            SystemSpec(sig, BoundaryMatrix(H), PotentialSpec.sampled(x, Q)),
            SystemSpec.free(sig, H).with_potential(step_potential(sig, H, [(0.0, [[1.0]])]))]


@pytest.mark.parametrize("k", [0, 1, 2])
def test_system_round_trip(k):
    s = _systems()[k]
    d = json.loads(fm.dumps(fm.system_to_dict(s)))
    t = fm.system_from_dict(d)
    assert t.potential.kind == s.potential.kind
    assert np.array_equal(t.boundary.H, s.boundary.H)
    x = np.linspace(0, 1, 5)
    assert np.array_equal(t.potential.evaluate(x), s.potential.evaluate(x))


def test_system_json_errors():
    with pytest.raises(ValidationError, match="missing"):
        fm.system_from_dict({"n": 1, "B1": [[1]]})
    with pytest.raises(ValidationError, match="self-adjoint"):
        fm.system_from_dict({"n": 1, "B1": [[1]], "B2": [[1]], "H": [[3]]})
    with pytest.raises(ValidationError, match="unknown"):
        fm.system_from_dict({"n": 1, "B1": [[1]], "B2": [[1]], "Q": {"kind": "magic"}})


def test_measure_round_trip():
    sig = BlockSignature.dirac(2)
    lam = np.linspace(-1, 1, 5)
    S = SpectralMeasure(sig, ((0.5, np.diag([1.0, 2.0])),),
                        Density.trapezoid(lam, 0.1 * np.ones((5, 2, 2))))
    T = fm.measure_from_dict(json.loads(fm.dumps(fm.measure_to_dict(S))), sig)
    assert np.array_equal(T.jumps[0][1], S.jumps[0][1])
    assert np.array_equal(T.density.weights, S.density.weights)
    d = fm.measure_to_dict(S)
    del d["density"]["weights"]
    assert np.allclose(fm.measure_from_dict(d, sig).density.weights, S.density.weights)
    base = fm.base_from_dict(d)
    assert base.is_free() and base.n == 2


def test_test_function_and_breakpoints_round_trip():
    f = TestFunction.hat(1, 0, 0.0, 1.0, 0.25, coef=1 + 2j)
    g = fm.test_function_from_dict(json.loads(fm.dumps(fm.test_function_to_dict(f))))
    assert np.array_equal(f.values, g.values) and g.step == 0.25
    bp = AdmissibleBreakpoints([-1.0, 0.0, 0.7], 1)
    assert np.array_equal(fm.breakpoints_from_dict(fm.breakpoints_to_dict(bp)).x, bp.x)


def test_potential_csv_exact_round_trip():
    s = _systems()[1]
    text = fm.potential_csv(s.potential)
    header, table = fm.read_csv(text)
    assert header[:3] == ["x", "re_Q11", "im_Q11"]
    assert np.array_equal(table[:, 0], s.potential.x)
    vals = fm.complex_columns(table, 1).reshape(-1, 2, 2)
    assert np.array_equal(vals, s.potential.values)


def test_kernel_csv_lower_triangle_order():
    s = _systems()[2]
    K = goursat_kernel(s, 0.2, 0.1)
    header, table = fm.read_csv(fm.kernel_csv(K))
    assert table[:, :2].astype(int).tolist() == [[0, 0], [1, 0], [1, 1], [2, 0], [2, 1], [2, 2]]
    assert len(header) == 2 + 2 * 4
    assert np.array_equal(fm.complex_columns(table, 2).reshape(-1, 2, 2)[4], K.values[2, 1])


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

FREE = {"n": 1, "B1": [[{"re": 1, "im": 0}]], "B2": [[{"re": 1, "im": 0}]],
        "H": [[{"re": 1, "im": 0}]], "Q": {"kind": "zero"}}
JUMP = {"jumps": [{"a": 0, "A": [[{"re": 1, "im": 0}]]}], "base": "free"}


@pytest.fixture
def files(tmp_path):
    def put(name, obj):
        p = tmp_path / name
        p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
        return str(p)
    return put


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def test_cli_validate_bc(files, tmp_path, capsys):
    code, out = _run(["validate-bc", "--system", files("s.json", FREE), "--out", str(tmp_path / "o")],
                     capsys)
    assert code == 0 and json.loads(out)["residual"] == 0.0
    bad = dict(FREE, H=[[{"re": 2, "im": 0}]])
    code, out = _run(["validate-bc", "--system", files("b.json", bad), "--out", str(tmp_path / "o")],
                     capsys)
    assert code == 2
    assert '"error": "validation"' in out


def test_cli_direct_first_row(files, tmp_path, capsys):
    out = tmp_path / "o"
    code, _ = _run(["direct", "--system", files("s.json", FREE), "--lambda", "0,-1",
                    "--out", str(out)], capsys)
    assert code == 0
    lines = (out / "Y_0.csv").read_text().splitlines()
    assert lines[0] == "x,re_Y11,im_Y11,re_Y21,im_Y21"
    assert lines[1] == "0,1,0,1,0"
    side = json.loads((out / "direct.json").read_text())
    assert side["parameters"]["h"] == 1e-3 and side["artifacts"] == ["Y_0.csv", "Y_1.csv"]


def test_cli_roundtrip_report(files, tmp_path, capsys):
    out = tmp_path / "o"
    code, text = _run(["roundtrip", "--sigma", files("j.json", JUMP), "--h", "0.005",
                       "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads(text)
    assert rep["max_Q_error"] <= 1e-4 and rep["passed"]
    assert json.loads((out / "roundtrip.json").read_text())["report"] == rep


def test_cli_deterministic(files, tmp_path, capsys):
    sysfile = files("o.json", {**FREE, "Q": {"kind": "oracle", "base": "free",
                                             "jumps": JUMP["jumps"]}})
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert _run(["kernel", "--system", sysfile, "--h", "0.02", "--out", str(out)], capsys)[0] == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    outs = []
    for k in range(2):
        out = tmp_path / f"p{k}"
        _run(["parseval", "--system", sysfile, "--h", "0.01", "--Lambda", "30",
              "--lambda-step", "0.05", "--seed", "3", "--out", str(out)], capsys)
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]


def test_cli_error_codes(files, tmp_path, capsys):
    out = str(tmp_path / "o")
    code, text = _run(["direct", "--system", str(tmp_path / "missing.json"), "--out", out], capsys)
    assert code == 4 and json.loads(text)["error"] == "io"
    code, text = _run(["direct", "--system", files("bad.json", "{nope"), "--out", out], capsys)
    assert code == 2
    code, text = _run(["inverse", "--sigma", files("j.json", JUMP), "--h", "0.05",
                       "--cond-max", "1.0", "--out", out], capsys)
    assert code == 3 and json.loads(text)["error"] == "numerical"


def test_cli_sigma_make_and_inverse(files, tmp_path, capsys):
    nu = np.arange(-3, 4)
    bp = files("bp.json", {"x": (nu + 0.2 * np.sin(nu) / (1 + nu**2)).tolist(), "p": 1})
    sys2 = files("s2.json", {"n": 2, "B1": [[1, 0], [0, 1]], "B2": [[1, 0], [0, 1]],
                             "H": [[1, 0], [0, 1]]})
    out = tmp_path / "m"
    assert _run(["sigma-make", "--breakpoints", bp, "--system", sys2, "--out", str(out)],
                capsys)[0] == 0
    assert json.loads((out / "sigma-make.json").read_text())["diagnostics"]["rank_ok"]
    code, _ = _run(["inverse", "--sigma", str(out / "sigma.json"), "--system", sys2,
                    "--h", "0.02", "--xmax", "1", "--out", str(tmp_path / "i")], capsys)
    assert code == 0
    assert (tmp_path / "i" / "potential.csv").exists()


def test_cli_oracle_matches_closed_form(files, tmp_path, capsys):
    out = tmp_path / "o"
    assert _run(["oracle", "--sigma", files("j.json", JUMP), "--h", "0.5", "--out", str(out)],
                capsys)[0] == 0
    _, table = fm.read_csv((out / "potential.csv").read_text())
    x = table[:, 0]
    assert np.allclose(table[:, 4], -2 / (1 + 2 * x))  # Im Q12 = -2/(1+2x)
