"""Smoke test for the Python extension.

Build first:
    cargo build --release -p semiclassical-py --features extension-module
then run:
    python3 python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    for profile in ("release", "debug"):
        for name in ("libsemiclassical_py.so", "libsemiclassical_py.dylib", "semiclassical_py.dll"):
            lib = ROOT / "target" / profile / name
            if lib.exists():
                spec = importlib.util.spec_from_file_location("semiclassical_py", lib)
                mod = importlib.util.module_from_spec(spec)
                spec.loader.exec_module(mod)
                return mod
    sys.exit("extension not built; see the module docstring")


def main():
    sc = load()
    assert "torus_irrational_flow" in sc.CATALOG

    g = sc.infinite_gramian([[-1.0, 0.0], [0.0, -2.0]])
    assert abs(g[0][0] - 0.5) < 1e-14 and abs(g[1][1] - 0.25) < 1e-14

    point = sc.Component.point("point", [[-1.0]], 0.5)
    cycle = sc.Component.cycle("cycle", [[1.0]], 1.5, [(1, 0, 0.5, 0.0)])
    report = sc.pressure([point, cycle], "stable")
    assert report["argmax"] == ["point", "cycle"], report
    assert report["eligible"] == ["cycle"], report
    assert abs(point.profile()["eigenvalue"] - 1.5) < 1e-12

    theta, f, residual = sc.cycle_density_samples([1 + math.cos(2 * math.pi * i / 256) for i in range(256)])
    assert abs(max(f) - 1.0) < 1e-12 and residual < 1e-10

    field = sc.Field("torus_irrational_flow", killing_mean=2.0, killing_terms=[(1, 0, 1.0, 0.0)])
    out = sc.eigen(field, 1e-2, 32)
    assert abs(out["lambda"] - 2.0) < 0.05, out["lambda"]

    sink_source = sc.Field("circle_sink_source", pi=3.0, killing_mean=1.0, killing_terms=[(1, 0, 0.5, 0.0)])
    shoot, direct = sc.rate(sink_source, (0.25, 0.0), 0.2)
    assert abs(shoot - direct) <= 1e-3 * shoot
    est, se, exact = sc.feynman_kac(sink_source, (0.3, 0.0), 0.5, 0.05, n_paths=20000, seed=1, grid=256)
    assert abs(est - exact) <= 4 * se, (est, se, exact)

    try:
        sc.Component.point("flat", [[0.0]], 1.0)
    except ValueError as e:
        assert "flat" in str(e)
    else:
        raise AssertionError("non-hyperbolic component accepted")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = pathlib.Path(tmp) / "run.toml"
        cfg.write_text("")
        assert sc.run_cli(["check", "--config", str(cfg), "--out", str(pathlib.Path(tmp) / "out")]) == 0

    print("python smoke test passed")


if __name__ == "__main__":
    main()
