"""Smoke test for the `nll` extension module.

Build it first:  pip install --no-build-isolation -e crates/python
"""

import math
import sys

import nll


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    failures = []

    def check(name, ok, detail=""):
        print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
        if not ok:
            failures.append(name)

    cfg = nll.QuadratureConfig(tol=1e-8)

    # Fourier symbol: L cos(xi x) = |xi|^{2s} cos(xi x) for the fractional kernel
    s, xi, x = 0.4, 1.3, 0.7
    k = nll.Kernel.fractional(1, s)
    u = nll.Field.named(1, s, kind="cosine", xi=[xi])
    r = nll.pv_integrate(u, k, [x], cfg)
    want = abs(xi) ** (2 * s) * math.cos(xi * x)
    check("symbol", close(r["value"], want, 1e-6), f"{r['value']:.10f} vs {want:.10f}")

    # a Python callable gives the same image as the built-in field
    g = nll.Field.from_callable(1, lambda p: math.cos(xi * p[0]), label="cos", decay=(0.0, 1.0))
    r2 = nll.pv_integrate(g, k, [x], cfg)
    check("callable field", close(r2["value"], r["value"], 1e-7))

    # constant profile equal to the fractional normalization reproduces the fractional kernel
    c = k([1.0])
    iso = nll.Kernel.anisotropic(1, s, 0.5 * c, 2.0 * c, lambda d: c)
    r3 = nll.pv_integrate(u, iso, [x], cfg)
    check("callable kernel", close(r3["value"], r["value"], 1e-7))

    reg = nll.classify(3, 0.5, 1.2)
    check("classify", reg["regime"] == "subcritical-trivial", reg["regime"])
    check("classify supercritical", nll.classify(3, 0.5, 2.0)["regime"] == "supercritical-sharpness")

    t = nll.iterate_exponents(3, 0.5, 1.5, cbar=10.0)
    check("critical constant limit", close(t["constant_limit"], 1000.0, 1e-10), f"{t['constant_limit']!r}")
    check("closed form", t["max_closed_form_error"] <= 1e-12)

    k2 = nll.Kernel.fractional(2, 0.5)
    f, h = nll.Field.bump(2), nll.Field.bump(2).shifted([1.0, 0.0])
    fh, hf = nll.pairing(k2, f, h, 10.0), nll.pairing(k2, h, f, 10.0)
    gap = abs(fh["value"] - hf["value"])
    check("pairing symmetric", gap <= 1e-6 * max(1.0, abs(fh["value"])), f"gap {gap:.2e}")

    cal = nll.calibrate_c(nll.Kernel.fractional(1, 0.25), 4.0, [0.0, 0.5, 1.0, 4.0, 16.0])
    check("calibration", cal["c"] > 0.0, f"c = {cal['c']:.4f}")

    try:
        nll.Kernel.fractional(1, 1.5)
        check("domain error", False)
    except ValueError:
        check("domain error", True)

    print("all passed" if not failures else f"{len(failures)} failed: {failures}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
