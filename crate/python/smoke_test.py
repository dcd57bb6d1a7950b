"""Smoke test for the ksnbc_py extension module.

Build it first, e.g. `pip install --no-build-isolation -e crates/python`.
"""

import math
import os
import subprocess
import sys
import tempfile

import ksnbc_py as k


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)
    print(f"ok  {msg}")


def main():
    grid = k.Grid([32, 32])
    check(grid.dim == 2 and len(grid) == 1024, "grid shape")

    params = k.ModelParams(chi=1.0, a=1.0, mu=1.0, alpha=1.0, beta=1.0, tau=1, p=1.3, dim=2)
    cls = params.classify()
    check(cls["verdict"] == "GuaranteedBounded", f"classification {cls['verdict']}")

    try:
        k.ModelParams(chi=1.0, a=1.0, mu=1.0, alpha=1.0, beta=0.0, tau=1, p=1.0, dim=2)
    except ValueError as e:
        check("p > 1" in str(e) and "beta" in str(e), "validation lists every violation")
    else:
        raise AssertionError("invalid parameters accepted")

    check(abs(k.mu0_3d(1.0, 1.0, 1.0) - 26.5) < 1e-12, "mu0_3d table value")
    check(k.mu_critical_pe(2, 5.0, 2.0) == 0.0, "mu_critical_pe vanishes in 2D")

    # steady state u = a/mu, v = alpha a/(beta mu) survives a step without boundary flux
    stepper = k.Stepper(grid, boundary_flux=False)
    u, v = stepper.step(params, k.Field.constant(grid, 1.0), k.Field.constant(grid, 1.0), 1e-3)
    check(max(abs(x - 1.0) for x in u.values()) < 1e-12, "constant steady state preserved")

    centers = grid.centers()
    bump = [2.0 * math.exp(-((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.04) for x, y in centers]
    stepper = k.Stepper(grid, backend="spectral")
    run = stepper.run(params, k.Field(grid, bump), k.Field.constant(grid, 0.0), horizon=1.0)
    check(run.status == "Completed", f"run finished: {run.status} after {run.steps} steps")
    series = run.series()
    check(len(series["t"]) == len(series["sup_u"]) > 16, "series columns")
    check(run.verdict("mass")["status"] in ("Bounded", "Growing"), "verdict available")

    ladder = k.moser_ladder(run.final_u(), 2.0, 6)
    check(all(b >= a for a, b in zip(ladder, ladder[1:])), "moser ladder non-decreasing")

    nbc = k.NbcParams(mu=1.0, q=2.0, p=1.9)
    line = k.Grid([128])
    blow = k.Stepper(line).run(nbc, k.Field.constant(line, 20.0), k.Field.constant(line, 0.0), horizon=10.0)
    check(blow.status == "BlowUp", "supercritical scalar problem blows up")

    fit = k.fit_inequality("gny", 0.5, seed=3, count=20, cells=[16, 32])
    check(len(fit["resolutions"]) == 2, "inequality fit on two grids")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "nbc.toml")
        with open(cfg, "w") as f:
            f.write("[nbc]\nmu = 1.0\nq = 2.0\np = 1.9\n[grid]\ncells = [64]\n"
                    "[initial]\nkind = \"constant\"\nvalue = 20.0\n[time]\nhorizon = 1.0\n")
        code = k.cli(["--out", os.path.join(tmp, "out"), "nbc", cfg])
        check(code == 2, "cli exit code 2 on blow-up")
        check(k.cli(["report", os.path.join(tmp, "out")]) == 0, "report verifies checksums")

    print("all checks passed")


if __name__ == "__main__":
    try:
        main()
    except AssertionError as e:
        print(f"FAIL {e}", file=sys.stderr)
        sys.exit(1)
