"""Smoke test for the fhwpt_py extension module.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import math
import sys
import tempfile
from pathlib import Path

import fhwpt_py as fh


def check(cond, msg):
    if not cond:
        print("FAIL:", msg)
        sys.exit(1)
    print("ok:", msg)


def main():
    l_r, c1, c2 = 38e-6, 22e-9, 147e-9
    t_on, t_off = fh.ton_toff(65e3, l_r, c1, c2)
    check(abs(t_on + t_off - 0.5 / 65e3) < 1e-15, "duty times fill a half period")
    c_eq = fh.equivalent_capacitance(t_off, 65e3, c1, c2)
    check(abs(c_eq / fh.ideal_capacitance(65e3, l_r) - 1) < 1e-9, "equivalent capacitance resonates")

    lo, hi = fh.achievable_band(l_r, c1, c2)
    check(lo < 65e3 and hi > 125e3, f"band {lo:.0f}-{hi:.0f} Hz covers 65-125 kHz")

    sel = fh.select_capacitors(65e3, 125e3, l_r, c2)
    check(c1 <= sel["c_r1_max"], f"22 nF under bound {sel['c_r1_max']:.3e}")
    check(fh.parse_quantity("22nF", "F") == 22e-9, "quantity parsing")

    try:
        fh.ton_toff(500e3, l_r, c1, c2)
        check(False, "out-of-band frequency rejected")
    except RuntimeError:
        check(True, "out-of-band frequency rejected")

    sc = fh.Scenario.from_text(
        "[plant]\npreset = bench\n[receiver rx65]\ntuned = 65kHz\n"
        "[attacker]\ntable = 65kHz\ncalibrate = off\n"
        "[schedule]\nhops = 65kHz@0.5ms\n[sim]\ndecimation = 20\n"
    )
    run = sc.run()
    hops = run.hops()
    check(len(hops) == 1, "one hop")
    h = hops[0]
    check(h["lock_cycles"] is not None and h["lock_cycles"] <= 20, f"locked in {h['lock_cycles']:.1f} cycles")
    check(h["stolen_ratio"] >= 0.65, f"stolen ratio {h['stolen_ratio']:.3f}")
    check(run.violations() == [], "no threshold violations")

    with tempfile.TemporaryDirectory() as d:
        paths = run.write_report(d)
        check(len(paths) == 7, "seven report files")
        trace = Path(d) / "trace.csv"
        check(fh.analyze_trace(str(trace)) == run.metrics_csv(), "analyze reproduces metrics")

    pts = sc.duty_sweep(65e3, [1.0e-6, 1.5e-6, 2.0e-6])
    check(len(pts) == 3 and all(math.isfinite(p[2]) for p in pts), "duty sweep")

    try:
        fh.Scenario.from_text("[plant]\nbogus = 1\n")
        check(False, "bad scenario rejected")
    except ValueError:
        check(True, "bad scenario rejected")
    print("smoke test passed")


if __name__ == "__main__":
    main()
