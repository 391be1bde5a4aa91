"""Single-obstacle magnetic AB: peak |u - v|^2 against flux, with the fitted amplitude.

    python3 demos/interference_sweep.py
"""

import math

from ab_wavelab.experiments import fig1_spec, fit_interference_law, magnetic_ab_single


def main():
    reps = []
    print(f"{'alpha':>8} {'measured':>10} {'predicted':>10} {'rel err':>8}")
    for j in range(9):
        a = j * math.pi / 8
        r = magnetic_ab_single(fig1_spec(a))
        reps.append(r)
        print(f"{a:8.4f} {r.measured_peak:10.5f} {r.predicted:10.5f} {r.relative_error:8.4f}")
    c, r2 = fit_interference_law(reps)
    print(f"fit: peak = {c:.4f} sin^2(alpha/2), R^2 = {r2:.5f}")


if __name__ == "__main__":
    main()
