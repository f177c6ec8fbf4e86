"""Independent high-precision reference values, frozen into oracles.json.

Run once; the tests read the JSON and never call this script.
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50


def projected_range():
    return mp.mpf(23000) * (mp.mpf(42) / mp.mpf("45.5")) ** (1 / mp.mpf("1.18"))


def one_degree_latitude():
    # haversine with R = 6371 km between (0, 0) and (1, 0)
    r = mp.mpf(6371000)
    dphi = mp.radians(1)
    return 2 * r * mp.asin(mp.sqrt(mp.sin(dphi / 2) ** 2))


def mode1_cutoff():
    return mp.mpf(1473) / (4 * mp.mpf(75))


def constant_rate_range():
    return mp.mpf(23000) - mp.mpf("10.2") * 100


def piecewise_rate_integral():
    # rate profile knots (s, m/s); integral from t = 35 to t = 270 by a
    # 1 ms Riemann sum (midpoint), then exact trapezoid for comparison
    knots = [(0, 8.0), (60, 12.0), (150, 9.5), (300, 11.0)]

    def rate(t):
        for (t0, v0), (t1, v1) in zip(knots, knots[1:]):
            if t0 <= t <= t1:
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        return knots[-1][1] if t > knots[-1][0] else knots[0][1]

    h = 1e-3
    n = int(round((270 - 35) / h))
    total = 0.0
    for i in range(n):
        total += rate(35 + (i + 0.5) * h)
    return total * h


values = {
    "project_striation_42Hz": float(projected_range()),
    "haversine_one_degree_m": float(one_degree_latitude()),
    "mode1_cutoff_hz": float(mode1_cutoff()),
    "map_time_to_range_100s": float(constant_rate_range()),
    "piecewise_rate_integral_35_270": piecewise_rate_integral(),
}
Path(__file__).with_name("oracles.json").write_text(json.dumps(values, indent=2) + "\n")
print(values)
