"""Writes the 200-row Latvian-shaped fixture used by the tests.

Label rates follow the imbalance of the public extract: fabric ~86%, controls ~56%,
DHW and heating-system installation 5% each. The rare measures favour newer houses, which
rarely need fabric work, so conditioning on their positives does not drag the fabric rate up
and an 800-row balancing plan can bring every label within [0.4, 0.6].
"""

import csv
import pathlib

import numpy as np

SEED = 20240611
N = 200
HERE = pathlib.Path(__file__).resolve().parent

# Upper heating-consumption limits per area band (<=120, <=250, >250 m2); F is open-ended.
LIMITS = {
    "A+": (35, 35, 30),
    "A": (60, 50, 40),
    "B": (75, 65, 60),
    "C": (95, 90, 80),
    "D": (150, 130, 100),
    "E": (180, 150, 125),
}
ORDER = ["A+", "A", "B", "C", "D", "E", "F"]
REGIONS = ["Riga", "Vidzeme", "Kurzeme", "Zemgale", "Latgale"]


def band(area):
    return 0 if area <= 120 else (1 if area <= 250 else 2)


def energy_class(consumption, area):
    b = band(area)
    for cls in ORDER[:-1]:
        if consumption <= LIMITS[cls][b]:
            return cls
    return "F"


def top_k(score, k):
    labels = np.zeros(len(score), dtype=int)
    labels[np.argsort(-score)[:k]] = 1
    return labels


def main():
    rng = np.random.default_rng(SEED)
    year = rng.integers(1950, 1996, N)
    floors = rng.integers(2, 10, N)
    height = np.round(rng.normal(2.7, 0.12, N), 2)
    small = rng.random(N) < 0.12
    reference = np.where(small, rng.uniform(60, 240, N), rng.uniform(400, 5200, N)).round(1)
    total = (reference * rng.uniform(1.08, 1.3, N)).round(1)
    volume = (reference * height * rng.uniform(0.95, 1.05, N)).round(1)
    underground = rng.random(N) < 0.7
    mansard = rng.random(N) < 0.15
    roof_floor = rng.random(N) < 0.35
    consumption = (rng.normal(112, 25, N) + 0.8 * (1990 - year)).clip(70, 260).round(1)
    initial = [energy_class(c, a) for c, a in zip(consumption, reference)]
    gain = rng.choice([1, 2, 3], N, p=[0.25, 0.55, 0.2])
    final = [ORDER[max(0, ORDER.index(c) - int(g))] for c, g in zip(initial, gain)]
    region = rng.choice(REGIONS, N, p=[0.35, 0.15, 0.2, 0.15, 0.15])

    z = lambda v: (v - v.mean()) / v.std()
    noise = lambda s: rng.normal(0, s, N)
    fabric = top_k(-0.8 * z(year) + 0.6 * z(consumption) + noise(1.0), 172)
    controls = top_k(0.7 * z(floors) + 0.5 * z(consumption) + 0.6 * roof_floor + noise(1.0), 112)
    dhw = top_k(1.6 * z(year) + 1.2 * underground - 0.6 * z(consumption) + noise(0.5), 10)
    heating = top_k(0.8 * z(gain.astype(float)) + 1.4 * mansard + 2.0 * z(year) + noise(0.5), 10)

    columns = [
        "Region", "Initial year of exploitation", "Building Total Area", "Room volume",
        "Average floor height", "Reference area", "Above-ground floors", "Underground floor",
        "Mansard", "Roof floor", "Initial energy class", "Energy consumption before",
        "Energy class after", "Carrying out construction works",
        "Reconstruction of engineering systems", "Water heating system", "Heat installation",
    ]
    yn = lambda b: "Yes" if b else "No"
    with open(HERE / "latvia_fixture.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for i in range(N):
            w.writerow([
                region[i], year[i], total[i], volume[i], height[i], reference[i], floors[i],
                yn(underground[i]), yn(mansard[i]), yn(roof_floor[i]), initial[i], consumption[i],
                final[i], fabric[i], controls[i], dhw[i], heating[i],
            ])


if __name__ == "__main__":
    main()
