#!/usr/bin/env python3
"""Regenerates the bundled CSVs under data/.

The 58-county domain is a synthetic stand-in with a county-like adjacency
structure: seeded points in the unit square connected by their Gabriel graph
(which contains the Euclidean minimum spanning tree, so it is connected).
Populations are log-uniform with a block of zero-population cells in the
last group to exercise the missing-data path. The 10-site dataset is a small
smoke-test input for the fit command.

Deterministic; run from the repository root:  python3 scripts/make_bundled_data.py
"""

import numpy as np

N_SITES = 58
N_GROUPS = 3
N_TIME = 10


def gabriel_edges(points):
    n = len(points)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            mid = 0.5 * (points[i] + points[j])
            r2 = 0.25 * np.sum((points[i] - points[j]) ** 2)
            ok = True
            for k in range(n):
                if k in (i, j):
                    continue
                if np.sum((points[k] - mid) ** 2) < r2 - 1e-12:
                    ok = False
                    break
            if ok:
                edges.append((i + 1, j + 1))
    return edges


def write_county58(rng):
    points = rng.uniform(size=(N_SITES, 2))
    edges = gabriel_edges(points)
    with open("data/county58_adjacency.csv", "w") as f:
        f.write("site_a,site_b\n")
        for a, b in edges:
            f.write(f"{a},{b}\n")
    with open("data/county58_sites.csv", "w") as f:
        f.write("site_id,index\n")
        for i in range(N_SITES):
            f.write(f"county_{i + 1:02d},{i + 1}\n")
    print(f"county58: {len(edges)} edges, mean degree "
          f"{2 * len(edges) / N_SITES:.2f}")


def write_population_table(rng):
    pop = np.exp(rng.uniform(np.log(1e2), np.log(1e4),
                             size=(N_SITES, N_GROUPS, N_TIME)))
    pop = np.round(pop)
    # A handful of sites have no group-3 population in some or all periods.
    empty_sites = rng.choice(N_SITES, size=6, replace=False)
    for s in empty_sites[:3]:
        pop[s, 2, :] = 0.0
    for s in empty_sites[3:]:
        start = int(rng.integers(0, N_TIME - 2))
        pop[s, 2, start:] = 0.0
    with open("data/synthetic_population.csv", "w") as f:
        f.write("site_id,group,time,population\n")
        for i in range(N_SITES):
            for k in range(N_GROUPS):
                for t in range(N_TIME):
                    f.write(f"{i + 1},{k + 1},{t + 1},{pop[i, k, t]:.0f}\n")
    print(f"population table: {int((pop == 0).sum())} zero cells")


def write_smoke10(rng):
    n, ng, nt = 10, 2, 5
    edges = [(i, i + 1) for i in range(1, n)] + [(1, 3), (4, 7), (6, 9)]
    with open("data/smoke10_adjacency.csv", "w") as f:
        f.write("site_a,site_b\n")
        for a, b in edges:
            f.write(f"{a},{b}\n")
    base = rng.normal(300.0, 40.0, size=(ng, nt)).cumsum(axis=1) / np.arange(
        1, nt + 1)
    z = rng.normal(0.0, 15.0, size=(n, ng, nt))
    pop = np.round(np.exp(rng.uniform(np.log(1e4), np.log(1e6),
                                      size=(n, ng, nt))))
    missing = {(2, 1, 3), (7, 1, 0)}  # (site, group, time), 0-based
    with open("data/smoke10_data.csv", "w") as f:
        f.write("site_id,group,time,rate,population\n")
        for i in range(n):
            for k in range(ng):
                for t in range(nt):
                    if (i, k, t) in missing:
                        f.write(f"{i + 1},{k + 1},{t + 1},,0\n")
                        continue
                    noise = rng.normal(0.0, 100.0 / np.sqrt(pop[i, k, t] / 1e5))
                    rate = base[k, t] + z[i, k, t] + noise
                    f.write(f"{i + 1},{k + 1},{t + 1},{rate:.6f},"
                            f"{pop[i, k, t]:.0f}\n")


def main():
    rng = np.random.default_rng(58123)
    write_county58(rng)
    write_population_table(rng)
    write_smoke10(rng)


if __name__ == "__main__":
    main()
