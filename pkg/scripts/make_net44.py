#!/usr/bin/env python3
"""Generate the bundled 44-node topology file.

Places 44 edge nodes across a regional footprint (South Carolina), wires
them with a nearest-neighbour construction topped up to exactly 70
bidirectional links (140 directed), attaches 13 gateway nodes to a
distant cloud region (Northern Virginia), and puts 8 servers on every
edge node.  Deterministic for a fixed seed; the repository ships the
output of ``--seed 7``.

Usage:
    python scripts/make_net44.py --out data/net44.topo
"""

from __future__ import annotations

import argparse
import math

import numpy as np

N_NODES = 44
N_PAIRS = 70
N_GATEWAYS = 13
SERVERS_PER_NODE = 8
EDGE_CAPACITY = 5000
SERVER_CAPACITY = 1000
CLOUD_CAPACITY = "1e9"
CLOUD_COORD = (38.9519, -77.4480)
LAT_RANGE = (32.2, 35.0)
LON_RANGE = (-82.5, -79.5)


def _dist(a, b):
    # haversine, km; only used for ranking candidate links
    la1, lo1, la2, lo2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    h = (math.sin((la2 - la1) / 2) ** 2
         + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2)
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def build(seed: int):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    coords = [(round(float(rng.uniform(*LAT_RANGE)), 4),
               round(float(rng.uniform(*LON_RANGE)), 4)) for _ in range(N_NODES)]

    ranked = sorted(
        ((i, j) for i in range(N_NODES) for j in range(i + 1, N_NODES)),
        key=lambda ij: (_dist(coords[ij[0]], coords[ij[1]]), ij))
    pairs: set[tuple[int, int]] = set()
    # each node to its 2 nearest neighbours first (keeps min degree >= 2)
    for i in range(N_NODES):
        near = sorted(range(N_NODES), key=lambda j: (_dist(coords[i], coords[j]), j))
        for j in near[1:3]:
            pairs.add((min(i, j), max(i, j)))
    # stitch components together, then pad with the next shortest candidates
    def components():
        seen, comps = set(), []
        adj = {i: set() for i in range(N_NODES)}
        for a, b in pairs:
            adj[a].add(b)
            adj[b].add(a)
        for i in range(N_NODES):
            if i in seen:
                continue
            stack, comp = [i], set()
            while stack:
                n = stack.pop()
                if n in comp:
                    continue
                comp.add(n)
                stack.extend(adj[n] - comp)
            seen |= comp
            comps.append(comp)
        return comps

    comps = components()
    while len(comps) > 1:
        best = min(((a, b) for a in comps[0] for b in comps[1]),
                   key=lambda ab: (_dist(coords[ab[0]], coords[ab[1]]), ab))
        pairs.add((min(best), max(best)))
        comps = components()
    for cand in ranked:
        if len(pairs) >= N_PAIRS:
            break
        pairs.add(cand)
    if len(pairs) != N_PAIRS:
        raise SystemExit(f"construction yielded {len(pairs)} pairs, want {N_PAIRS}")

    gateways = sorted(int(g) for g in rng.choice(N_NODES, size=N_GATEWAYS, replace=False))
    return coords, sorted(pairs), gateways


def emit(coords, pairs, gateways, out):
    cloud_id = N_NODES
    lines = [
        "# 44-node regional edge network with one distant cloud region.",
        "# Generated by scripts/make_net44.py (seed 7); delays derive from",
        "# node coordinates at 2/3 c.",
        "",
        "[nodes]",
        "# id  lat      lon      cloud",
    ]
    for i, (lat, lon) in enumerate(coords):
        lines.append(f"{i:<4}  {lat:<8.4f} {lon:<9.4f} -")
    lines.append(f"{cloud_id:<4}  {CLOUD_COORD[0]:<8.4f} {CLOUD_COORD[1]:<9.4f} cloud")
    lines += ["", "[servers]", "# id  node  capacity"]
    sid = 0
    for i in range(N_NODES):
        for _ in range(SERVERS_PER_NODE):
            lines.append(f"{sid:<4}  {i:<4}  {SERVER_CAPACITY}")
            sid += 1
    lines.append(f"{sid:<4}  {cloud_id:<4}  {CLOUD_CAPACITY}")
    lines += ["", "[links]", "# src  dst  capacity  delay_ms (- = from coordinates)"]
    for a, b in pairs:
        lines.append(f"{a:<4}  {b:<4}  {EDGE_CAPACITY}  -")
        lines.append(f"{b:<4}  {a:<4}  {EDGE_CAPACITY}  -")
    for g in gateways:
        lines.append(f"{g:<4}  {cloud_id:<4}  inf  -")
        lines.append(f"{cloud_id:<4}  {g:<4}  inf  -")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="data/net44.topo")
    args = ap.parse_args()
    coords, pairs, gateways = build(args.seed)
    emit(coords, pairs, gateways, args.out)
    print(f"wrote {args.out}: {N_NODES}+1 nodes, {2 * len(pairs)} edge links, "
          f"{len(gateways)} gateways")


if __name__ == "__main__":
    main()
