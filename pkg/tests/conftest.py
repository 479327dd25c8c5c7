"""Shared fixtures: bundled topologies, tiny hand-built networks, and
the pinned instance tables used by the acceptance tests."""

from __future__ import annotations

from pathlib import Path

import pytest

from sfcplace import (Scenario, Sfc, TrafficDemand, build_path_catalog,
                      default_vnf_catalog, generate_scenario, load_topology)

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"

# three nodes in a line, two servers on the middle node, cloud at the end
TOY_TOPO = """
[nodes]
0  -  -  -
1  -  -  -
2  -  -  cloud
[servers]
0  0  50
1  1  50
2  1  50
3  2  1000000000
[links]
0  1  100  1.0
1  0  100  1.0
1  2  inf  2.0
2  1  inf  2.0
"""

# two edge nodes joined by a zero-delay link: propagation contributes
# nothing, so delay assertions see processing terms alone
ZERO_TOPO = """
[nodes]
0  -  -  -
1  -  -  -
[servers]
0  0  1000
1  1  1000
[links]
0  1  1000  0.0
1  0  1000  0.0
"""

# (chain_length, mode, demand count); instance seed is index + 1.  Every
# complete-assignment census stays below 1e5 and total load is far under
# edge capacity, so all twenty are ample-edge-capacity instances.
SMALL_EXACT_PATTERNS = (
    (1, "vm-only", 4), (1, "ct-only", 4), (1, "vm-ct", 3), (2, "vm-only", 3),
    (2, "ct-only", 2), (2, "vm-ct", 3), (3, "vm-only", 2), (3, "ct-only", 2),
    (3, "vm-ct", 1), (4, "vm-only", 1), (4, "ct-only", 1), (4, "vm-ct", 1),
    (1, "vm-only", 3), (1, "ct-only", 3), (2, "vm-ct", 2), (2, "vm-only", 2),
    (3, "vm-ct", 2), (3, "ct-only", 1), (4, "vm-only", 1), (2, "ct-only", 3),
)


def _load(path_or_text, tmp_factory=None, name="t.topo"):
    if isinstance(path_or_text, Path):
        model = load_topology(path_or_text)
    else:
        p = tmp_factory.mktemp("topo") / name
        p.write_text(path_or_text)
        model = load_topology(p)
    build_path_catalog(model)
    return model


@pytest.fixture(scope="session")
def net7():
    return _load(DATA / "net7.topo")


@pytest.fixture(scope="session")
def toy_model(tmp_path_factory):
    return _load(TOY_TOPO, tmp_path_factory)


@pytest.fixture(scope="session")
def zero_model(tmp_path_factory):
    return _load(ZERO_TOPO, tmp_path_factory)


def make_scenario(model, chains, demands, *, d_net=5.0, d_dwt=27.5,
                  penalty_fraction=0.1, catalog=None, mode="vm-only"):
    """Hand-build a scenario.

    ``chains`` is a list of ``(src_node, dst_node, vnf_types)`` where
    each vnf type is a catalog key or a VnfType; ``demands`` is a list
    of ``(sfc_index, bandwidth)``.
    """
    catalog = dict(catalog if catalog is not None else default_vnf_catalog())
    sfcs = []
    for i, (src, dst, chain) in enumerate(chains):
        types = tuple(catalog[t] if isinstance(t, str) else t for t in chain)
        sfcs.append(Sfc(i, src, dst, types))
    sc = Scenario(model, sfcs, catalog, mode=mode,
                  chain_length=max(len(s.vnf_chain) for s in sfcs),
                  rng_seed=0, d_net=d_net, d_dwt=d_dwt,
                  penalty_fraction=penalty_fraction)
    for s in sfcs:
        s.admissible_paths = tuple(p.id for p in model.paths_between(s.src, s.dst))
        s.d_max = sum(t.delay_max for t in s.vnf_chain) + d_net
        s.d_hat_max = s.d_max + len(s.vnf_chain) * d_dwt
        s.penalty_rate = penalty_fraction * sum(t.cloud_price for t in s.vnf_chain)
    for did, (si, bw) in enumerate(demands):
        sfcs[si].demands.append(TrafficDemand(did, si, float(bw)))
    sc.reindex()
    return sc


def tiny_instance(model, length, mode, seed, k):
    """A generated scenario restricted to its first ``k`` demand ids."""
    sc = generate_scenario(model, chain_length=length, mode=mode, seed=seed)
    ids = sorted(d.id for d in sc.all_demands())[:k]
    return sc, ids
