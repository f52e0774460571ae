import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lfpp.field import GridSpec, circle_average, mollify, sample_field

# pinned so the statistical suites are reproducible run to run
STATS_SEED = 20260801
N_STAT_REPLICAS = 200
COV_EPS = 1.0 / 32.0
COV_PROBES = (1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0)


@pytest.fixture(scope="session")
def grid256() -> GridSpec:
    return GridSpec(n=256, half_width=2.0, pad_factor=4)


@pytest.fixture(scope="session")
def grid128() -> GridSpec:
    return GridSpec(n=128, half_width=2.0, pad_factor=4)


@pytest.fixture(scope="session")
def field_statistics(grid256):
    """Circle-average increments and mollified covariance probes over 200
    replicas; shared by the field tests and the acceptance suite."""
    ts = (0.5, 1.0, 2.0)
    increments = {t: [] for t in ts}
    probe_nodes = [grid256.node_of((x, 0.0)) for x in COV_PROBES]
    origin_node = grid256.node_of((0.0, 0.0))
    at_probe = {x: [] for x in COV_PROBES}
    at_origin = []
    for i in range(N_STAT_REPLICAS):
        fld = sample_field(grid256, STATS_SEED + i)
        for t in ts:
            increments[t].append(
                circle_average(fld, (0.0, 0.0), math.exp(-t))
                - circle_average(fld, (0.0, 0.0), 1.0)
            )
        mfld = mollify(fld, COV_EPS)
        at_origin.append(mfld.values[origin_node])
        for x, node in zip(COV_PROBES, probe_nodes):
            at_probe[x].append(mfld.values[node])
    return {
        "increment_var": {t: float(np.var(increments[t], ddof=1)) for t in ts},
        "cov": {
            x: float(np.cov(at_probe[x], at_origin, ddof=1)[0, 1]) for x in COV_PROBES
        },
    }
