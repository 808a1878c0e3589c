"""Hypothesis strategies shared by the property tests."""

import numpy as np
from hypothesis import strategies as st

import pathqv as pq


@st.composite
def small_paths(draw, max_level=7, d=1):
    M = draw(st.integers(4, max_level))
    kind = draw(st.sampled_from(["brownian", "linear", "takagi"] if d == 1 else ["brownian"]))
    seed = draw(st.integers(0, 2**32 - 1))
    if kind == "brownian":
        return pq.gen_brownian(seed, M, 1.0, d)
    if kind == "linear":
        slope = draw(st.floats(-2.0, 2.0, allow_nan=False))
        return pq.gen_deterministic("linear", {"slope": slope}, M, 1.0)
    return pq.gen_deterministic("takagi", {}, M, 1.0)


@st.composite
def partitions_on(draw, M, max_interior=12):
    full = 1 << M
    k = draw(st.integers(0, min(full - 1, max_interior)))
    interior = draw(
        st.lists(st.integers(1, full - 1), min_size=k, max_size=k, unique=True)
    )
    idx = np.array(sorted({0, full, *interior}), dtype=np.int64)
    return pq.Partition(idx, M, 1.0)


@st.composite
def nested_partition_pairs(draw, M):
    """(coarse, fine) with coarse indices a subset of fine indices."""
    fine = draw(partitions_on(M, max_interior=14))
    inner = list(fine.indices[1:-1])
    keep = draw(st.lists(st.sampled_from(inner), unique=True) if inner else st.just([]))
    coarse_idx = np.array(sorted({fine.indices[0], fine.indices[-1], *keep}), dtype=np.int64)
    return pq.Partition(coarse_idx, M, 1.0), fine
