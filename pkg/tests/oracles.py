"""Independent reference computations used by the tests."""

import numpy as np


def functional_graph_periods(D: int, qs):
    """(preperiod, period) for every x in Z_q, q in qs, under x -> D x mod q.

    The maps for all q are laid side by side as one functional graph and
    analysed by pointer jumping, without any number theory: after max(q)
    steps every point sits on a cycle, cycles are labelled by their minimum
    node and measured by counting members, and the remaining points are
    walked forward until they land on a cycle. Returns the concatenated arrays
    in the order of qs.
    """
    qs = np.asarray(list(qs), dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(qs)[:-1]])
    base = np.repeat(offsets, qs)
    local = np.arange(int(qs.sum())) - base
    modulus = np.repeat(qs, qs)
    f = (base + (D * local) % modulus).astype(np.int32)
    jumps = [f]
    while 2 ** (len(jumps) - 1) < qs.max():
        jumps.append(jumps[-1][jumps[-1]])
    on_cycle = np.zeros(f.size, dtype=bool)
    on_cycle[jumps[-1][jumps[-1]]] = True
    # minimum over 2^k consecutive orbit points, k = len(jumps)
    low = np.arange(f.size, dtype=np.int32)
    for j in jumps:
        low = np.minimum(low, low[j])
    period = np.zeros(f.size, dtype=np.int64)
    labels = low[on_cycle]
    counts = np.bincount(labels, minlength=f.size)
    period[on_cycle] = counts[labels]
    # preperiod: walk the off-cycle points forward until they reach a cycle
    pre = np.zeros(f.size, dtype=np.int64)
    active = np.flatnonzero(~on_cycle)
    pos = active.copy()
    while active.size:
        pos = f[pos]
        pre[active] += 1
        hit = on_cycle[pos]
        period[active[hit]] = period[pos[hit]]
        active, pos = active[~hit], pos[~hit]
    return pre, period
