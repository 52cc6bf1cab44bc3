"""Pure-NumPy merge loop for agglomerative clustering.

Operation-for-operation mirror of the compiled kernel in ``_agglo_cy.pyx``;
the two must produce bit-identical merge lists (keep expression shapes in
sync when editing either).

Contract: ``D`` is a square float64 distance matrix (squared distances for
ward) with ``inf`` on the diagonal; it is consumed destructively.  Returned
merges are ``(left_label, right_label, raw_distance, size)`` with leaf labels
``0..n-1`` and merge ``t`` labelled ``n+t``.  Pair selection is greedy global
minimum with ties broken by the lexicographically smallest
``(min label, max label)``.
"""

from __future__ import annotations

import numpy as np

METHOD_CODES = {"ward": 0, "average": 1, "complete": 2, "single": 3}


def _recompute_nn(D, alive, labels, nn_slot, nn_dist, s):
    row = np.where(alive, D[s], np.inf)
    row[s] = np.inf
    m = row.min()
    cand = np.flatnonzero(row == m)
    pick = cand[np.argmin(labels[cand])]
    nn_slot[s] = pick
    nn_dist[s] = m


def linkage_merges(D: np.ndarray, method: str) -> list[tuple[int, int, float, int]]:
    code = METHOD_CODES[method]
    n = D.shape[0]
    if n == 1:
        return []
    labels = np.arange(n, dtype=np.int64)
    sizes = np.ones(n, dtype=np.float64)
    alive = np.ones(n, dtype=bool)
    nn_slot = np.empty(n, dtype=np.int64)
    nn_dist = np.empty(n, dtype=np.float64)
    for s in range(n):
        _recompute_nn(D, alive, labels, nn_slot, nn_dist, s)

    merges: list[tuple[int, int, float, int]] = []
    for step in range(n - 1):
        # global pick: smallest (distance, pair-min label, pair-max label)
        alive_idx = np.flatnonzero(alive)
        dists = nn_dist[alive_idx]
        m = dists.min()
        cand = alive_idx[dists == m]
        la = labels[cand]
        lb = labels[nn_slot[cand]]
        pmin = np.minimum(la, lb)
        pmax = np.maximum(la, lb)
        a = int(cand[np.lexsort((pmax, pmin))[0]])
        b = int(nn_slot[a])

        dab = float(D[a, b])
        sa = float(sizes[a])
        sb = float(sizes[b])
        left = int(min(labels[a], labels[b]))
        right = int(max(labels[a], labels[b]))
        merges.append((left, right, dab, int(sa + sb)))

        # Lance-Williams update of the surviving slot `a`
        others = alive_idx[(alive_idx != a) & (alive_idx != b)]
        if others.size:
            da = D[a, others]
            db = D[b, others]
            if code == 0:
                sx = sizes[others]
                new = ((sa + sx) * da + (sb + sx) * db - sx * dab) / ((sa + sb) + sx)
            elif code == 1:
                new = (sa * da + sb * db) / (sa + sb)
            elif code == 2:
                new = np.maximum(da, db)
            else:
                new = np.minimum(da, db)
            D[a, others] = new
            D[others, a] = new

        alive[b] = False
        labels[a] = n + step
        sizes[a] = sa + sb
        if step == n - 2:
            break
        # caches whose partner slot was merged are stale; `a` always is,
        # since its cached partner was `b`
        for s in np.flatnonzero(alive & ((nn_slot == a) | (nn_slot == b))):
            _recompute_nn(D, alive, labels, nn_slot, nn_dist, int(s))
    return merges
