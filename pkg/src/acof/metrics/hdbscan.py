"""HDBSCAN on small dense point clouds.

Pipeline: core distances -> mutual reachability -> dense Prim MST ->
single-linkage merge tree -> condensed tree -> excess-of-mass selection.
Merges that share a height are condensed as one split, so tied
mutual-reachability edges never create zero-lifetime clusters.
The root cluster is eligible for selection, so a cloud with no real split
comes back as one cluster (when it is large enough).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE = -1
# distances are floored here before inverting, so duplicate points give a finite lambda
MIN_DISTANCE = 1e-12


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def core_distances(D: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbour, the point itself counting as the first."""
    k = min(min_samples, len(D))
    return np.sort(D, axis=1)[:, k - 1]


def mutual_reachability(D: np.ndarray, core: np.ndarray) -> np.ndarray:
    return np.maximum(D, np.maximum(core[:, None], core[None, :]))


def prim_mst(M: np.ndarray) -> list[tuple[int, int, float]]:
    """Dense O(n^2) Prim. Returns n-1 edges (u, v, weight)."""
    n = len(M)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1)
    in_tree[0] = True
    best[:] = M[0]
    parent[:] = 0
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        edges.append((int(parent[v]), v, float(best[v])))
        in_tree[v] = True
        closer = (~in_tree) & (M[v] < best)
        best[closer] = M[v][closer]
        parent[closer] = v
    return edges


def single_linkage(edges: list[tuple[int, int, float]], n: int) -> np.ndarray:
    """Merge table with rows (left, right, distance, size); node ids >= n are merges."""
    order = sorted(range(len(edges)), key=lambda i: (edges[i][2], i))
    uf_parent = list(range(2 * n - 1))
    size = [1] * n + [0] * (n - 1)

    def find(x):
        while uf_parent[x] != x:
            uf_parent[x] = uf_parent[uf_parent[x]]
            x = uf_parent[x]
        return x

    Z = np.zeros((n - 1, 4))
    for row, i in enumerate(order):
        a, b, w = edges[i]
        ra, rb = find(a), find(b)
        node = n + row
        uf_parent[ra] = uf_parent[rb] = node
        size[node] = size[ra] + size[rb]
        Z[row] = (ra, rb, w, size[node])
    return Z


@dataclass(frozen=True)
class CondensedTree:
    """Rows (parent, child, lambda, child_size); cluster ids start at n (root)."""

    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    child_size: np.ndarray
    n_points: int

    @property
    def clusters(self) -> list[int]:
        ids = set(self.parent.tolist()) | {c for c in self.child.tolist() if c >= self.n_points}
        return sorted(ids)


def condense_tree(Z: np.ndarray, n: int, min_cluster_size: int) -> CondensedTree:
    root = 2 * n - 2

    def children(node):
        left, right = Z[node - n, 0], Z[node - n, 1]
        return int(left), int(right)

    def size(node):
        return 1 if node < n else int(Z[node - n, 3])

    def leaves(node):
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x < n:
                out.append(x)
            else:
                stack.extend(children(x))
        return out

    def pieces(node):
        # merges at the same height form one n-ary split
        w = Z[node - n, 2]
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if x >= n and Z[x - n, 2] == w:
                stack.extend(reversed(children(x)))
            else:
                out.append(x)
        return out

    rows = []
    relabel = {root: n}
    next_label = n + 1
    queue = [root]
    while queue:
        node = queue.pop(0)
        lam = 1.0 / max(Z[node - n, 2], MIN_DISTANCE)
        label = relabel[node]
        parts = pieces(node)
        big = [c for c in parts if size(c) >= min_cluster_size]
        for c in parts:
            if size(c) < min_cluster_size:
                rows.extend((label, leaf, lam, 1) for leaf in leaves(c))
            elif len(big) >= 2:
                relabel[c] = next_label
                rows.append((label, next_label, lam, size(c)))
                next_label += 1
                queue.append(c)
            else:
                relabel[c] = label
                queue.append(c)
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return CondensedTree(arr[:, 0].astype(int), arr[:, 1].astype(int), arr[:, 2], arr[:, 3].astype(int), n)


def stabilities(tree: CondensedTree) -> dict[int, float]:
    n = tree.n_points
    birth = {n: 0.0}
    for c, lam in zip(tree.child, tree.lam):
        if c >= n:
            birth[int(c)] = float(lam)
    stab = {c: 0.0 for c in tree.clusters}
    for p, lam, sz in zip(tree.parent, tree.lam, tree.child_size):
        stab[int(p)] += (float(lam) - birth[int(p)]) * int(sz)
    return stab


def select_clusters(tree: CondensedTree, stab: dict[int, float]) -> list[int]:
    """Excess of mass: keep a cluster unless its children's best total beats it."""
    n = tree.n_points
    kids: dict[int, list[int]] = {c: [] for c in tree.clusters}
    for p, c in zip(tree.parent, tree.child):
        if c >= n:
            kids[int(p)].append(int(c))
    best = {}
    chosen = {}
    # child ids are always larger than their parent's
    for c in sorted(tree.clusters, reverse=True):
        sub = sum(best[k] for k in kids[c])
        if kids[c] and sub > stab[c]:
            best[c] = sub
            chosen[c] = [x for k in kids[c] for x in chosen[k]]
        else:
            best[c] = stab[c]
            chosen[c] = [c]
    return sorted(chosen[n]) if tree.clusters else []


def cluster_members(tree: CondensedTree, cluster: int) -> list[int]:
    n = tree.n_points
    kids: dict[int, list[int]] = {}
    for p, c in zip(tree.parent, tree.child):
        kids.setdefault(int(p), []).append(int(c))
    out, stack = [], [cluster]
    while stack:
        x = stack.pop()
        for c in kids.get(x, []):
            if c < n:
                out.append(c)
            else:
                stack.append(c)
    return sorted(out)


def labels_from_selection(tree: CondensedTree, selected: list[int]) -> np.ndarray:
    labels = np.full(tree.n_points, NOISE)
    groups = sorted((cluster_members(tree, c) for c in selected), key=lambda m: m[0])
    for lab, members in enumerate(groups):
        labels[members] = lab
    return labels


def hdbscan(points, min_cluster_size: int = 10, min_samples: int = 5) -> np.ndarray:
    """Cluster label per point, ``-1`` for noise."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(X)
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    if n < max(min_cluster_size, 2):
        return np.full(n, NOISE)
    D = pairwise_distances(X)
    M = mutual_reachability(D, core_distances(D, min_samples))
    Z = single_linkage(prim_mst(M), n)
    tree = condense_tree(Z, n, min_cluster_size)
    return labels_from_selection(tree, select_clusters(tree, stabilities(tree)))
