"""s-t min-cut on sparse graphs with floating-point capacities.

Augmenting paths are found with two search trees grown from the terminals,
reused between augmentations and repaired by orphan adoption (the
Boykov-Kolmogorov scheme). The solver kernel is compiled with numba.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from numba import njit

SOURCE = "source"
SINK = "sink"

SATURATION_EPS = 1e-12

_TERMINAL = -1
_ORPHAN = -2
_NONE = -3
_FREE, _S, _T = 0, 1, 2
_INF_D = 1 << 40


@njit(cache=True, nogil=True)
def _bk_kernel(n, first, order, head, rcap, tr_cap, eps):
    tree = np.zeros(n, dtype=np.int8)
    parent = np.full(n, _NONE, dtype=np.int64)
    ts = np.zeros(n, dtype=np.int64)
    dist = np.zeros(n, dtype=np.int64)

    qsize = n + 1
    queue = np.empty(qsize, dtype=np.int64)
    in_queue = np.zeros(n, dtype=np.bool_)
    qhead = 0
    qtail = 0

    orphans = np.empty(qsize, dtype=np.int64)
    ohead = 0
    otail = 0

    for u in range(n):
        if tr_cap[u] > eps:
            tree[u] = _S
        elif tr_cap[u] < -eps:
            tree[u] = _T
        if tree[u] != _FREE:
            parent[u] = _TERMINAL
            dist[u] = 1
            queue[qtail] = u
            qtail = (qtail + 1) % qsize
            in_queue[u] = True

    flow = 0.0
    time = 0
    current = -1
    while True:
        i = -1
        if current >= 0 and tree[current] != _FREE:
            i = current
        else:
            while qhead != qtail:
                cand = queue[qhead]
                qhead = (qhead + 1) % qsize
                in_queue[cand] = False
                if tree[cand] != _FREE:
                    i = cand
                    break
        current = -1
        if i < 0:
            break

        # grow the tree of i until it touches the other tree
        mid = -1
        if tree[i] == _S:
            for idx in range(first[i], first[i + 1]):
                a = order[idx]
                if rcap[a] > eps:
                    j = head[a]
                    if tree[j] == _FREE:
                        tree[j] = _S
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_queue[j]:
                            queue[qtail] = j
                            qtail = (qtail + 1) % qsize
                            in_queue[j] = True
                    elif tree[j] == _T:
                        mid = a
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
        else:
            for idx in range(first[i], first[i + 1]):
                a = order[idx]
                b = a ^ 1
                if rcap[b] > eps:
                    j = head[a]
                    if tree[j] == _FREE:
                        tree[j] = _T
                        parent[j] = b
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_queue[j]:
                            queue[qtail] = j
                            qtail = (qtail + 1) % qsize
                            in_queue[j] = True
                    elif tree[j] == _S:
                        mid = b
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = b
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1

        time += 1
        if mid < 0:
            continue
        current = i

        # augment along source -> x -> y -> sink
        x = head[mid ^ 1]
        y = head[mid]
        bottleneck = rcap[mid]
        k = x
        while parent[k] != _TERMINAL:
            a = parent[k]
            if rcap[a ^ 1] < bottleneck:
                bottleneck = rcap[a ^ 1]
            k = head[a]
        if tr_cap[k] < bottleneck:
            bottleneck = tr_cap[k]
        k = y
        while parent[k] != _TERMINAL:
            a = parent[k]
            if rcap[a] < bottleneck:
                bottleneck = rcap[a]
            k = head[a]
        if -tr_cap[k] < bottleneck:
            bottleneck = -tr_cap[k]

        rcap[mid] -= bottleneck
        rcap[mid ^ 1] += bottleneck
        k = x
        while parent[k] != _TERMINAL:
            a = parent[k]
            nxt = head[a]
            rcap[a] += bottleneck
            rcap[a ^ 1] -= bottleneck
            if rcap[a ^ 1] <= eps:
                parent[k] = _ORPHAN
                orphans[otail] = k
                otail = (otail + 1) % qsize
            k = nxt
        tr_cap[k] -= bottleneck
        if tr_cap[k] <= eps:
            parent[k] = _ORPHAN
            orphans[otail] = k
            otail = (otail + 1) % qsize
        k = y
        while parent[k] != _TERMINAL:
            a = parent[k]
            nxt = head[a]
            rcap[a] -= bottleneck
            rcap[a ^ 1] += bottleneck
            if rcap[a] <= eps:
                parent[k] = _ORPHAN
                orphans[otail] = k
                otail = (otail + 1) % qsize
            k = nxt
        tr_cap[k] += bottleneck
        if tr_cap[k] >= -eps:
            parent[k] = _ORPHAN
            orphans[otail] = k
            otail = (otail + 1) % qsize
        flow += bottleneck

        # adopt orphans
        while ohead != otail:
            o = orphans[ohead]
            ohead = (ohead + 1) % qsize
            t = tree[o]
            best = -1
            best_d = _INF_D
            for idx in range(first[o], first[o + 1]):
                a = order[idx]
                j = head[a]
                if tree[j] != t:
                    continue
                if t == _S:
                    ok = rcap[a ^ 1] > eps
                else:
                    ok = rcap[a] > eps
                if not ok:
                    continue
                d = 0
                k = j
                while True:
                    if ts[k] == time:
                        d += dist[k]
                        break
                    pa = parent[k]
                    d += 1
                    if pa == _TERMINAL:
                        ts[k] = time
                        dist[k] = 1
                        break
                    if pa < 0:
                        d = _INF_D
                        break
                    k = head[pa]
                if d < _INF_D:
                    if d < best_d:
                        best = a
                        best_d = d
                    k = j
                    while ts[k] != time:
                        ts[k] = time
                        dist[k] = d
                        d -= 1
                        k = head[parent[k]]
            if best >= 0:
                parent[o] = best
                ts[o] = time
                dist[o] = best_d + 1
                continue
            for idx in range(first[o], first[o + 1]):
                a = order[idx]
                j = head[a]
                if tree[j] != t:
                    continue
                if t == _S:
                    regrow = rcap[a ^ 1] > eps
                else:
                    regrow = rcap[a] > eps
                if regrow and not in_queue[j]:
                    queue[qtail] = j
                    qtail = (qtail + 1) % qsize
                    in_queue[j] = True
                pa = parent[j]
                if pa >= 0 and head[pa] == o:
                    parent[j] = _ORPHAN
                    orphans[otail] = j
                    otail = (otail + 1) % qsize
            tree[o] = _FREE
            parent[o] = _NONE

    return flow, tree


def _check_caps(*caps):
    for c in caps:
        c = np.asarray(c, dtype=np.float64)
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("capacities must be finite and nonnegative")


class FlowNetwork:
    """Capacitated graph with per-node terminal links.

    >>> g = FlowNetwork()
    >>> a = g.add_node_batch(2)
    >>> g.add_terminal(a, 3.0, 0.0); g.add_terminal(a + 1, 0.0, 5.0)
    >>> g.add_edge(a, a + 1, 2.0, 0.0)
    >>> g.max_flow()
    2.0
    """

    def __init__(self):
        self.n = 0
        self._tails: list[np.ndarray] = []
        self._heads: list[np.ndarray] = []
        self._caps: list[np.ndarray] = []
        self._rev: list[np.ndarray] = []
        self._src = np.zeros(0)
        self._snk = np.zeros(0)
        self._tree = None
        self._flow = None

    def add_node_batch(self, count: int) -> int:
        if count < 0:
            raise ValueError("count must be nonnegative")
        first = self.n
        self.n += int(count)
        self._src = np.concatenate([self._src, np.zeros(count)])
        self._snk = np.concatenate([self._snk, np.zeros(count)])
        self._tree = None
        return first

    def _check_nodes(self, *nodes):
        for u in nodes:
            u = np.asarray(u)
            if u.size and (u.min() < 0 or u.max() >= self.n):
                raise IndexError("node index out of range")

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        self.add_edges([u], [v], [cap], [rev_cap])

    def add_edges(self, us, vs, caps, rev_caps) -> None:
        """Vectorized ``add_edge``; arguments broadcast against each other."""
        us, vs, caps, rev_caps = np.broadcast_arrays(
            np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64),
            np.asarray(caps, dtype=np.float64), np.asarray(rev_caps, dtype=np.float64))
        _check_caps(caps, rev_caps)
        self._check_nodes(us, vs)
        keep = us != vs
        self._tails.append(us[keep].ravel().copy())
        self._heads.append(vs[keep].ravel().copy())
        self._caps.append(caps[keep].ravel().copy())
        self._rev.append(rev_caps[keep].ravel().copy())
        self._tree = None

    def add_terminal(self, u: int, source_cap: float, sink_cap: float) -> None:
        self.add_terminals([u], [source_cap], [sink_cap])

    def add_terminals(self, nodes, source_caps, sink_caps) -> None:
        nodes, source_caps, sink_caps = np.broadcast_arrays(
            np.asarray(nodes, dtype=np.int64), np.asarray(source_caps, dtype=np.float64),
            np.asarray(sink_caps, dtype=np.float64))
        _check_caps(source_caps, sink_caps)
        self._check_nodes(nodes)
        np.add.at(self._src, nodes.ravel(), source_caps.ravel())
        np.add.at(self._snk, nodes.ravel(), sink_caps.ravel())
        self._tree = None

    def terminal_caps(self) -> tuple[np.ndarray, np.ndarray]:
        return self._src.copy(), self._snk.copy()

    def edges(self):
        if not self._tails:
            empty = np.zeros(0)
            return empty.astype(np.int64), empty.astype(np.int64), empty, empty
        return (np.concatenate(self._tails), np.concatenate(self._heads),
                np.concatenate(self._caps), np.concatenate(self._rev))

    def max_flow(self) -> float:
        if self._tree is not None:
            return self._flow
        tails, heads, caps, rev = self.edges()
        m = tails.size
        arc_tail = np.empty(2 * m, dtype=np.int64)
        arc_head = np.empty(2 * m, dtype=np.int64)
        rcap = np.empty(2 * m, dtype=np.float64)
        arc_tail[0::2], arc_tail[1::2] = tails, heads
        arc_head[0::2], arc_head[1::2] = heads, tails
        rcap[0::2], rcap[1::2] = caps, rev
        order = np.argsort(arc_tail, kind="stable")
        first = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(arc_tail, minlength=self.n), out=first[1:])

        base = float(np.minimum(self._src, self._snk).sum())
        tr_cap = self._src - self._snk
        flow, tree = _bk_kernel(self.n, first, order, arc_head, rcap, tr_cap, SATURATION_EPS)
        self._flow = base + float(flow)
        self._tree = tree
        return self._flow

    def _require_solved(self):
        if self._tree is None:
            raise RuntimeError("max_flow() must be called before reading the cut")

    def cut_side(self, u: int) -> str:
        self._require_solved()
        return SOURCE if self._tree[u] == _S else SINK

    def source_set(self) -> np.ndarray:
        """Boolean array, True for nodes on the source side of the minimum cut."""
        self._require_solved()
        return self._tree == _S

    def cut_cost(self, source_side: np.ndarray) -> float:
        """Capacity of the cut defined by ``source_side`` (True = source side)."""
        side = np.asarray(source_side, dtype=bool)
        tails, heads, caps, rev = self.edges()
        cost = float(self._snk[side].sum() + self._src[~side].sum())
        cost += float(caps[side[tails] & ~side[heads]].sum())
        cost += float(rev[side[heads] & ~side[tails]].sum())
        return cost

    # -- DIMACS ----------------------------------------------------------------
    def to_dimacs(self, path) -> None:
        """Nodes ``1..n`` are graph nodes, ``n+1`` the source and ``n+2`` the sink."""
        tails, heads, caps, rev = self.edges()
        s, t = self.n + 1, self.n + 2
        arcs = []
        for u in range(self.n):
            if self._src[u] > 0:
                arcs.append((s, u + 1, self._src[u]))
            if self._snk[u] > 0:
                arcs.append((u + 1, t, self._snk[u]))
        for u, v, c, r in zip(tails.tolist(), heads.tolist(), caps.tolist(), rev.tolist()):
            if c > 0:
                arcs.append((u + 1, v + 1, c))
            if r > 0:
                arcs.append((v + 1, u + 1, r))
        lines = [f"p max {self.n + 2} {len(arcs)}", f"n {s} s", f"n {t} t"]
        lines += [f"a {u} {v} {float(c)!r}" for u, v, c in arcs]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_dimacs(cls, path) -> "FlowNetwork":
        n_total = s = t = None
        arcs = []
        for raw in Path(path).read_text().splitlines():
            parts = raw.split()
            if not parts or parts[0] == "c":
                continue
            if parts[0] == "p":
                if len(parts) != 4 or parts[1] != "max":
                    raise ValueError(f"bad problem line: {raw!r}")
                n_total = int(parts[2])
            elif parts[0] == "n":
                if parts[2] == "s":
                    s = int(parts[1])
                elif parts[2] == "t":
                    t = int(parts[1])
            elif parts[0] == "a":
                arcs.append((int(parts[1]), int(parts[2]), float(parts[3])))
        if n_total is None or s is None or t is None:
            raise ValueError("DIMACS file lacks problem or terminal lines")
        # renumber non-terminal nodes to 0..n-1 in id order
        ids = [i for i in range(1, n_total + 1) if i not in (s, t)]
        index = {v: k for k, v in enumerate(ids)}
        g = cls()
        g.add_node_batch(len(ids))
        for u, v, c in arcs:
            if u == s and v == t:
                raise ValueError("direct source-sink arcs are not representable")
            if u == s:
                g.add_terminal(index[v], c, 0.0)
            elif v == t:
                g.add_terminal(index[u], 0.0, c)
            elif u == t or v == s:
                continue  # arcs into the source or out of the sink never carry flow
            else:
                g.add_edge(index[u], index[v], c, 0.0)
        return g


def brute_force_min_cut(network: FlowNetwork) -> float:
    """Exhaustive minimum over all source/sink partitions; only for tiny graphs."""
    n = network.n
    if n > 20:
        raise ValueError("exhaustive cut enumeration is limited to 20 nodes")
    best = math.inf
    for bits in range(1 << n):
        side = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        best = min(best, network.cut_cost(side))
    return best
