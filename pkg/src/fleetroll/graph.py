"""Street network as a directed unit-weight graph with exact all-pairs distances.

Nodes are 1-indexed. Distances are precomputed once per graph (BFS from every
node) because the planners query them millions of times; the graph is immutable
afterwards and safe to share across workers.
"""

from __future__ import annotations

from collections import deque
from pathlib import Path


class GraphError(Exception):
    pass


class InvalidEdge(GraphError):
    pass


class NotStronglyConnected(GraphError):
    pass


class SameNode(GraphError):
    pass


class SameSector(GraphError):
    pass


class SectorsUnassigned(GraphError):
    pass


_UNREACHED = -1


class CityGraph:
    """Directed street network with a shortest-path oracle and optional sectors.

    All tie-breaking (next hops, boundary entry points) is by smallest node
    index so that every downstream computation is reproducible.
    """

    def __init__(self, n, edges, coords=None, sectors=None, _precomputed=None):
        if n < 1:
            raise InvalidEdge(f"node count must be >= 1, got {n}")
        self.n = n
        self.edges = tuple((int(i), int(j)) for i, j in edges)
        self.coords = dict(coords) if coords else None
        self.sectors = list(sectors) if sectors is not None else None
        if self.sectors is not None:
            if len(self.sectors) != n + 1:
                raise GraphError("sector list must have one entry per node (1-indexed)")
            if any(self.sectors[v] < 1 for v in range(1, n + 1)):
                raise GraphError("sector assignment must cover every node")
        if _precomputed is not None:
            self.adj, self._dist = _precomputed
        else:
            self.adj = self._build_adjacency()
            self._dist = self._all_pairs_bfs()
        self._next_cache: dict[tuple[int, int], int] = {}

    def _build_adjacency(self):
        adj = [[] for _ in range(self.n + 1)]
        seen = set()
        for i, j in self.edges:
            if not (1 <= i <= self.n) or not (1 <= j <= self.n):
                raise InvalidEdge(f"edge ({i}, {j}) has an endpoint outside 1..{self.n}")
            if (i, j) in seen:
                continue
            seen.add((i, j))
            adj[i].append(j)
        for row in adj:
            row.sort()
        return adj

    def _all_pairs_bfs(self):
        dist = [None] * (self.n + 1)
        for src in range(1, self.n + 1):
            row = [_UNREACHED] * (self.n + 1)
            row[src] = 0
            q = deque([src])
            while q:
                u = q.popleft()
                du = row[u] + 1
                for v in self.adj[u]:
                    if row[v] == _UNREACHED:
                        row[v] = du
                        q.append(v)
            for tgt in range(1, self.n + 1):
                if row[tgt] == _UNREACHED:
                    raise NotStronglyConnected(f"node {tgt} is unreachable from node {src}")
            dist[src] = row
        return dist

    def distance(self, i: int, j: int) -> int:
        return self._dist[i][j]

    def neighbors(self, i: int) -> list[int]:
        return self.adj[i]

    def next_hop(self, i: int, j: int) -> int:
        """Neighbor of i on a shortest path to j; smallest index on ties."""
        if i == j:
            raise SameNode(f"next_hop({i}, {j}) undefined for identical nodes")
        key = (i, j)
        hop = self._next_cache.get(key)
        if hop is not None:
            return hop
        want = self._dist[i][j] - 1
        row = self._dist
        for k in self.adj[i]:
            if row[k][j] == want:
                self._next_cache[key] = k
                return k
        raise GraphError(f"no shortest-path successor from {i} to {j}")  # unreachable

    def shortest_path(self, i: int, j: int) -> list[int]:
        """Node sequence from i to j inclusive, following next_hop."""
        path = [i]
        cur = i
        while cur != j:
            cur = self.next_hop(cur, j)
            path.append(cur)
        return path

    def sector_of(self, v: int) -> int:
        if self.sectors is None:
            raise SectorsUnassigned("graph has no sector assignment")
        return self.sectors[v]

    def with_sectors(self, assignment) -> "CityGraph":
        """Copy of this graph carrying a node -> sector mapping.

        assignment may be a dict {node: sector} or a list indexed by node
        (entry 0 ignored). The distance tables are shared, not recomputed.
        """
        if isinstance(assignment, dict):
            sectors = [0] * (self.n + 1)
            for v, k in assignment.items():
                sectors[v] = k
        else:
            sectors = list(assignment)
        g = CityGraph(self.n, self.edges, coords=self.coords, sectors=sectors,
                      _precomputed=(self.adj, self._dist))
        return g

    def next_hop_in_partition(self, v_start: int, v_end: int) -> int:
        """Boundary entry point: the node of sector(v_end) on a shortest
        v_start -> v_end path that is closest to v_start (smallest index on ties)."""
        if self.sectors is None:
            raise SectorsUnassigned("graph has no sector assignment")
        ks, ke = self.sectors[v_start], self.sectors[v_end]
        if ks == ke:
            raise SameSector(f"{v_start} and {v_end} are both in sector {ks}")
        total = self._dist[v_start][v_end]
        drow = self._dist[v_start]
        best = None
        best_d = None
        for v in range(1, self.n + 1):
            if self.sectors[v] != ke:
                continue
            dv = drow[v]
            if dv + self._dist[v][v_end] != total:
                continue
            if best_d is None or dv < best_d:
                best, best_d = v, dv
        if best is None:
            raise GraphError(f"no shortest path from {v_start} enters sector {ke}")  # unreachable
        return best


def build_graph(n: int, edges, coords=None) -> CityGraph:
    """Validate and build a CityGraph; rejects graphs that are not strongly connected."""
    return CityGraph(n, edges, coords=coords)


def grid_graph(k: int) -> CityGraph:
    """k x k grid with bidirectional edges; node (row r, col c) -> (r-1)*k + c.

    Integer coordinates (col, row) are attached so the Euclidean transport
    metric is available on generated grids.
    """
    if k < 1:
        raise InvalidEdge("grid size must be >= 1")
    edges = []
    coords = {}
    for r in range(1, k + 1):
        for c in range(1, k + 1):
            v = (r - 1) * k + c
            coords[v] = (float(c - 1), float(r - 1))
            if c < k:
                edges.append((v, v + 1))
                edges.append((v + 1, v))
            if r < k:
                edges.append((v, v + k))
                edges.append((v + k, v))
    return CityGraph(k * k, edges, coords=coords)


def load_graph(path) -> CityGraph:
    """Read the plain-text edge list: first line "n m", then one "i j" per line."""
    text = Path(path).read_text().split()
    if len(text) < 2:
        raise GraphError(f"{path}: expected a header line 'n m_edges'")
    n, m = int(text[0]), int(text[1])
    vals = text[2:]
    if len(vals) < 2 * m:
        raise GraphError(f"{path}: expected {m} edges, found {len(vals) // 2}")
    edges = [(int(vals[2 * i]), int(vals[2 * i + 1])) for i in range(m)]
    return build_graph(n, edges)


def save_graph(graph: CityGraph, path) -> None:
    lines = [f"{graph.n} {len(graph.edges)}"]
    lines += [f"{i} {j}" for i, j in graph.edges]
    Path(path).write_text("\n".join(lines) + "\n")
