"""Fixed 9-joint upper-body graph.

Joint order is canonical everywhere in the package: Neck, then the right
arm shoulder-to-wrist, the left arm, and the two hips. The graph is a
tree rooted conceptually at the neck, which keeps hop distances unique
and puts the two arms at hop >= 3 from each other.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

N_JOINTS = 9

JOINT_NAMES = (
    "Neck",
    "RShoulder",
    "RElbow",
    "RWrist",
    "LShoulder",
    "LElbow",
    "LWrist",
    "RHip",
    "LHip",
)

NECK, R_SHOULDER, R_ELBOW, R_WRIST, L_SHOULDER, L_ELBOW, L_WRIST, R_HIP, L_HIP = range(9)

WRISTS = (R_WRIST, L_WRIST)

# Tree edges: neck-to-shoulders, arm chains, neck-to-hips.
EDGES = (
    (NECK, R_SHOULDER),
    (R_SHOULDER, R_ELBOW),
    (R_ELBOW, R_WRIST),
    (NECK, L_SHOULDER),
    (L_SHOULDER, L_ELBOW),
    (L_ELBOW, L_WRIST),
    (NECK, R_HIP),
    (NECK, L_HIP),
)


@dataclass(frozen=True, eq=False)
class SkeletonGraph:
    """Immutable graph: edge list, normalized adjacency, hop distances."""

    edges: tuple[tuple[int, int], ...]
    adjacency_hat: np.ndarray  # (9, 9) float64, D^-1/2 (A+I) D^-1/2
    hop: np.ndarray  # (9, 9) int, shortest-path edge counts

    @property
    def n_joints(self) -> int:
        return self.hop.shape[0]


@dataclass(frozen=True)
class HopPartition:
    """Sources of one target split by hop range, each ordered by (hop, joint index)."""

    target: int
    self_nodes: tuple[int, ...]
    short: tuple[int, ...]  # hops 1..2
    long: tuple[int, ...]  # hops >= 3

    @property
    def ordered_sources(self) -> tuple[int, ...]:
        return self.self_nodes + self.short + self.long


def _bfs_hops(n: int, adj: list[list[int]], start: int) -> list[int]:
    dist = [-1] * n
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def build_skeleton() -> SkeletonGraph:
    """Construct the fixed upper-body graph with hops and normalized adjacency."""
    n = N_JOINTS
    adj_lists: list[list[int]] = [[] for _ in range(n)]
    a = np.zeros((n, n))
    for i, j in EDGES:
        adj_lists[i].append(j)
        adj_lists[j].append(i)
        a[i, j] = a[j, i] = 1.0

    hop = np.array([_bfs_hops(n, adj_lists, s) for s in range(n)], dtype=np.int64)
    if (hop < 0).any():
        raise AssertionError("skeleton graph must be connected")

    a_loop = a + np.eye(n)
    d_inv_sqrt = 1.0 / np.sqrt(a_loop.sum(axis=1))
    adjacency_hat = a_loop * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return SkeletonGraph(edges=EDGES, adjacency_hat=adjacency_hat, hop=hop)


def hop_partition(graph: SkeletonGraph, target: int) -> HopPartition:
    """Split all joints into self / short-range (hop 1-2) / long-range (hop >= 3)."""
    if not 0 <= target < graph.n_joints:
        raise ValueError(f"target joint {target} out of range")
    hops = graph.hop[target]
    order = sorted(range(graph.n_joints), key=lambda j: (int(hops[j]), j))
    short = tuple(j for j in order if 1 <= hops[j] <= 2)
    long = tuple(j for j in order if hops[j] >= 3)
    return HopPartition(target=target, self_nodes=(target,), short=short, long=long)
