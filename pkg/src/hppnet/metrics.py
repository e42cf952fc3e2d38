"""Note- and frame-level precision/recall/F1 following the mir_eval conventions."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .data import make_targets

ONSET_TOLERANCE = 0.05
OFFSET_RATIO = 0.2
OFFSET_MIN_TOLERANCE = 0.05
# distances are rounded before comparison so that e.g. 0.05000000001 still hits
_DECIMALS = 4


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, matched: int, n_ref: int, n_est: int) -> "Score":
        if n_ref == 0 and n_est == 0:
            return cls(1.0, 1.0, 1.0)
        p = matched / n_est if n_est else 0.0
        r = matched / n_ref if n_ref else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)

    def as_json(self) -> dict:
        return {"p": self.precision, "r": self.recall, "f1": self.f1}


def compatible_pairs(ref, est, onset_tol: float = ONSET_TOLERANCE, with_offset: bool = False,
                     offset_ratio: float = OFFSET_RATIO,
                     offset_min_tol: float = OFFSET_MIN_TOLERANCE) -> list[list[int]]:
    """For each ref note, the sorted est indices it may be matched with."""
    adj: list[list[int]] = [[] for _ in ref]
    if not ref or not est:
        return adj
    rp = np.array([n.pitch for n in ref])
    ep = np.array([n.pitch for n in est])
    ron = np.array([n.onset_time for n in ref])
    eon = np.array([n.onset_time for n in est])
    ok = rp[:, None] == ep[None, :]
    ok &= np.round(np.abs(ron[:, None] - eon[None, :]), _DECIMALS) <= onset_tol
    if with_offset:
        roff = np.array([n.offset_time for n in ref])
        eoff = np.array([n.offset_time for n in est])
        tol = np.maximum(offset_min_tol, offset_ratio * (roff - ron))
        ok &= np.round(np.abs(roff[:, None] - eoff[None, :]), _DECIMALS) <= tol[:, None]
    for i, j in zip(*np.nonzero(ok)):
        adj[i].append(int(j))
    return adj


def max_matching(adj: list[list[int]], n_right: int) -> list[tuple[int, int]]:
    """Hopcroft-Karp maximum bipartite matching.

    ``adj[i]`` lists the right vertices compatible with left vertex ``i``.
    Vertices are visited in index order so the result is deterministic.
    """
    INF = float("inf")
    n_left = len(adj)
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    dist = [0.0] * n_left

    def bfs() -> bool:
        q = deque()
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0
                q.append(u)
            else:
                dist[u] = INF
        found = False
        while q:
            u = q.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = INF
        return False

    while bfs():
        for u in range(n_left):
            if match_l[u] == -1:
                dfs(u)
    return [(u, v) for u, v in enumerate(match_l) if v != -1]


def note_score(ref, est, onset_tol: float = ONSET_TOLERANCE, with_offset: bool = False,
               offset_ratio: float = OFFSET_RATIO) -> Score:
    adj = compatible_pairs(ref, est, onset_tol, with_offset, offset_ratio)
    matched = len(max_matching(adj, len(est)))
    return Score.from_counts(matched, len(ref), len(est))


def frame_score(ref_roll: np.ndarray, est_roll: np.ndarray) -> Score:
    ref_roll = np.asarray(ref_roll).astype(bool)
    est_roll = np.asarray(est_roll).astype(bool)
    if ref_roll.shape != est_roll.shape:
        raise ValueError(f"roll shapes differ: {ref_roll.shape} vs {est_roll.shape}")
    tp = int(np.sum(ref_roll & est_roll))
    return Score.from_counts(tp, int(ref_roll.sum()), int(est_roll.sum()))


def notes_to_roll(notes, T: int, frame_period: float = 0.02) -> np.ndarray:
    """Binary [T, 88] roll using the same frame rule as the frame targets."""
    return make_targets(notes, T, frame_period).f


def evaluate(ref, est, T: int | None = None, frame_period: float = 0.02) -> dict:
    """All three scores as the JSON-ready dict printed by the CLI."""
    if T is None:
        end = max([n.offset_time for n in list(ref) + list(est)], default=0.0)
        T = int(np.ceil(end / frame_period)) + 1
    frame = frame_score(notes_to_roll(ref, T, frame_period), notes_to_roll(est, T, frame_period))
    return {
        "note": note_score(ref, est).as_json(),
        "note_with_offset": note_score(ref, est, with_offset=True).as_json(),
        "frame": frame.as_json(),
    }


def dumps(scores: dict) -> str:
    return json.dumps(scores, sort_keys=False)

