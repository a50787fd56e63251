"""Aho-Corasick multi-pattern matcher over raw bytes.

The trie is built in Python and flattened into arrays: a dense 256-entry
transition row for the root and sorted CSR edge lists for every other state.
Scanning runs in a numba kernel that releases the GIL, so one compiled
automaton can be shared by many threads.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np
from numba import njit

from .exceptions import AutomatonError


@njit(nogil=True, cache=True)
def _scan(data, root_next, edge_ptr, edge_byte, edge_to, fail, term, dict_link, counts,
          count_all):
    state = 0
    for i in range(data.shape[0]):
        b = data[i]
        while True:
            if state == 0:
                state = root_next[b]
                break
            lo = edge_ptr[state]
            hi = edge_ptr[state + 1]
            nxt = -1
            while lo < hi:
                mid = (lo + hi) // 2
                eb = edge_byte[mid]
                if eb == b:
                    nxt = edge_to[mid]
                    break
                if eb < b:
                    lo = mid + 1
                else:
                    hi = mid
            if nxt >= 0:
                state = nxt
                break
            state = fail[state]
        o = state if term[state] >= 0 else dict_link[state]
        while o > 0:
            p = term[o]
            if not count_all and counts[p] > 0:
                # every dictionary suffix of o was already recorded with it
                break
            counts[p] += 1
            o = dict_link[o]


class AhoCorasick:
    """Compiled matcher for a fixed, duplicate-free list of byte patterns.

    Pattern ``i`` is reported in column ``i`` of the count arrays.
    """

    def __init__(self, patterns: Sequence[bytes]):
        patterns = [bytes(p) for p in patterns]
        if any(len(p) == 0 for p in patterns):
            raise AutomatonError("empty pattern")
        if len(set(patterns)) != len(patterns):
            raise AutomatonError("duplicate pattern")
        self.patterns = tuple(patterns)
        self._build()

    def __len__(self) -> int:
        return len(self.patterns)

    def _build(self):
        children: list[dict[int, int]] = [{}]
        term = [-1]
        for idx, pat in enumerate(self.patterns):
            s = 0
            for b in pat:
                nxt = children[s].get(b)
                if nxt is None:
                    nxt = len(children)
                    children[s][b] = nxt
                    children.append({})
                    term.append(-1)
                s = nxt
            term[s] = idx

        n_states = len(children)
        fail = [0] * n_states
        dict_link = [0] * n_states
        queue = deque(children[0].values())
        while queue:
            s = queue.popleft()
            for b, t in children[s].items():
                f = fail[s]
                while f and b not in children[f]:
                    f = fail[f]
                cand = children[f].get(b, 0) if (f or s) else 0
                fail[t] = cand if cand != t else 0
                ft = fail[t]
                dict_link[t] = ft if term[ft] >= 0 else dict_link[ft]
                queue.append(t)

        root_next = np.zeros(256, dtype=np.int32)
        for b, t in children[0].items():
            root_next[b] = t
        edge_ptr = np.zeros(n_states + 1, dtype=np.int64)
        edge_ptr[1:] = np.cumsum([len(c) for c in children])
        edge_byte = np.empty(edge_ptr[-1], dtype=np.uint8)
        edge_to = np.empty(edge_ptr[-1], dtype=np.int32)
        for s, c in enumerate(children):
            items = sorted(c.items())
            lo = edge_ptr[s]
            for j, (b, t) in enumerate(items):
                edge_byte[lo + j] = b
                edge_to[lo + j] = t

        self.n_states = n_states
        self._arrays = (root_next, edge_ptr, edge_byte, edge_to,
                        np.asarray(fail, dtype=np.int32), np.asarray(term, dtype=np.int32),
                        np.asarray(dict_link, dtype=np.int32))

    def _run(self, data: bytes, count_all: bool) -> np.ndarray:
        counts = np.zeros(len(self.patterns), dtype=np.int64)
        if len(self.patterns) and len(data):
            buf = np.frombuffer(data, dtype=np.uint8)
            _scan(buf, *self._arrays, counts, count_all)
        return counts

    def count(self, data: bytes) -> np.ndarray:
        """Occurrences of each pattern in ``data``, overlaps included."""
        return self._run(data, True)

    def presence(self, data: bytes) -> np.ndarray:
        """Boolean vector: pattern ``i`` occurs at least once in ``data``."""
        return self._run(data, False) > 0
