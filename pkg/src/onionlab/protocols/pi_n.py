"""Mixing against a network adversary with fixed-size server-to-server packets.

Users occupy node ids ``0..N-1`` and the processors follow them. Every
processor-to-processor link carries exactly ``k`` onions in each switching
round: real onions are topped up with padding dummies that the receiving
processor recognises and discards. When no link overflows, link volumes do
not depend on who talks to whom.

The entry processor of an onion is drawn from its sender's randomness and the
exit processor from its recipient's, so the user-to-processor links are also
input independent.
"""

from __future__ import annotations

import numpy as np

from .. import rng as rngmod
from .base import DUMMY, MESSAGE, Plan, Protocol, check_positive_int, form_planned
from .params import ConfigError


def _digits(x, base, width):
    """Base-``base`` digits of ``x``, most significant first, along a new last axis."""
    x = np.asarray(x, dtype=np.int64)
    powers = base ** np.arange(width - 1, -1, -1, dtype=np.int64)
    return (x[..., None] // powers) % base


def butterfly_paths(entry, exit, B: int, H: int) -> np.ndarray:
    """Digit-fixing routes, one row of ``H`` node ids per (entry, exit) pair."""
    width = H - 1
    size = B ** width
    entry = np.atleast_1d(np.asarray(entry, dtype=np.int64))
    exit = np.atleast_1d(np.asarray(exit, dtype=np.int64))
    if ((entry < 0) | (entry >= size) | (exit < 0) | (exit >= size)).any():
        raise ValueError(f"processor id out of range [0, {size})")
    powers = B ** np.arange(width - 1, -1, -1, dtype=np.int64)
    src, dst = _digits(entry, B, width), _digits(exit, B, width)
    out = np.empty(entry.shape + (H,), dtype=np.int64)
    out[..., 0] = entry
    cur = src.copy()
    for step in range(width):
        cur[..., step] = dst[..., step]
        out[..., step + 1] = cur @ powers
    return out


def butterfly_path(entry: int, exit: int, B: int, H: int) -> list[int]:
    return [int(x) for x in butterfly_paths([entry], [exit], B, H)[0]]


def _pad_links(hop_from, hop_to, k, n_from, n_to):
    """Real-onion counts per link and the dummies needed to bring each link up to ``k``."""
    counts = np.zeros((n_from, n_to), dtype=np.int64)
    np.add.at(counts, (hop_from, hop_to), 1)
    return counts, np.maximum(k - counts, 0)


def _dummy_rows(need, creator_base, target_base, start):
    """Expand a per-link dummy count matrix into (creator, path, start) rows."""
    a, b = np.nonzero(need)
    reps = need[a, b]
    creators = np.repeat(a, reps) + creator_base
    targets = np.repeat(b, reps) + target_base
    return creators, targets, np.full(len(creators), start, dtype=np.int64)


class _PaddedMix(Protocol):
    def validate_input(self, sigma):
        super().validate_input(sigma)
        self.require_simple(sigma)

    def make_parties(self, plan, ctx):
        parties = super().make_parties(plan, ctx)
        form_planned(plan, ctx, parties)
        return parties

    def _assemble(self, sigma, processor_paths, padding, packet, load_rounds):
        """Common plan layout: messages first, then dummies in (round, creator, target) order."""
        N = self.params.N
        n_proc = self.n_processors
        hops = processor_paths.shape[1]
        recipients = np.array([row[0][1] for row in sigma.parties], dtype=np.int64)
        width = hops + 1
        mpaths = np.concatenate([processor_paths + N, recipients[:, None]], axis=1)

        d_creator, d_target, d_start = [], [], []
        for rnd, need in padding:
            c, t, s = _dummy_rows(need, N, N, rnd)
            d_creator.append(c)
            d_target.append(t)
            d_start.append(s)
        d_creator = np.concatenate(d_creator) if d_creator else np.zeros(0, np.int64)
        d_target = np.concatenate(d_target) if d_target else np.zeros(0, np.int64)
        d_start = np.concatenate(d_start) if d_start else np.zeros(0, np.int64)
        D = len(d_creator)
        dpaths = np.full((D, width), -1, dtype=np.int64)
        dpaths[:, 0] = d_target
        dpaths[:, 1] = d_target

        return Plan(N + n_proc, N, hops + 1,
                    np.concatenate([np.arange(N, dtype=np.int64), d_creator]),
                    np.concatenate([mpaths, dpaths]),
                    np.concatenate([np.full(N, MESSAGE, np.int8), np.full(D, DUMMY, np.int8)]),
                    [row[0][0] for row in sigma.parties] + [None] * D,
                    servers=tuple(range(N, N + n_proc)), load_rounds=load_rounds,
                    start=np.concatenate([np.ones(N, dtype=np.int64), d_start]),
                    extra={"packet": packet})

    def _entry_exit(self, seed, n_proc):
        """Entry per sender and exit per recipient, each from that user's own stream."""
        N = self.params.N
        entry = rngmod.substream(seed, self.name, "entry").integers(0, n_proc, N)
        exit_ = rngmod.substream(seed, self.name, "exit").integers(0, n_proc, N)
        return entry, exit_


class BasicNetworkMix(_PaddedMix):
    """Three rounds: user to entry server, entry to exit server in padded packets, exit to recipient."""

    name = "pi_n"

    def check_params(self):
        p = self.params
        check_positive_int("n", p.n)
        if p.N != p.n * p.n:
            raise ConfigError("N", f"expected N = n^2 = {p.n * p.n}, got {p.N}")
        check_positive_int("packet size", p.packet_size_basic)

    @property
    def n_processors(self):
        return self.params.n

    def plan(self, sigma, seed) -> Plan:
        n, k = self.params.n, self.params.packet_size_basic
        entry, exit_ = self._entry_exit(seed, n)
        recipients = np.array([row[0][1] for row in sigma.parties], dtype=np.int64)
        hops = np.stack([entry, exit_[recipients]], axis=1)
        counts, need = _pad_links(hops[:, 0], hops[:, 1], k, n, n)
        plan = self._assemble(sigma, hops, [(2, need)], k, (1, 2))
        plan.extra["overflow"] = int((counts > k).sum())
        plan.extra["link_counts"] = [counts]
        return plan


class ButterflyMix(_PaddedMix):
    """Route through a B-ary butterfly of height H over B^(H-1) processors."""

    name = "pi_n_plus"

    def check_params(self):
        p = self.params
        check_positive_int("B", p.B, 2)
        check_positive_int("H", p.H, 2)
        check_positive_int("packet size", p.packet_size_butterfly)

    @property
    def n_processors(self):
        return self.params.processors

    def plan(self, sigma, seed) -> Plan:
        p = self.params
        B, H, k = p.B, p.H, p.packet_size_butterfly
        n_proc = p.processors
        entry, exit_ = self._entry_exit(seed, n_proc)
        recipients = np.array([row[0][1] for row in sigma.parties], dtype=np.int64)
        hops = butterfly_paths(entry, exit_[recipients], B, H)
        padding, all_counts, overflow = [], [], 0
        for step in range(H - 1):
            # neighbours at this step differ only in the step-th digit; pad all B of them
            frm, to = hops[:, step], hops[:, step + 1]
            counts, _ = _pad_links(frm, to, k, n_proc, n_proc)
            adj = butterfly_adjacency(B, H, step)
            need = np.where(adj, np.maximum(k - counts, 0), 0)
            padding.append((step + 2, need))
            all_counts.append(counts)
            overflow += int((counts > k).sum())
        plan = self._assemble(sigma, hops, padding, k, tuple(range(2, H + 1)))
        plan.extra["overflow"] = overflow
        plan.extra["link_counts"] = all_counts
        return plan


def butterfly_adjacency(B: int, H: int, step: int) -> np.ndarray:
    """adj[u, v] is True when u and v agree on every base-B digit except digit ``step``."""
    width = H - 1
    digits = _digits(np.arange(B ** width), B, width)
    keep = np.ones(width, dtype=bool)
    keep[step] = False
    return (digits[:, None, keep] == digits[None, :, keep]).all(axis=-1)
