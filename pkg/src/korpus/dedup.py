"""MinHash/LSH near-duplicate detection.

Shingles are lowercased word n-grams. Each shingle is hashed with sha1
truncated to the low hash_bits bits, then permuted by seeded affine maps
(a*x + b) mod p where p is the largest prime below 2**hash_bits. Banding
follows the standard LSH construction; (bands, rows) are chosen by
minimizing a weighted false-positive/false-negative integral at the
configured threshold. Band buckets are candidates only: a merge still
requires the signature estimate to clear the threshold.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from random import Random
from typing import Iterable, Sequence

import numpy as np

from .corpus_io import Document
from .errors import ValidationError

# largest primes below 2**32 and 2**64
_PRIMES = {32: (1 << 32) - 5, 64: (1 << 64) - 59}

MinHashSignature = tuple  # values: num_perm unsigned hash_bits-bit ints


@dataclass
class DedupConfig:
    num_perm: int = 256
    threshold: float = 0.95
    hash_bits: int = 64
    shingle_n: int = 5
    seed: int = 0
    false_positive_weight: float = 0.5
    false_negative_weight: float = 0.5

    def __post_init__(self):
        if self.num_perm < 1:
            raise ValidationError("num_perm must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError("threshold must be in (0, 1)")
        if self.hash_bits not in _PRIMES:
            raise ValidationError("hash_bits must be 32 or 64")
        if self.shingle_n < 1:
            raise ValidationError("shingle_n must be >= 1")


@dataclass
class BandPlan:
    bands: int
    rows: int
    false_positive_weight: float = 0.5
    false_negative_weight: float = 0.5


@dataclass
class DuplicateClusters:
    clusters: list[list[str]]  # multi-member clusters, members in input order
    kept: list[str]            # input order; set semantics, order kept for output stability
    dropped: list[str]
    plan: BandPlan


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def shingle(text: str, n: int = 5) -> set[str]:
    """Lowercased word n-gram set; shorter-than-n texts give one window, empty gives none."""
    words = text.lower().split()
    if not words:
        return set()
    if len(words) < n:
        return {" ".join(words)}
    return {" ".join(words[i:i + n]) for i in range(len(words) - n + 1)}


@lru_cache(maxsize=32)
def _permutations(num_perm: int, hash_bits: int, seed: int) -> tuple:
    p = _PRIMES[hash_bits]
    rng = Random(seed)
    return tuple((rng.randrange(1, p), rng.randrange(0, p)) for _ in range(num_perm))


def _base_hash(sh: str, hash_bits: int) -> int:
    # low bits of the sha1 digest: last hash_bits/8 bytes, big-endian
    d = hashlib.sha1(sh.encode("utf-8")).digest()
    return int.from_bytes(d[-(hash_bits // 8):], "big")


def minhash(shingles: Iterable[str], cfg: DedupConfig) -> MinHashSignature:
    """Signature of a shingle set. Empty set gives the all-max sentinel."""
    perms = _permutations(cfg.num_perm, cfg.hash_bits, cfg.seed)
    sentinel = (1 << cfg.hash_bits) - 1
    hs = [_base_hash(s, cfg.hash_bits) for s in shingles]
    if not hs:
        return (sentinel,) * cfg.num_perm
    p = _PRIMES[cfg.hash_bits]
    return tuple(min((a * x + b) % p for x in hs) for a, b in perms)


def estimate_jaccard(a: Sequence[int], b: Sequence[int]) -> float:
    """Fraction of agreeing signature positions."""
    if len(a) != len(b):
        raise ValidationError(f"signature length mismatch: {len(a)} vs {len(b)}")
    return sum(x == y for x, y in zip(a, b)) / len(a)


def _plan_cost(b: int, r: int, threshold: float, fpw: float, fnw: float, xs) -> float:
    probs = 1.0 - (1.0 - xs ** r) ** b
    below = xs <= threshold
    fp = probs[below].sum() / len(xs)
    fn = (1.0 - probs[~below]).sum() / len(xs)
    return fpw * fp + fnw * fn


def plan_bands(cfg: DedupConfig, samples: int = 1000) -> BandPlan:
    """Exhaustive search over b*r <= num_perm minimizing the weighted FP+FN integral.

    FP(t) integrates the collision probability below the threshold, FN(t) the
    miss probability above it; both by midpoint rule over `samples` points.
    Ties resolve to the smallest (b, r) in search order.
    """
    xs = (np.arange(samples) + 0.5) / samples
    fpw, fnw = cfg.false_positive_weight, cfg.false_negative_weight
    best = None
    for b in range(1, cfg.num_perm + 1):
        for r in range(1, cfg.num_perm // b + 1):
            cost = _plan_cost(b, r, cfg.threshold, fpw, fnw, xs)
            if best is None or cost < best[0]:
                best = (cost, b, r)
    return BandPlan(bands=best[1], rows=best[2],
                    false_positive_weight=fpw, false_negative_weight=fnw)


def _signature_of_text(text: str, cfg: DedupConfig) -> MinHashSignature:
    return minhash(shingle(text, cfg.shingle_n), cfg)


def compute_signatures(texts: Sequence[str], cfg: DedupConfig, threads: int = 1) -> list:
    """Signatures in input order; order-preserving regardless of thread count."""
    if threads <= 1:
        return [_signature_of_text(t, cfg) for t in texts]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda t: _signature_of_text(t, cfg), texts, chunksize=8))


def _band_key(sig: Sequence[int], lo: int, hi: int) -> bytes:
    return hashlib.blake2b(struct.pack("<%dQ" % (hi - lo), *sig[lo:hi]), digest_size=16).digest()


def dedup_corpus(docs: Iterable[Document], cfg: DedupConfig | None = None,
                 threads: int = 1) -> DuplicateClusters:
    """Cluster near-duplicates; the earliest document of each cluster is kept.

    Deterministic for fixed (cfg, input order) at any thread count: only
    signature computation is parallel and it preserves order.
    """
    cfg = cfg or DedupConfig()
    docs = list(docs)
    ids = [d.id for d in docs]
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"duplicate document id: {i!r}")
        seen.add(i)

    plan = plan_bands(cfg)
    sigs = compute_signatures([d.text for d in docs], cfg, threads)

    uf = UnionFind(len(docs))
    for band in range(plan.bands):
        lo = band * plan.rows
        hi = lo + plan.rows
        buckets: dict[bytes, list[int]] = {}
        for i, sig in enumerate(sigs):
            buckets.setdefault(_band_key(sig, lo, hi), []).append(i)
        for members in buckets.values():
            if len(members) < 2:
                continue
            for ai in range(len(members) - 1):
                x = members[ai]
                for y in members[ai + 1:]:
                    if uf.find(x) == uf.find(y):
                        continue
                    if estimate_jaccard(sigs[x], sigs[y]) >= cfg.threshold:
                        uf.union(x, y)

    groups: dict[int, list[int]] = {}
    for i in range(len(docs)):
        groups.setdefault(uf.find(i), []).append(i)

    clusters = []
    drop: set[int] = set()
    for members in sorted(groups.values(), key=lambda m: m[0]):
        if len(members) > 1:
            clusters.append([ids[i] for i in members])
            drop.update(members[1:])
    kept = [ids[i] for i in range(len(docs)) if i not in drop]
    dropped = [ids[i] for i in range(len(docs)) if i in drop]
    return DuplicateClusters(clusters=clusters, kept=kept, dropped=dropped, plan=plan)
