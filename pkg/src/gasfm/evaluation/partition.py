from __future__ import annotations

import hashlib

DEFAULT_PARTITION_SEED = 0


def partition_label(customer_id: str, seed: int = DEFAULT_PARTITION_SEED) -> int:
    """0 or 1, a function of (customer_id, seed) only."""
    digest = hashlib.sha256(f"{seed}\x1f{customer_id}".encode()).digest()
    return digest[0] & 1


def partition_customers(ids, seed: int = DEFAULT_PARTITION_SEED) -> tuple[list[str], list[str]]:
    """Split customer ids into two disjoint, exhaustive parts by a seeded hash."""
    ids = list(ids)
    if not ids:
        raise ValueError("cannot partition an empty dataset")
    parts: tuple[list[str], list[str]] = ([], [])
    for cid in ids:
        parts[partition_label(cid, seed)].append(cid)
    return parts
