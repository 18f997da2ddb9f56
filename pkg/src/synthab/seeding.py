"""Hierarchical seed derivation.

Seeds are derived by hashing their parent seed with a path of labels, so a
session's randomness depends only on *which* session it is and never on the
order in which a worker pool happens to schedule it.
"""

from __future__ import annotations

import hashlib
import random

_MASK = (1 << 63) - 1


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from an arbitrary path of labels.

    >>> derive_seed(7, "shop-a", 3, "control") == derive_seed(7, "shop-a", 3, "control")
    True
    """
    text = "\x1f".join(repr(p) if not isinstance(p, str) else p for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _MASK


def session_seed(run_seed: int, shop_id: str, agent_index: int, theme_id: str) -> int:
    return derive_seed(run_seed, shop_id, agent_index, theme_id)


def rng_for(*parts: object) -> random.Random:
    return random.Random(derive_seed(*parts))
