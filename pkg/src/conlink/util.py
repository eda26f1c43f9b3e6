"""Small shared helpers."""

import hashlib


def derive_seed(*parts) -> int:
    """Mix arbitrary labels into a stable 64-bit seed.

    Python's builtin hash() is salted per process, so seeds for nested RNGs
    (per epoch, per record) are derived through blake2b instead.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")
