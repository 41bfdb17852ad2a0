"""Seed derivation: per-item seeds from a root seed via splitmix64."""

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(root: int, index: int) -> int:
    """Seed for item ``index`` under ``root``; fits numpy's 63-bit range."""
    return splitmix64(splitmix64(root & MASK64) ^ (index & MASK64)) >> 1
