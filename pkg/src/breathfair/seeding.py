"""Deterministic seed derivation and keyed uniform draws.

Reproducibility is built on counter-style hashing rather than shared RNG
state: every run and every randomized prediction gets its own key, so
results do not depend on evaluation order or thread scheduling.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One splitmix64 step; a well-mixed 64-bit hash of an integer."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed for run `index`, decorrelated from neighbouring indices."""
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (index & _MASK64))


def text_key(text: str) -> int:
    """Stable 64-bit key for a string (FNV-1a)."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def keyed_uniform(seed: int, key: int) -> float:
    """Uniform draw in [0, 1) fully determined by (seed, key)."""
    return splitmix64(splitmix64(seed & _MASK64) ^ (key & _MASK64)) / 2.0**64
