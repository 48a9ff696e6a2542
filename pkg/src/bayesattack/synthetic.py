"""Synthetic attack instances with closed-form decision margins.

An image ``x0`` sits inside a :class:`BallOracle` sphere, ``l2_margin``
away from the boundary along a block-constant direction, so the low-res
search space can represent the shortest way out. ``l2_margin`` equal to
``radius`` gives a sphere concentric with the image.
"""
import numpy as np

from bayesattack.oracle import BallOracle


def _block_direction(rng, shape, block):
    C, H, W = shape
    low = rng.standard_normal((C, -(-H // block), -(-W // block)))
    u = np.repeat(np.repeat(low, block, axis=1), block, axis=2)[:, :H, :W]
    return u / np.linalg.norm(u)


def ball_instance(seed, shape=(3, 16, 16), block=4, radius=3.0, l2_margin=0.6, center=None):
    """Return ``(oracle, x0)``; ``x0`` is classified 0.

    With ``center`` omitted a fresh sphere is drawn per instance.
    """
    rng = np.random.default_rng(seed)
    if center is None:
        center = rng.uniform(0.35, 0.65, shape)
    u = _block_direction(rng, shape, block)
    x0 = center + (radius - l2_margin) * u
    if x0.min() < 0 or x0.max() > 1:
        raise ValueError("instance leaves [0, 1]; reduce radius")
    return BallOracle(center, radius), x0


def ball_dataset(n, seed=0, shape=(3, 16, 16), block=4, radius=3.0, l2_margin=0.6):
    """``n`` images around one shared sphere: ``(oracle, images, labels)``."""
    rng = np.random.default_rng(seed)
    center = rng.uniform(0.35, 0.65, shape)
    images = [
        ball_instance(rng.integers(2**63), shape, block, radius, l2_margin, center=center)[1]
        for _ in range(n)
    ]
    return BallOracle(center, radius), np.stack(images), np.zeros(n, dtype=int)
