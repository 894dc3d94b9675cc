"""Fréchet distance between Gaussian fits of 2-D samples, mode coverage, D accuracy.

The Fréchet distance here is computed in data space, not on Inception
features, so the numbers are not comparable with image-FID tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PSD_TOL = 1e-9


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_samples(cls, points):
        x = np.asarray(points, dtype=float)
        if x.ndim != 2 or x.shape[0] < 3:
            raise ValueError("insufficient samples: need at least 3 points")
        cov = np.cov(x, rowvar=False, ddof=1)
        return cls(x.mean(axis=0), _clamp_psd(np.atleast_2d(cov)))


def _clamp_psd(cov):
    cov = (cov + cov.T) / 2
    w, v = np.linalg.eigh(cov)
    if np.all(w >= 0):
        return cov
    if np.any(w < -PSD_TOL * max(1.0, float(np.max(np.abs(w))))):
        raise ValueError("covariance is not positive semi-definite")
    return (v * np.clip(w, 0, None)) @ v.T


def frechet_from_moments(mu1, cov1, mu2, cov2):
    """||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)) for 2x2 covariances.

    Tr((S1 S2)^(1/2)) = sqrt(t + 2 sqrt(d)) with t = Tr(S1 S2), d = det(S1 S2),
    valid because S1 S2 has real non-negative eigenvalues.
    """
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    s1, s2 = np.asarray(cov1, float), np.asarray(cov2, float)
    if s1.shape != (2, 2) or s2.shape != (2, 2):
        raise ValueError("closed form requires 2x2 covariances")
    diff = mu1 - mu2
    prod = s1 @ s2
    t = prod[0, 0] + prod[1, 1]
    d = max(prod[0, 0] * prod[1, 1] - prod[0, 1] * prod[1, 0], 0.0)
    tr_sqrt = math.sqrt(max(t + 2 * math.sqrt(d), 0.0))
    fd = float(diff @ diff) + float(np.trace(s1) + np.trace(s2)) - 2 * tr_sqrt
    return max(fd, 0.0)


def frechet_distance(a, b):
    """Fréchet distance between Gaussian fits (unbiased covariance) of two point sets."""
    fa, fb = GaussianFit.from_samples(a), GaussianFit.from_samples(b)
    return frechet_from_moments(fa.mean, fa.cov, fb.mean, fb.cov)


def mode_coverage(generated, spec, radius_mult=3.0):
    """Number of dataset modes with at least one generated point within ``radius_mult * sigma``."""
    centers = np.asarray(spec.centers(), dtype=float)
    total = len(centers)
    pts = np.asarray(generated, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return 0, total
    radius = radius_mult * spec.sigma
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    covered = int(np.sum(np.any(d2 <= radius * radius, axis=0)))
    return covered, total


def discriminator_accuracy(scores_real, scores_fake):
    """Fraction of correct decisions: real if score > 0.5, fake if score <= 0.5."""
    r = np.asarray(scores_real, dtype=float).ravel()
    f = np.asarray(scores_fake, dtype=float).ravel()
    if r.size == 0 or f.size == 0:
        raise ValueError("discriminator_accuracy needs non-empty real and fake scores")
    correct = np.count_nonzero(r > 0.5) + np.count_nonzero(f <= 0.5)
    return correct / (r.size + f.size)
