"""Orthonormal DCT-II basis, truncation, spectral coverage and KLT comparison."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import jacobi_eigh, unitary_dft

__all__ = [
    "DctBasis",
    "TruncatedDct",
    "CoverageReport",
    "CompactionReport",
    "dct_matrix",
    "kept_count",
    "truncate",
    "selection",
    "sign_changes",
    "spectral_coverage",
    "spectral_centroids",
    "padded_spectral_centroids",
    "toeplitz_cov",
    "klt_compare",
    "off_diagonal_ratio",
    "energy_compaction",
    "energy_compaction_mc",
    "ar1_samples",
]


@dataclass(frozen=True)
class DctBasis:
    size: int
    d: np.ndarray  # row k is the k-th cosine basis vector


@dataclass(frozen=True)
class TruncatedDct:
    """Leading ``kept`` rows of a basis (``dbar``) and its transpose (``dbar_inv``).

    ``dbar`` maps C channels to ``kept`` coefficients; ``dbar_inv`` maps
    ``kept`` coefficients back to C channels with implicit zero padding.
    """

    size: int
    tau: float
    kept: int
    dbar: np.ndarray
    dbar_inv: np.ndarray


@dataclass(frozen=True)
class CoverageReport:
    size: int
    coverage: np.ndarray  # (C,) root-sum-square over basis vectors per frequency
    spectra: np.ndarray   # (C, C) spectra[l, k] = |DFT of basis vector l| at k


@dataclass(frozen=True)
class CompactionReport:
    size: int
    rho: float
    variances: np.ndarray
    cumulative_energy: np.ndarray
    off_diagonal_ratio: float
    cosines: np.ndarray
    klt_eigenvalues: np.ndarray

    @property
    def mean_abs_cosine(self) -> float:
        return float(np.mean(np.abs(self.cosines)))


def dct_matrix(c: int) -> DctBasis:
    """Orthonormal DCT-II matrix, ``D[k, n] = sqrt(2/C) g_k cos((2n+1) k pi / 2C)``."""
    if c < 1:
        raise ValueError(f"DCT size must be >= 1, got {c}")
    n = np.arange(c)
    k = n[:, None]
    d = np.sqrt(2.0 / c) * np.cos(np.pi * (2 * n[None, :] + 1) * k / (2 * c))
    d[0, :] = 1.0 / np.sqrt(c)
    d.setflags(write=False)
    return DctBasis(size=c, d=d)


def kept_count(c: int, tau: float) -> int:
    """Number of retained coefficients, ``round(tau * C)``."""
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    kept = int(round(tau * c))
    if kept < 1:
        raise ValueError(f"tau={tau} keeps no coefficients for C={c}")
    return kept


def truncate(basis: DctBasis, tau: float) -> TruncatedDct:
    kept = kept_count(basis.size, tau)
    dbar = basis.d[:kept].copy()
    dbar_inv = dbar.T.copy()
    dbar.setflags(write=False)
    dbar_inv.setflags(write=False)
    return TruncatedDct(size=basis.size, tau=tau, kept=kept, dbar=dbar, dbar_inv=dbar_inv)


def selection(c: int, tau: float) -> TruncatedDct:
    """Plain channel truncation (first ``kept`` channels), no transform."""
    return truncate(DctBasis(size=c, d=np.eye(c)), tau)


def sign_changes(row: np.ndarray, eps: float = 1e-12) -> int:
    """Count sign flips between consecutive entries, ignoring near-zero values."""
    signs = np.sign(np.where(np.abs(row) > eps, row, 0.0))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def spectral_coverage(c: int) -> CoverageReport:
    d = dct_matrix(c).d
    f = unitary_dft(c)
    # column l of F D^T is the DFT of basis vector l
    t_hat = f @ d.T
    coverage = np.sqrt(np.sum(np.abs(t_hat) ** 2, axis=1))
    return CoverageReport(size=c, coverage=coverage, spectra=np.abs(t_hat).T)


def spectral_centroids(report: CoverageReport) -> np.ndarray:
    """Magnitude-weighted mean frequency index over k <= C/2 per basis vector."""
    half = report.size // 2 + 1
    k = np.arange(half)
    mags = report.spectra[:, :half]
    return (mags @ k) / mags.sum(axis=1)


def padded_spectral_centroids(c: int, factor: int = 2) -> np.ndarray:
    """Centroids from a ``factor * C``-point zero-padded DFT, in units of C-point bins.

    Odd-index cosines sit between the bins of a C-point DFT and leak into
    high bins; padding to at least 2C resolves every basis frequency.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    length = factor * c
    n = np.arange(c)
    f = np.exp(-2j * np.pi * ((np.outer(np.arange(length), n) % length) / length))
    mags = np.abs(f @ dct_matrix(c).d.T).T[:, : length // 2 + 1]
    k = np.arange(length // 2 + 1) / factor
    return (mags @ k) / mags.sum(axis=1)


def toeplitz_cov(c: int, rho: float) -> np.ndarray:
    """AR(1) covariance, entries ``rho ** |i - j|``."""
    if c < 1:
        raise ValueError(f"size must be >= 1, got {c}")
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    idx = np.arange(c)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(np.float64)


def off_diagonal_ratio(basis: np.ndarray, cov: np.ndarray) -> float:
    """Share of squared energy of ``basis @ cov @ basis.T`` that is off the diagonal."""
    t = basis @ cov @ basis.T
    total = float(np.sum(t**2))
    return (total - float(np.sum(np.diag(t) ** 2))) / total


def klt_compare(c: int, rho: float) -> CompactionReport:
    phi = toeplitz_cov(c, rho)
    d = dct_matrix(c).d
    t = d @ phi @ d.T
    variances = np.diag(t).copy()
    cumulative = np.cumsum(variances) / np.trace(phi)
    lam, vecs = jacobi_eigh(phi)
    cosines = np.empty(c)
    for k in range(c):
        dot = float(d[k] @ vecs[:, k])
        cosines[k] = abs(dot) / (np.linalg.norm(d[k]) * np.linalg.norm(vecs[:, k]))
    return CompactionReport(
        size=c,
        rho=rho,
        variances=variances,
        cumulative_energy=cumulative,
        off_diagonal_ratio=off_diagonal_ratio(d, phi),
        cosines=cosines,
        klt_eigenvalues=lam,
    )


def energy_compaction(c: int, rho: float, tau: float) -> float:
    """Fraction of AR(1) variance carried by the first ``round(tau C)`` DCT coefficients."""
    phi = toeplitz_cov(c, rho)
    kept = kept_count(c, tau)
    d = dct_matrix(c).d
    variances = np.einsum("kn,nm,km->k", d, phi, d)
    if kept == c:
        return 1.0
    if rho == 0:
        return kept / c
    return float(np.sum(variances[:kept]) / np.trace(phi))


def ar1_samples(count: int, c: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance stationary AR(1) sequences of length ``c``, shape ``(count, c)``."""
    x = np.empty((count, c))
    x[:, 0] = rng.standard_normal(count)
    innov = np.sqrt(1.0 - rho * rho)
    for n in range(1, c):
        x[:, n] = rho * x[:, n - 1] + innov * rng.standard_normal(count)
    return x


def energy_compaction_mc(c: int, rho: float, tau: float, samples: int = 100_000, seed: int = 0) -> float:
    """Monte-Carlo estimate of :func:`energy_compaction` from simulated sequences."""
    kept = kept_count(c, tau)
    x = ar1_samples(samples, c, rho, np.random.default_rng(seed))
    coeffs = x @ dct_matrix(c).d.T
    energy = np.mean(coeffs**2, axis=0)
    return float(np.sum(energy[:kept]) / np.sum(energy))
