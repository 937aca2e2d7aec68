"""Dense numerics shared by every other module.

Matrices and window tensors are plain ``numpy.ndarray`` objects. Inputs are
promoted to at least float64; ``longdouble`` inputs stay ``longdouble`` so
that finite-difference oracles can run in extended precision. Products that
should show up in the multiplication accounting go through :func:`matmul`
with a :class:`MulCounter`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MulCounter",
    "matmul",
    "softmax_rows",
    "trunc_normal_init",
    "unitary_dft",
    "jacobi_eigh",
    "as_matrix",
    "as_real",
]


@dataclass
class MulCounter:
    """Running count of scalar multiplications performed by counted products."""

    count: int = 0

    def add(self, n: int) -> None:
        if n < 0:
            raise ValueError("multiplication count cannot decrease")
        self.count += int(n)

    def merge(self, other: "MulCounter") -> "MulCounter":
        return MulCounter(self.count + other.count)


def as_real(a) -> np.ndarray:
    """``a`` as an array of float64 or wider."""
    a = np.asarray(a)
    return a.astype(np.result_type(a.dtype, np.float64), copy=False)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = as_real(a)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def matmul(a: np.ndarray, b: np.ndarray, counter: MulCounter | None = None) -> np.ndarray:
    """Matrix product ``a @ b``, optionally charged to ``counter``.

    Leading batch axes broadcast as in :func:`numpy.matmul`. The charge is
    one multiplication per (output entry, inner index) pair, i.e.
    ``rows * cols * inner`` for plain 2-D operands.
    """
    a = as_real(a)
    b = as_real(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(
            f"matmul shape mismatch: {a.shape} @ {b.shape} "
            f"(inner dims {a.shape[-1]} != {b.shape[-2]})"
        )
    out = np.matmul(a, b)
    if counter is not None:
        counter.add(out.size * a.shape[-1])
    return out


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with max subtraction."""
    m = as_real(m)
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def trunc_normal_init(rows: int, cols: int, std: float = 0.02, seed: int | np.random.Generator = 0) -> np.ndarray:
    """Normal(0, std) samples truncated to [-2 std, 2 std] by rejection.

    ``seed`` may be an int or an existing ``numpy.random.Generator`` so that
    several matrices can be drawn from one stream.
    """
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = rows * cols
    out = np.empty(n)
    filled = 0
    while filled < n:
        draw = rng.standard_normal(max(n - filled, 16)) * std
        draw = draw[np.abs(draw) <= 2 * std]
        take = min(draw.size, n - filled)
        out[filled:filled + take] = draw[:take]
        filled += take
    return out.reshape(rows, cols)


def unitary_dft(c: int) -> np.ndarray:
    """Unitary DFT matrix ``F[k, n] = exp(-2j pi k n / c) / sqrt(c)`` (complex128)."""
    if c < 1:
        raise ValueError(f"DFT size must be >= 1, got {c}")
    k = np.arange(c)
    # reduce k*n mod c before scaling keeps the phase exact for large products
    phase = (np.outer(k, k) % c) / c
    return np.exp(-2j * np.pi * phase) / np.sqrt(c)


def jacobi_eigh(s: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, V)`` with eigenvalues in descending order and
    the matching orthonormal eigenvectors as the columns of ``V``.
    Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol`` times the Frobenius norm of ``s`` (absolute ``tol`` for a zero
    matrix).
    """
    a = as_matrix(s, "s").copy()
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError(f"jacobi_eigh needs a square matrix, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12:
        raise ValueError("jacobi_eigh needs a symmetric matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1.0)

    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    # theta^2 would overflow; t ~ 1/(2 theta)
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                rot_p = a[:, p].copy()
                rot_q = a[:, q].copy()
                a[:, p] = c * rot_p - sn * rot_q
                a[:, q] = sn * rot_p + c * rot_q
                rot_p = a[p, :].copy()
                rot_q = a[q, :].copy()
                a[p, :] = c * rot_p - sn * rot_q
                a[q, :] = sn * rot_p + c * rot_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    else:
        raise RuntimeError(f"jacobi_eigh did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]
