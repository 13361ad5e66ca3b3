"""Boundary-driven normalized-cut embedding.

A sparse intervening-contour affinity connects every pixel pair within a
small radius: w = exp(-(m / sigma)^2) with m the strongest boundary value
on the straight segment between the two pixels. The generalized system
(D - W) v = lambda D v is reduced to the symmetric normalized operator
L = I - D^{-1/2} W D^{-1/2}, whose smallest eigenpairs are computed with a
Lanczos iteration (full reorthogonalization, seeded start, restart on
invariant-subspace breakdown). Eigenvectors are mapped back through
v = D^{-1/2} u.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from . import kernels, stencils
from .boundary_map import decimated_dims, downscale

SIGMA_FRACTION = 0.14
SIGMA_FLOOR = 1e-6


class EigensolverError(RuntimeError):
    """Lanczos failed to converge; carries the best residuals seen."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


def line_points(a, b, mode: str = "bresenham") -> list[tuple[int, int]]:
    """Pixels of the segment a -> b, endpoints included."""
    (y0, x0), (y1, x1) = (int(a[0]), int(a[1])), (int(b[0]), int(b[1]))
    if mode == "bresenham":
        rel = stencils.bresenham_path(y1 - y0, x1 - x0)
        return [(y0 + int(dr), x0 + int(dc)) for dr, dc in rel]
    if mode == "supercover":
        return stencils.supercover_path((y0, x0), (y1, x1))
    raise ValueError(f"unknown line mode {mode!r}")


def line_max(values, a, b, mode: str = "bresenham") -> float:
    """Maximum of the map along the rasterized segment a -> b."""
    vals = np.asarray(values, dtype=np.float32)
    return max(float(vals[r, c]) for r, c in line_points(a, b, mode))


def sigma_rule(values) -> float:
    """Smoothness parameter: a fixed fraction (14%) of the map maximum,
    with a tiny floor so an all-zero map keeps every affinity at 1."""
    peak = float(np.asarray(values).max()) if np.asarray(values).size else 0.0
    if peak <= 0:
        return SIGMA_FLOOR
    return SIGMA_FRACTION * peak


@dataclass
class SparseAffinity:
    """Symmetric sparse affinity over a pixel grid, upper pairs stored once."""

    grid_dims: tuple[int, int]
    ii: np.ndarray      # int64 [m], always ii < jj
    jj: np.ndarray
    ww: np.ndarray      # float64 [m], in (0, 1]
    degree: np.ndarray  # float64 [n]

    @property
    def n(self) -> int:
        return self.grid_dims[0] * self.grid_dims[1]

    def to_csr(self) -> scipy.sparse.csr_matrix:
        rows = np.concatenate([self.ii, self.jj])
        cols = np.concatenate([self.jj, self.ii])
        vals = np.concatenate([self.ww, self.ww])
        return scipy.sparse.csr_matrix((vals, (rows, cols)),
                                       shape=(self.n, self.n))


def build_affinity(values, radius: float = 5.0, sigma: float | None = None,
                   metric: str = "euclidean", jobs: int = 1) -> SparseAffinity:
    """Intervening-contour affinity for all pixel pairs within `radius`."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    vals = np.ascontiguousarray(values, dtype=np.float32)
    h, w = vals.shape
    if sigma is None:
        sigma = sigma_rule(vals)
    offsets = stencils.half_disk_offsets(radius, metric)
    paths = [stencils.bresenham_path(dy, dx) for dy, dx in offsets]
    if jobs > 1 and h >= 4 * jobs:
        # Split on row bands; pairs crossing a band edge belong to the band
        # of their lower row, handled by overlapping reads, disjoint writes.
        bands = np.linspace(0, h, jobs + 1, dtype=np.int64)
        max_dy = max(dy for dy, _ in offsets)
        parts = [None] * jobs

        def run(k):
            lo, hi = int(bands[k]), int(bands[k + 1])
            sub = vals[lo:min(h, hi + max_dy)]
            res = kernels.affinity_lines(sub, offsets, paths, float(sigma))
            keep = res[0] < (hi - lo) * w
            base = lo * w
            parts[k] = (res[0][keep] + base, res[1][keep] + base, res[2][keep])

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, range(jobs)))
        ii = np.concatenate([p[0] for p in parts])
        jj = np.concatenate([p[1] for p in parts])
        ww = np.concatenate([p[2] for p in parts])
    else:
        ii, jj, ww = kernels.affinity_lines(vals, offsets, paths, float(sigma))
    # Canonical (i, j) order makes entries, degrees, and everything
    # downstream bit-identical for every worker count.
    order = np.lexsort((jj, ii))
    ii, jj, ww = ii[order], jj[order], ww[order]
    degree = np.zeros(h * w, dtype=np.float64)
    np.add.at(degree, ii, ww)
    np.add.at(degree, jj, ww)
    if degree.size and degree.min() <= 0.0:
        raise EigensolverError(
            "affinity weights underflowed to zero degree; sigma is too small "
            "for this boundary map")
    return SparseAffinity((h, w), ii, jj, ww, degree)


@dataclass
class SpectralEmbedding:
    eigenvalues: np.ndarray   # ascending, length k
    eigenvectors: np.ndarray  # [k, h, w], unit max-abs, first nonzero positive
    grid_dims: tuple[int, int]

    @property
    def k(self) -> int:
        return len(self.eigenvalues)


def _fix_vector(v: np.ndarray) -> np.ndarray:
    peak = np.abs(v).max()
    if peak > 0:
        v = v / peak
    nz = np.nonzero(np.abs(v) > 1e-12)[0]
    if len(nz) and v[nz[0]] < 0:
        v = -v
    return v


def smallest_eigenpairs(aff: SparseAffinity, k: int = 16, tol: float = 1e-8,
                        max_iter: int | None = None,
                        seed: int = 0) -> SpectralEmbedding:
    """k smallest generalized eigenpairs of (D - W) v = lambda D v.

    Lanczos with full reorthogonalization on the normalized operator,
    restarting with a fresh orthogonal vector whenever the Krylov space
    closes on an invariant subspace. Residuals are measured against the
    operator itself before accepting a pair.
    """
    n = aff.n
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    w_mat = aff.to_csr()
    dis = 1.0 / np.sqrt(aff.degree)

    def opmul(x):
        return x - dis * (w_mat @ (dis * x))

    if max_iter is None:
        max_iter = min(n, max(300, 10 * k))
    max_iter = min(max_iter, n)
    rng = np.random.default_rng(seed)

    q_basis = np.zeros((max_iter, n))
    alphas: list[float] = []
    betas: list[float] = []  # beta[j] links step j and j+1; 0 marks a restart
    breakdown = 1e-12

    def fresh_vector(m):
        for _ in range(40):
            cand = rng.standard_normal(n)
            if m:
                cand -= q_basis[:m].T @ (q_basis[:m] @ cand)
                cand -= q_basis[:m].T @ (q_basis[:m] @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-8:
                return cand / norm
        raise EigensolverError("could not generate a fresh start vector")

    q = fresh_vector(0)
    q_basis[0] = q
    m = 1
    prev_beta = 0.0
    prev_q = np.zeros(n)
    best_res = None
    check_every = max(4, k // 2)

    def ritz(mm):
        t_diag = np.asarray(alphas[:mm])
        t_off = np.asarray(betas[: mm - 1]) if mm > 1 else np.zeros(0)
        if mm == 1:
            return t_diag.copy(), np.ones((1, 1))
        return scipy.linalg.eigh_tridiagonal(t_diag, t_off)

    def converged_pairs(mm):
        theta, s = ritz(mm)
        order = np.argsort(theta)[:k]
        theta_k = theta[order]
        u = q_basis[:mm].T @ s[:, order]
        res = np.linalg.norm(
            np.column_stack([opmul(u[:, i]) for i in range(u.shape[1])])
            - u * theta_k, axis=0)
        return theta_k, u, res

    while True:
        v = opmul(q) - prev_beta * prev_q
        alpha = float(q @ v)
        alphas.append(alpha)
        v -= alpha * q
        # Full reorthogonalization, twice for safety.
        v -= q_basis[:m].T @ (q_basis[:m] @ v)
        v -= q_basis[:m].T @ (q_basis[:m] @ v)
        beta = float(np.linalg.norm(v))
        if m >= max_iter or m >= n:
            break
        if m > k and (m - k) % check_every == 0:
            theta_k, u, res = converged_pairs(m)
            best_res = res
            if np.all(res <= tol * np.maximum(1.0, np.abs(theta_k))):
                break
        if beta <= breakdown:
            # Invariant subspace: restart the recurrence in its complement.
            prev_beta = 0.0
            prev_q = np.zeros(n)
            betas.append(0.0)
            q = fresh_vector(m)
        else:
            betas.append(beta)
            prev_q = q
            prev_beta = beta
            q = v / beta
        q_basis[m] = q
        m += 1

    theta_k, u, res = converged_pairs(m)
    if not np.all(res <= tol * np.maximum(1.0, np.abs(theta_k))):
        raise EigensolverError(
            f"Lanczos did not reach tol={tol} after {m} steps "
            f"(worst residual {res.max():.3e})",
            residuals=best_res if best_res is not None else res)
    h, w = aff.grid_dims
    vecs = np.empty((k, h, w))
    for i in range(k):
        vi = _fix_vector(dis * u[:, i])
        vecs[i] = vi.reshape(h, w)
    return SpectralEmbedding(theta_k, vecs, (h, w))


def resize_embedding(emb: SpectralEmbedding, target_dims) -> np.ndarray:
    """Bilinear per-channel upsampling (pixel-center alignment) to target."""
    th, tw = int(target_dims[0]), int(target_dims[1])
    h, w = emb.grid_dims
    if th < h or tw < w:
        raise ValueError(f"target {target_dims} is smaller than grid {(h, w)}")
    rows = np.clip((np.arange(th) + 0.5) * (h / th) - 0.5, 0.0, h - 1.0)
    cols = np.clip((np.arange(tw) + 0.5) * (w / tw) - 0.5, 0.0, w - 1.0)
    r0 = np.floor(rows).astype(np.int64)
    r1 = np.ceil(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    c1 = np.ceil(cols).astype(np.int64)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    out = np.empty((emb.k, th, tw), dtype=np.float32)
    for i in range(emb.k):
        ch = emb.eigenvectors[i]
        top = ch[np.ix_(r0, c0)] * (1 - fc) + ch[np.ix_(r0, c1)] * fc
        bot = ch[np.ix_(r1, c0)] * (1 - fc) + ch[np.ix_(r1, c1)] * fc
        out[i] = (top * (1 - fr) + bot * fr).astype(np.float32)
    return out


def boundary_embedding(values, k: int = 16, radius: float = 5.0,
                       sigma_frac: float = SIGMA_FRACTION,
                       sigma: float | None = None,
                       decimate_max: int = 160, drop_trivial: bool = False,
                       metric: str = "euclidean", seed: int = 0,
                       tol: float = 1e-8, max_iter: int | None = None,
                       jobs: int = 1) -> np.ndarray:
    """Boundary map -> [k, H, W] eigenvector feature channels.

    The map is max-pool decimated so its longest side is at most
    decimate_max, the affinity and eigensolve run on that working grid, and
    the channels are bilinearly resized back to the map's own dims.
    """
    vals = np.asarray(values, dtype=np.float32)
    h, w = vals.shape
    grid_dims = decimated_dims((h, w), decimate_max)
    work = downscale(vals, grid_dims)
    if sigma is None:
        peak = float(work.max())
        sigma = sigma_frac * peak if peak > 0 else SIGMA_FLOOR
    aff = build_affinity(work, radius=radius, sigma=sigma, metric=metric,
                         jobs=jobs)
    solve_k = k + 1 if drop_trivial else k
    emb = smallest_eigenpairs(aff, k=solve_k, tol=tol, max_iter=max_iter,
                              seed=seed)
    if drop_trivial:
        emb = SpectralEmbedding(emb.eigenvalues[1:], emb.eigenvectors[1:],
                                emb.grid_dims)
    return resize_embedding(emb, (h, w))
