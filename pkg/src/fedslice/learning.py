"""Synthetic learning tasks, local SGD, gradient dispersion, aggregation.

Each user carries a quadratic per-sample loss ``f(w, xi) = 0.5 (w - xi)^T
A_u (w - xi)``; the local loss is its mean over the user's samples.  That
makes the local Hessian exactly ``A_u``, so the smoothness constant is the
largest eigenvalue and the per-sample gradient difference is bounded by
``||A_u||_2 ||xi - xi'||`` (the local-dissimilarity constant).

Aggregation is a three-tier weighted sum: gradient chunks land at head
users, heads fold their own and received gradients, radio units normalize
by the recruited dataset size, and the server applies the boost factor
before the model step.  The fold is a commutative sum, so any chunk
partition of a feeder's gradient yields the identical aggregate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SyntheticTask",
    "UserData",
    "make_tasks",
    "local_sgd",
    "cumulative_gradient",
    "GradientChunk",
    "disperse",
    "reassemble",
    "boost_factor",
    "aggregate",
]


@dataclass
class UserData:
    matrix: np.ndarray          # (M, M) SPD loss curvature A_u
    samples: np.ndarray         # (n, M) feature vectors
    theta: float                # spectral norm of A_u

    def loss(self, w: np.ndarray, idx=None) -> float:
        xs = self.samples if idx is None else self.samples[idx]
        d = w[None, :] - xs
        return float(0.5 * np.einsum("ij,jk,ik->", d, self.matrix, d) / len(xs))

    def grad(self, w: np.ndarray, idx=None) -> np.ndarray:
        xs = self.samples if idx is None else self.samples[idx]
        return self.matrix @ (w - xs.mean(axis=0))

    def sample_sigma(self) -> float:
        """Empirical feature spread: sqrt(sum ||xi - mean||^2 / (n - 1))."""
        n = len(self.samples)
        if n < 2:
            return 0.0
        mu = self.samples.mean(axis=0)
        return float(np.sqrt(((self.samples - mu) ** 2).sum() / (n - 1)))


@dataclass
class SyntheticTask:
    """One convex task per user, smooth by construction."""

    users: list[UserData]
    dim: int
    smoothness: float           # beta: max over users of ||A_u||_2
    strong_convexity: float

    def global_loss(self, w: np.ndarray, sizes=None) -> float:
        sizes = np.array([len(u.samples) for u in self.users], dtype=float) \
            if sizes is None else np.asarray(sizes, dtype=float)
        weights = sizes / sizes.sum()
        return float(sum(wt * u.loss(w) for wt, u in zip(weights, self.users)))

    def global_grad(self, w: np.ndarray, sizes=None) -> np.ndarray:
        sizes = np.array([len(u.samples) for u in self.users], dtype=float) \
            if sizes is None else np.asarray(sizes, dtype=float)
        weights = sizes / sizes.sum()
        out = np.zeros(self.dim)
        for wt, u in zip(weights, self.users):
            out += wt * u.grad(w)
        return out


def make_tasks(n_users: int, dim: int, sizes, smoothness: float = 1.0,
               strong_convexity: float = 0.25, mean_spread: float = 1.0,
               sample_spread: float = 0.5, seed: int = 0) -> SyntheticTask:
    """Generate per-user quadratics with eigenvalues in the configured band.

    ``mean_spread`` separates the user sample means (cross-user
    heterogeneity); ``sample_spread`` scales within-user sample noise.
    """
    rng = np.random.default_rng([seed, 0x7A5])
    sizes = np.broadcast_to(np.asarray(sizes, dtype=int), (n_users,))
    users = []
    for u in range(n_users):
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        eig = rng.uniform(strong_convexity, smoothness, size=dim)
        eig[0], eig[-1] = strong_convexity, smoothness  # pin the band edges
        a = (q * eig) @ q.T
        a = 0.5 * (a + a.T)
        mu = rng.normal(0.0, mean_spread, size=dim)
        xs = mu + rng.normal(0.0, sample_spread, size=(int(sizes[u]), dim))
        users.append(UserData(matrix=a, samples=xs, theta=float(eig.max())))
    return SyntheticTask(users=users, dim=dim, smoothness=smoothness,
                         strong_convexity=strong_convexity)


def local_sgd(w0: np.ndarray, user: UserData, n_iters: int, step: float,
              batch_frac: float, rng: np.random.Generator) -> np.ndarray:
    """Run mini-batch SGD from the received model; sampling without
    replacement within each mini-batch.  An empty dataset skips training."""
    n = len(user.samples)
    if n == 0 or n_iters == 0:
        return w0.copy()
    batch = max(1, math.ceil(batch_frac * n))
    w = w0.copy()
    for _ in range(int(n_iters)):
        idx = rng.choice(n, size=min(batch, n), replace=False)
        w = w - step * user.grad(w, idx)
    return w


def cumulative_gradient(w0: np.ndarray, w_final: np.ndarray,
                        step: float) -> np.ndarray:
    """Accumulated gradient over local training: (w0 - w_final) / step."""
    return (w0 - w_final) / step


@dataclass
class GradientChunk:
    owner: int                  # feeder user id
    target: int                 # head user id
    prb: int
    fgti: int
    index: np.ndarray           # positions into [0, M)
    values: np.ndarray

    def size(self) -> int:
        return len(self.index)


def _largest_remainder(fracs: np.ndarray, total: int) -> np.ndarray:
    """Integer chunk sizes: floor(frac * total) plus largest remainders."""
    raw = fracs * total
    base = np.floor(raw).astype(int)
    short = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def disperse(gradient: np.ndarray, owner: int,
             schedule: list[tuple[int, int, int, float]]) -> list[GradientChunk]:
    """Split a feeder's gradient into chunks per the dispersion schedule.

    ``schedule`` lists ``(target, prb, fgti, fraction)``; fractions must
    sum to one.  Index ranges are consecutive with floor sizes and
    largest-remainder rounding, so the chunks partition [0, M) exactly.
    """
    fr = np.array([s[3] for s in schedule], dtype=float)
    if abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError(f"dispersion fractions sum to {fr.sum()}, expected 1")
    m = len(gradient)
    sizes = _largest_remainder(fr, m)
    chunks = []
    pos = 0
    for (target, prb, fgti, _), sz in zip(schedule, sizes):
        idx = np.arange(pos, pos + sz)
        chunks.append(GradientChunk(owner=owner, target=target, prb=prb,
                                    fgti=fgti, index=idx,
                                    values=gradient[idx].copy()))
        pos += sz
    return chunks


def reassemble(chunks: list[GradientChunk], dim: int) -> np.ndarray:
    """Inverse of :func:`disperse`; raises if the partition is incomplete."""
    out = np.zeros(dim)
    seen = np.zeros(dim, dtype=bool)
    for c in chunks:
        if np.any(seen[c.index]):
            raise ValueError(f"chunk overlap for feeder {c.owner}")
        seen[c.index] = True
        out[c.index] = c.values
    if not seen.all():
        raise ValueError(f"gradient partition of feeder "
                         f"{chunks[0].owner if chunks else '?'} incomplete")
    return out


def boost_factor(sizes: np.ndarray, recruited: np.ndarray,
                 sgd_iters: np.ndarray, mode: str = "verbatim") -> float:
    """Server-side boost applied to the summed radio-unit gradients.

    ``verbatim`` sums the inverse aggregation weights over the recruited
    users; ``normalized`` instead makes the effective weights sum to one
    (the sum of the weights, inverted).
    """
    sizes = np.asarray(sizes, dtype=float)
    rec = np.asarray(recruited, dtype=float)
    it = np.asarray(sgd_iters, dtype=float)
    total_sel = float((rec * sizes).sum())
    if total_sel <= 0:
        return 1.0
    mask = rec > 0
    if mode == "verbatim":
        return float((total_sel * it[mask] / (rec[mask] * sizes[mask])).sum())
    if mode == "normalized":
        return float(1.0 / ((rec[mask] * sizes[mask])
                            / (total_sel * it[mask])).sum())
    raise ValueError(f"unknown boost mode {mode!r}")


def aggregate(dim: int, cell_of: np.ndarray, lam: np.ndarray,
              lam_bar: np.ndarray, sizes: np.ndarray, sgd_iters: np.ndarray,
              own_gradients: dict[int, np.ndarray],
              chunks: list[GradientChunk], boost: float) -> np.ndarray:
    """Three-tier fold of local gradients into the global update direction.

    Head level: ``lam_u * size_u * grad_u / iters_u`` plus the scaled
    chunks received from feeders.  Radio-unit level: sum over the cell's
    heads, normalized by the recruited dataset size.  Server level: sum
    over radio units times the boost.  Raises if any feeder's chunks do
    not reassemble to a full partition.
    """
    sizes = np.asarray(sizes, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lam_bar = np.asarray(lam_bar, dtype=float)
    it = np.asarray(sgd_iters, dtype=float)
    n_users = len(sizes)
    total_sel = float(((lam + lam_bar) * sizes).sum())
    if total_sel <= 0:
        return np.zeros(dim)

    by_owner: dict[int, list[GradientChunk]] = {}
    for c in chunks:
        by_owner.setdefault(c.owner, []).append(c)
    for owner, own in by_owner.items():
        reassemble(own, dim)      # integrity check: full partition per feeder

    head_sums: dict[int, np.ndarray] = {}
    for u in range(n_users):
        if lam[u] > 0:
            g = own_gradients.get(u)
            if g is not None:
                head_sums[u] = lam[u] * sizes[u] * g / max(it[u], 1.0)
    for c in chunks:
        if lam_bar[c.owner] <= 0:
            continue
        if c.target not in head_sums:
            head_sums[c.target] = np.zeros(dim)
        scale = lam_bar[c.owner] * sizes[c.owner] / max(it[c.owner], 1.0)
        head_sums[c.target][c.index] += scale * c.values

    n_cells = int(np.asarray(cell_of).max()) + 1 if n_users else 0
    per_cell = np.zeros((n_cells, dim))
    for u, vec in head_sums.items():
        per_cell[cell_of[u]] += lam[u] * vec
    per_cell /= total_sel
    return boost * per_cell.sum(axis=0)
