"""Matrix-free restarted GMRES with modified Gram-Schmidt Arnoldi.

Vectors are flat float64 arrays; the operator is any callable v -> A v.
Reductions use plain BLAS dots on whole vectors, which are deterministic
for a fixed input (and the inputs themselves are bitwise independent of the
worker count by construction of the DG kernels).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class KrylovStats:
    iterations: int = 0
    residual: float = np.inf
    restarts: int = 0
    converged: bool = False
    breakdown: bool = False
    residual_history: list = field(default_factory=list)


def gmres(action, rhs, x0=None, tol_rel=1e-8, restart=30, max_iter=1000,
          preconditioner=None):
    """Solve A x = rhs to ||rhs - A x|| <= tol_rel * ||rhs||.

    Right-preconditioned (A M^-1 y = rhs, x = M^-1 y) so the monitored
    residual is the true one.  Returns (x, KrylovStats).
    """
    if not (0.0 < tol_rel < 1.0):
        raise ConfigurationError(f"tol_rel must be in (0,1), got {tol_rel}")
    rhs = np.asarray(rhs, dtype=float).ravel()
    n = rhs.size
    M = preconditioner if preconditioner is not None else (lambda v: v)
    stats = KrylovStats()
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        stats.converged = True
        stats.residual = 0.0
        return np.zeros(n), stats
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    r = rhs - action(x) if x.any() else rhs.copy()
    target = tol_rel * b_norm

    m = max(1, min(restart, n))
    V = np.empty((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.empty(m)
    sn = np.empty(m)
    g = np.empty(m + 1)

    while True:
        beta = np.linalg.norm(r)
        stats.residual = beta / b_norm
        stats.residual_history.append(stats.residual)
        if beta <= target or stats.iterations >= max_iter or stats.breakdown:
            break
        V[0] = r / beta
        g[:] = 0.0
        g[0] = beta
        j_done = 0
        for j in range(m):
            w = action(M(V[j]))
            norm_before = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = np.dot(V[i], w)
                w -= H[i, j] * V[i]
            norm_after = np.linalg.norm(w)
            if norm_after < 0.7071067811865476 * norm_before:
                # one re-orthogonalization pass against rounding loss
                for i in range(j + 1):
                    corr = np.dot(V[i], w)
                    H[i, j] += corr
                    w -= corr * V[i]
                norm_after = np.linalg.norm(w)
            H[j + 1, j] = norm_after
            stats.iterations += 1
            happy = norm_after <= 1e-14 * max(b_norm, norm_before)
            if not happy:
                V[j + 1] = w / norm_after
            # apply stored Givens rotations to the new column
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom if denom else 1.0
            sn[j] = H[j + 1, j] / denom if denom else 0.0
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_done = j + 1
            res_est = abs(g[j + 1])
            stats.residual_history.append(res_est / b_norm)
            if happy:
                stats.breakdown = True
                break
            if res_est <= target or stats.iterations >= max_iter:
                break
        if j_done:
            y = np.zeros(j_done)
            for i in range(j_done - 1, -1, -1):
                y[i] = (g[i] - H[i, i + 1:j_done] @ y[i + 1:j_done]) / H[i, i]
            x += M(V[:j_done].T @ y)
        r = rhs - action(x)
        stats.restarts += 1
    stats.restarts = max(0, stats.restarts - 1)
    stats.residual = np.linalg.norm(rhs - action(x)) / b_norm
    stats.converged = stats.residual <= tol_rel
    return x, stats


def element_coloring(mesh):
    """Greedy coloring of the face-adjacency graph (used so diagonal-block
    probing excites only non-adjacent elements at once)."""
    n = mesh.n_leaves
    adj = [[] for _ in range(n)]
    topo = mesh.topology
    pairs = []
    for b in topo.conforming:
        pairs.extend(zip(b.left.tolist(), b.right.tolist()))
    for b in topo.hanging:
        pairs.extend(zip(b.coarse.tolist(), b.fine.tolist()))
    for i, j in pairs:
        if i != j:
            adj[i].append(j)
            adj[j].append(i)
    colors = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        used = {colors[j] for j in adj[i] if colors[j] >= 0}
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return colors


def block_jacobi_preconditioner(action, n_el, n_nodes, coloring=None):
    """Inverse of the per-element diagonal blocks of a matrix-free operator.

    The blocks are probed exactly: elements of one color are excited
    simultaneously (they share no face, so their rows don't contaminate
    each other's diagonal block).  Singular blocks fall back to identity
    with a warning.
    """
    colors = coloring if coloring is not None else np.zeros(n_el, dtype=np.int64)
    blocks = np.empty((n_el, n_nodes, n_nodes))
    probe = np.zeros((n_el, n_nodes))
    for c in np.unique(colors):
        sel = colors == c
        for i in range(n_nodes):
            probe[:] = 0.0
            probe[sel, i] = 1.0
            y = action(probe.ravel()).reshape(n_el, n_nodes)
            blocks[sel, :, i] = y[sel]
    inv = np.empty_like(blocks)
    try:
        inv[:] = np.linalg.inv(blocks)
    except np.linalg.LinAlgError:
        bad = 0
        eye = np.eye(n_nodes)
        for e in range(n_el):
            try:
                inv[e] = np.linalg.inv(blocks[e])
            except np.linalg.LinAlgError:
                inv[e] = eye
                bad += 1
        warnings.warn(f"block Jacobi: {bad} singular blocks replaced by identity")

    def apply(v):
        return np.einsum('eij,ej->ei', inv, v.reshape(n_el, n_nodes)).ravel()

    return apply
