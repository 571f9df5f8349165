"""Pure-numpy curvature kernel (fallback for the compiled ``_ckernels`` module)."""

import numpy as np


def curvature(ginv, dg, ddg):
    """Christoffel symbols, Ricci tensor and scalar curvature from a metric 2-jet.

    ``ginv``: (N, n, n); ``dg[p, i, j, a] = d_a g_ij``; ``ddg[p, i, j, a, b]``.
    Returns ``gamma[p, k, i, j] = Gamma^k_ij``, ``ricci[p, i, j]``, ``scalar[p]``.
    """
    c = np.einsum("pjli->pijl", dg) + np.einsum("pilj->pijl", dg) - dg
    gamma = 0.5 * np.einsum("pkl,pijl->pkij", ginv, c)
    dc = np.einsum("pjlia->pijla", ddg) + np.einsum("pilja->pijla", ddg) - ddg
    dginv = -np.einsum("pkq,pqra,prl->pkla", ginv, dg, ginv)
    dgamma = 0.5 * (np.einsum("pkla,pijl->pkija", dginv, c) + np.einsum("pkl,pijla->pkija", ginv, dc))
    ricci = (
        np.einsum("pkijk->pij", dgamma)
        - np.einsum("pkikj->pij", dgamma)
        + np.einsum("pkkl,plij->pij", gamma, gamma)
        - np.einsum("pkjl,plik->pij", gamma, gamma)
    )
    scalar = np.einsum("pij,pij->p", ginv, ricci)
    return gamma, ricci, scalar
