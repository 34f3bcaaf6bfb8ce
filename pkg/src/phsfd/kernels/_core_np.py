"""Reference NumPy implementation of the weight-row kernels.

``operator_rows`` is the hot loop of the whole solver: for every evaluation
point it builds the basis row (polyharmonic splines over the stencil nodes
plus shifted and scaled monomials), applies the requested operator, and
contracts the row with the stencil's precomputed solve block to obtain the
n stencil weights.  The compiled extension in ``_core.pyx`` implements the
same contract; this module is the fallback and the semantic reference.

Operator codes: 0 evaluation, 1 Laplacian, 2 directional derivative (the
unit direction comes per point from ``directions``).
"""

import numpy as np

OP_EVAL = 0
OP_LAPLACIAN = 1
OP_DIRECTIONAL = 2

# evaluation points processed per chunk; bounds the gathered temporaries
_CHUNK = 2048


def _monomial_block(xi, exponents, scales, op_code, dirs):
    k, d = xi.shape
    m = exponents.shape[0]
    if op_code == OP_EVAL:
        return np.prod(xi[:, None, :] ** exponents[None, :, :], axis=2)
    out = np.zeros((k, m))
    if op_code == OP_LAPLACIAN:
        for a in range(d):
            e_a = exponents[:, a]
            mask = e_a >= 2
            if not mask.any():
                continue
            emod = exponents[mask].copy()
            emod[:, a] -= 2
            vals = np.prod(xi[:, None, :] ** emod[None, :, :], axis=2)
            out[:, mask] += (e_a[mask] * (e_a[mask] - 1))[None, :] * vals
        return out / (scales * scales)[:, None]
    for a in range(d):
        e_a = exponents[:, a]
        mask = e_a >= 1
        if not mask.any():
            continue
        emod = exponents[mask].copy()
        emod[:, a] -= 1
        vals = np.prod(xi[:, None, :] ** emod[None, :, :], axis=2)
        out[:, mask] += dirs[:, a:a + 1] * e_a[mask][None, :] * vals
    return out / scales[:, None]


def _phs_block(diffs, dim, op_code, dirs):
    r = np.sqrt(np.sum(diffs * diffs, axis=2))
    if op_code == OP_EVAL:
        return r ** 3
    if op_code == OP_LAPLACIAN:
        return 3.0 * (dim + 1) * r
    dots = np.einsum("kjd,kd->kj", diffs, dirs)
    return 3.0 * r * dots


def operator_rows(points, stencil_ids, node_coords, kmats, shifts, scales,
                  exponents, op_code, directions, out):
    """Fill ``out[i, :]`` with the n weights of evaluation point i.

    points      (M, d)      evaluation points
    stencil_ids (M,)        stencil index per point
    node_coords (N, n, d)   stencil node coordinates
    kmats       (N, n+m, n) per-stencil solve blocks
    shifts      (N, d)      monomial shift (stencil center)
    scales      (N,)        monomial scale (stencil radius)
    exponents   (m, d)      monomial exponent rows
    directions  (M, d)      unit directions, read only for op_code 2
    out         (M, n)      written in place
    """
    total = points.shape[0]
    dim = points.shape[1]
    for start in range(0, total, _CHUNK):
        sl = slice(start, min(start + _CHUNK, total))
        ids = stencil_ids[sl]
        pts = points[sl]
        dirs = directions[sl]
        diffs = pts[:, None, :] - node_coords[ids]
        phs = _phs_block(diffs, dim, op_code, dirs)
        xi = (pts - shifts[ids]) / scales[ids][:, None]
        mono = _monomial_block(xi, exponents, scales[ids], op_code, dirs)
        brow = np.concatenate([phs, mono], axis=1)
        out[sl] = np.einsum("kj,kjn->kn", brow, kmats[ids])
    return out
