"""Pure-NumPy implementations of the hot kernels.

These are the reference semantics for the compiled extension: both backends
must produce bit-identical output for the same input (accumulations run in
the same order, and the extension is compiled without FMA contraction).
"""

import numpy as np


def mirror_indices(n, pad):
    """Source indices for an edge-inclusive mirrored extension of length n.

    Index i outside [0, n) maps to m = i mod 2n, then 2n-1-m if m >= n,
    which repeats the signal with period 2n as  a b c | c b a | a b c ...
    Valid for any overhang, including pads larger than n.
    """
    idx = np.arange(-pad, n + pad)
    m = np.mod(idx, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def conv2d_same(image, kernel):
    """Same-size true convolution of a real image with a complex kernel.

    out[i, j] = sum_{u, v} kernel[u, v] * ext[i - u + cr, j - v + cc]
    where ext is the mirrored extension of the image and (cr, cc) the kernel
    center. Caller guarantees odd kernel dims and float64/complex128 input.
    """
    rows, cols = image.shape
    kr, kc = kernel.shape
    cr, cc = kr // 2, kc // 2
    padded = image[np.ix_(mirror_indices(rows, cr), mirror_indices(cols, cc))]
    out = np.zeros((rows, cols), dtype=np.complex128)
    for u in range(kr):
        for v in range(kc):
            out += kernel[u, v] * padded[2 * cr - u: 2 * cr - u + rows,
                                         2 * cc - v: 2 * cc - v + cols]
    return out


def tplbp_codes(image, dy, dx, w, alpha, tau, r0, r1, c0, c1):
    """Ring-patch binary codes over the valid rectangle [r0,r1) x [c0,c1).

    For each pixel p, dist[i] is the Euclidean distance between the w x w
    patch at p + (dy[i], dx[i]) and the central patch at p; bit i of the code
    is set when dist[i] - dist[(i+alpha) % S] >= tau. Pixels outside the
    rectangle (where some patch would leave the image) get code 0.
    """
    rows, cols = image.shape
    codes = np.zeros((rows, cols), dtype=np.int32)
    if r0 >= r1 or c0 >= c1:
        return codes
    n_patches = len(dy)
    hw = w // 2
    height, width = r1 - r0, c1 - c0
    dist = np.empty((n_patches, height, width))
    for i in range(n_patches):
        acc = np.zeros((height, width))
        for dr in range(-hw, hw + 1):
            for dc in range(-hw, hw + 1):
                a = image[r0 + dy[i] + dr: r1 + dy[i] + dr,
                          c0 + dx[i] + dc: c1 + dx[i] + dc]
                b = image[r0 + dr: r1 + dr, c0 + dc: c1 + dc]
                diff = a - b
                acc += diff * diff
        dist[i] = np.sqrt(acc)
    region = np.zeros((height, width), dtype=np.int32)
    for i in range(n_patches):
        bit = (dist[i] - dist[(i + alpha) % n_patches] >= tau)
        region |= bit.astype(np.int32) << i
    codes[r0:r1, c0:c1] = region
    return codes
