"""Shared numeric primitives.

Everything downstream builds on this module: same-size 2-D convolution with
mirrored boundaries, elementwise activations, a stable softmax, a seeded
deterministic random generator, and a central-difference gradient oracle.
All functions are pure; training math runs in float64 throughout.
"""

import numpy as np

from . import _kernels

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x):
    """SplitMix64 finalizer on a 64-bit integer (Python int in, int out)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed, *keys):
    """Fold integer keys into a seed, giving independent child streams."""
    s = seed & _MASK64
    for k in keys:
        s = mix64((s ^ ((k & _MASK64) * _GAMMA)) + _GAMMA)
    return s


class Rng:
    """Deterministic counter-based generator (SplitMix64 output function).

    Draw i of a stream seeded with s is mix64(s + (i+1) * GAMMA), i.e. the
    i-th output of a SplitMix64 sequence started at state s. The stream is a
    pure function of (seed, draw index), so it is identical on every
    platform and draws can be produced in vectorized blocks.
    """

    def __init__(self, seed):
        self._seed = np.uint64(int(seed) & _MASK64)
        self._count = 0

    def next_u64(self, n):
        """Next n raw 64-bit outputs as a uint64 array."""
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += int(n)
        with np.errstate(over="ignore"):
            z = self._seed + idx * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            return z ^ (z >> np.uint64(31))

    def uniform(self, shape=None):
        """Uniform float64 draws in [0, 1): top 53 bits of each output."""
        if shape is None:
            return float((int(self.next_u64(1)[0]) >> 11) * 2.0 ** -53)
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return u.reshape(shape)

    def uniform_signed(self, limit, shape):
        """Uniform draws in [-limit, limit)."""
        return limit * (2.0 * self.uniform(shape) - 1.0)

    def exponential(self, shape):
        """Unit-mean exponential draws via inverse transform of uniform."""
        return -np.log1p(-self.uniform(shape))

    def permutation(self, n):
        """Deterministic permutation of range(n): argsort of n uniforms."""
        return np.argsort(self.uniform(n), kind="stable")

    def sample(self, n, k):
        """k distinct indices from range(n), uniform without replacement.

        Draws one uniform key per index and keeps the k smallest; the draw
        order (all keys first) is part of the stream contract.
        """
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n} indices")
        keys = self.uniform(n)
        return np.sort(np.argsort(keys, kind="stable")[:k])

    def spawn(self, key):
        """Independent child generator; stream determined by (seed, key)."""
        return Rng(derive_seed(int(self._seed), key))


def conv2d_same(image, kernel):
    """Same-size true convolution of a real image with a complex kernel.

    Boundary handling mirrors the image about its edges (edge pixel
    included), so no dark frame is introduced at chip borders:

        out[i, j] = sum_{u, v} kernel[u, v] * ext[i - u + cr, j - v + cc]

    with ext the mirrored extension and (cr, cc) the kernel center. Both
    kernel dimensions must be odd.
    """
    image = np.ascontiguousarray(image, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.complex128)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("image must be a nonempty 2-D array")
    if kernel.ndim != 2:
        raise ValueError("kernel must be a 2-D array")
    if kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(
            f"kernel dimensions must be odd, got {kernel.shape[0]}x{kernel.shape[1]}")
    return _kernels.conv2d_same(image, kernel)


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def sigmoid(x):
    """Logistic function, computed as 0.5*(1 + tanh(x/2)).

    The tanh form saturates cleanly at 0 and 1 for large |x| and never
    produces non-finite output for finite input.
    """
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def tanh(x):
    """Elementwise hyperbolic tangent."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(v, axis=-1):
    """Probabilities proportional to exp(v), max-subtracted for stability."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    z = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def finite_diff_grad(f, theta, eps=1e-5):
    """Central-difference gradient of a scalar function at theta.

    grad[i] = (f(theta + eps*e_i) - f(theta - eps*e_i)) / (2*eps). Raises if
    either probe evaluates non-finite, naming the offending coordinate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    flat = theta.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(theta))
        flat[i] = orig - eps
        f_minus = float(f(theta))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError(f"non-finite function value at coordinate {i}")
        grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad
