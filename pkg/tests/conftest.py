import numpy as np


def smooth_texture(rng: np.random.Generator, n: int, sigma: float = 3.0) -> np.ndarray:
    """Periodic smooth random texture in [0, 1]: uniform noise blurred with
    a wrap-around Gaussian, so np.roll is an exact translation of it."""
    x = rng.uniform(0, 1, size=(n, n))
    k = int(3 * sigma)
    ax = np.arange(-k, k + 1)
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    g /= g.sum()

    def blur_1d(m):
        return np.convolve(np.pad(m, k, mode="wrap"), g, mode="same")[k:-k]

    for axis in (0, 1):
        x = np.apply_along_axis(blur_1d, axis, x)
    lo, hi = x.min(), x.max()
    return (x - lo) / (hi - lo)
