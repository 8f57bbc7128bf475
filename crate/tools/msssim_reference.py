"""Golden MS-SSIM values for the metric tests.

Two references: TensorFlow's `ssim_multiscale` (which computes in float32)
and a float64 NumPy/SciPy implementation of the same definition.

The test images are built from a 64-bit LCG so the Rust tests can rebuild
them bit-for-bit. Run with a TensorFlow install:

    python3 tools/msssim_reference.py
"""

import math

import numpy as np
import scipy.signal
import tensorflow as tf

SIZE = 176
MASK = (1 << 64) - 1


class Lcg:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_f64(self):
        self.state = (self.state * 6364136223846793005 + 1442695040888963407) & MASK
        return (self.state >> 11) / float(1 << 53)


def pattern(seed):
    rng = Lcg(seed)
    fx, fy, phase = 2 + 6 * rng.next_f64(), 2 + 6 * rng.next_f64(), 6.0 * rng.next_f64()
    img = np.zeros((SIZE, SIZE))
    for y in range(SIZE):
        for x in range(SIZE):
            u, v = x / SIZE, y / SIZE
            img[y, x] = 0.5 + 0.25 * math.sin(2 * math.pi * fx * u + phase) * math.cos(2 * math.pi * fy * v)
    return img


def add_noise(img, sigma, seed):
    rng = Lcg(seed)
    half = sigma * math.sqrt(3.0)
    out = img.copy()
    for y in range(SIZE):
        for x in range(SIZE):
            out[y, x] += half * (2.0 * rng.next_f64() - 1.0)
    return out


def shift_right(img, dx):
    return np.roll(img, dx, axis=1)


def pairs():
    flat = np.full((SIZE, SIZE), 0.5)
    p1, p2 = pattern(1), pattern(2)
    return [
        ("flat_vs_noise_0.1", flat, add_noise(flat, 0.1, 7)),
        ("pattern_vs_noise_0.05", p1, add_noise(p1, 0.05, 8)),
        ("pattern_vs_scaled_0.8", p1, 0.8 * p1),
        ("pattern_vs_shift_3", p2, shift_right(p2, 3)),
        ("pattern_vs_other", p1, p2),
    ]


WEIGHTS = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]


def gauss_window():
    x = np.arange(11) - 5.0
    g = np.exp(-(x * x) / (2 * 1.5 * 1.5))
    g /= g.sum()
    return np.outer(g, g)


def filt(img, win):
    return scipy.signal.correlate2d(img, win, mode="valid")


def ssim_cs(a, b):
    win = gauss_window()
    c1, c2 = 0.01**2, 0.03**2
    ma, mb = filt(a, win), filt(b, win)
    va = filt(a * a, win) - ma * ma
    vb = filt(b * b, win) - mb * mb
    cov = filt(a * b, win) - ma * mb
    cs = (2 * cov + c2) / (va + vb + c2)
    lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1)
    return (lum * cs).mean(), cs.mean()


def pool(img):
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim64(a, b):
    terms = []
    for k in range(5):
        if k > 0:
            a, b = pool(a), pool(b)
        s, cs = ssim_cs(a, b)
        terms.append(max(s if k == 4 else cs, 0.0))
    return math.prod(t**w for t, w in zip(terms, WEIGHTS))


def main():
    for name, a, b in pairs():
        ta = tf.constant(a[None, :, :, None], dtype=tf.float64)
        tb = tf.constant(b[None, :, :, None], dtype=tf.float64)
        value = tf.image.ssim_multiscale(ta, tb, max_val=1.0).numpy()[0]
        print(f"{name}: tensorflow {value:.12f}  float64 {ms_ssim64(a, b):.15f}")


if __name__ == "__main__":
    main()
