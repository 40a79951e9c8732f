"""Brute-force loop Canny used as an independent oracle in tests.

Same conventions as the library (5x5 Gaussian sigma 1.4, replicated
borders, Sobel, 4-sector suppression with the first-of-ridge tie rule,
8-connected transitive hysteresis) but written as explicit per-pixel
loops with breadth-first hysteresis instead of vectorized numpy.
"""

import math
from collections import deque

import numpy as np

SOBEL_X = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
SOBEL_Y = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]

BEFORE = {0: (0, -1), 1: (-1, -1), 2: (-1, 0), 3: (-1, 1)}
AFTER = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


def _gauss5(sigma=1.4):
    k = [[math.exp(-(x * x + y * y) / (2 * sigma * sigma))
          for x in (-2, -1, 0, 1, 2)] for y in (-2, -1, 0, 1, 2)]
    total = sum(sum(row) for row in k)
    return [[v / total for v in row] for row in k]


def _correlate(pixels, kernel):
    h, w = pixels.shape
    half = len(kernel) // 2
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-half, half + 1):
                for dx in range(-half, half + 1):
                    sy = min(max(y + dy, 0), h - 1)
                    sx = min(max(x + dx, 0), w - 1)
                    acc += kernel[dy + half][dx + half] * pixels[sy, sx]
            out[y, x] = acc
    return out


def reference_canny(pixels, low, high):
    pixels = np.asarray(pixels, dtype=float)
    smoothed = _correlate(pixels, _gauss5())
    gx = _correlate(smoothed, SOBEL_X)
    gy = _correlate(smoothed, SOBEL_Y)
    h, w = pixels.shape
    mag = np.zeros((h, w))
    sector = np.zeros((h, w), dtype=int)
    for y in range(h):
        for x in range(w):
            mag[y, x] = math.sqrt(gx[y, x] ** 2 + gy[y, x] ** 2)
            angle = math.atan2(gy[y, x], gx[y, x]) % math.pi
            if math.pi / 8 <= angle < 3 * math.pi / 8:
                sector[y, x] = 1
            elif 3 * math.pi / 8 <= angle < 5 * math.pi / 8:
                sector[y, x] = 2
            elif 5 * math.pi / 8 <= angle < 7 * math.pi / 8:
                sector[y, x] = 3

    def at(y, x):
        if 0 <= y < h and 0 <= x < w:
            return mag[y, x]
        return 0.0

    keep = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            dy_b, dx_b = BEFORE[sector[y, x]]
            dy_a, dx_a = AFTER[sector[y, x]]
            keep[y, x] = (mag[y, x] > at(y + dy_b, x + dx_b)
                          and mag[y, x] >= at(y + dy_a, x + dx_a))

    strong = keep & (mag >= high)
    weak = keep & (mag >= low)
    edges = np.zeros((h, w), dtype=np.uint8)
    queue = deque((y, x) for y in range(h) for x in range(w) if strong[y, x])
    for y, x in queue:
        edges[y, x] = 1
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny, nx] and not edges[ny, nx]:
                    edges[ny, nx] = 1
                    queue.append((ny, nx))
    return edges


def ramp_step_fixture(size=16):
    """Vertical step with a gentle ramp on the bright side.

    The asymmetry keeps every suppression comparison away from exact
    ties, so the vectorized and loop implementations must agree
    pixel-for-pixel.
    """
    img = np.empty((size, size))
    for c in range(size):
        img[:, c] = 10.0 if c <= 6 else 210.0 + 3.0 * (c - 7)
    return img
