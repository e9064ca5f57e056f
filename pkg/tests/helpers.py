"""Small geometry builders and reference routines shared by the tests."""

import numpy as np


def uv_sphere(center, radius=1.0, n_lat=24, n_lon=48):
    """Closed triangle mesh of a sphere; returns (vertices, faces)."""
    verts = [(0.0, 0.0, radius)]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append((radius * np.sin(th) * np.cos(ph), radius * np.sin(th) * np.sin(ph), radius * np.cos(th)))
    verts.append((0.0, 0.0, -radius))
    verts = np.array(verts) + np.asarray(center, float)
    faces = []
    ring = lambda i, j: 1 + (i - 1) * n_lon + (j % n_lon)
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b, c, d = ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1)
            faces += [(a, c, b), (b, c, d)]
    last = len(verts) - 1
    for j in range(n_lon):
        faces.append((ring(n_lat - 1, j), last, ring(n_lat - 1, j + 1)))
    return verts, np.array(faces)


def sphere_points(center, radius, n=20000, seed=0):
    p = np.random.default_rng(seed).normal(size=(n, 3))
    return np.asarray(center, float) + radius * p / np.linalg.norm(p, axis=1, keepdims=True)


def moller_trumbore(o, d, tri):
    """Scalar ray/triangle test; returns (t, u, v) or None."""
    a, b, c = tri
    e1, e2 = b - a, c - a
    p = np.cross(d, e2)
    det = e1 @ p
    if abs(det) < 1e-15:
        return None
    inv = 1.0 / det
    s = o - a
    u = (s @ p) * inv
    q = np.cross(s, e1)
    v = (d @ q) * inv
    t = (e2 @ q) * inv
    if u < 0 or v < 0 or u + v > 1:
        return None
    return t, u, v


def random_triangles(rng, n, center=(6.0, 0.0, 0.0), spread=2.0, size=0.6):
    c = rng.uniform(-spread, spread, (n, 1, 3)) + np.asarray(center)
    return c + rng.uniform(-size, size, (n, 3, 3))


def directions_towards(rng, n, center=(6.0, 0.0, 0.0), spread=2.5):
    target = np.asarray(center) + rng.uniform(-spread, spread, (n, 3))
    return target / np.linalg.norm(target, axis=1, keepdims=True)
