# apps/scenes/normals.py
"""Estimación de normales para nubes reales que no las traen."""

import numpy as np
from scipy.spatial import cKDTree

NEIGHBOURS = 16


def estimate_normals(points, k=NEIGHBOURS):
    """
    Ajuste de plano por k vecinos (vector propio de menor valor propio de la
    covarianza local). Orientación: hacia arriba si la normal es casi vertical,
    hacia afuera del centroide en otro caso.
    """
    points = np.asarray(points, dtype=np.float64)
    count = len(points)
    normals = np.tile([0.0, 0.0, 1.0], (count, 1))
    if count < 3:
        return normals

    k = min(k, count)
    _, neighbours = cKDTree(points).query(points, k=k)
    patches = points[neighbours]
    centered = patches - patches.mean(axis=1, keepdims=True)
    covariance = np.einsum('nki,nkj->nij', centered, centered) / k
    _, vectors = np.linalg.eigh(covariance)
    normals = vectors[:, :, 0]

    centroid = points.mean(axis=0)
    vertical = np.abs(normals[:, 2]) >= 0.5
    outward = np.einsum('ij,ij->i', normals, points - centroid)
    flip = np.where(vertical, normals[:, 2] < 0, outward < 0)
    normals[flip] *= -1.0
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)
