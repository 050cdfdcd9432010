# apps/evaluation/frechet.py
"""
Distancia de Fréchet entre gaussianas y FID sobre los embeddings de movimiento
del modelo de emparejamiento.
"""

import numpy as np
from django.core.exceptions import ValidationError
from scipy import linalg

SHRINKAGE = 1e-6
PSD_TOLERANCE = 1e-8


def _symmetric_psd(matrix, name):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    matrix = 0.5 * (matrix + matrix.T)
    eigenvalues, eigenvectors = linalg.eigh(matrix)
    scale = max(1.0, float(np.abs(eigenvalues).max()) if eigenvalues.size else 1.0)
    if eigenvalues.size and eigenvalues.min() < -PSD_TOLERANCE * scale:
        raise ValidationError(f'{name} no es semidefinida positiva (autovalor {eigenvalues.min():.3e}).')
    return np.clip(eigenvalues, 0.0, None), eigenvectors


def _sqrtm_psd(matrix, name):
    eigenvalues, eigenvectors = _symmetric_psd(matrix, name)
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T


def frechet_distance(mu1, sigma1, mu2, sigma2):
    """
    ‖μ1−μ2‖² + tr(Σ1 + Σ2 − 2(Σ1Σ2)^½). La traza de la raíz se calcula con los
    autovalores del producto simétrico Σ1^½ Σ2 Σ1^½.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    if mu1.shape != mu2.shape:
        raise ValidationError(f'Medias de distinta dimensión: {mu1.shape} y {mu2.shape}.')
    root1 = _sqrtm_psd(sigma1, 'Σ1')
    eigen2, _ = _symmetric_psd(sigma2, 'Σ2')
    product, _ = _symmetric_psd(root1 @ np.atleast_2d(sigma2) @ root1, 'Σ1^½Σ2Σ1^½')
    trace_sqrt = float(np.sqrt(product).sum())
    trace1 = float(np.trace(np.atleast_2d(sigma1)))
    trace2 = float(eigen2.sum())
    distance = float(np.sum((mu1 - mu2) ** 2)) + trace1 + trace2 - 2.0 * trace_sqrt
    return max(distance, 0.0)


def gaussian_moments(embeddings, shrinkage=SHRINKAGE):
    embeddings = np.asarray(embeddings, dtype=np.float64)
    count, dim = embeddings.shape
    if count < dim + 1:
        raise ValidationError(f'FID necesita al menos {dim + 1} muestras por conjunto, hay {count}.')
    mean = embeddings.mean(axis=0)
    cov = np.cov(embeddings, rowvar=False).reshape(dim, dim) + shrinkage * np.eye(dim)
    return mean, cov


def fid_from_embeddings(generated, reference):
    return frechet_distance(*gaussian_moments(generated), *gaussian_moments(reference))


def fid(generated_features, reference_features, matching_model):
    """FID entre dos conjuntos de matrices de rasgos (una por secuencia)."""
    generated = matching_model.embed_motions(generated_features).data
    reference = matching_model.embed_motions(reference_features).data
    return fid_from_embeddings(generated, reference)
