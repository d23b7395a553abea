"""Truncated graph Fourier transforms of scalar and vector node features.

The numpy functions operate on a single graph. ``batched_gft`` and
``batched_igft`` are the torch counterparts used inside the model, where
every sample carries its own truncated basis of shape (B, N, M).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidArgumentError
from .graph import LaplacianSpectrum, check_num_modes


@dataclass(frozen=True)
class SpectralState:
    """Coefficients of the first ``num_modes`` Laplacian eigenvectors.

    ``scalar_coeffs`` is (M, F), ``vector_coeffs`` is (M, m, 3) and
    ``vector_mean`` is the (m, 3) node mean removed before projection.
    Arrays may be numpy arrays or torch tensors, optionally with leading
    batch dimensions.
    """

    scalar_coeffs: object
    vector_coeffs: object
    vector_mean: object

    @property
    def num_modes(self) -> int:
        return self.vector_coeffs.shape[-3]


def gft_scalar(H, spectrum: LaplacianSpectrum, num_modes: int) -> np.ndarray:
    """Project N x F node features onto the first ``num_modes`` eigenvectors."""
    H = np.asarray(H, dtype=np.float64)
    basis = spectrum.basis(num_modes)
    if H.shape[0] != spectrum.num_nodes:
        raise InvalidArgumentError(f"expected {spectrum.num_nodes} rows, got {H.shape[0]}")
    return basis.T @ H


def gft_vector(Z, spectrum: LaplacianSpectrum, num_modes: int) -> SpectralState:
    """Mean-centre N x m x 3 vector features and project each axis separately.

    The returned state carries empty (M, 0) scalar coefficients; combine with
    :func:`gft_scalar` via :func:`gft` for both channels.
    """
    Z = np.asarray(Z, dtype=np.float64)
    basis = spectrum.basis(num_modes)
    n = spectrum.num_nodes
    if Z.ndim != 3 or Z.shape[0] != n or Z.shape[2] != 3:
        raise InvalidArgumentError(f"expected ({n}, m, 3) vector features, got {Z.shape}")
    mean = Z.mean(axis=0)
    centred = (Z - mean).reshape(n, -1)
    coeffs = (basis.T @ centred).reshape(num_modes, Z.shape[1], 3)
    return SpectralState(np.zeros((num_modes, 0)), coeffs, mean)


def gft(H, Z, spectrum: LaplacianSpectrum, num_modes: int) -> SpectralState:
    vec = gft_vector(Z, spectrum, num_modes)
    return SpectralState(gft_scalar(H, spectrum, num_modes), vec.vector_coeffs, vec.vector_mean)


def igft(state: SpectralState, spectrum: LaplacianSpectrum):
    """Inverse transform; returns ``(H, Z)`` with the vector mean added back."""
    m = state.num_modes
    n = spectrum.num_nodes
    if m > n:
        raise InvalidArgumentError(f"state has {m} modes but graph has only {n} nodes")
    if state.scalar_coeffs.shape[0] != m:
        raise InvalidArgumentError("scalar and vector coefficients disagree on mode count")
    basis = spectrum.basis(m)
    H = basis @ np.asarray(state.scalar_coeffs)
    vc = np.asarray(state.vector_coeffs)
    if np.shape(state.vector_mean) != vc.shape[1:]:
        raise InvalidArgumentError("vector mean shape does not match coefficients")
    Z = (basis @ vc.reshape(m, -1)).reshape(n, *vc.shape[1:]) + state.vector_mean
    return H, Z


def truncation_error(x, spectrum: LaplacianSpectrum, num_modes: int) -> float:
    """Energy discarded by keeping only the first ``num_modes`` modes."""
    check_num_modes(num_modes, spectrum.num_nodes)
    coeffs = spectrum.eigenvectors.T @ np.asarray(x, dtype=np.float64)
    return float(np.sum(coeffs[num_modes:] ** 2))


def batched_gft(H: torch.Tensor, Z: torch.Tensor, basis: torch.Tensor) -> SpectralState:
    """Torch GFT for a batch: H (B, N, F), Z (B, N, m, 3), basis (B, N, M)."""
    mean = Z.mean(dim=1)
    centred = Z - mean[:, None]
    h_coeffs = torch.einsum("bnk,bnf->bkf", basis, H)
    z_coeffs = torch.einsum("bnk,bnca->bkca", basis, centred)
    return SpectralState(h_coeffs, z_coeffs, mean)


def batched_igft(state: SpectralState, basis: torch.Tensor):
    """Inverse of :func:`batched_gft`; extra leading dims on the coefficients
    (e.g. a time axis before the batch axis) broadcast against ``basis``."""
    H = torch.einsum("bnk,...bkf->...bnf", basis, state.scalar_coeffs)
    Z = torch.einsum("bnk,...bkca->...bnca", basis, state.vector_coeffs)
    return H, Z + state.vector_mean[..., None, :, :]
