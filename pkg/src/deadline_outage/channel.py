"""Rayleigh fading with MMSE channel estimation, mutual information and rate
selection.

Arrays follow the convention that the last axis indexes access points, so a
single device draw has shape ``(A,)`` and a batch of cycles for ``D`` devices
has shape ``(n, D, A)``.
"""

from dataclasses import dataclass

import numpy as np

from .specfun import DomainError


@dataclass(frozen=True)
class ChannelDraw:
    """True channel ``h`` split into estimate ``h_hat`` and error ``h_err``."""

    h: np.ndarray
    h_hat: np.ndarray
    h_err: np.ndarray


def estimation_error_variance(L, rho):
    """MMSE estimation error variance ``1 / (1 + rho * L)``.

    Vectorised over ``rho``; ``L`` is the number of pilot symbols.
    """
    if np.any(np.asarray(L) < 0):
        raise DomainError("pilot count must be non-negative")
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise DomainError("average SNR must be positive")
    out = 1.0 / (1.0 + rho * L)
    return float(out) if out.ndim == 0 else out


def _cn(rng, shape, var):
    # circularly-symmetric complex Gaussian with E|z|^2 = var
    scale = np.sqrt(0.5 * np.asarray(var, dtype=float))
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * scale


def draw_channel(rng, sigma2_e, A, size=None):
    """Draw ``h = h_hat + h_err`` with independent CN components.

    Parameters
    ----------
    rng : numpy.random.Generator
    sigma2_e : float or array_like
        Estimation error variance, scalar or broadcastable to the output
        shape (e.g. per-link variances of shape ``(..., A)``).
    A : int
        Number of access points (length of the last axis).
    size : int or tuple, optional
        Leading batch shape.
    """
    sigma2_e = np.asarray(sigma2_e, dtype=float)
    if np.any(sigma2_e < 0) or np.any(sigma2_e > 1):
        raise DomainError("estimation error variance must lie in [0, 1]")
    if size is None:
        shape = (int(A),)
    else:
        shape = tuple(np.atleast_1d(size)) + (int(A),)
    shape = np.broadcast_shapes(shape, sigma2_e.shape)
    h_hat = _cn(rng, shape, 1.0 - sigma2_e)
    h_err = _cn(rng, shape, sigma2_e)
    return ChannelDraw(h=h_hat + h_err, h_hat=h_hat, h_err=h_err)


def beamforming_snr(h, snr):
    """Received SNR ``sum_a rho_a |h_a|^2`` (reduces the last axis)."""
    h = np.asarray(h)
    snr = np.asarray(snr, dtype=float)
    if h.shape[-1] != snr.shape[-1]:
        raise ValueError(
            f"dimension mismatch: channel has {h.shape[-1]} APs, SNR has {snr.shape[-1]}"
        )
    return np.sum(snr * (h.real ** 2 + h.imag ** 2), axis=-1)


def mutual_information(h, snr, W):
    """``W log2(1 + h* G h)`` in bit/s for ``G = diag(snr)``."""
    return W * np.log2(1.0 + beamforming_snr(h, snr))


def select_rate(h_hat, snr, W, beta):
    """Backed-off rate ``beta W log2(1 + h_hat* G h_hat)``."""
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"backoff must lie in [0, 1], got {beta}")
    return beta * mutual_information(h_hat, snr, W)
