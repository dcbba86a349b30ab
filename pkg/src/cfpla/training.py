"""Uplink pilot training and per-AP linear MMSE channel estimation.

Pilots are orthonormal columns, so projecting the received pilot block onto
pilot k isolates sqrt(tau_p rho_k) g_mk plus unit-variance noise; the MMSE
scaling and its variance split follow analytically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .numerics import RandomStream, draw_complex_gaussian
from .scenario import LargeScaleProfile


@dataclass
class PilotBook:
    pilots: np.ndarray      # (tau_p, K), column k is phi_k

    def __post_init__(self):
        gram = self.pilots.conj().T @ self.pilots
        if not np.allclose(gram, np.eye(self.pilots.shape[1]), atol=1e-12):
            raise ValueError("pilot columns must be orthonormal")


@dataclass
class ChannelEstimates:
    """MMSE estimates with their analytic variance split.

    g_hat: (M, N, K); gamma and error_var: (M, K) per-element variances with
    gamma + error_var = beta exactly.
    """

    g_hat: np.ndarray
    gamma: np.ndarray
    error_var: np.ndarray


def make_pilot_book(tau_p: int, K: int) -> PilotBook:
    """First K standard basis vectors of dimension tau_p."""
    if tau_p < K:
        raise ValueError(f"tau_p ({tau_p}) must be >= K ({K})")
    pilots = np.zeros((tau_p, K), dtype=complex)
    pilots[:K, :K] = np.eye(K)
    return PilotBook(pilots=pilots)


def gamma_variance(beta, tau_p, rho_k):
    """Estimate variance tau_p rho beta^2 / (tau_p rho beta + 1)."""
    snr = tau_p * rho_k * beta
    return snr * beta / (snr + 1.0)


def receive_pilots(channels: ChannelRealization, profile: LargeScaleProfile,
                   pilots: PilotBook, stream: RandomStream) -> np.ndarray:
    """Received pilot blocks, one (N, tau_p) matrix per AP.

    The transmission is built so that projecting onto pilot k yields
    sqrt(tau_p rho_k) g_mk plus a unit-variance noise vector, the form the
    MMSE estimator is derived from.
    """
    rng = stream.generator
    M, N, K = channels.g.shape
    tau_p = pilots.pilots.shape[0]
    amp = np.sqrt(tau_p * profile.rho_k)                     # (K,)
    signal = np.einsum('mnk,k,pk->mnp', channels.g, amp, pilots.pilots.conj())
    noise = draw_complex_gaussian(rng, (M, N, tau_p))
    return signal + noise


def project_pilots(received: np.ndarray, pilots: PilotBook) -> np.ndarray:
    """Project each AP's pilot block onto every pilot: (M, N, K)."""
    return np.einsum('mnp,pk->mnk', received, pilots.pilots)


def mmse_estimate(projected: np.ndarray, profile: LargeScaleProfile,
                  tau_p: int) -> ChannelEstimates:
    """Per-element linear MMSE estimate from the pilot projections.

    g_hat_mk = (sqrt(tau_p rho_k) beta_mk / (tau_p rho_k beta_mk + 1)) y_mk.
    """
    beta = profile.beta
    snr = tau_p * profile.rho_k[None, :] * beta              # (M, K)
    coeff = np.sqrt(tau_p * profile.rho_k)[None, :] * beta / (snr + 1.0)
    g_hat = coeff[:, None, :] * projected
    gamma = snr * beta / (snr + 1.0)
    error_var = beta / (snr + 1.0)
    return ChannelEstimates(g_hat=g_hat, gamma=gamma, error_var=error_var)


def estimate_batch(g: np.ndarray, profile: LargeScaleProfile, tau_p: int,
                   stream_or_rng, perfect_csi: bool = False) -> np.ndarray:
    """Batched MMSE estimates from stacked channels g of shape (B, M, N, K).

    Works on the sufficient statistic directly: projecting the received
    pilot block onto orthonormal pilot k gives sqrt(tau_p rho_k) g_mk plus
    CN(0, 1) noise, so the projection step never has to be materialised.
    Equivalence with the explicit pilot path is covered by tests.
    """
    if perfect_csi:
        return g
    rng = stream_or_rng.generator if isinstance(stream_or_rng, RandomStream) \
        else stream_or_rng
    amp = np.sqrt(tau_p * profile.rho_k)                     # (K,)
    projected = amp[None, None, None, :] * g \
        + draw_complex_gaussian(rng, g.shape)
    snr = tau_p * profile.rho_k[None, :] * profile.beta      # (M, K)
    coeff = amp[None, :] * profile.beta / (snr + 1.0)
    return coeff[None, :, None, :] * projected


def estimate_channels(channels: ChannelRealization, profile: LargeScaleProfile,
                      tau_p: int, stream: RandomStream,
                      perfect_csi: bool = False) -> ChannelEstimates:
    """Full training pass: pilots, reception, projection, MMSE.

    With perfect_csi the estimates are the true channels (gamma = beta,
    zero error variance); used by the single-link oracle reduction.
    """
    if perfect_csi:
        beta = profile.beta
        return ChannelEstimates(g_hat=channels.g.copy(), gamma=beta.copy(),
                                error_var=np.zeros_like(beta))
    K = channels.K
    book = make_pilot_book(tau_p, K)
    received = receive_pilots(channels, profile, book, stream)
    projected = project_pilots(received, book)
    return mmse_estimate(projected, profile, tau_p)
