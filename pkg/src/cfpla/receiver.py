"""Per-AP ZF combining, CPU aggregation, residual extraction, matched-filter
statistic, and the threshold decision.

Conventions: z_k denotes the Hermitian transpose of row k of the CPU
aggregate, so the ideal single-user chain reads z_k = M sqrt(rho_k) x_k and
the residual inverts the power split directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .authtag import QPSK_POINTS, MessageBlock, TagBlock, TaggedSignal
from .channel import ChannelRealization, draw_channel_batch
from .numerics import IllConditionedError, RandomStream, draw_complex_gaussian
from .scenario import LargeScaleProfile, ScenarioConfig
from .training import ChannelEstimates, estimate_batch


@dataclass
class CombinerBank:
    W: np.ndarray           # (M, N, K)
    overloaded: bool = False


@dataclass
class AggregatedSignal:
    z: np.ndarray           # (K, L); z[k] = (row k of the aggregate)^H


@dataclass
class TrialOutcome:
    user: int
    lam: float
    theta: float
    accepted: bool
    truth: str              # "h0" | "h1" | "eve"


def zf_combiners(estimates: ChannelEstimates, cond_limit: float = 1e12,
                 allow_overloaded: bool = False) -> CombinerBank:
    """W_m = Ghat_m (Ghat_m^H Ghat_m)^{-1} per AP.

    Gram conditioning above cond_limit raises IllConditionedError so the
    caller can resample the block and count the event. With K > N (only
    when explicitly allowed) the minimum-norm least-squares combiner
    replaces the inverse; the ZF identity then no longer holds.
    """
    g_hat = estimates.g_hat
    M, N, K = g_hat.shape
    if K > N:
        if not allow_overloaded:
            raise ValueError(f"K ({K}) > N ({N}) requires allow_overloaded_zf")
        W = np.stack([np.linalg.pinv(g_hat[m]).conj().T for m in range(M)])
        return CombinerBank(W=W, overloaded=True)
    W = np.empty_like(g_hat)
    for m in range(M):
        gram = g_hat[m].conj().T @ g_hat[m]
        cond = float(np.linalg.cond(gram))
        if not np.isfinite(cond) or cond > cond_limit:
            raise IllConditionedError(cond, cond_limit)
        W[m] = g_hat[m] @ np.linalg.inv(gram)
    return CombinerBank(W=W)


def receive_data(channels: ChannelRealization, profile: LargeScaleProfile,
                 signals, eve_signal: TaggedSignal,
                 stream: RandomStream) -> np.ndarray:
    """Data-phase reception: (M, N, L) with unit-variance noise.

    Ybar_m = sum_k sqrt(rho_k) g_mk x_k^H + sqrt(rho_e) g_me x_e^H + noise.
    Eve drops out when her signal is None or her power is zero.
    """
    rng = stream.generator
    M, N, K = channels.g.shape
    x = np.stack([s.symbols for s in signals])               # (K, L)
    L = x.shape[1]
    amp = np.sqrt(profile.rho_k)
    received = np.einsum('mnk,k,kl->mnl', channels.g, amp, x.conj())
    if eve_signal is not None and profile.rho_e > 0:
        received += np.sqrt(profile.rho_e) * \
            channels.g_eve[:, :, None] * eve_signal.symbols.conj()[None, None, :]
    received += draw_complex_gaussian(rng, (M, N, L))
    return received


def aggregate(received: np.ndarray, combiners: CombinerBank) -> AggregatedSignal:
    """CPU aggregation: sum over APs of W_m^H Ybar_m, rows conjugated into
    signal-domain vectors."""
    zc_h = np.einsum('mnk,mnl->kl', combiners.W.conj(), received)
    return AggregatedSignal(z=zc_h.conj())


def residual(z_k: np.ndarray, s_hat: MessageBlock, rho_k: float,
             rho_s: float, rho_t: float) -> np.ndarray:
    """r_k = (z_k / sqrt(rho_k) - rho_s s_hat) / rho_t."""
    if rho_t <= 0:
        raise ValueError("rho_t must be positive to form a residual")
    return (z_k / np.sqrt(rho_k) - rho_s * s_hat.symbols) / rho_t


def test_statistic(tag_expected: TagBlock, r: np.ndarray) -> float:
    """Matched filter lambda = Re{t~^H r}."""
    if tag_expected.symbols.shape != r.shape:
        raise ValueError("tag and residual lengths differ")
    return float(np.real(np.vdot(tag_expected.symbols, r)))


def decide(lam: float, theta: float) -> bool:
    """Accept iff lam > theta; the boundary resolves to reject."""
    return bool(lam > theta)


@dataclass
class EffectiveGainBatch:
    """Per-block effective link quantities after combining, stacked over B
    coherence blocks.

    a[b, k, q] = sqrt(rho_q) sum_m w_mk^H g_mq  (the post-combining gain the
    probed user's chain sees from user q), a_eve[b, k] the same for the
    attacker's channel, noise_gram[b] = sum_m W_m^H W_m (the aggregate-noise
    covariance scale). resampled counts blocks redrawn for conditioning.
    """

    a: np.ndarray           # (B, K, K) complex
    a_eve: np.ndarray       # (B, K) complex
    noise_gram: np.ndarray  # (B, K, K) complex Hermitian
    resampled: int = 0

    @property
    def count(self):
        return self.a.shape[0]


def _gain_batch(g, g_eve, g_hat, profile, cond_limit, allow_overloaded):
    """Effective gains for stacked blocks; returns arrays plus a good-row mask."""
    B, M, N, K = g.shape
    if K > N:
        if not allow_overloaded:
            raise ValueError(f"K ({K}) > N ({N}) requires allow_overloaded_zf")
        W = np.swapaxes(np.linalg.pinv(g_hat), -1, -2).conj()
        good = np.isfinite(W).all(axis=(1, 2, 3))
    else:
        sv = np.linalg.svd(g_hat, compute_uv=False)          # (B, M, K)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond_gram = (sv[..., 0] / sv[..., -1]) ** 2
        good = np.isfinite(cond_gram).all(axis=1) \
            & (cond_gram <= cond_limit).all(axis=1)
        gram = np.einsum('bmnk,bmnq->bmkq', g_hat.conj(), g_hat)
        gram[~good] = np.eye(K)                              # placeholder rows
        W = np.einsum('bmnk,bmkq->bmnq', g_hat, np.linalg.inv(gram))
    amp = np.sqrt(profile.rho_k)
    a = np.einsum('bmnk,bmnq->bkq', W.conj(), g) * amp[None, None, :]
    a_eve = np.sqrt(profile.rho_e) * np.einsum('bmnk,bmn->bk', W.conj(), g_eve)
    noise_gram = np.einsum('bmnk,bmnq->bkq', W.conj(), W)
    return a, a_eve, noise_gram, good


def sample_effective_gains(profile: LargeScaleProfile, config: ScenarioConfig,
                           stream_or_rng, count: int,
                           batch_size: int = 1024) -> EffectiveGainBatch:
    """Draw `count` independent blocks' effective gains, resampling blocks
    whose Gram conditioning exceeds config.cond_limit.

    Resamples are counted rather than silently absorbed; a run that cannot
    produce a good block in 50 consecutive full batches raises.
    """
    rng = stream_or_rng.generator if isinstance(stream_or_rng, RandomStream) \
        else stream_or_rng
    parts_a, parts_e, parts_n = [], [], []
    have = 0
    resampled = 0
    dry_batches = 0
    while have < count:
        b = min(batch_size, count - have)
        g, g_eve = draw_channel_batch(profile, config.N, b, rng)
        g_hat = estimate_batch(g, profile, config.tau_p, rng,
                               perfect_csi=config.perfect_csi)
        a, a_eve, noise_gram, good = _gain_batch(
            g, g_eve, g_hat, profile, config.cond_limit,
            config.allow_overloaded_zf)
        n_good = int(good.sum())
        resampled += b - n_good
        if n_good == 0:
            dry_batches += 1
            if dry_batches >= 50:
                raise IllConditionedError(float("inf"), config.cond_limit)
            continue
        dry_batches = 0
        parts_a.append(a[good])
        parts_e.append(a_eve[good])
        parts_n.append(noise_gram[good])
        have += n_good
    return EffectiveGainBatch(a=np.concatenate(parts_a),
                              a_eve=np.concatenate(parts_e),
                              noise_gram=np.concatenate(parts_n),
                              resampled=resampled)


def recover_message(z_k: np.ndarray, mode: str, truth: MessageBlock,
                    rho_k: float = None, gain: float = None) -> MessageBlock:
    """Perfect recovery returns the true block (the analysis assumption);
    demodulate mode is a nearest-point QPSK slicer for BER diagnostics."""
    if mode == "perfect":
        return truth
    if mode != "demodulate":
        raise ValueError(f"unknown recovery mode '{mode}'")
    if rho_k is None or gain is None:
        raise ValueError("demodulate mode needs rho_k and a gain estimate")
    y = z_k / (np.sqrt(rho_k) * gain)
    idx = np.argmin(np.abs(y[:, None] - QPSK_POINTS[None, :]), axis=1)
    return MessageBlock(symbols=QPSK_POINTS[idx])
