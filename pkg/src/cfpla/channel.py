"""Small-scale fading draws for one coherence block.

One ChannelRealization serves both the training and the data phase of a
trial: estimates formed from pilots are applied to data received over the
same channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RandomStream, draw_complex_gaussian
from .scenario import LargeScaleProfile


@dataclass
class ChannelRealization:
    """Channels for all links of one coherence block.

    g has shape (M, N, K): column k at AP m is the N-dim channel of user k.
    g_eve has shape (M, N).
    """

    g: np.ndarray
    g_eve: np.ndarray

    @property
    def M(self):
        return self.g.shape[0]

    @property
    def N(self):
        return self.g.shape[1]

    @property
    def K(self):
        return self.g.shape[2]


def draw_channels(profile: LargeScaleProfile, N: int,
                  stream: RandomStream) -> ChannelRealization:
    """g_mk = sqrt(beta_mk) h_mk with h_mk i.i.d. CN(0, 1); same for Eve."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = stream.generator
    M, K = profile.beta.shape
    h = draw_complex_gaussian(rng, (M, N, K))
    he = draw_complex_gaussian(rng, (M, N))
    g = h * np.sqrt(profile.beta)[:, None, :]
    g_eve = he * np.sqrt(profile.beta_eve)[:, None]
    return ChannelRealization(g=g, g_eve=g_eve)


def draw_channel_batch(profile: LargeScaleProfile, N: int, count: int,
                       stream_or_rng):
    """count i.i.d. coherence blocks at once: (count, M, N, K), (count, M, N).

    Distribution matches stacking draw_channels outputs; hot loops use this
    form to keep the per-block work inside numpy.
    """
    if N < 1 or count < 1:
        raise ValueError("N and count must be >= 1")
    rng = stream_or_rng.generator if isinstance(stream_or_rng, RandomStream) \
        else stream_or_rng
    M, K = profile.beta.shape
    g = draw_complex_gaussian(rng, (count, M, N, K)) \
        * np.sqrt(profile.beta)[None, :, None, :]
    g_eve = draw_complex_gaussian(rng, (count, M, N)) \
        * np.sqrt(profile.beta_eve)[None, :, None]
    return g, g_eve
