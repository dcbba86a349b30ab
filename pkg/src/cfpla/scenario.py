"""Network drops and large-scale propagation.

Positions are drawn uniformly over a square with wrapped-around edges, so
every distance is a torus minimum-image distance. Large-scale fading is a
three-slope path-loss law with optional log-normal shadowing beyond the
outer breakpoint, and transmit powers are normalized by thermal noise power.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomStream

BOLTZMANN = 1.381e-23   # J/K
NOISE_TEMP = 290.0      # K


@dataclass
class ScenarioConfig:
    """All physical and protocol parameters of one experiment.

    Loadable from a JSON config file with one key per field (see
    CONFIG_KEY_DOCS); unknown keys are rejected.
    """

    M: int = 5                      # access points
    N: int = 10                     # antennas per AP
    K: int = 4                      # users
    L: int = 256                    # block length in symbols
    tau_p: int = 20                 # pilot length in symbols
    rho_s: float = 0.95             # message power coefficient
    rho_t: float = None             # tag power coefficient; derived if omitted
    transmit_power_user: float = 0.1    # watts
    transmit_power_eve: float = 0.1     # watts
    bandwidth: float = 20e6         # hertz
    noise_figure_db: float = 9.0
    shadow_sigma_db: float = 8.0
    area_side: float = 1000.0       # meters
    pfa_target: float = 0.01
    seed: int = 12345
    drops: int = 100
    trials_per_drop: int = 2000
    variance_estimation_trials: int = 10000
    # path-loss model (three-slope, carrier in MHz, heights in meters)
    d0_m: float = 10.0
    d1_m: float = 50.0
    carrier_frequency_mhz: float = 1900.0
    ap_height_m: float = 15.0
    user_height_m: float = 1.65
    min_distance_m: float = 1.0
    shadow_mode: str = "beyond_d1"  # or "always"
    # modeling switches
    perfect_csi: bool = False
    constellation: str = "qpsk"     # or "gaussian"
    message_recovery: str = "perfect"   # or "demodulate"
    eve_schedule: str = "replace"   # or "concurrent"
    xi_form: str = "mixture"        # or "exact", "printed"
    xi_self_term: str = "printed"   # or "normalized"; printed-form only
    cond_limit: float = 1e12
    allow_overloaded_zf: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.rho_t is None:
            self.rho_t = float(np.sqrt(1.0 - self.rho_s ** 2))
        self.validate()

    def validate(self):
        if min(self.M, self.N, self.K, self.L) < 1:
            raise ValueError("M, N, K, L must be positive")
        if self.tau_p < self.K:
            raise ValueError(f"tau_p ({self.tau_p}) must be >= K ({self.K})")
        if self.N < self.K and not self.allow_overloaded_zf:
            raise ValueError(f"N ({self.N}) must be >= K ({self.K}) for ZF combining")
        if abs(self.rho_s ** 2 + self.rho_t ** 2 - 1.0) > 1e-12:
            raise ValueError("rho_s^2 + rho_t^2 must equal 1")
        if not self.rho_t < self.rho_s:
            raise ValueError("tag power must stay below message power (rho_t < rho_s)")
        if not 0 < self.pfa_target < 1:
            raise ValueError("pfa_target must lie in (0, 1)")
        if self.shadow_mode not in ("beyond_d1", "always"):
            raise ValueError("shadow_mode must be 'beyond_d1' or 'always'")
        if self.constellation not in ("qpsk", "gaussian"):
            raise ValueError("constellation must be 'qpsk' or 'gaussian'")
        if self.message_recovery not in ("perfect", "demodulate"):
            raise ValueError("message_recovery must be 'perfect' or 'demodulate'")
        if self.eve_schedule not in ("replace", "concurrent"):
            raise ValueError("eve_schedule must be 'replace' or 'concurrent'")
        if self.xi_form not in ("mixture", "exact", "printed"):
            raise ValueError("xi_form must be 'mixture', 'exact' or 'printed'")
        if self.xi_self_term not in ("printed", "normalized"):
            raise ValueError("xi_self_term must be 'printed' or 'normalized'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        return self

    def replace(self, **kw) -> "ScenarioConfig":
        """New config with fields overridden; rho_t rederived when rho_s
        changes without an explicit rho_t."""
        if "rho_s" in kw and "rho_t" not in kw:
            kw["rho_t"] = None
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config file must hold a JSON object")
        return cls.from_dict(data)


CONFIG_KEY_DOCS = {
    "M": "number of access points",
    "N": "antennas per access point",
    "K": "number of legitimate users",
    "L": "block length in symbols (message/tag length)",
    "tau_p": "pilot sequence length in symbols, must be >= K",
    "rho_s": "message power allocation coefficient",
    "rho_t": "tag power allocation coefficient; omit to derive sqrt(1 - rho_s^2)",
    "transmit_power_user": "per-user maximum transmit power in watts",
    "transmit_power_eve": "attacker transmit power in watts",
    "bandwidth": "system bandwidth in hertz (sets noise power)",
    "noise_figure_db": "receiver noise figure in dB",
    "shadow_sigma_db": "log-normal shadowing standard deviation in dB",
    "area_side": "side of the square coverage area in meters",
    "pfa_target": "false-alarm probability the threshold is calibrated to",
    "seed": "root seed; all randomness derives from it",
    "drops": "number of independent network geometries per sweep point",
    "trials_per_drop": "coherence-block trials per hypothesis per drop",
    "variance_estimation_trials": "Monte Carlo trials for effective-gain statistics",
    "d0_m": "inner path-loss breakpoint in meters",
    "d1_m": "outer path-loss breakpoint in meters",
    "carrier_frequency_mhz": "carrier frequency in MHz for the path-loss constant",
    "ap_height_m": "access-point antenna height in meters",
    "user_height_m": "user antenna height in meters",
    "min_distance_m": "distance floor applied before path-loss evaluation",
    "shadow_mode": "'beyond_d1' applies shadowing only past d1; 'always' everywhere",
    "perfect_csi": "if true, channel estimates equal the true channels",
    "constellation": "'qpsk' (unit modulus) or 'gaussian' codebook for messages",
    "message_recovery": "'perfect' (assumed) or 'demodulate' (diagnostic BER mode)",
    "eve_schedule": "'replace': attacker occupies the probed slot alone; "
                    "'concurrent': probed user also transmits its untagged block",
    "xi_form": "'mixture': threshold solves the conditional-Gaussian mixture tail; "
               "'exact': single Gaussian with hypothesis-exact variance; "
               "'printed': literal published variance expression",
    "xi_self_term": "printed-form self term: 'printed' (sqrt(rho)M-1)^2 or "
                    "'normalized' (M-1)^2",
    "cond_limit": "condition-number bound above which a Gram matrix is resampled",
    "allow_overloaded_zf": "permit K > N via least-squares fallback combining",
    "workers": "process count for drop-level parallelism; results identical for any value",
}


@dataclass
class NetworkGeometry:
    ap_positions: np.ndarray        # (M, 2) meters
    user_positions: np.ndarray      # (K, 2) meters
    eve_position: np.ndarray        # (2,) meters
    area_side: float

    def __post_init__(self):
        side = self.area_side
        for arr in (self.ap_positions, self.user_positions, self.eve_position):
            if np.any(arr < 0) or np.any(arr >= side):
                raise ValueError("coordinates must lie within [0, area_side)")


@dataclass
class LargeScaleProfile:
    beta: np.ndarray        # (M, K) linear power gains
    beta_eve: np.ndarray    # (M,)
    rho_k: np.ndarray       # (K,) normalized user powers
    rho_e: float
    noise_power_w: float

    def __post_init__(self):
        if np.any(self.beta <= 0) or np.any(self.beta_eve <= 0):
            raise ValueError("large-scale coefficients must be strictly positive")


@dataclass
class ThreeSlopeParams:
    """Three-slope path-loss law: -35 dB/decade beyond d1, -20 dB/decade
    between d0 and d1, constant below d0; continuous at both breakpoints."""

    d0_m: float = 10.0
    d1_m: float = 50.0
    carrier_frequency_mhz: float = 1900.0
    ap_height_m: float = 15.0
    user_height_m: float = 1.65
    min_distance_m: float = 1.0

    @property
    def fixed_loss_db(self) -> float:
        f = self.carrier_frequency_mhz
        return (46.3 + 33.9 * np.log10(f) - 13.82 * np.log10(self.ap_height_m)
                - (1.1 * np.log10(f) - 0.7) * self.user_height_m
                + (1.56 * np.log10(f) - 0.8))

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "ThreeSlopeParams":
        return cls(d0_m=config.d0_m, d1_m=config.d1_m,
                   carrier_frequency_mhz=config.carrier_frequency_mhz,
                   ap_height_m=config.ap_height_m,
                   user_height_m=config.user_height_m,
                   min_distance_m=config.min_distance_m)


def noise_power(bandwidth, noise_figure_db):
    """Thermal noise power B * k_B * T0 * 10^(NF/10) in watts."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return bandwidth * BOLTZMANN * NOISE_TEMP * 10.0 ** (noise_figure_db / 10.0)


def wrap_distance(a, b, area_side):
    """Euclidean distance under the minimum-image convention per axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    delta = np.abs(a - b)
    delta = np.minimum(delta, area_side - delta)
    return np.sqrt(np.sum(delta ** 2, axis=-1))


def path_loss(distance_m, model: ThreeSlopeParams):
    """Linear power gain of the three-slope model at the given distance(s)."""
    d = np.maximum(np.asarray(distance_m, dtype=float), model.min_distance_m) / 1000.0
    d0 = model.d0_m / 1000.0
    d1 = model.d1_m / 1000.0
    fixed = model.fixed_loss_db
    with np.errstate(divide="ignore"):
        far = -fixed - 35.0 * np.log10(d)
    mid = -fixed - 15.0 * np.log10(d1) - 20.0 * np.log10(np.maximum(d, d0))
    near = -fixed - 15.0 * np.log10(d1) - 20.0 * np.log10(d0)
    db = np.where(d >= d1, far, np.where(d > d0, mid, near))
    out = 10.0 ** (db / 10.0)
    return float(out) if out.ndim == 0 else out


def generate_geometry(config: ScenarioConfig, stream: RandomStream) -> NetworkGeometry:
    """Drop APs, users, and the attacker i.i.d. uniform over the square."""
    rng = stream.generator
    side = config.area_side
    ap = rng.uniform(0.0, side, size=(config.M, 2))
    users = rng.uniform(0.0, side, size=(config.K, 2))
    eve = rng.uniform(0.0, side, size=2)
    return NetworkGeometry(ap, users, eve, side)


def large_scale_profile(geometry: NetworkGeometry, config: ScenarioConfig,
                        stream: RandomStream) -> LargeScaleProfile:
    """Path loss plus shadowing for every AP-user and AP-attacker link.

    beta_mk = PL(d_mk) * 10^(sigma_sh * z_mk / 10) with independent standard
    normal z_mk; shadowing applies beyond d1 only unless shadow_mode is
    'always'. Normalized powers divide transmit power by noise power.
    """
    rng = stream.generator
    model = ThreeSlopeParams.from_config(config)
    nodes = np.vstack([geometry.user_positions, geometry.eve_position])
    # (M, K+1) torus distances
    d = wrap_distance(geometry.ap_positions[:, None, :], nodes[None, :, :],
                      geometry.area_side)
    pl = path_loss(d, model)
    z = rng.standard_normal(d.shape)
    if config.shadow_sigma_db > 0:
        apply = np.ones_like(d, dtype=bool) if config.shadow_mode == "always" \
            else d > config.d1_m
        shadow = np.where(apply, 10.0 ** (config.shadow_sigma_db * z / 10.0), 1.0)
    else:
        shadow = np.ones_like(d)
    beta_all = pl * shadow
    pn = noise_power(config.bandwidth, config.noise_figure_db)
    rho_k = np.full(config.K, config.transmit_power_user / pn)
    rho_e = config.transmit_power_eve / pn
    return LargeScaleProfile(beta=beta_all[:, :config.K],
                             beta_eve=beta_all[:, config.K],
                             rho_k=rho_k, rho_e=rho_e, noise_power_w=pn)
