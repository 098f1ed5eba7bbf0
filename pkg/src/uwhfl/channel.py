"""Underwater acoustic link physics: propagation loss, ambient noise, the
sonar-equation feasibility check, and per-transmission energy accounting.

Conventions: frequencies in kHz, bandwidths in Hz, distances in metres,
acoustic levels in dB re 1 uPa (PSDs in dB re 1 uPa^2/Hz), powers in watts,
energies in joules. Source levels are referenced at 1 m, so transmission
loss is undefined below the 1 m reference distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, ProtocolError


@dataclass(frozen=True)
class AcousticParams:
    """Channel, modem, and energy-accounting parameters.

    Defaults are the baseline deployment values used throughout the
    simulator; override via the experiment config.
    """

    carrier_freq_khz: float = 12.0
    bandwidth_hz: float = 4000.0
    spreading_factor: float = 1.5
    sound_speed_mps: float = 1500.0
    wind_mps: float = 5.0
    shipping: float = 0.5
    target_snr_db: float = 10.0
    impl_loss_db: float = 2.0
    sl_max_db: float = 140.0
    ea_efficiency: float = 0.25
    circuit_tx_w: float = 0.05
    circuit_rx_w: float = 0.03
    water_density: float = 1025.0
    ref_pressure: float = 1e-6
    # Energy per FLOP and local compute rate; not part of the acoustic model
    # proper but kept here so every energy knob lives in one config object.
    eps_op_j_per_flop: float = 1e-9
    compute_rate_flops: float = 1e8

    def __post_init__(self) -> None:
        positive = (
            "carrier_freq_khz", "bandwidth_hz", "sound_speed_mps",
            "target_snr_db", "sl_max_db", "water_density", "ref_pressure",
            "compute_rate_flops",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if not 1.0 <= self.spreading_factor <= 2.0:
            raise DomainError(f"spreading_factor must be in [1, 2], got {self.spreading_factor}")
        if not 0.0 <= self.shipping <= 1.0:
            raise DomainError(f"shipping must be in [0, 1], got {self.shipping}")
        if self.wind_mps < 0:
            raise DomainError(f"wind_mps must be nonnegative, got {self.wind_mps}")
        if not 0.0 < self.ea_efficiency <= 1.0:
            raise DomainError(f"ea_efficiency must be in (0, 1], got {self.ea_efficiency}")
        if self.circuit_tx_w < 0 or self.circuit_rx_w < 0 or self.impl_loss_db < 0:
            raise DomainError("circuit powers and implementation loss must be nonnegative")
        if self.eps_op_j_per_flop < 0:
            raise DomainError("eps_op_j_per_flop must be nonnegative")


@dataclass(frozen=True)
class LinkBudget:
    """Fully evaluated budget for one directed link.

    Infeasible links still carry the full diagnostic fields, but no energy
    may be charged on them (tx_energy / rx_energy raise ProtocolError).
    """

    distance_m: float
    tl_db: float
    nl_db: float
    sl_min_db: float
    feasible: bool
    rate_bps: float
    prop_delay_s: float
    tx_power_w: float


def thorp_absorption(f_khz: float) -> float:
    """Thorp seawater absorption coefficient in dB/km at frequency f (kHz)."""
    if f_khz <= 0:
        raise DomainError(f"frequency must be positive, got {f_khz}")
    f2 = f_khz * f_khz
    return 0.11 * f2 / (1 + f2) + 44 * f2 / (4100 + f2) + 2.75e-4 * f2 + 0.003


def transmission_loss(d_m: float, f_khz: float, k: float) -> float:
    """Spreading-plus-absorption transmission loss in dB over d metres.

    The source level is referenced at 1 m, so d_m < 1 is out of domain.
    """
    if d_m < 1.0:
        raise DomainError(f"distance below 1 m reference, got {d_m}")
    return 10.0 * k * math.log10(d_m) + thorp_absorption(f_khz) * d_m / 1000.0


def _noise_components_db(f_khz: float, wind_mps: float, shipping: float) -> dict[str, float]:
    """Standard Wenz-form component PSDs (dB re 1 uPa^2/Hz)."""
    log_f = math.log10(f_khz)
    return {
        "turbulence": 17.0 - 30.0 * log_f,
        "shipping": 40.0 + 20.0 * (shipping - 0.5) + 26.0 * log_f - 60.0 * math.log10(f_khz + 0.03),
        "wind": 50.0 + 7.5 * math.sqrt(wind_mps) + 20.0 * log_f - 40.0 * math.log10(f_khz + 0.4),
        "thermal": -15.0 + 20.0 * log_f,
    }


def noise_psd(f_khz: float, wind_mps: float, shipping: float) -> float:
    """Total ambient noise PSD in dB re 1 uPa^2/Hz.

    Power-sums the turbulence, shipping, wind, and thermal components in
    linear scale and converts the total back to dB.
    """
    if f_khz <= 0:
        raise DomainError(f"frequency must be positive, got {f_khz}")
    if wind_mps < 0:
        raise DomainError(f"wind speed must be nonnegative, got {wind_mps}")
    if not 0.0 <= shipping <= 1.0:
        raise DomainError(f"shipping must be in [0, 1], got {shipping}")
    linear = sum(10.0 ** (level / 10.0) for level in _noise_components_db(f_khz, wind_mps, shipping).values())
    return 10.0 * math.log10(linear)


def noise_level(f_khz: float, bandwidth_hz: float, wind_mps: float, shipping: float) -> float:
    """Noise level over the receiver bandwidth: N0(f) + 10 log10(B), in dB."""
    if bandwidth_hz <= 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth_hz}")
    return noise_psd(f_khz, wind_mps, shipping) + 10.0 * math.log10(bandwidth_hz)


def min_source_level(d_m: float, params: AcousticParams) -> float:
    """Minimum source level (dB) that achieves the target SNR over d metres."""
    tl = transmission_loss(d_m, params.carrier_freq_khz, params.spreading_factor)
    nl = noise_level(params.carrier_freq_khz, params.bandwidth_hz, params.wind_mps, params.shipping)
    return params.target_snr_db + tl + nl + params.impl_loss_db


def shannon_rate(params: AcousticParams) -> float:
    """Shannon-type rate at the target operating SNR, in bit/s.

    Independent of distance: the transmitter power-controls to the target
    SNR on every feasible link.
    """
    return params.bandwidth_hz * math.log2(1.0 + 10.0 ** (params.target_snr_db / 10.0))


def link_budget(d_m: float, params: AcousticParams) -> LinkBudget:
    """Evaluate the full budget for a link of length d metres.

    Links shorter than the 1 m source-level reference are clamped to 1 m.
    Electrical transmit power converts the required acoustic power through
    the electro-acoustic efficiency.
    """
    d_eff = max(d_m, 1.0)
    tl = transmission_loss(d_eff, params.carrier_freq_khz, params.spreading_factor)
    nl = noise_level(params.carrier_freq_khz, params.bandwidth_hz, params.wind_mps, params.shipping)
    sl_min = params.target_snr_db + tl + nl + params.impl_loss_db
    p_ac = (4.0 * math.pi * params.ref_pressure ** 2
            / (params.water_density * params.sound_speed_mps)) * 10.0 ** (sl_min / 10.0)
    return LinkBudget(
        distance_m=d_m,
        tl_db=tl,
        nl_db=nl,
        sl_min_db=sl_min,
        feasible=sl_min <= params.sl_max_db,
        rate_bps=shannon_rate(params),
        prop_delay_s=d_m / params.sound_speed_mps,
        tx_power_w=p_ac / params.ea_efficiency,
    )


def tx_energy(bits: int, lb: LinkBudget, params: AcousticParams) -> float:
    """Energy in joules to transmit `bits` over a feasible link."""
    if not lb.feasible:
        raise ProtocolError(f"transmit attempted on infeasible link (d={lb.distance_m} m)")
    if bits < 0:
        raise DomainError(f"bits must be nonnegative, got {bits}")
    return (lb.tx_power_w + params.circuit_tx_w) * bits / lb.rate_bps


def rx_energy(bits: int, lb: LinkBudget, params: AcousticParams) -> float:
    """Receive-side circuit energy in joules for `bits` over a feasible link."""
    if not lb.feasible:
        raise ProtocolError(f"receive attempted on infeasible link (d={lb.distance_m} m)")
    if bits < 0:
        raise DomainError(f"bits must be nonnegative, got {bits}")
    return params.circuit_rx_w * bits / lb.rate_bps


def comp_energy(flops: int, eps_op: float) -> float:
    """Local-computation energy: joules per FLOP times FLOP count."""
    if flops < 0:
        raise DomainError(f"flops must be nonnegative, got {flops}")
    return eps_op * flops
