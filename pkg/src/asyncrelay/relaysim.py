"""Time-domain frame pipeline for the two-hop relay link.

One frame: the source modulates each frequency-domain block by IDFT or DFT
(as the schedule demands), prepends a cyclic prefix, and broadcasts. Each
relay receives every source symbol over its own flat fading coefficient,
then per slot either stays silent or retransmits one received symbol with a
sign, an optional conjugation, an optional time reversal, and a fixed
amplification factor. The destination sees the superposition of all relay
transmissions, each shifted by an integer sample delay, plus noise; its
front-end drops the cyclic prefix, undoes the index offset that reversal
introduces, and applies a DFT.

Time reversal acts on the cyclic-prefixed symbol as reversal of its
N-periodic extension: transmit sample p carries received sample
(cp_len - p) mod N. Only the first N received samples are used, each
exactly once per period, so forwarded noise stays white. With delays up to
cp_len (inclusive) the front-end output per subcarrier k reduces exactly to

    y_k = gain * X_k(s_k) @ h_k,    h_k[i] = f_i g_i exp(-2j pi k tau_i / N)

with f_i conjugated for conjugated columns; larger delays break the
equivalence, which is what the cyclic prefix contract is about.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral
from .codebook import DFT, CodeDefinition, RelaySchedule

__all__ = [
    "ChannelRealization",
    "LinkConfig",
    "PowerConfig",
    "complex_noise",
    "destination_frontend",
    "destination_receive",
    "draw_channel",
    "relay_process",
    "relay_receive",
    "run_frame",
    "source_transmit",
]


@dataclass(frozen=True)
class PowerConfig:
    """Total average power and its split between the two hops.

    The source transmits with amplitude sqrt(source_fraction * total_power)
    on unit-power symbols; each relay scales its received samples by
    sqrt(relay_fraction * total_power / (source_fraction * total_power + 1))
    so its average transmit power is relay_fraction * total_power under
    unit-variance fading and noise.
    """

    total_power: float
    source_fraction: float = 1.0
    relay_fraction: float = 0.25

    def __post_init__(self):
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")
        if self.source_fraction <= 0 or self.relay_fraction <= 0:
            raise ValueError("power fractions must be positive")

    @property
    def source_scale(self) -> float:
        return math.sqrt(self.source_fraction * self.total_power)

    @property
    def relay_gain(self) -> float:
        return math.sqrt(
            self.relay_fraction * self.total_power / (self.source_fraction * self.total_power + 1.0)
        )

    @property
    def cascade_gain(self) -> float:
        """End-to-end coefficient of the signal path: source scale times relay gain."""
        return self.source_scale * self.relay_gain

    @property
    def relay_noise_power(self) -> float:
        """Per-slot destination noise contribution of one active relay with |g| = 1."""
        return self.relay_gain**2


@dataclass(frozen=True)
class LinkConfig:
    n_fft: int
    cp_len: int
    power: PowerConfig

    def __post_init__(self):
        n = self.n_fft
        if n < 1 or (n & (n - 1)) != 0:
            raise ValueError(f"n_fft {n} must be a power of two")
        if not 0 <= self.cp_len < n:
            raise ValueError(f"cp_len {self.cp_len} must lie in [0, {n})")

    @property
    def symbol_len(self) -> int:
        return self.n_fft + self.cp_len


@dataclass(frozen=True)
class ChannelRealization:
    """Quasi-static two-hop fading plus integer arrival delays.

    ``delays`` is normalised so the first relay defines the timing origin
    (delays[0] == 0) and entries never decrease. Delays at most cp_len keep
    the per-subcarrier model exact; larger values are representable so the
    out-of-contract behaviour can be exercised.
    """

    source_to_relay: np.ndarray
    relay_to_dest: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.source_to_relay, dtype=complex)
        g = np.asarray(self.relay_to_dest, dtype=complex)
        d = np.asarray(self.delays, dtype=int)
        if f.shape != g.shape or f.shape != d.shape or f.ndim != 1:
            raise ValueError("channel vectors must be 1-D with one entry per relay")
        if d.size == 0:
            raise ValueError("need at least one relay")
        if d[0] != 0:
            raise ValueError("delays[0] must be 0 (first relay sets the timing origin)")
        if np.any(np.diff(d) < 0):
            raise ValueError("delays must be non-decreasing")
        if np.any(d < 0):
            raise ValueError("delays must be non-negative")
        for field_name, value in (("source_to_relay", f), ("relay_to_dest", g), ("delays", d)):
            value.setflags(write=False)
            object.__setattr__(self, field_name, value)

    @property
    def num_relays(self) -> int:
        return self.source_to_relay.shape[0]


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian samples with unit variance per sample."""
    return math.sqrt(0.5) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channel(
    rng: np.random.Generator,
    num_relays: int,
    cp_len: int = 0,
    delays=None,
) -> ChannelRealization:
    """Sample unit-variance fading on both hops and integer delays.

    Random delays are drawn uniformly on [0, cp_len - 1] per relay, then
    sorted and shifted so the earliest arrival is the timing origin. A fixed
    ``delays`` sequence bypasses the draw entirely (no generator samples are
    consumed for it, so runs with different fixed delays share fading).
    """
    f = complex_noise(rng, num_relays)
    g = complex_noise(rng, num_relays)
    if delays is None:
        if cp_len > 0:
            d = np.sort(rng.integers(0, cp_len, size=num_relays))
            d = d - d[0]
        else:
            d = np.zeros(num_relays, dtype=int)
    else:
        d = np.asarray(delays, dtype=int)
    return ChannelRealization(f, g, d)


def source_transmit(frame: np.ndarray, schedule: RelaySchedule, cfg: LinkConfig) -> np.ndarray:
    """Modulate, cyclic-prefix and scale the (nu, N) frequency-domain frame."""
    frame = np.asarray(frame, dtype=complex)
    if frame.shape != (schedule.num_blocks, cfg.n_fft):
        raise ValueError(
            f"frame shape {frame.shape} does not match ({schedule.num_blocks}, {cfg.n_fft})"
        )
    blocks = np.empty_like(frame)
    for j, modulation in enumerate(schedule.source_modulation):
        blocks[j] = spectral.dft(frame[j]) if modulation == DFT else spectral.idft(frame[j])
    return cfg.power.source_scale * spectral.add_cp(blocks, cfg.cp_len)


def relay_receive(
    symbols: np.ndarray,
    channel: ChannelRealization,
    noise_on: bool = True,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-relay received symbols, shape (R, nu, N + cp_len)."""
    symbols = np.asarray(symbols, dtype=complex)
    received = channel.source_to_relay[:, None, None] * symbols[None, :, :]
    if noise_on:
        if rng is None:
            raise ValueError("noise_on requires a random generator")
        received = received + complex_noise(rng, received.shape)
    return received


def _reverse_cp_extended(symbol: np.ndarray, n_fft: int, cp_len: int) -> np.ndarray:
    """Reverse the N-periodic extension of a cyclic-prefixed symbol.

    Output sample p holds input sample (cp_len - p) mod N; the result is
    again N-periodic over its full length, so it carries a valid cyclic
    prefix built purely from received samples.
    """
    body = spectral.shift_tail_to_head(spectral.reverse(symbol[..., :n_fft]), cp_len)
    if cp_len == 0:
        return body
    return np.concatenate((body, body[..., :cp_len]), axis=-1)


def relay_process(
    received: np.ndarray,
    schedule: RelaySchedule,
    cfg: LinkConfig,
) -> np.ndarray:
    """Apply each relay's per-slot instruction, shape (R, T, N + cp_len).

    Silent slots transmit zeros. Active slots forward one received block
    with the instruction's sign, conjugated when the relay's column is
    conjugated, time reversed when the slot is reversed, and scaled by the
    fixed relay amplification.
    """
    received = np.asarray(received, dtype=complex)
    num_relays, num_blocks, symbol_len = received.shape
    if num_relays != schedule.num_relays or symbol_len != cfg.symbol_len:
        raise ValueError("received array does not match schedule/link dimensions")
    out = np.zeros((num_relays, schedule.num_slots, symbol_len), dtype=complex)
    for slot in range(schedule.num_slots):
        for relay, instr in enumerate(schedule.instructions[slot]):
            if instr is None:
                continue
            if not 0 <= instr.block < num_blocks:
                raise ValueError(
                    f"slot {slot} tells relay {relay} to forward block {instr.block}, "
                    f"but only {num_blocks} blocks were received"
                )
            symbol = instr.sign * received[relay, instr.block]
            if instr.conjugate:
                symbol = np.conj(symbol)
            if schedule.slot_reversed[slot]:
                symbol = _reverse_cp_extended(symbol, cfg.n_fft, cfg.cp_len)
            out[relay, slot] = cfg.power.relay_gain * symbol
    return out


def destination_receive(
    transmitted: np.ndarray,
    channel: ChannelRealization,
    noise_on: bool = True,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Superpose delayed relay transmissions per slot, shape (T, N + cp_len).

    Relay i's samples land ``delays[i]`` positions late within the slot
    window; samples pushed past the window are dropped (the cyclic prefix of
    the following symbol would swallow them for in-contract delays).
    """
    transmitted = np.asarray(transmitted, dtype=complex)
    num_relays, num_slots, symbol_len = transmitted.shape
    out = np.zeros((num_slots, symbol_len), dtype=complex)
    for relay in range(num_relays):
        tau = int(channel.delays[relay])
        if tau >= symbol_len:
            continue
        gain = channel.relay_to_dest[relay]
        if tau == 0:
            out += gain * transmitted[relay]
        else:
            out[:, tau:] += gain * transmitted[relay][:, : symbol_len - tau]
    if noise_on:
        if rng is None:
            raise ValueError("noise_on requires a random generator")
        out = out + complex_noise(rng, out.shape)
    return out


def destination_frontend(raw: np.ndarray, schedule: RelaySchedule, cfg: LinkConfig) -> np.ndarray:
    """Strip prefixes, realign reversed slots, and transform to subcarriers.

    Returns the (T, N) frequency-domain receive blocks; column k is the
    receive vector of subcarrier k.
    """
    raw = np.asarray(raw, dtype=complex)
    if raw.shape != (schedule.num_slots, cfg.symbol_len):
        raise ValueError(f"raw frame shape {raw.shape} does not match schedule/link dimensions")
    body = spectral.remove_cp(raw, cfg.cp_len)
    out = np.empty((schedule.num_slots, cfg.n_fft), dtype=complex)
    for slot in range(schedule.num_slots):
        block = body[slot]
        if schedule.slot_reversed[slot] and cfg.cp_len:
            block = spectral.shift_tail_to_head(block, cfg.cp_len)
        out[slot] = block
    return spectral.dft(out)


def run_frame(
    frame: np.ndarray,
    schedule: RelaySchedule,
    channel: ChannelRealization,
    cfg: LinkConfig,
    noise_on: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Full source -> relays -> destination pipeline for one frame."""
    symbols = source_transmit(frame, schedule, cfg)
    received = relay_receive(symbols, channel, noise_on, rng)
    transmitted = relay_process(received, schedule, cfg)
    raw = destination_receive(transmitted, channel, noise_on, rng)
    return destination_frontend(raw, schedule, cfg)
