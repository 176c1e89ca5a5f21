"""Monte Carlo bit-error-rate harness over a transmit-power sweep.

Reproducibility contract: every Monte Carlo unit (one channel draw plus the
frames simulated under it) owns a private random stream derived from
(seed, power point index, unit index). Results are integer error/bit counts
summed over units, so any partition of the unit range across workers, and
any execution order, produces bit-identical output. Adaptive stopping is
evaluated only at fixed batch boundaries for the same reason.

A sweep point simulates at least ``frames`` units and keeps going in whole
batches until ``min_errors`` error events are seen (noise on) or the
``max_frames`` cap is reached, whichever comes first.
"""

from __future__ import annotations

import functools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import decoder as _decoder
from .codebook import (
    DEFAULT_ROTATION,
    CodeDefinition,
    RelaySchedule,
    ScheduleError,
    check_feasibility,
    derive_schedule,
    load_code,
    named_code,
    row_sets,
)
from .differential import build_codebook_4relay, diff_decode_frame, diff_encode, initial_state, verify_commutation
from .relaysim import LinkConfig, PowerConfig, draw_channel, run_frame

__all__ = [
    "BerPoint",
    "ConfigError",
    "SimConfig",
    "emit_csv",
    "emit_plotscript",
    "frame_rng",
    "parse_csv",
    "parse_delay_spec",
    "parse_power_spec",
    "run_sweep",
    "wilson_interval",
]

CSV_HEADER = "P_dB,ber,ci_lo,ci_hi,bits,frames"

_Z95 = 1.959963984540054

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


class ConfigError(ValueError):
    """A simulation configuration value is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class SimConfig:
    """Complete description of one BER sweep.

    ``code`` is a built-in name or a path to a code description file.
    ``delays`` fixes the per-relay arrival offsets; None draws them uniformly
    on [0, cp_len - 1] per unit. ``relay_fraction`` defaults to 1/R for the
    chosen code. ``diff_chain`` is the number of frames sharing one channel
    draw in differential mode (reference frame included).
    """

    mode: str = "coherent"
    code: str = "relay4"
    n_fft: int = 64
    cp_len: int = 16
    power_db: tuple[float, ...] = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    frames: int = 2000
    min_errors: int = 200
    max_frames: int | None = None
    seed: int = 42
    delays: tuple[int, ...] | None = None
    noise: bool = True
    workers: int = 1
    source_fraction: float = 1.0
    relay_fraction: float | None = None
    rotation_deg: float | None = None
    diff_chain: int = 2
    out: str | None = None


@dataclass(frozen=True)
class BerPoint:
    power_db: float
    bit_errors: int
    bits: int
    ber: float
    ci_lo: float
    ci_hi: float
    frames: int
    seconds: float = 0.0


def wilson_interval(errors: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    phat = errors / trials
    zz = z * z / trials
    centre = phat + zz / 2.0
    half = z * math.sqrt(phat * (1.0 - phat) / trials + zz / (4.0 * trials))
    lo = (centre - half) / (1.0 + zz)
    hi = (centre + half) / (1.0 + zz)
    # guard the contract 0 <= lo <= phat <= hi <= 1 against rounding residue
    return (min(max(lo, 0.0), phat), max(min(hi, 1.0), phat))


def frame_rng(seed: int, point_index: int, unit_index: int) -> np.random.Generator:
    """Private random stream of one Monte Carlo unit."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=(int(point_index), int(unit_index)))
    )


def parse_power_spec(spec: str) -> tuple[float, ...]:
    """Parse a power sweep: 'start:step:stop' (inclusive), comma list, or value."""
    spec = spec.strip()
    try:
        if ":" in spec:
            start_s, step_s, stop_s = spec.split(":")
            start, step, stop = float(start_s), float(step_s), float(stop_s)
            if step <= 0 or stop < start:
                raise ConfigError(f"power range {spec!r} must have step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(start + i * step for i in range(count))
        if "," in spec:
            return tuple(float(tok) for tok in spec.split(",") if tok.strip())
        return (float(spec),)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"cannot parse power list {spec!r}") from exc


def parse_delay_spec(spec: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in spec.split(",") if tok.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"cannot parse delay list {spec!r}") from exc


def _resolve_code(cfg: SimConfig) -> CodeDefinition:
    rotation = DEFAULT_ROTATION if cfg.rotation_deg is None else math.radians(cfg.rotation_deg)
    try:
        return named_code(cfg.code, rotation)
    except KeyError:
        pass
    try:
        return load_code(cfg.code, rotation=rotation)
    except OSError as exc:
        raise ConfigError(f"code {cfg.code!r} is neither a built-in name nor a readable file") from exc


def _validate(cfg: SimConfig) -> tuple[CodeDefinition, RelaySchedule]:
    if cfg.mode not in ("coherent", "differential"):
        raise ConfigError(f"mode must be 'coherent' or 'differential', got {cfg.mode!r}")
    n = cfg.n_fft
    if n < 1 or (n & (n - 1)) != 0:
        raise ConfigError(f"n_fft {n} must be a power of two")
    if not 0 <= cfg.cp_len < n:
        raise ConfigError(f"cp_len {cfg.cp_len} must lie in [0, {n})")
    if not cfg.power_db:
        raise ConfigError("power sweep is empty")
    if cfg.frames < 1:
        raise ConfigError("frames must be at least 1")
    if cfg.min_errors < 0:
        raise ConfigError("min_errors cannot be negative")
    if cfg.max_frames is not None and cfg.max_frames < cfg.frames:
        raise ConfigError("max_frames cannot be smaller than frames")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    if cfg.source_fraction <= 0:
        raise ConfigError("source_fraction must be positive")
    if cfg.relay_fraction is not None and cfg.relay_fraction <= 0:
        raise ConfigError("relay_fraction must be positive")
    if cfg.diff_chain < 2:
        raise ConfigError("diff_chain needs at least a reference frame and one data frame")

    code = _resolve_code(cfg)
    report = check_feasibility(row_sets(code))
    if not report:
        raise ScheduleError(f"code {code.name!r} fails feasibility condition {report.condition}: {report.detail}")
    schedule = derive_schedule(code)

    if cfg.delays is not None:
        d = cfg.delays
        if len(d) != code.num_relays:
            raise ConfigError(f"fixed delays need {code.num_relays} entries, got {len(d)}")
        if d[0] != 0 or any(b < a for a, b in zip(d, d[1:])) or any(v < 0 for v in d):
            raise ConfigError("fixed delays must be non-negative, non-decreasing and start at 0")

    if cfg.mode == "differential":
        codebook = build_codebook_4relay()
        report = verify_commutation(codebook, code)
        if not report:
            raise ScheduleError(
                f"code {code.name!r} has no verified differential codebook: {report.detail}"
            )
    return code, schedule


def _power_config(cfg: SimConfig, code: CodeDefinition, p_db: float) -> PowerConfig:
    fraction = cfg.relay_fraction if cfg.relay_fraction is not None else 1.0 / code.num_relays
    return PowerConfig(
        total_power=10.0 ** (p_db / 10.0),
        source_fraction=cfg.source_fraction,
        relay_fraction=fraction,
    )


class _CoherentEngine:
    """Per-point simulation state for coherent frames, vectorised over subcarriers."""

    def __init__(self, cfg: SimConfig, code: CodeDefinition, schedule: RelaySchedule, p_db: float):
        self.cfg = cfg
        self.code = code
        self.schedule = schedule
        self.link = LinkConfig(cfg.n_fft, cfg.cp_len, _power_config(cfg, code, p_db))
        self.group_sizes = [t.shape[0] for t in code.alphabet]
        partials = _decoder.group_candidates(code)
        self.group_fields = [_decoder.candidate_fields(code, p) for p in partials]
        self.partials = partials
        plain = [i for i in range(code.num_relays) if i not in code.conjugated_columns]
        conj = sorted(code.conjugated_columns)
        self.plain_cols = np.array(plain, dtype=int)
        self.conj_cols = np.array(conj, dtype=int)
        self.a_plain = np.stack([code.relay_matrices[i] for i in plain]) if plain else None
        self.a_conj = np.stack([code.relay_matrices[i] for i in conj]) if conj else None
        group_of = np.empty(2 * code.symbol_count, dtype=int)
        for g, coords in enumerate(code.group_partition):
            group_of[list(coords)] = g
        self.cross_mask = group_of[:, None] != group_of[None, :]
        self.bits_per_unit = sum(
            int(round(math.log2(k))) for k in self.group_sizes
        ) * cfg.n_fft
        self._warned = False

    def _draw_frame(self, rng) -> tuple[list[np.ndarray], np.ndarray]:
        n = self.cfg.n_fft
        nu = self.code.symbol_count
        tx = [rng.integers(0, k, size=n) for k in self.group_sizes]
        coords = np.zeros((2 * nu, n))
        for g, coords_idx in enumerate(self.code.group_partition):
            coords[list(coords_idx), :] = self.code.alphabet[g][tx[g]].T
        frame = coords[0::2] + 1j * coords[1::2]
        return tx, frame

    def _gap(self, h_all: np.ndarray, weights: np.ndarray) -> float:
        nu = self.code.symbol_count
        n = h_all.shape[0]
        plain = np.zeros((n, nu, nu), dtype=complex)
        conj = np.zeros((n, nu, nu), dtype=complex)
        if self.a_plain is not None:
            plain = np.einsum("kr,rij->kij", h_all[:, self.plain_cols], self.a_plain)
        if self.a_conj is not None:
            conj = np.einsum("kr,rij->kij", h_all[:, self.conj_cols], self.a_conj)
        basis = np.empty((n, 2 * nu, nu), dtype=complex)
        basis[:, 0::2, :] = np.transpose(plain + conj, (0, 2, 1))
        basis[:, 1::2, :] = np.transpose(1j * (plain - conj), (0, 2, 1))
        basis = basis * weights[None, None, :]
        gram = np.real(np.einsum("kmt,knt->kmn", basis, basis.conj()))
        return float(np.max(np.abs(gram[:, self.cross_mask])))

    def simulate(self, rng: np.random.Generator) -> tuple[int, int]:
        cfg = self.cfg
        channel = draw_channel(rng, self.code.num_relays, cfg.cp_len, cfg.delays)
        tx, frame = self._draw_frame(rng)
        received = run_frame(frame, self.schedule, channel, self.link, cfg.noise, rng)

        h_all = _decoder.equivalent_channel_matrix(self.code, channel, cfg.n_fft)
        cov = _decoder.noise_covariance(self.schedule, channel, self.link)
        weights = 1.0 / np.sqrt(np.real(np.diag(cov)))
        gain = self.link.power.cascade_gain

        if self._gap(h_all, weights) > 1e-9:
            if not self._warned:
                import warnings

                warnings.warn(
                    f"code {self.code.name!r}: grouped decoding invalid for a drawn channel; "
                    "using exhaustive search",
                    stacklevel=2,
                )
                self._warned = True
            return self._simulate_exhaustive(tx, received, channel, cov, gain)

        errors = 0
        y = received.T  # (N, T)
        for g, fields in enumerate(self.group_fields):
            predicted = gain * np.einsum("ctr,kr->kct", fields, h_all)
            residual = (y[:, None, :] - predicted) * weights[None, None, :]
            metrics = np.einsum("kct,kct->kc", residual, residual.conj()).real
            decided = np.argmin(metrics, axis=1)
            errors += int(_POPCOUNT[np.bitwise_xor(tx[g], decided)].sum())
        return errors, self.bits_per_unit

    def _simulate_exhaustive(self, tx, received, channel, cov, gain) -> tuple[int, int]:
        errors = 0
        h_all = _decoder.equivalent_channel_matrix(self.code, channel, self.cfg.n_fft)
        for k in range(self.cfg.n_fft):
            model = _decoder.SubcarrierModel(h_all[k], cov, gain)
            s_hat = _decoder.ml_decode_exhaustive(received[:, k], model, self.code)
            coords = _decoder.complex_to_real(s_hat)
            for g, coords_idx in enumerate(self.code.group_partition):
                table = self.code.alphabet[g]
                decided = int(np.argmin(np.abs(table - coords[list(coords_idx)]).sum(axis=1)))
                errors += int(_POPCOUNT[int(tx[g][k]) ^ decided])
        return errors, self.bits_per_unit


class _DifferentialEngine:
    """Per-point simulation state for differential chains."""

    def __init__(self, cfg: SimConfig, code: CodeDefinition, schedule: RelaySchedule, p_db: float):
        self.cfg = cfg
        self.code = code
        self.schedule = schedule
        self.link = LinkConfig(cfg.n_fft, cfg.cp_len, _power_config(cfg, code, p_db))
        self.codebook = build_codebook_4relay(code)
        self.bits_per_unit = self.codebook.bits_per_word * cfg.n_fft * (cfg.diff_chain - 1)

    def simulate(self, rng: np.random.Generator) -> tuple[int, int]:
        cfg = self.cfg
        channel = draw_channel(rng, self.code.num_relays, cfg.cp_len, cfg.delays)
        state = initial_state(self.code.symbol_count, cfg.n_fft)
        y_prev = run_frame(state.symbols, self.schedule, channel, self.link, cfg.noise, rng)
        scales_rx = np.ones(cfg.n_fft)
        errors = 0
        for _ in range(cfg.diff_chain - 1):
            tx = rng.integers(0, self.codebook.num_words, size=cfg.n_fft)
            state = diff_encode(state, tx, self.codebook)
            y_now = run_frame(state.symbols, self.schedule, channel, self.link, cfg.noise, rng)
            decided, scales_rx = diff_decode_frame(y_now, y_prev, scales_rx, self.codebook)
            errors += int(_POPCOUNT[np.bitwise_xor(tx, decided)].sum())
            y_prev = y_now
        return errors, self.bits_per_unit


@functools.lru_cache(maxsize=8)
def _engine_for(cfg: SimConfig, p_db: float):
    code, schedule = _validate(cfg)
    if cfg.mode == "differential":
        return _DifferentialEngine(cfg, code, schedule, p_db)
    return _CoherentEngine(cfg, code, schedule, p_db)


def _chunk_task(args) -> tuple[int, int]:
    cfg, p_db, point_index, start, stop = args
    engine = _engine_for(cfg, p_db)
    errors = 0
    bits = 0
    for unit in range(start, stop):
        e, b = engine.simulate(frame_rng(cfg.seed, point_index, unit))
        errors += e
        bits += b
    return errors, bits


def _split_range(start: int, stop: int, parts: int) -> list[tuple[int, int]]:
    total = stop - start
    base = total // parts
    extra = total % parts
    out = []
    cursor = start
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        if size:
            out.append((cursor, cursor + size))
        cursor += size
    return out


def _run_point(cfg: SimConfig, p_db: float, point_index: int, executor) -> BerPoint:
    max_frames = cfg.max_frames if cfg.max_frames is not None else cfg.frames * 20
    started = time.perf_counter()
    errors = 0
    bits = 0
    total = 0
    while True:
        batch = min(cfg.frames, max_frames - total)
        if batch <= 0:
            break
        ranges = _split_range(total, total + batch, cfg.workers)
        tasks = [(cfg, p_db, point_index, a, b) for a, b in ranges]
        if executor is None:
            results = [_chunk_task(t) for t in tasks]
        else:
            results = list(executor.map(_chunk_task, tasks))
        for e, b in results:
            errors += e
            bits += b
        total += batch
        if total >= cfg.frames:
            if not cfg.noise or errors >= cfg.min_errors or total >= max_frames:
                break
    ber = errors / bits if bits else 0.0
    lo, hi = wilson_interval(errors, bits)
    return BerPoint(
        power_db=p_db,
        bit_errors=errors,
        bits=bits,
        ber=ber,
        ci_lo=lo,
        ci_hi=hi,
        frames=total,
        seconds=time.perf_counter() - started,
    )


def run_sweep(cfg: SimConfig) -> list[BerPoint]:
    """Simulate every power point of the sweep, ascending, and return the curve."""
    _validate(cfg)
    points_db = tuple(sorted(cfg.power_db))
    executor = None
    try:
        if cfg.workers > 1:
            executor = ProcessPoolExecutor(max_workers=cfg.workers)
        return [_run_point(cfg, p_db, idx, executor) for idx, p_db in enumerate(points_db)]
    finally:
        if executor is not None:
            executor.shutdown()


def emit_csv(points: list[BerPoint], path) -> None:
    """Write the sweep as CSV, rows sorted by ascending power."""
    rows = sorted(points, key=lambda p: p.power_db)
    lines = [CSV_HEADER]
    for p in rows:
        lines.append(
            f"{p.power_db!r},{p.ber!r},{p.ci_lo!r},{p.ci_hi!r},{p.bits},{p.frames}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_csv(path) -> list[BerPoint]:
    """Read back a CSV written by emit_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError(f"{path} does not look like a sweep CSV (bad header)")
    points = []
    for ln in lines[1:]:
        p_db, ber, lo, hi, bits, frames = ln.split(",")
        bits_i = int(bits)
        ber_f = float(ber)
        points.append(
            BerPoint(
                power_db=float(p_db),
                bit_errors=int(round(ber_f * bits_i)),
                bits=bits_i,
                ber=ber_f,
                ci_lo=float(lo),
                ci_hi=float(hi),
                frames=int(frames),
            )
        )
    return points


def emit_plotscript(points: list[BerPoint], path, csv_name: str = "ber.csv") -> None:
    """Write a gnuplot script rendering log-BER against transmit power."""
    rows = sorted(points, key=lambda p: p.power_db)
    lo = min((p.power_db for p in rows), default=0.0)
    hi = max((p.power_db for p in rows), default=1.0)
    script = "\n".join(
        [
            "# Bit error rate versus total transmit power",
            "set datafile separator ','",
            "set logscale y",
            "set format y '10^{%T}'",
            f"set xrange [{lo - 1!r}:{hi + 1!r}]",
            "set xlabel 'total transmit power [dB]'",
            "set ylabel 'bit error rate'",
            "set grid",
            "set key bottom left",
            f"plot '{csv_name}' skip 1 using 1:2:3:4 with yerrorbars title 'measured BER', \\",
            f"     '{csv_name}' skip 1 using 1:2 with lines notitle",
            "",
        ]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(script)
