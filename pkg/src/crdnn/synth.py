"""Synthetic Y-cycle telemetry with per-frame state labels.

Each cycle is a plan of segments (approach, dig, reverse, drive to truck,
dump, return; sometimes a second dig after a short reversal). Channel
envelopes are synthetic conventions, plausible in shape rather than
calibrated to a particular machine.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import LOADING, TRAVEL, UNLOADING
from .data import CHANNELS, DT, SAMPLE_RATE, LabeledSeries
from .errors import InputError

LOADING_SHARE = 0.1162
UNLOADING_SHARE = 0.0786

BUCKET, VEL, JOY, DRIVE, BOOM = range(len(CHANNELS))


@dataclass
class DriverProfile:
    name: str = "driver"
    aggressiveness: float = 0.5  # scales acceleration and shortens ramps
    proficiency: float = 0.9  # probability of a clean single-dig cycle
    base_cycle_duration: float = 28.0  # seconds
    duration_jitter: float = 0.1  # +- fraction of the base duration

    def __post_init__(self):
        for k in ("aggressiveness", "proficiency"):
            if not 0.0 <= getattr(self, k) <= 1.0:
                raise InputError(f"{k} must lie in [0, 1]")
        if self.base_cycle_duration <= 0 or not 0.0 <= self.duration_jitter < 1.0:
            raise InputError("cycle duration must be positive and jitter in [0, 1)")


@dataclass
class Envelope:
    """Channel levels (bar, m/s) per machine state."""

    bucket_empty: float = 15.0
    bucket_dig: float = 150.0
    bucket_carry: float = 60.0
    bucket_dump: float = 25.0
    drive_idle: float = 8.0
    drive_travel: float = 40.0
    drive_accel: float = 60.0
    drive_dig: float = 220.0
    boom_empty: float = 30.0
    boom_carry: float = 80.0
    boom_raised: float = 140.0
    boom_dump: float = 150.0
    rise_time: float = 0.1  # s, first-order approach to each new level
    noise_fraction: float = 0.05  # Gaussian sigma relative to channel amplitude
    noise_bandwidth_tau: float = 0.04  # s, low-pass on the noise

    def amplitudes(self) -> np.ndarray:
        return np.array([self.bucket_dig, 3.0, 0.0, self.drive_dig, self.boom_dump])


@dataclass
class Segment:
    label: int
    kind: str  # approach, dig, reverse, to_truck, dump, return, back_off, re_approach
    duration: float
    direction: int = 0  # +1 forward, -1 reverse, 0 stationary
    distance: float = 0.0
    loaded: bool = False


@dataclass
class CyclePlan:
    segments: list[Segment]

    @property
    def duration(self):
        return sum(s.duration for s in self.segments)

    def labels(self):
        return [s.label for s in self.segments]


def plan_cycle(profile: DriverProfile, distance: float, rng: np.random.Generator) -> CyclePlan:
    if distance <= 0:
        raise InputError(f"heap-truck distance must be positive, got {distance}")
    total = profile.base_cycle_duration * (1.0 + profile.duration_jitter * rng.uniform(-1, 1))
    dig = LOADING_SHARE * total * (1.0 + 0.1 * rng.uniform(-1, 1))
    dump = UNLOADING_SHARE * total * (1.0 + 0.1 * rng.uniform(-1, 1))
    double_dig = rng.random() > profile.proficiency
    extras: list[Segment] = []
    if double_dig:
        hop = 0.8 + 0.4 * rng.random()
        extras = [
            Segment(LOADING, "dig", 0.55 * dig, 0, loaded=True),
            Segment(TRAVEL, "back_off", 1.4, -1, hop, loaded=True),
            Segment(TRAVEL, "re_approach", 1.4, +1, hop, loaded=True),
            Segment(LOADING, "dig", 0.55 * dig, 0, loaded=True),
        ]
        fixed = sum(s.duration for s in extras) + dump
    else:
        fixed = dig + dump
    # Y geometry: heap arm and truck arm both start at the fork
    heap_arm = distance * (0.45 + 0.1 * rng.random())
    truck_arm = distance - heap_arm + 0.3 * distance
    legs = np.array([heap_arm, heap_arm, truck_arm, truck_arm])
    travel_time = max(total - fixed, 4.0 * 2.5)
    times = travel_time * legs / legs.sum()
    approach = Segment(TRAVEL, "approach", times[0], +1, legs[0])
    body = extras if double_dig else [Segment(LOADING, "dig", dig, 0, loaded=True)]
    tail = [
        Segment(TRAVEL, "reverse", times[1], -1, legs[1], loaded=True),
        Segment(TRAVEL, "to_truck", times[2], +1, legs[2], loaded=True),
        Segment(UNLOADING, "dump", dump, 0, loaded=True),
        Segment(TRAVEL, "return", times[3], -1, legs[3]),
    ]
    return CyclePlan([approach, *body, *tail])


def trapezoid(distance: float, duration: float, accel: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Speed and acceleration samples of a rest-to-rest move covering `distance` in `duration`."""
    if accel * duration**2 < 4.0 * distance:
        accel = 4.0 * distance / duration**2  # triangle profile
    disc = max(accel**2 * duration**2 - 4.0 * accel * distance, 0.0)
    v_peak = (accel * duration - np.sqrt(disc)) / 2.0
    t_ramp = v_peak / accel
    t = (np.arange(n) + 0.5) * DT
    v = np.minimum(v_peak, np.minimum(accel * t, accel * np.maximum(duration - t, 0.0)))
    a = np.where(t < t_ramp, accel, np.where(t > duration - t_ramp, -accel, 0.0))
    # rescale so the discrete integral matches the requested distance
    if v.sum() > 0:
        v *= distance / (v.sum() * DT)
    return v, a


def _approach(level: np.ndarray, start: float, rise: float) -> np.ndarray:
    """Exponential move from `start` toward the (possibly time-varying) target `level`."""
    t = np.arange(len(level)) * DT
    return level + (start - level[0]) * np.exp(-t / rise) if len(level) else level


def render_cycle(
    plan: CyclePlan,
    profile: DriverProfile,
    rng: np.random.Generator,
    envelope: Envelope | None = None,
    density: float = 1.0,
    miscalibrated: bool = False,
):
    env = envelope or Envelope()
    accel = 0.6 + 0.9 * profile.aggressiveness
    bounds = np.round(np.cumsum([0.0] + [s.duration for s in plan.segments]) * SAMPLE_RATE).astype(int)
    n = int(bounds[-1])
    x = np.zeros((n, len(CHANNELS)))
    labels = np.zeros(n, dtype=np.int8)
    state = np.array([env.bucket_empty, 0.0, 0.0, env.drive_idle, env.boom_empty])
    for seg, a, b in zip(plan.segments, bounds[:-1], bounds[1:]):
        m = int(b - a)
        if m == 0:
            continue
        labels[a:b] = seg.label
        u = np.linspace(0.0, 1.0, m)
        if seg.direction != 0:
            speed, acc = trapezoid(seg.distance, m * DT, accel, m)
            vel = seg.direction * speed
            joy = np.full(m, float(seg.direction))
            drive = env.drive_travel * (speed > 0.05) + env.drive_accel * np.abs(acc) / accel
            if seg.loaded:
                drive = drive * 1.3
                bucket = np.full(m, env.bucket_carry * density)
                if seg.kind == "to_truck":
                    boom = env.boom_carry + (env.boom_raised - env.boom_carry) * u
                else:
                    boom = np.full(m, env.boom_carry)
            elif seg.kind == "return":
                bucket = np.full(m, env.bucket_empty)
                boom = env.boom_raised + (env.boom_empty - env.boom_raised) * np.minimum(1.0, 2.0 * u)
            else:
                bucket = np.full(m, env.bucket_empty)
                boom = np.full(m, env.boom_empty)
        elif seg.label == LOADING:
            vel = np.zeros(m)
            joy = np.ones(m)
            wiggle = 1.0 + 0.15 * np.sin(2 * np.pi * 1.5 * u * seg.duration)
            bucket = env.bucket_dig * density * wiggle * (0.85 + 0.15 * u)
            drive = env.drive_dig * (0.6 + 0.4 * np.sin(np.pi * np.clip(1.2 * u, 0, 1)))
            boom = env.boom_carry * (0.6 + 0.4 * u) * density
        else:  # dump
            vel = np.zeros(m)
            joy = np.zeros(m)
            bucket = env.bucket_carry * density + (env.bucket_dump - env.bucket_carry * density) * u
            drive = np.full(m, env.drive_idle)
            boom = np.full(m, env.boom_dump)
        cont = {BUCKET: bucket, DRIVE: drive, BOOM: boom}
        for ch, level in cont.items():
            x[a:b, ch] = _approach(np.asarray(level, dtype=float), state[ch], env.rise_time)
        x[a:b, VEL] = vel
        x[a:b, JOY] = joy
        state = x[b - 1].copy()

    amp = env.amplitudes()
    for ch in (BUCKET, VEL, DRIVE, BOOM):
        white = rng.standard_normal(n)
        if env.noise_bandwidth_tau > 0:
            alpha = DT / (env.noise_bandwidth_tau + DT)
            white = lfilter([alpha], [1.0, -(1.0 - alpha)], white)
            white /= np.sqrt(alpha / (2.0 - alpha))  # back to unit variance
        x[:, ch] += env.noise_fraction * amp[ch] * white
    if miscalibrated:
        x[:, DRIVE] = 1.2 * x[:, DRIVE] + 15.0
        x[:, VEL] *= 0.9
        x[:, BOOM] += 10.0
    return x, labels


def generate_cycle(
    profile: DriverProfile,
    distance: float,
    seed: int,
    *,
    density: float = 1.0,
    miscalibrated: bool = False,
    envelope: Envelope | None = None,
    meta: dict | None = None,
) -> LabeledSeries:
    """One labeled Y cycle at 50 Hz."""
    rng = np.random.default_rng(seed)
    plan = plan_cycle(profile, distance, rng)
    x, labels = render_cycle(plan, profile, rng, envelope, density, miscalibrated)
    t = np.arange(len(labels)) * DT
    info = {
        "driver": profile.name,
        "seed": int(seed),
        "distance": float(distance),
        "density": float(density),
        "miscalibrated": bool(miscalibrated),
        "double_dig": sum(s.label == LOADING for s in plan.segments) > 1,
    }
    info.update(meta or {})
    return LabeledSeries(t=t, channels=x, labels=labels, meta=info)


@dataclass
class RosterEntry:
    profile: DriverProfile
    cycles: int
    force_train: bool = False
    miscalibrated: bool = False


def default_roster() -> list[RosterEntry]:
    """40 test-engineer, 30 aggressive, 20 poorly-calibrated-machine and 29 senior-manager cycles."""
    return [
        RosterEntry(DriverProfile("test_engineer", 0.5, 0.85, 28.0, 0.1), 40),
        RosterEntry(DriverProfile("aggressive_developer", 0.95, 0.75, 24.0, 0.15), 30),
        RosterEntry(DriverProfile("uncalibrated_machine", 0.5, 0.8, 28.0, 0.15), 20, force_train=True, miscalibrated=True),
        RosterEntry(DriverProfile("senior_manager", 0.35, 0.95, 30.0, 0.1), 29),
    ]


@dataclass
class DatasetConfig:
    cycles_per_session: int = 10
    distance_range: tuple[float, float] = (8.0, 15.0)
    rainy_fraction: float = 0.25  # share of sessions recorded on a rainy day
    rainy_density: float = 1.3  # bucket pressure scale for wet material
    envelope: Envelope = field(default_factory=Envelope)

    def to_dict(self):
        return asdict(self)


def generate_dataset(
    roster: list[RosterEntry] | None = None,
    seed: int = 0,
    config: DatasetConfig | None = None,
    total_cycles: int | None = None,
) -> list[LabeledSeries]:
    """Cycles for every roster entry, grouped into sessions with shared geometry and weather.

    Per-cycle seeds come from a SeedSequence spawned off `seed`, so each cycle
    is reproducible on its own. `total_cycles` truncates the roster in order.
    """
    roster = roster or default_roster()
    cfg = config or DatasetConfig()
    if any(e.cycles <= 0 for e in roster):
        raise InputError("roster cycle counts must be positive")
    n_total = sum(e.cycles for e in roster)
    if total_cycles is not None:
        n_total = min(n_total, total_cycles)
    root = np.random.SeedSequence(seed)
    session_rng = np.random.default_rng(root.spawn(1)[0])
    cycle_seeds = root.spawn(n_total + 1)[1:]
    out = []
    k = 0
    for entry in roster:
        for j in range(entry.cycles):
            if k >= n_total:
                return out
            if j % cfg.cycles_per_session == 0:
                session = f"{entry.profile.name}-s{j // cfg.cycles_per_session}"
                distance = session_rng.uniform(*cfg.distance_range)
                rainy = session_rng.random() < cfg.rainy_fraction
            cycle_seed = int(cycle_seeds[k].generate_state(1)[0])
            out.append(
                generate_cycle(
                    entry.profile,
                    distance,
                    cycle_seed,
                    density=cfg.rainy_density if rainy else 1.0,
                    miscalibrated=entry.miscalibrated,
                    envelope=cfg.envelope,
                    meta={
                        "cycle_id": k,
                        "session": session,
                        "rainy": bool(rainy),
                        "force_train": entry.force_train,
                    },
                )
            )
            k += 1
    return out


def class_fractions(series: list[LabeledSeries]) -> np.ndarray:
    labels = np.concatenate([s.labels for s in series])
    return np.bincount(labels, minlength=3) / len(labels)
