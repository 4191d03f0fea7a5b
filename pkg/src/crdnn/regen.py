"""Longitudinal point-mass energy model of braking-energy regeneration.

During deceleration the traction motor runs as a pump and feeds the
implement pump. Recoverable energy per braking phase is the kinetic energy
released minus rolling losses over the braking distance, passed through the
enabled efficiency stages. The baseline is the traction energy drawn over
the cycle without regeneration.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InputError

KMH = 1.0 / 3.6


@dataclass
class VelocityProfile:
    """Piecewise-linear signed speed through (times, speeds); `loaded[i]` covers interval i."""

    times: list[float]
    speeds: list[float]
    loaded: list[bool]

    def __post_init__(self):
        t = np.asarray(self.times, float)
        v = np.asarray(self.speeds, float)
        if t.ndim != 1 or len(t) != len(v) or len(t) < 2:
            raise InputError("profile needs matching times/speeds with at least two points")
        if len(self.loaded) != len(t) - 1:
            raise InputError("loaded flags must cover each interval")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InputError("profile contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise InputError("profile times must increase strictly (speed discontinuity or reversed time)")

    def peak_speed(self) -> float:
        return float(np.max(np.abs(self.speeds)))

    def scaled(self, peak: float) -> "VelocityProfile":
        cur = self.peak_speed()
        k = 0.0 if cur == 0 else peak / cur
        return VelocityProfile(list(self.times), [k * s for s in self.speeds], list(self.loaded))

    def intervals(self):
        """(dt, |v0|, |v1|, loaded), split at sign changes so each piece keeps one direction."""
        for i in range(len(self.times) - 1):
            t0, t1 = self.times[i], self.times[i + 1]
            v0, v1 = self.speeds[i], self.speeds[i + 1]
            if v0 * v1 < 0:
                tz = t0 + (t1 - t0) * v0 / (v0 - v1)
                yield tz - t0, abs(v0), 0.0, self.loaded[i]
                yield t1 - tz, 0.0, abs(v1), self.loaded[i]
            else:
                yield t1 - t0, abs(v0), abs(v1), self.loaded[i]


def representative_profile(speed: float = 10.0 * KMH) -> VelocityProfile:
    """20 s Y cycle: a loaded forward leg to the truck and an empty reverse leg,
    each 2 s acceleration, 6 s cruise, 2 s braking."""
    return VelocityProfile(
        times=[0.0, 2.0, 8.0, 10.0, 12.0, 18.0, 20.0],
        speeds=[0.0, speed, speed, 0.0, -speed, -speed, 0.0],
        loaded=[True, True, True, False, False, False],
    )


@dataclass
class RegenScenario:
    vehicle_mass: float = 10_000.0  # kg
    material_mass: float = 4_000.0  # kg
    rolling_friction_mu: float = 0.05
    pump_loss_coeff: float = 0.8
    motor_loss_coeff: float = 0.8
    mechanical_loss_coeff: float = 0.98
    gravity: float = 9.81
    profile: VelocityProfile = field(default_factory=representative_profile)
    # stages of the recovery chain: motor working as pump, mechanical, implement pump
    use_motor: bool = True
    use_mechanical: bool = True
    use_pump: bool = True
    # refer baseline traction work back to the engine through pump, motor and mechanics
    baseline_through_drivetrain: bool = True

    def __post_init__(self):
        if self.vehicle_mass <= 0 or self.material_mass < 0:
            raise InputError("vehicle mass must be positive and material mass non-negative")
        for k in ("pump_loss_coeff", "motor_loss_coeff", "mechanical_loss_coeff"):
            if not 0.0 < getattr(self, k) <= 1.0:
                raise InputError(f"{k} must lie in (0, 1]")
        if self.rolling_friction_mu < 0 or self.gravity <= 0:
            raise InputError("friction must be non-negative and gravity positive")

    def chain_efficiency(self) -> float:
        eff = 1.0
        if self.use_motor:
            eff *= self.motor_loss_coeff
        if self.use_mechanical:
            eff *= self.mechanical_loss_coeff
        if self.use_pump:
            eff *= self.pump_loss_coeff
        return eff

    def drivetrain_efficiency(self) -> float:
        return self.pump_loss_coeff * self.motor_loss_coeff * self.mechanical_loss_coeff

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegenScenario":
        d = dict(d)
        if "profile" in d and isinstance(d["profile"], dict):
            d["profile"] = VelocityProfile(**d["profile"])
        return cls(**d)


@dataclass
class EnergyLedger:
    traction_per_segment: list[float]  # J at the wheel, per profile interval
    rolling_losses: float  # J over the whole cycle
    kinetic_at_onset: list[float]  # J, one per braking phase
    braking_rolling_losses: list[float]  # J absorbed by rolling resistance in each phase
    regenerated_per_phase: list[float]
    regenerated: float
    baseline: float
    efficiency_gain: float

    def as_row(self) -> dict:
        return {
            "traction_wheel_J": sum(self.traction_per_segment),
            "rolling_losses_J": self.rolling_losses,
            "kinetic_at_onset_J": sum(self.kinetic_at_onset),
            "regenerated_J": self.regenerated,
            "baseline_J": self.baseline,
            "efficiency_gain": self.efficiency_gain,
        }


def simulate_cycle(scenario: RegenScenario) -> EnergyLedger:
    sc = scenario
    eta = sc.chain_efficiency()
    traction, onset_ke, braking_roll, regen = [], [], [], []
    rolling_total = 0.0
    in_phase = False
    for dt, s0, s1, loaded in sc.profile.intervals():
        m = sc.vehicle_mass + (sc.material_mass if loaded else 0.0)
        dist = 0.5 * (s0 + s1) * dt
        roll = sc.rolling_friction_mu * m * sc.gravity * dist
        rolling_total += roll
        dke = 0.5 * m * (s1 * s1 - s0 * s0)
        work = dke + roll  # energy the drive must supply over the interval
        traction.append(max(work, 0.0))
        if s1 < s0:
            if not in_phase:
                onset_ke.append(0.5 * m * s0 * s0)
                braking_roll.append(0.0)
                regen.append(0.0)
                in_phase = True
            braking_roll[-1] += min(roll, -dke)
            regen[-1] += eta * max(-work, 0.0)
        else:
            in_phase = False
    baseline = sum(traction)
    if sc.baseline_through_drivetrain:
        baseline /= sc.drivetrain_efficiency()
    total = float(sum(regen))
    return EnergyLedger(
        traction_per_segment=traction,
        rolling_losses=rolling_total,
        kinetic_at_onset=onset_ke,
        braking_rolling_losses=braking_roll,
        regenerated_per_phase=regen,
        regenerated=total,
        baseline=baseline,
        efficiency_gain=0.0 if baseline == 0 else total / baseline,
    )


# rolling friction levels: smoothed pad, typical site ground, rough loose ground
FRICTION_LEVELS = (0.01, 0.05, 0.3)


def sweep(scenario: RegenScenario, mu_values=FRICTION_LEVELS, speed_values=None, material_masses=None) -> list[dict]:
    """Full factorial over friction, cruise speed and material mass."""
    speed_values = list(speed_values) if speed_values is not None else [scenario.profile.peak_speed()]
    material_masses = list(material_masses) if material_masses is not None else [scenario.material_mass]
    if not (list(mu_values) and speed_values and material_masses):
        raise InputError("sweep value lists must be non-empty")
    rows = []
    for speed, mass, mu in itertools.product(speed_values, material_masses, mu_values):
        sc = replace(scenario, rolling_friction_mu=mu, material_mass=mass, profile=scenario.profile.scaled(speed))
        rows.append({"mu": mu, "speed_mps": speed, "material_mass_kg": mass, **simulate_cycle(sc).as_row()})
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def load_scenario(path) -> RegenScenario:
    with open(path) as f:
        return RegenScenario.from_dict(json.load(f))
