"""Square-pulse drive schedules and the magnetic drive operator.

A drive is a piecewise sum of cosine tones,

    u(t) = sum_n omega0_n * cos(2 pi nu_n (t - t_ref) + phi0_n),

applied through a single transverse field that couples to all three
spins weighted by their gyromagnetic ratios. No rotating-wave
approximation is made anywhere; the full cosine is integrated.

Amplitude convention: omega0 multiplies the drive operator directly in
MHz. For a two-level transition with eigenbasis matrix element M this
gives a flip time of 500 / (omega0 * |M|) ns, which reproduces the
reference amplitude/duration pairs used in the tests.

Each segment references its carrier phase to its own start time by
default; carrier_reference="schedule" instead counts time from the
start of the whole schedule, keeping a tone phase-continuous across
segment boundaries.
"""

from dataclasses import dataclass

import numpy as np

from nvspin import spincore as sc
from nvspin import model as mdl


@dataclass(frozen=True)
class Tone:
    """One cosine component: amplitude MHz, carrier MHz, phase rad."""

    omega0: float
    nu: float
    phi0: float = 0.0

    def __post_init__(self):
        if self.omega0 < 0:
            raise ValueError("tone amplitude must be non-negative")
        if self.nu < 0:
            raise ValueError("carrier frequency must be non-negative")


@dataclass(frozen=True)
class PulseSegment:
    """Square pulse: constant tone set over a duration in ns."""

    tones: tuple
    duration: float
    carrier_reference: str = "segment"

    def __post_init__(self):
        object.__setattr__(self, "tones", tuple(self.tones))
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")
        if not self.tones:
            raise ValueError("segment needs at least one tone")
        if self.carrier_reference not in ("segment", "schedule"):
            raise ValueError(f"unknown carrier reference {self.carrier_reference!r}")


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered contiguous segments."""

    segments: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_duration(self):
        return float(sum(seg.duration for seg in self.segments))

    def segment_starts(self):
        starts = np.zeros(len(self.segments))
        starts[1:] = np.cumsum([seg.duration for seg in self.segments])[:-1]
        return starts


def concatenate(*schedules):
    segs = []
    for s in schedules:
        segs.extend(s.segments)
    return PulseSchedule(tuple(segs))


def drive_operator(model):
    """Transverse drive on the full register.

    S_x on the vacancy plus the nuclear x operators scaled by the
    gyromagnetic ratios relative to the electron.
    """
    op = sc.embed(sc.SPIN1.sx, "V")
    op = op + (model.gamma_c / model.gamma_e) * sc.embed(sc.SPIN_HALF.sx, "C")
    op = op + (model.gamma_n / model.gamma_e) * sc.embed(sc.SPIN_HALF.sx, "N")
    return op


def drive_amplitude(schedule, t):
    """u(t) in MHz; t in ns from the start of the schedule.

    Segments are half-open [start, end), the final end point included;
    u jumps discontinuously at boundaries.
    """
    total = schedule.total_duration
    if t < 0 or t > total:
        raise ValueError(f"t={t} ns outside schedule of {total} ns")
    starts = schedule.segment_starts()
    k = int(np.searchsorted(starts, t, side="right") - 1)
    if k == len(schedule.segments):
        k -= 1
    seg = schedule.segments[k]
    t_ref = 0.0 if seg.carrier_reference == "schedule" else starts[k]
    u = 0.0
    for tone in seg.tones:
        u += tone.omega0 * np.cos(
            sc.RADIANS_PER_MHZ_NS * tone.nu * (t - t_ref) + tone.phi0)
    return float(u)


def pi_time_estimate(omega0, element):
    """Two-level flip-time estimate in ns."""
    if omega0 <= 0 or element <= 0:
        raise ValueError("need positive amplitude and matrix element")
    return 500.0 / (omega0 * element)


def resonant_pi_pulse(model, level_pair, omega0, phi0=0.0, threshold=1e-6):
    """Single-tone square pulse resonant with an allowed transition.

    The duration is the two-level estimate; the scanner refines it.
    Raises ValueError for a drive-forbidden pair (matrix element below
    threshold): use a pulse sequence instead.
    """
    vals, vecs = mdl.eigensystem(model)
    i, j = sorted(level_pair)
    elem = abs(vecs[:, i].conj() @ drive_operator(model) @ vecs[:, j])
    if elem <= threshold:
        raise ValueError(
            f"transition {i}-{j} is drive-forbidden (element {elem:.2e})")
    freq = float(vals[j] - vals[i])
    duration = pi_time_estimate(omega0, elem)
    return PulseSegment((Tone(omega0, freq, phi0),), duration)


# -- JSON-shaped serialization -------------------------------------------

def schedule_to_json(schedule):
    """Plain-dict form: list of segments with duration_ns and tones."""
    return {
        "segments": [
            {
                "duration_ns": seg.duration,
                "carrier_reference": seg.carrier_reference,
                "tones": [
                    {"omega0_MHz": t.omega0, "nu_MHz": t.nu, "phi0_rad": t.phi0}
                    for t in seg.tones
                ],
            }
            for seg in schedule.segments
        ]
    }


def schedule_from_json(data):
    segs = []
    for seg in data["segments"]:
        tones = tuple(
            Tone(t["omega0_MHz"], t["nu_MHz"], t.get("phi0_rad", 0.0))
            for t in seg["tones"])
        segs.append(PulseSegment(tones, seg["duration_ns"],
                                 seg.get("carrier_reference", "segment")))
    return PulseSchedule(tuple(segs))
