"""Monte-Carlo model of the coincidence-counting apparatus.

Expected rates come from the Born rule plus a simple detector model that
adds dark counts and accidental coincidences; counts are Poisson draws
from those rates. Every setting gets its own generator seeded from
``(seed, setting index)`` so runs are reproducible and order-independent.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .chsh import OPTIMAL_ANGLES, ChshAngles, ChshEstimate, estimate_S_from_counts
from .core import ValidationError, as_density_matrix
from .settings import AnalyzerSetting, ProjectorSetting

DEFAULT_DURATION = 180.0
# above this mean the Poisson and normal(mean, mean) distributions differ by less than
# 1e-3 in skewness, so the cheaper normal draw is used
NORMAL_APPROX_CUTOFF = 1e6


@dataclass(frozen=True)
class DetectorModel:
    """Detector and source parameters.

    ``pair_rate`` is the rate of pairs reaching the detectors before the
    polarizers; detected coincidences scale it by ``dqe**2``.
    """

    dqe: float = 0.65
    dark_rate: float = 50.0
    pair_rate: float = 4000.0
    coincidence_window: float = 3e-9
    singles_rate_background: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            v = float(value)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and nonnegative, got {v!r}")
            object.__setattr__(self, name, v)
        if self.dqe > 1:
            raise ValidationError(f"dqe must be <= 1, got {self.dqe!r}")

    @classmethod
    def ideal(cls, pair_rate: float = 4000.0) -> "DetectorModel":
        """Unit efficiency, no dark counts, no accidentals."""
        return cls(dqe=1.0, dark_rate=0.0, pair_rate=pair_rate, coincidence_window=0.0)

    def with_overrides(self, **kw) -> "DetectorModel":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CountRecord:
    setting: AnalyzerSetting | ProjectorSetting
    duration: float
    coincidences: float
    accidental_estimate: float = 0.0

    def __post_init__(self):
        if not float(self.duration) > 0:
            raise ValidationError(f"duration must be positive, got {self.duration!r}")
        n = self.coincidences
        if not math.isfinite(float(n)) or n < 0:
            raise ValidationError(f"coincidences must be finite and nonnegative, got {n!r}")
        if not math.isfinite(float(self.accidental_estimate)) or self.accidental_estimate < 0:
            raise ValidationError("accidental_estimate must be finite and nonnegative")


def _born(rho_entries: np.ndarray, op: np.ndarray) -> float:
    return min(max(float(np.real(np.trace(rho_entries @ op))), 0.0), 1.0)


def singles_rates(rho, setting, model: DetectorModel) -> tuple[float, float]:
    r = as_density_matrix(rho).entries
    p1, p2 = setting.projectors()
    eye = np.eye(2)
    m1 = _born(r, np.kron(p1, eye))
    m2 = _born(r, np.kron(eye, p2))
    base = model.dark_rate + model.singles_rate_background
    return (
        model.pair_rate * model.dqe * m1 + base,
        model.pair_rate * model.dqe * m2 + base,
    )


def accidental_rate(rho, setting, model: DetectorModel) -> float:
    s1, s2 = singles_rates(rho, setting, model)
    return s1 * s2 * model.coincidence_window


def expected_rate(rho, setting, model: DetectorModel | None = None) -> float:
    """Mean coincidence rate (counts/s) for one analyzer/projector setting."""
    model = model or DetectorModel()
    r = as_density_matrix(rho).entries
    true_rate = model.pair_rate * model.dqe**2 * _born(r, setting.operator())
    return true_rate + accidental_rate(rho, setting, model)


def _durations(settings, duration) -> list[float]:
    if np.ndim(duration) == 0:
        d = [float(duration)] * len(settings)
    else:
        d = [float(x) for x in duration]
        if len(d) != len(settings):
            raise ValidationError("need one duration per setting")
    if any(not (x > 0 and math.isfinite(x)) for x in d):
        raise ValidationError("durations must be positive and finite")
    return d


def _check_seed(seed) -> int:
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def poisson_sample(rng: np.random.Generator, mean: float) -> int:
    """Poisson draw; above NORMAL_APPROX_CUTOFF a rounded normal approximation is used."""
    if mean <= 0:
        return 0
    if mean > NORMAL_APPROX_CUTOFF:
        return max(int(round(rng.normal(mean, math.sqrt(mean)))), 0)
    return int(rng.poisson(mean))


def expected_counts(rho, settings: Sequence, duration=DEFAULT_DURATION, model: DetectorModel | None = None) -> list[CountRecord]:
    """Noiseless records whose counts equal their expectation values (floats)."""
    model = model or DetectorModel()
    settings = list(settings)
    if not settings:
        raise ValidationError("settings list is empty")
    rho = as_density_matrix(rho)
    out = []
    for s, t in zip(settings, _durations(settings, duration)):
        out.append(CountRecord(s, t, expected_rate(rho, s, model) * t, accidental_rate(rho, s, model) * t))
    return out


def simulate_counts(
    rho,
    settings: Sequence,
    duration=DEFAULT_DURATION,
    model: DetectorModel | None = None,
    seed: int = 0,
) -> list[CountRecord]:
    model = model or DetectorModel()
    settings = list(settings)
    if not settings:
        raise ValidationError("settings list is empty")
    seed = _check_seed(seed)
    rho = as_density_matrix(rho)
    records = []
    for i, (s, t) in enumerate(zip(settings, _durations(settings, duration))):
        rng = np.random.default_rng([seed, i])
        mean = expected_rate(rho, s, model) * t
        records.append(CountRecord(s, t, poisson_sample(rng, mean), accidental_rate(rho, s, model) * t))
    return records


def run_bell_experiment(
    rho,
    angles: ChshAngles = OPTIMAL_ANGLES,
    duration: float = DEFAULT_DURATION,
    model: DetectorModel | None = None,
    seed: int = 0,
    method: str = "delta",
) -> ChshEstimate:
    records = simulate_counts(rho, angles.unique_settings(), duration, model, seed)
    return estimate_S_from_counts(records, angles, method=method, seed=seed)


# -- serialization -----------------------------------------------------------

CSV_FIELDS = ["setting_id", "theta1", "theta2", "label1", "label2", "duration_s", "counts", "accidentals"]


def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def _parse_num(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def record_to_dict(rec: CountRecord, setting_id: int) -> dict:
    s = rec.setting
    row = {"setting_id": setting_id, "duration_s": rec.duration, "counts": rec.coincidences,
           "accidentals": rec.accidental_estimate}
    if isinstance(s, AnalyzerSetting):
        row.update(theta1=s.theta1, theta2=s.theta2)
    else:
        row.update(label1=s.label1, label2=s.label2)
    return row


def record_from_dict(row: dict) -> CountRecord:
    if row.get("label1") not in (None, ""):
        setting = ProjectorSetting(row["label1"], row["label2"])
    elif row.get("theta1") not in (None, ""):
        setting = AnalyzerSetting(float(row["theta1"]), float(row["theta2"]))
    else:
        raise ValidationError(f"record {row.get('setting_id')} has neither angles nor labels")
    counts = row["counts"]
    if isinstance(counts, str):
        counts = _parse_num(counts)
    return CountRecord(setting, float(row["duration_s"]), counts, float(row.get("accidentals") or 0.0))


def records_to_csv(records: Sequence[CountRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for i, rec in enumerate(records):
        row = record_to_dict(rec, i)
        writer.writerow({k: (_num(v) if isinstance(v, (int, float, np.number)) else v) for k, v in row.items()})
    return buf.getvalue()


def records_from_csv(text: str) -> list[CountRecord]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(CSV_FIELDS) - set(reader.fieldnames or [])
    if missing:
        raise ValidationError(f"count CSV lacks columns {sorted(missing)}")
    return [record_from_dict(row) for row in reader]


def records_to_json(records: Sequence[CountRecord]) -> str:
    return json.dumps({"records": [record_to_dict(r, i) for i, r in enumerate(records)]})


def records_from_json(text: str) -> list[CountRecord]:
    data = json.loads(text)
    rows = data["records"] if isinstance(data, dict) else data
    return [record_from_dict(row) for row in rows]


def load_records(path) -> list[CountRecord]:
    """Read a count file, CSV or JSON by extension."""
    path = str(path)
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        return records_from_json(text)
    return records_from_csv(text)
