"""Synthetic curve dataset: transformed sines, cut triples, splits, files.

Every example is a triple (s1, s2, s3): a sampled sine curve, the two
pieces obtained by cutting it at a random parameter, and the true arc
lengths of all three. Labels come from quadrature, never from chord sums,
so they satisfy the length axioms to tight tolerance by construction.

Generation is deterministic: triple ``i`` of the main set draws from the
RNG stream ``(seed, i)``, the holdout from ``(seed + 1, i)``, and the
train/test shuffle from ``(seed, n_examples)``. Parallel and serial
generation therefore produce identical datasets.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .container import (
    SCHEMA_VERSION,
    MalformedFileError,
    SchemaVersionError,
    write_container,
)
from . import container
from .geometry import AnalyticSine, Isometry, analytic_length, sample

__all__ = [
    "GenSpec",
    "ExampleTriple",
    "DatasetSplits",
    "random_sine",
    "make_triple",
    "triple_at",
    "generate",
    "sines_for_split",
    "save",
    "load",
    "MalformedFileError",
    "SchemaVersionError",
]

DATASET_MAGIC = b"ACRV"

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GenSpec:
    """Configuration of the generator; all values have working defaults."""

    n_examples: int = 20_000
    n_points: int = 200
    amplitude_range: tuple[float, float] = (0.5, 2.0)
    phase_range: tuple[float, float] = (0.0, TWO_PI)
    rotation_range: tuple[float, float] = (0.0, TWO_PI)
    translation_range: tuple[float, float] = (-1.0, 1.0)
    span_range: tuple[float, float] = (1.5 * math.pi, 2.5 * math.pi)
    cut_range: tuple[float, float] = (0.02, 0.98)
    train_fraction: float = 0.8
    holdout_examples: int = 5_000
    seed: int = 0

    def __post_init__(self):
        if self.n_examples < 1 or self.n_points < 2 or self.holdout_examples < 0:
            raise ValueError("n_examples, n_points, holdout_examples out of range")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        for name in (
            "amplitude_range",
            "phase_range",
            "rotation_range",
            "translation_range",
            "span_range",
            "cut_range",
        ):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} has lo > hi: ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.amplitude_range[0] < 0:
            raise ValueError("amplitude_range must be non-negative")
        if self.span_range[0] <= 0:
            raise ValueError("span_range must be positive")
        if not 0.0 < self.cut_range[0] < self.cut_range[1] < 1.0:
            raise ValueError("cut_range must be inside (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenSpec":
        kwargs = dict(d)
        for key, value in kwargs.items():
            if isinstance(value, list):
                kwargs[key] = tuple(value)
        return cls(**kwargs)

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ExampleTriple:
    """A curve, its two pieces, and their true lengths.

    ``s1`` spans the full parameter interval, ``s2`` runs up to
    ``cut_param`` and ``s3`` from there on; each is resampled to the same
    point count. Lengths satisfy len1 = len2 + len3 to the generation
    tolerance.
    """

    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    len1: float
    len2: float
    len3: float
    cut_param: float

    def __post_init__(self):
        n = self.s1.shape[1]
        for name in ("s1", "s2", "s3"):
            cur = getattr(self, name)
            if cur.shape != (2, n):
                raise ValueError(f"{name} has shape {cur.shape}, expected (2, {n})")
        if min(self.len1, self.len2, self.len3) < 0:
            raise ValueError("negative length label")
        if abs(self.len1 - (self.len2 + self.len3)) > 1e-9 * (1.0 + self.len1):
            raise ValueError(
                f"additivity violated: {self.len1} != {self.len2} + {self.len3}"
            )

    @property
    def n_points(self) -> int:
        return self.s1.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ExampleTriple):
            return NotImplemented
        return (
            np.array_equal(self.s1, other.s1)
            and np.array_equal(self.s2, other.s2)
            and np.array_equal(self.s3, other.s3)
            and (self.len1, self.len2, self.len3, self.cut_param)
            == (other.len1, other.len2, other.len3, other.cut_param)
        )


@dataclass
class DatasetSplits:
    spec: GenSpec
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    holdout: list = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, DatasetSplits):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.train == other.train
            and self.test == other.test
            and self.holdout == other.holdout
        )

    def all_triples(self):
        return self.train + self.test + self.holdout


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng((seed % 2**64, index))


def _uniform(rng, bounds) -> float:
    lo, hi = bounds
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def random_sine(spec: GenSpec, rng: np.random.Generator) -> AnalyticSine:
    """Draw one curve: parameters uniform over their configured ranges.

    The parameter interval is centered, [-span/2, +span/2]. Under the
    uniform rotations this traces the same shape distribution as [0, span]
    but keeps raw coordinate magnitudes near span/2 instead of span, which
    the fixed-step optimizer needs to stay stable on long curves.
    """
    amplitude = _uniform(rng, spec.amplitude_range)
    phase = _uniform(rng, spec.phase_range)
    rotation = _uniform(rng, spec.rotation_range)
    tx = _uniform(rng, spec.translation_range)
    ty = _uniform(rng, spec.translation_range)
    span = _uniform(rng, spec.span_range)
    return AnalyticSine(
        amplitude=amplitude,
        phase=phase,
        isometry=Isometry(rotation, tx, ty),
        p_lo=-0.5 * span,
        p_hi=0.5 * span,
    )


def triple_at(sine: AnalyticSine, n_points: int, cut_param: float) -> ExampleTriple:
    """Build the triple for an explicit cut parameter."""
    if not sine.p_lo < cut_param < sine.p_hi:
        raise ValueError(f"cut {cut_param} outside ({sine.p_lo}, {sine.p_hi})")
    left = sine.restrict(sine.p_lo, cut_param)
    right = sine.restrict(cut_param, sine.p_hi)
    return ExampleTriple(
        s1=sample(sine, n_points),
        s2=sample(left, n_points),
        s3=sample(right, n_points),
        len1=analytic_length(sine),
        len2=analytic_length(left),
        len3=analytic_length(right),
        cut_param=cut_param,
    )


def make_triple(sine: AnalyticSine, spec: GenSpec, rng: np.random.Generator) -> ExampleTriple:
    """Cut the curve at a random parameter and resample both pieces."""
    lo_frac, hi_frac = spec.cut_range
    frac = lo_frac + (hi_frac - lo_frac) * rng.uniform(0.0, 1.0)
    cut = sine.p_lo + frac * (sine.p_hi - sine.p_lo)
    return triple_at(sine, spec.n_points, cut)


def _make_indexed(spec: GenSpec, base_seed: int, index: int) -> ExampleTriple:
    rng = _stream(base_seed, index)
    return make_triple(random_sine(spec, rng), spec, rng)


def _make_range(spec: GenSpec, base_seed: int, lo: int, hi: int) -> list:
    return [_make_indexed(spec, base_seed, i) for i in range(lo, hi)]


def _make_many(spec: GenSpec, base_seed: int, count: int, threads: int) -> list:
    if threads <= 1 or count < 64:
        return _make_range(spec, base_seed, 0, count)
    workers = min(threads, os.cpu_count() or 1)
    chunk = max(32, -(-count // (workers * 4)))
    bounds = [(lo, min(lo + chunk, count)) for lo in range(0, count, chunk)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_make_range, *zip(*((spec, base_seed, lo, hi) for lo, hi in bounds)))
        out: list = []
        for part in parts:
            out.extend(part)
    return out


def generate(spec: GenSpec, threads: int = 1) -> DatasetSplits:
    """Generate the full train/test/holdout dataset for a spec.

    Train and test partition the first ``n_examples`` triples after a
    seeded shuffle; the holdout comes from an independent stream keyed by
    ``seed + 1``, so the three splits never share a generation index.
    """
    main = _make_many(spec, spec.seed, spec.n_examples, threads)
    holdout = _make_many(spec, spec.seed + 1, spec.holdout_examples, threads)
    perm = _stream(spec.seed, spec.n_examples).permutation(spec.n_examples)
    n_train = int(spec.train_fraction * spec.n_examples)
    train = [main[i] for i in perm[:n_train]]
    test = [main[i] for i in perm[n_train:]]
    return DatasetSplits(spec=spec, train=train, test=test, holdout=holdout)


def sines_for_split(spec: GenSpec, split: str = "holdout") -> list:
    """Regenerate the analytic curves behind a split, in stored order.

    The dataset file stores only sampled points; the analytic curves are
    recovered from the generator's deterministic streams.
    """
    if split == "holdout":
        return [
            random_sine(spec, _stream(spec.seed + 1, i))
            for i in range(spec.holdout_examples)
        ]
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")
    sines = [random_sine(spec, _stream(spec.seed, i)) for i in range(spec.n_examples)]
    perm = _stream(spec.seed, spec.n_examples).permutation(spec.n_examples)
    n_train = int(spec.train_fraction * spec.n_examples)
    idx = perm[:n_train] if split == "train" else perm[n_train:]
    return [sines[i] for i in idx]


# ---------------------------------------------------------------------------
# serialization

_SCALAR_FIELDS = ("len1", "len2", "len3", "cut_param")


def _record_width(n_points: int) -> int:
    return 6 * n_points + 4


def _to_record(t: ExampleTriple) -> np.ndarray:
    return np.concatenate(
        [
            t.s1[0], t.s1[1], t.s2[0], t.s2[1], t.s3[0], t.s3[1],
            [t.len1, t.len2, t.len3, t.cut_param],
        ]
    )


def _from_record(row: np.ndarray, n: int) -> ExampleTriple:
    xs = row[: 6 * n].reshape(6, n)
    len1, len2, len3, cut = row[6 * n :]
    return ExampleTriple(
        s1=np.ascontiguousarray(xs[0:2]),
        s2=np.ascontiguousarray(xs[2:4]),
        s3=np.ascontiguousarray(xs[4:6]),
        len1=float(len1),
        len2=float(len2),
        len3=float(len3),
        cut_param=float(cut),
    )


def save(splits: DatasetSplits, path) -> None:
    """Write a dataset; ``.json`` paths get the text variant."""
    path = str(path)
    if path.endswith(".json"):
        _save_json(splits, path)
        return
    records = np.array(
        [_to_record(t) for t in splits.all_triples()],
        dtype=np.float64,
    ).reshape(-1, _record_width(splits.spec.n_points))
    header = {
        "schema_version": SCHEMA_VERSION,
        "spec": splits.spec.to_dict(),
        "sizes": {
            "train": len(splits.train),
            "test": len(splits.test),
            "holdout": len(splits.holdout),
        },
    }
    write_container(path, DATASET_MAGIC, header, [records])


def load(path) -> DatasetSplits:
    """Read a dataset written by :func:`save` (binary or JSON variant)."""
    path = str(path)
    with open(path, "rb") as fh:
        prefix = fh.read(4)
    if prefix == DATASET_MAGIC:
        return _load_binary(path)
    return _load_json(path)


def _load_binary(path) -> DatasetSplits:
    def shapes(header):
        sizes = header["sizes"]
        n = header["spec"]["n_points"]
        total = sizes["train"] + sizes["test"] + sizes["holdout"]
        return [(total, _record_width(n))]

    header, (records,) = container.read_container(path, DATASET_MAGIC, shapes)
    spec = GenSpec.from_dict(header["spec"])
    sizes = header["sizes"]
    triples = [_from_record(row, spec.n_points) for row in records]
    a, b = sizes["train"], sizes["train"] + sizes["test"]
    return DatasetSplits(
        spec=spec, train=triples[:a], test=triples[a:b], holdout=triples[b:]
    )


def _triple_to_json(t: ExampleTriple) -> dict:
    return {
        "s1_x": t.s1[0].tolist(), "s1_y": t.s1[1].tolist(),
        "s2_x": t.s2[0].tolist(), "s2_y": t.s2[1].tolist(),
        "s3_x": t.s3[0].tolist(), "s3_y": t.s3[1].tolist(),
        "len1": t.len1, "len2": t.len2, "len3": t.len3,
        "cut_param": t.cut_param,
    }


def _triple_from_json(d: dict) -> ExampleTriple:
    try:
        return ExampleTriple(
            s1=np.array([d["s1_x"], d["s1_y"]], dtype=np.float64),
            s2=np.array([d["s2_x"], d["s2_y"]], dtype=np.float64),
            s3=np.array([d["s3_x"], d["s3_y"]], dtype=np.float64),
            len1=float(d["len1"]),
            len2=float(d["len2"]),
            len3=float(d["len3"]),
            cut_param=float(d["cut_param"]),
        )
    except (KeyError, TypeError) as exc:
        raise MalformedFileError(f"bad triple record: {exc}") from exc


def _save_json(splits: DatasetSplits, path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "spec": splits.spec.to_dict(),
        "splits": {
            name: [_triple_to_json(t) for t in getattr(splits, name)]
            for name in ("train", "test", "holdout")
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _load_json(path) -> DatasetSplits:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFileError(f"{path}: neither binary dataset nor JSON ({exc})") from exc
    if not isinstance(doc, dict) or "splits" not in doc:
        raise MalformedFileError(f"{path}: JSON without a 'splits' section")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}")
    spec = GenSpec.from_dict(doc["spec"])
    parts = {
        name: [_triple_from_json(x) for x in doc["splits"].get(name, [])]
        for name in ("train", "test", "holdout")
    }
    return DatasetSplits(spec=spec, **parts)
