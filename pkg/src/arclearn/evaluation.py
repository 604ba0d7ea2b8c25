"""Metrics, axiom compliance, and robustness studies for trained models.

The headline metrics are MSE, RMSE, and RMSE over mean true length
(a scale-free error). Axiom checks restate the length axioms at the level
a regressor can satisfy statistically: additivity residuals over triples,
prediction spread under random isometries, the fraction of negative
predictions, and the linearity of predicted vs true length. Pass
thresholds for those checks are harness choices, labeled as such in every
emitted report.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .datagen import GenSpec
from .geometry import analytic_length, sample
from .models import ModelKind

__all__ = [
    "Metrics",
    "AxiomCheck",
    "AxiomReport",
    "NoiseRow",
    "SubsampleRow",
    "RobustnessReport",
    "metrics_from_predictions",
    "evaluate",
    "triples_to_curves",
    "axiom_suite",
    "noise_robustness",
    "subsample_robustness",
    "batch_polyline_length",
    "write_scatter_csv",
    "write_axiom_csv",
    "write_noise_csv",
    "write_subsample_csv",
]

# Harness-chosen gates for the model-level axiom checks (the length axioms
# themselves are exact statements; a regressor satisfies them only up to
# its error scale).
ADDITIVITY_RMS_FRACTION = 0.10
INVARIANCE_SPREAD_FRACTION = 0.05
NONNEG_MAX_FRACTION = 0.01
MONOTONIC_MIN_CORRELATION = 0.99
MONOTONIC_SLOPE_RANGE = (0.9, 1.1)
THRESHOLD_NOTE = "harness choice, not a published value"


@dataclass(frozen=True)
class Metrics:
    mse: float
    rmse: float
    rmlr: float
    mean_true_length: float
    n: int

    def format(self) -> str:
        return (
            f"n={self.n}  mse={self.mse:.6f}  rmse={self.rmse:.6f}  "
            f"rmlr={self.rmlr:.6f}  mean_true_length={self.mean_true_length:.6f}"
        )


def metrics_from_predictions(predictions, truths) -> Metrics:
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.shape != truths.shape or predictions.ndim != 1 or predictions.size == 0:
        raise ValueError("predictions and truths must be equal-length non-empty vectors")
    mean_len = float(truths.mean())
    if mean_len <= 0:
        raise ValueError("mean true length must be positive")
    mse = float(np.mean((predictions - truths) ** 2))
    rmse = math.sqrt(mse)
    return Metrics(mse=mse, rmse=rmse, rmlr=rmse / mean_len, mean_true_length=mean_len, n=truths.size)


def evaluate(kind: ModelKind | str, params, curves, truths) -> Metrics:
    """Model metrics over (curve, true length) pairs."""
    preds = models.predict(kind, params, curves)
    return metrics_from_predictions(preds, truths)


def triples_to_curves(triples) -> tuple[np.ndarray, np.ndarray]:
    """Flatten triples into per-curve pairs: s1 block, s2 block, s3 block."""
    curves = np.concatenate(
        [
            np.stack([t.s1 for t in triples]),
            np.stack([t.s2 for t in triples]),
            np.stack([t.s3 for t in triples]),
        ]
    )
    truths = np.concatenate(
        [
            np.array([t.len1 for t in triples]),
            np.array([t.len2 for t in triples]),
            np.array([t.len3 for t in triples]),
        ]
    )
    return curves, truths


def batch_polyline_length(curves: np.ndarray) -> np.ndarray:
    """Chord-sum lengths for a (batch, 2, n) array of curves."""
    arr = np.asarray(curves, dtype=np.float64)
    seg = np.hypot(np.diff(arr[:, 0, :], axis=1), np.diff(arr[:, 1, :], axis=1))
    return seg.sum(axis=1)


# ---------------------------------------------------------------------------
# axiom suite


@dataclass
class AxiomCheck:
    name: str
    passed: bool
    statistics: dict
    threshold: str

    def format(self) -> str:
        stats = "  ".join(f"{k}={v:.6g}" for k, v in self.statistics.items())
        verdict = "pass" if self.passed else "FAIL"
        return f"{self.name:<14} {verdict:<4} {stats}\n{'':<19}gate: {self.threshold}"


@dataclass
class AxiomReport:
    checks: list = field(default_factory=list)

    def __getitem__(self, name: str) -> AxiomCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def format(self) -> str:
        return "\n".join(c.format() for c in self.checks)


def axiom_suite(
    kind: ModelKind | str,
    params,
    triples,
    rng_seed: int = 0,
    spec: GenSpec | None = None,
    n_invariance_curves: int = 100,
    n_isometries: int = 20,
) -> AxiomReport:
    """Axiom-compliance report for a trained model on holdout triples."""
    predict = lambda curves: models.predict(kind, params, curves)
    return axiom_report_for_predictor(
        predict,
        triples,
        rng_seed=rng_seed,
        spec=spec,
        n_invariance_curves=n_invariance_curves,
        n_isometries=n_isometries,
    )


def axiom_report_for_predictor(
    predict,
    triples,
    rng_seed: int = 0,
    spec: GenSpec | None = None,
    n_invariance_curves: int = 100,
    n_isometries: int = 20,
) -> AxiomReport:
    """Same report for an arbitrary curve -> length callable (testable core)."""
    if len(triples) < 1:
        raise ValueError("need at least one triple")
    spec = spec or GenSpec()
    report = AxiomReport()

    s1 = np.stack([t.s1 for t in triples])
    truths1 = np.array([t.len1 for t in triples])
    truths23 = np.array([[t.len2, t.len3] for t in triples]).T.reshape(-1)
    p1 = predict(s1)
    p2 = predict(np.stack([t.s2 for t in triples]))
    p3 = predict(np.stack([t.s3 for t in triples]))

    # additivity: O(s1) - O(s2) - O(s3) should be small relative to lengths
    resid = p1 - p2 - p3
    rms = float(np.sqrt(np.mean(resid**2)))
    mean_len = float(truths1.mean())
    report.checks.append(
        AxiomCheck(
            name="additivity",
            passed=rms <= ADDITIVITY_RMS_FRACTION * mean_len,
            statistics={
                "rms_residual": rms,
                "mean_residual": float(resid.mean()),
                "max_abs_residual": float(np.abs(resid).max()),
                "mean_true_length": mean_len,
            },
            threshold=(
                f"rms residual <= {ADDITIVITY_RMS_FRACTION} * mean length"
                f" ({THRESHOLD_NOTE})"
            ),
        )
    )

    # invariance: prediction spread across random isometries per curve
    rng = np.random.default_rng((rng_seed % 2**64, 1))
    n_curves = min(n_invariance_curves, len(triples))
    rel_spreads = np.empty(n_curves)
    for i in range(n_curves):
        base = triples[i].s1
        angles = rng.uniform(*spec.rotation_range, size=n_isometries)
        shifts = rng.uniform(*spec.translation_range, size=(n_isometries, 2))
        cos, sin = np.cos(angles), np.sin(angles)
        rot = np.stack([np.stack([cos, -sin], -1), np.stack([sin, cos], -1)], 1)
        moved = np.einsum("kij,jn->kin", rot, base) + shifts[:, :, None]
        preds = predict(moved)
        rel_spreads[i] = (preds.max() - preds.min()) / max(triples[i].len1, 1e-12)
    median_spread = float(np.median(rel_spreads))
    report.checks.append(
        AxiomCheck(
            name="invariance",
            passed=median_spread <= INVARIANCE_SPREAD_FRACTION,
            statistics={
                "median_rel_spread": median_spread,
                "p95_rel_spread": float(np.quantile(rel_spreads, 0.95)),
                "max_rel_spread": float(rel_spreads.max()),
                "n_curves": float(n_curves),
                "n_isometries": float(n_isometries),
            },
            threshold=(
                f"median spread <= {INVARIANCE_SPREAD_FRACTION} of curve length"
                f" ({THRESHOLD_NOTE})"
            ),
        )
    )

    # non-negativity: fraction of negative predictions over all curves
    all_preds = np.concatenate([p1, p2, p3])
    frac_neg = float(np.mean(all_preds < 0))
    report.checks.append(
        AxiomCheck(
            name="nonnegativity",
            passed=frac_neg <= NONNEG_MAX_FRACTION,
            statistics={
                "fraction_negative": frac_neg,
                "min_prediction": float(all_preds.min()),
            },
            threshold=(
                f"at most {NONNEG_MAX_FRACTION:.0%} negative predictions"
                f" ({THRESHOLD_NOTE})"
            ),
        )
    )

    # monotonicity: predicted vs true length should be linear with slope ~1,
    # over every curve (whole curves and sub-curves alike)
    all_truths = np.concatenate([truths1, truths23])
    corr, slope = _linear_fit(all_truths, np.concatenate([p1, p2, p3]))
    lo, hi = MONOTONIC_SLOPE_RANGE
    passed = (
        np.isfinite(corr)
        and corr >= MONOTONIC_MIN_CORRELATION
        and lo <= slope <= hi
    )
    report.checks.append(
        AxiomCheck(
            name="monotonicity",
            passed=bool(passed),
            statistics={"pearson_r": corr, "slope": slope, "n": float(all_truths.size)},
            threshold=(
                f"pearson r >= {MONOTONIC_MIN_CORRELATION} and slope in"
                f" [{lo}, {hi}] ({THRESHOLD_NOTE})"
            ),
        )
    )
    return report


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Pearson correlation and least-squares slope of y against x."""
    vx = float(np.var(x))
    vy = float(np.var(y))
    if vx == 0.0 or vy == 0.0:
        return float("nan"), float("nan")
    cov = float(np.mean((x - x.mean()) * (y - y.mean())))
    return cov / math.sqrt(vx * vy), cov / vx


# ---------------------------------------------------------------------------
# robustness


@dataclass
class NoiseRow:
    sigma: float
    model: Metrics
    chord: Metrics
    chord_mean_bias: float


@dataclass
class SubsampleRow:
    factor: float
    coarse_points: int
    model: Metrics
    chord: Metrics


@dataclass
class RobustnessReport:
    noise_rows: list = field(default_factory=list)
    subsample_rows: list = field(default_factory=list)

    def format(self) -> str:
        lines = []
        if self.noise_rows:
            lines.append("additive noise (model vs chord-sum estimator):")
            for r in self.noise_rows:
                lines.append(
                    f"  sigma={r.sigma:<6g} model: {r.model.format()}\n"
                    f"  {'':<12} chord: {r.chord.format()}  mean_bias={r.chord_mean_bias:+.6f}"
                )
        if self.subsample_rows:
            lines.append("subsampling (coarse resample, linear re-interpolation):")
            for r in self.subsample_rows:
                lines.append(
                    f"  factor={r.factor:<5g} ({r.coarse_points} pts) model: {r.model.format()}\n"
                    f"  {'':<12} chord: {r.chord.format()}"
                )
        return "\n".join(lines)


def noise_robustness(
    kind: ModelKind | str,
    params,
    curves,
    truths,
    sigmas,
    rng_seed: int = 0,
) -> RobustnessReport:
    """Model vs chord-sum metrics under i.i.d. Gaussian coordinate noise.

    The sigma = 0 row reuses the clean curves untouched, so it matches a
    plain evaluation exactly.
    """
    curves = np.asarray(curves, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    report = RobustnessReport()
    for k, sigma in enumerate(sigmas):
        if sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {sigma}")
        if sigma == 0:
            noisy = curves
        else:
            rng = np.random.default_rng((rng_seed % 2**64, 2, k))
            noisy = curves + rng.normal(0.0, sigma, size=curves.shape)
        model_preds = models.predict(kind, params, noisy)
        chord_preds = batch_polyline_length(noisy)
        report.noise_rows.append(
            NoiseRow(
                sigma=float(sigma),
                model=metrics_from_predictions(model_preds, truths),
                chord=metrics_from_predictions(chord_preds, truths),
                chord_mean_bias=float((chord_preds - truths).mean()),
            )
        )
    return report


def subsample_robustness(
    kind: ModelKind | str,
    params,
    sines,
    factors,
    n_points: int,
) -> RobustnessReport:
    """Metrics when the model input is rebuilt from a coarser polyline.

    Each analytic curve is sampled at n_points / factor points and then
    linearly re-interpolated back to n_points, simulating coarse capture.
    Factor 1 feeds the clean sample through unchanged.
    """
    truths = np.array([analytic_length(s) for s in sines])
    clean = np.stack([sample(s, n_points) for s in sines])
    report = RobustnessReport()
    for factor in factors:
        if factor < 1:
            raise ValueError(f"subsampling factor must be >= 1, got {factor}")
        coarse_n = int(round(n_points / factor))
        if coarse_n < 2:
            raise ValueError(f"factor {factor} leaves fewer than 2 points")
        if coarse_n == n_points:
            degraded = clean
        else:
            coarse = np.stack([sample(s, coarse_n) for s in sines])
            t_fine = np.linspace(0.0, 1.0, n_points)
            t_coarse = np.linspace(0.0, 1.0, coarse_n)
            degraded = np.empty_like(clean)
            for i in range(len(sines)):
                degraded[i, 0] = np.interp(t_fine, t_coarse, coarse[i, 0])
                degraded[i, 1] = np.interp(t_fine, t_coarse, coarse[i, 1])
        model_preds = models.predict(kind, params, degraded)
        chord_preds = batch_polyline_length(degraded)
        report.subsample_rows.append(
            SubsampleRow(
                factor=float(factor),
                coarse_points=coarse_n,
                model=metrics_from_predictions(model_preds, truths),
                chord=metrics_from_predictions(chord_preds, truths),
            )
        )
    return report


# ---------------------------------------------------------------------------
# CSV emission


def write_scatter_csv(path, truths, predictions) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true_length", "predicted_length"])
        for t, p in zip(truths, predictions):
            writer.writerow([repr(float(t)), repr(float(p))])


def write_axiom_csv(path, report: AxiomReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axiom", "statistic", "value", "passed", "threshold"])
        for check in report.checks:
            for stat, value in check.statistics.items():
                writer.writerow(
                    [check.name, stat, repr(float(value)), check.passed, check.threshold]
                )


def _metrics_fields(prefix: str):
    return [f"{prefix}_{name}" for name in ("mse", "rmse", "rmlr", "mean_true_length", "n")]


def _metrics_values(m: Metrics):
    return [repr(m.mse), repr(m.rmse), repr(m.rmlr), repr(m.mean_true_length), m.n]


def write_noise_csv(path, report: RobustnessReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sigma"] + _metrics_fields("model") + _metrics_fields("chord") + ["chord_mean_bias"]
        )
        for r in report.noise_rows:
            writer.writerow(
                [repr(r.sigma)]
                + _metrics_values(r.model)
                + _metrics_values(r.chord)
                + [repr(r.chord_mean_bias)]
            )


def write_subsample_csv(path, report: RobustnessReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["factor", "coarse_points"] + _metrics_fields("model") + _metrics_fields("chord")
        )
        for r in report.subsample_rows:
            writer.writerow(
                [repr(r.factor), r.coarse_points]
                + _metrics_values(r.model)
                + _metrics_values(r.chord)
            )
