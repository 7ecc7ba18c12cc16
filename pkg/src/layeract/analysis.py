"""Measurement machinery: activation means, fluctuation scans, bound audits.

All scans work on the trained network's hidden layer.  For a sample x the
hidden pre-activation is y = x @ W1 + b1; the "input" stage looks at y
itself, the "output" stage at the activation output a.  Fluctuation for a
noise model is the per-sample L1 distance between the clean and noisy
stage values, computed from two full forward propagations of the same
sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .activations import Activation, make_activation, activation_names
from .core import Rng
from .data import ImageSet, NoiseSpec, apply_noise
from .errors import InvalidInput, ShapeError, Unsupported
from .layer_act import DEFAULT_ALPHA, LayerActivation, la_normalize
from .network import Network

__all__ = [
    "MeanActivationReport",
    "FluctuationReport",
    "BoundAudit",
    "GradcheckEntry",
    "mean_activation",
    "fluctuation_scan",
    "bound_audit",
    "bound_montecarlo",
    "gradcheck_suite",
    "central_diff_grad",
    "write_mean_activation_csv",
    "write_fluctuation_csv",
    "write_bound_audit_csv",
    "write_gradcheck_csv",
]

STAGES = ("input", "output")


def _hidden_layer(net: Network):
    if len(net.layers) < 2 or net.layers[0].act is None:
        raise ShapeError("expected a network with an activated hidden layer")
    return net.layers[0]


def _stage_values(net: Network, images: np.ndarray, stage: str, kind: Activation | None):
    """Hidden-layer values of every sample at the requested stage."""
    if stage not in STAGES:
        raise InvalidInput(f"stage must be one of {STAGES}, got {stage!r}")
    hidden = _hidden_layer(net)
    y = np.asarray(images, dtype=np.float64) @ hidden.W.astype(np.float64) + hidden.b.astype(np.float64)
    if stage == "input":
        return y
    act = kind if kind is not None else hidden.act
    return act.apply(y)


@dataclass(frozen=True)
class MeanActivationReport:
    """Per-unit mean of the hidden-stage values across samples."""

    per_element_means: np.ndarray
    kind: str
    stage: str

    @property
    def mean(self) -> float:
        return float(self.per_element_means.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.per_element_means))

    @property
    def fraction_negative(self) -> float:
        return float(np.mean(self.per_element_means < 0.0))


def mean_activation(net: Network, image_set: ImageSet, stage: str = "output") -> MeanActivationReport:
    """Mean over samples of each hidden unit's value at ``stage``."""
    values = _stage_values(net, image_set.images, stage, None)
    hidden = _hidden_layer(net)
    return MeanActivationReport(
        per_element_means=values.mean(axis=0),
        kind=hidden.act.name,
        stage=stage,
    )


@dataclass(frozen=True)
class FluctuationReport:
    """Per-sample L1 shift of the hidden stage under one noise model."""

    per_sample_values: np.ndarray
    kind: str
    noise: str
    stage: str

    @property
    def mean(self) -> float:
        return float(self.per_sample_values.mean())

    @property
    def variance(self) -> float:
        return float(self.per_sample_values.var())


def fluctuation_scan(
    net: Network,
    image_set: ImageSet,
    noise_spec: NoiseSpec,
    rng: Rng,
    stage: str = "output",
    kind: Activation | None = None,
) -> FluctuationReport:
    """Clean-vs-noisy hidden-layer fluctuation, one value per sample.

    ``kind`` overrides the activation applied at the hidden pre-activation
    (defaults to the network's own), which allows measuring a different
    gate on identical propagated noise.
    """
    noisy_set = apply_noise(image_set, noise_spec, rng)
    clean = _stage_values(net, image_set.images, stage, kind)
    noisy = _stage_values(net, noisy_set.images, stage, kind)
    act_name = kind.name if kind is not None else _hidden_layer(net).act.name
    return FluctuationReport(
        per_sample_values=np.abs(noisy - clean).sum(axis=-1),
        kind=act_name,
        noise=noise_spec.tag(),
        stage=stage,
    )


# ----------------------------------------------------------------------
# Bound audits
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class BoundAudit:
    """Violation counts of the fluctuation upper bounds over many trials.

    element_checked counts trials satisfying the all-positive hypothesis of
    the element-level output bound; trials failing the hypothesis are
    counted in element_skipped, never as violations.  The gate-shift bound
    rows (elementwise and layerwise) apply to every trial.
    """

    trials: int
    element_checked: int
    element_skipped: int
    element_violations: int
    gate_elem_violations: int
    gate_layer_violations_analytic: int
    gate_layer_violations_exact: int
    rows: list  # (trial, lhs, rhs, violated) for the layer gate bound

    @property
    def clean(self) -> bool:
        return (
            self.element_violations == 0
            and self.gate_elem_violations == 0
            and self.gate_layer_violations_exact == 0
        )


_REL_SLACK = 1e-9


def _violates(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # Slack is relative with a tiny absolute floor for lhs = rhs = 0.
    return lhs > rhs * (1.0 + _REL_SLACK) + 1e-12


def _audit_arrays(scale, k: float, alpha: float, y: np.ndarray, eps: np.ndarray) -> dict:
    """Vectorized bound evaluation over rows of (y, eps)."""
    y_hat = y + eps
    s = scale.evaluate

    # Element-level output bound, valid where every y_i > 0.
    positive = np.all(y > 0.0, axis=-1)
    fluct = np.abs(y_hat * s(y_hat) - y * s(y)).sum(axis=-1)
    elem_rhs = (y * np.abs(s(y_hat) - s(y)) + np.abs(eps) * s(y_hat)).sum(axis=-1)
    element_viol = _violates(fluct, elem_rhs) & positive

    # Gate-shift bound at the raw input.
    gate_elem_lhs = np.abs(s(y_hat) - s(y)).sum(axis=-1)
    gate_elem_rhs = k * np.abs(eps).sum(axis=-1)

    # Gate-shift bound at the normalized input; the noisy side uses the
    # exact statistics of y + eps.
    clean = la_normalize(y, alpha)
    noisy = la_normalize(y_hat, alpha)
    gate_layer_lhs = np.abs(s(noisy.n) - s(clean.n)).sum(axis=-1)
    eps_centered = np.abs(eps - eps.mean(axis=-1, keepdims=True)).sum(axis=-1)
    gate_layer_rhs = k * eps_centered / np.sqrt(clean.var[..., 0] + alpha)
    gate_layer_rhs_exact = k * np.abs(noisy.n - clean.n).sum(axis=-1)

    return {
        "positive": positive,
        "element_viol": element_viol,
        "gate_elem_viol": _violates(gate_elem_lhs, gate_elem_rhs),
        "gate_layer_lhs": gate_layer_lhs,
        "gate_layer_rhs": gate_layer_rhs,
        "gate_layer_viol": _violates(gate_layer_lhs, gate_layer_rhs),
        "gate_layer_viol_exact": _violates(gate_layer_lhs, gate_layer_rhs_exact),
    }


def _finish_audit(res: dict, trials: int) -> BoundAudit:
    rows = [
        (
            t,
            float(res["gate_layer_lhs"][t]),
            float(res["gate_layer_rhs"][t]),
            bool(res["gate_layer_viol"][t]),
        )
        for t in range(trials)
    ]
    return BoundAudit(
        trials=trials,
        element_checked=int(res["positive"].sum()),
        element_skipped=trials - int(res["positive"].sum()),
        element_violations=int(res["element_viol"].sum()),
        gate_elem_violations=int(res["gate_elem_viol"].sum()),
        gate_layer_violations_analytic=int(res["gate_layer_viol"].sum()),
        gate_layer_violations_exact=int(res["gate_layer_viol_exact"].sum()),
        rows=rows,
    )


def _lipschitz_scale(kind: Activation):
    if kind.scale is None or not np.isfinite(kind.scale.lipschitz_k):
        raise Unsupported(
            f"bound audits need a Lipschitz activation scale; {kind.name!r} has none"
        )
    return kind.scale, kind.scale.lipschitz_k, getattr(kind, "alpha", DEFAULT_ALPHA)


def bound_audit(
    net: Network,
    image_set: ImageSet,
    noise_spec: NoiseSpec,
    rng: Rng,
    kind: Activation | None = None,
    max_samples: int | None = None,
) -> BoundAudit:
    """Audit the bounds on real samples propagated through the network.

    The noise vector at the hidden layer is the difference of the noisy
    and clean pre-activations of each test sample.
    """
    if kind is None:
        kind = _hidden_layer(net).act
    scale, k, alpha = _lipschitz_scale(kind)
    noisy_set = apply_noise(image_set, noise_spec, rng)
    y = _stage_values(net, image_set.images, "input", None)
    y_hat = _stage_values(net, noisy_set.images, "input", None)
    if max_samples is not None:
        y, y_hat = y[:max_samples], y_hat[:max_samples]
    res = _audit_arrays(scale, k, alpha, y, y_hat - y)
    return _finish_audit(res, y.shape[0])


def bound_montecarlo(
    kind: Activation,
    trials: int,
    d: int,
    rng: Rng,
    sigma_ratio: float = 0.01,
) -> BoundAudit:
    """Audit the bounds on synthetic layers: y ~ N(mu, sigma_y^2) per trial
    with noise scaled to sigma_eps = sigma_ratio * sigma_y."""
    scale, k, alpha = _lipschitz_scale(kind)
    gen = rng.generator
    mu = gen.uniform(-2.0, 2.0, size=(trials, 1))
    sigma = gen.uniform(0.3, 3.0, size=(trials, 1))
    y = gen.normal(0.0, 1.0, size=(trials, d)) * sigma + mu
    sigma_eps = sigma_ratio * y.std(axis=-1, keepdims=True)
    eps = gen.normal(0.0, 1.0, size=(trials, d)) * sigma_eps
    res = _audit_arrays(scale, k, alpha, y, eps)
    return _finish_audit(res, trials)


# ----------------------------------------------------------------------
# Gradient checking
# ----------------------------------------------------------------------


def central_diff_grad(f, y: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    y = np.asarray(y, dtype=np.float64)
    grad = np.zeros_like(y)
    for i in range(y.size):
        bumped = y.copy()
        bumped.flat[i] = y.flat[i] + step
        f_plus = f(bumped)
        bumped.flat[i] = y.flat[i] - step
        f_minus = f(bumped)
        grad.flat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # Relative where gradients are large, absolute below unit scale; keeps
    # finite-difference roundoff (~1e-10 here) far under the 1e-6 gate.
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _away_from_kinks(kind: Activation, y: np.ndarray, margin: float) -> np.ndarray:
    """Nudge entries so no (normalized) input sits within ``margin`` of a kink."""
    if not kind.kinks:
        return y
    y = y.copy()
    for _ in range(100):
        ref = la_normalize(y, kind.alpha).n if isinstance(kind, LayerActivation) else y
        bad = np.zeros(y.shape, dtype=bool)
        for kink in kind.kinks:
            bad |= np.abs(ref - kink) < margin
        if not bad.any():
            return y
        y = np.where(bad, y + 7.3 * margin, y)
    raise InvalidInput("could not move sample away from activation kinks")


@dataclass(frozen=True)
class GradcheckEntry:
    kind: str
    max_rel_err: float
    passed: bool


def gradcheck_suite(
    seed: int,
    kinds: list[str] | None = None,
    trials: int = 100,
    d: int = 16,
    step: float = 1e-5,
    tol: float = 1e-6,
    kink_margin: float = 1e-4,
    perturb: str | None = None,
) -> list[GradcheckEntry]:
    """Compare every kind's analytic backward against central differences.

    For each trial a random input y (entries ~ N(0, 4)) and cotangent g
    define the scalar probe L(y) = sum(g * f(y)); the analytic gradient
    must match the finite-difference one within ``tol`` (see ``_rel_err``),
    with inputs nudged ``kink_margin`` away from derivative jumps.  For
    layer-level kinds the margin applies in normalized-input space, with a
    wide extra berth because perturbing y also moves the normalization.

    ``perturb`` names a kind whose analytic gradient is deliberately
    damaged (multiplied by 1.001) — a self-test hook proving the check
    fails when the backward pass is wrong.
    """
    rng = Rng(seed)
    entries = []
    for name in kinds if kinds is not None else activation_names():
        kind = make_activation(name)
        margin = kink_margin if not kind.layer_level else 0.1
        worst = 0.0
        for trial in range(trials):
            gen = rng.substream(hash_name(name), trial).generator
            y = gen.normal(0.0, 2.0, size=d)
            g = gen.normal(0.0, 1.0, size=d)
            y = _away_from_kinks(kind, y, margin)
            if kind.layer_level:
                a, state = kind.forward(y)
                analytic = kind.backward(state, g)
            else:
                analytic = kind.backward(y, g)
            if perturb == name:
                analytic = analytic * 1.001
            numeric = central_diff_grad(lambda v: float(np.sum(g * kind.apply(v))), y, step)
            worst = max(worst, _rel_err(analytic, numeric))
        entries.append(GradcheckEntry(kind=name, max_rel_err=worst, passed=worst <= tol))
    return entries


def hash_name(name: str) -> int:
    """Stable small integer from a kind name (process-hash independent)."""
    return sum(ord(c) * (i + 1) for i, c in enumerate(name)) % 65521


# ----------------------------------------------------------------------
# CSV emission (fixed column schemas)
# ----------------------------------------------------------------------


def write_mean_activation_csv(path, report: MeanActivationReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["element_id", "mean"])
        for i, value in enumerate(report.per_element_means):
            writer.writerow([i, f"{value:.12g}"])


def write_fluctuation_csv(path, report: FluctuationReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "value"])
        for i, value in enumerate(report.per_sample_values):
            writer.writerow([i, f"{value:.12g}"])


def write_bound_audit_csv(path, audit: BoundAudit) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "lhs", "rhs", "violated"])
        for trial, lhs, rhs, violated in audit.rows:
            writer.writerow([trial, f"{lhs:.12g}", f"{rhs:.12g}", int(violated)])


def write_gradcheck_csv(path, entries: list[GradcheckEntry]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "max_rel_err", "pass"])
        for entry in entries:
            writer.writerow([entry.kind, f"{entry.max_rel_err:.6g}", int(entry.passed)])
