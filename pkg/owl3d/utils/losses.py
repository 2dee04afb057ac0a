"""
Training losses with analytic gradients, plus a central-difference checker.

Every loss returns (value, gradient) with the gradient shaped like its input,
so finite_diff_check can verify them end to end.
"""
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import expit, logsumexp, softmax

from owl3d.schemas.losses import (
    OUT_LABEL,
    ContrastiveBatch,
    GradCheckResult,
    LogitBatch,
    LossCheckReport,
    LossComponents,
    LossConfig,
)
from owl3d.utils.errors import InvalidInputError
from owl3d.utils.seeding import stream_rng

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-5
FD_EPSILON = 1e-4


def focal_loss(logits, labels, alpha: float = 0.25, gamma: float = 2.0) -> Tuple[float, np.ndarray]:
    """Mean binary focal loss over elements; labels are 0/1."""
    x = np.asarray(logits, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InvalidInputError(f"{x.size} logits but {y.size} labels")
    if x.size == 0:
        return 0.0, np.zeros(0)
    if not np.isin(y, (0.0, 1.0)).all():
        raise InvalidInputError("focal labels must be 0 or 1")

    sign = 2.0 * y - 1.0
    p_t = expit(sign * x)
    one_minus = expit(-sign * x)
    # log p_t in log-sigmoid form, never -inf
    log_p_t = -np.logaddexp(0.0, -sign * x)
    alpha_t = np.where(y == 1.0, alpha, 1.0 - alpha)

    per_element = -alpha_t * one_minus ** gamma * log_p_t
    grad = -alpha_t * sign * (one_minus ** (gamma + 1.0) - gamma * p_t * one_minus ** gamma * log_p_t)
    n = x.size
    return float(per_element.sum() / n), (grad / n).reshape(np.shape(logits))


def classification_focal_loss(logits, labels, alpha: float = 0.25, gamma: float = 2.0) -> Tuple[float, np.ndarray]:
    """
    One-vs-rest focal loss over C classes (seen classes plus Anomaly).
    labels[i] is the class column of sample i, or -1 for background.
    Per-sample sum over classes, averaged over samples.
    """
    f = np.asarray(logits, dtype=np.float64)
    if f.ndim != 2:
        raise InvalidInputError("classification logits must be N x C")
    n, c = f.shape
    targets = np.zeros_like(f)
    for i, label in enumerate(labels):
        if label >= c:
            raise InvalidInputError(f"label {label} out of range for {c} classes")
        if label >= 0:
            targets[i, label] = 1.0
    value, grad = focal_loss(f.ravel(), targets.ravel(), alpha, gamma)
    return value * c, grad.reshape(n, c) * c


def energy(logits, T: float = 1.0) -> float:
    """E(x) = -T log sum_j exp(f_j / T); lower means more in-distribution."""
    f = np.asarray(logits, dtype=np.float64)
    return float(-T * logsumexp(f / T))


def _energy_rows(f: np.ndarray, T: float, skip_column: Optional[int]):
    """Row energies and dE/df (zero in the skipped column)."""
    cols = np.ones(f.shape[1], dtype=bool)
    if skip_column is not None:
        cols[skip_column] = False
    used = f[:, cols]
    e = -T * logsumexp(used / T, axis=1)
    de = np.zeros_like(f)
    de[:, cols] = -softmax(used / T, axis=1)
    return e, de


def energy_reg_loss(batch: LogitBatch, cfg: Optional[LossConfig] = None) -> Tuple[float, Tuple[np.ndarray, np.ndarray]]:
    """
    Squared-hinge energy regularization:
    mean (max(0, E - m_in))^2 over seen rows + mean (max(0, m_out - E))^2 over Anomaly rows.
    Returns (loss, (grad_id_logits, grad_ood_logits)).
    """
    cfg = cfg or LossConfig()
    loss = 0.0
    grads = []
    for rows, margin, direction in ((batch.id_logits, cfg.m_in, 1.0), (batch.ood_logits, cfg.m_out, -1.0)):
        if rows.shape[0] == 0:
            grads.append(np.zeros_like(rows))
            continue
        e, de = _energy_rows(rows, cfg.T, batch.anomaly_column)
        hinge = np.maximum(0.0, direction * (e - margin))
        n = rows.shape[0]
        loss += float((hinge ** 2).sum() / n)
        grads.append((2.0 * direction * hinge / n)[:, None] * de)
    return loss, (grads[0], grads[1])


def supcon_ood_loss(batch: ContrastiveBatch, tau_c: float = 0.10) -> Tuple[float, np.ndarray]:
    """
    Outlier-aware supervised contrastive loss, summed over seen-class anchors.
    Anomaly elements only appear in denominators; anchors without a same-class
    partner contribute 0. Gradient is w.r.t. the raw embeddings.
    """
    if tau_c <= 0:
        raise InvalidInputError("tau_c must be positive")
    z = batch.embeddings
    norms = np.linalg.norm(z, axis=1)
    if (norms == 0).any():
        raise InvalidInputError("zero-norm embedding cannot be normalized")
    u = z / norms[:, None]
    labels = np.asarray(batch.labels)
    n = z.shape[0]

    sim = (u @ u.T) / tau_c
    np.fill_diagonal(sim, -np.inf)
    weights = np.zeros((n, n))
    loss = 0.0
    for i in range(n):
        if labels[i] == OUT_LABEL:
            continue
        positives = np.flatnonzero((labels == labels[i]) & (np.arange(n) != i))
        if positives.size == 0:
            continue
        log_z = logsumexp(sim[i])
        loss += float(log_z - sim[i, positives].mean())
        weights[i] = np.exp(sim[i] - log_z)
        weights[i, positives] -= 1.0 / positives.size
    grad_u = (weights @ u + weights.T @ u) / tau_c
    # chain through u = z / |z|
    grad_z = (grad_u - u * (u * grad_u).sum(axis=1, keepdims=True)) / norms[:, None]
    return loss, grad_z


def smooth_l1_box_loss(pred_residuals, target_residuals, beta: float = 1.0) -> Tuple[float, np.ndarray]:
    diff = np.asarray(pred_residuals, dtype=np.float64) - np.asarray(target_residuals, dtype=np.float64)
    absd = np.abs(diff)
    quadratic = absd < beta
    value = np.where(quadratic, 0.5 * diff ** 2 / beta, absd - 0.5 * beta)
    grad = np.where(quadratic, diff / beta, np.sign(diff))
    return float(value.sum()), grad


def total_loss(components: LossComponents, cfg: Optional[LossConfig] = None) -> float:
    cfg = cfg or LossConfig()
    return (
        components.L_cls
        + components.L_reg
        + components.L_obj
        + cfg.lambda_en * components.L_en
        + cfg.lambda_c * components.L_c
    )


def finite_diff_check(loss_handle: Callable[[np.ndarray], Tuple[float, np.ndarray]], inputs, epsilon: float = FD_EPSILON) -> float:
    """Max relative error between the analytic gradient and central differences."""
    x = np.array(inputs, dtype=np.float64)
    _, analytic = loss_handle(x.copy())
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[i] += epsilon
        minus[i] -= epsilon
        numeric = (loss_handle(plus.reshape(x.shape))[0] - loss_handle(minus.reshape(x.shape))[0]) / (2.0 * epsilon)
        err = abs(analytic[i] - numeric) / max(1e-8, abs(analytic[i]) + abs(numeric))
        worst = max(worst, err)
    return worst


def random_logit_batch(rng: np.random.Generator, cfg: LossConfig, n_id: int = 4, n_ood: int = 4, k: int = 3) -> LogitBatch:
    """Logit rows whose energies stay clear of the hinge kinks."""

    def draw(n, loc, margin):
        rows = []
        while len(rows) < n:
            row = rng.normal(loc, 2.0, size=k)
            if abs(energy(row, cfg.T) - margin) > 0.05:
                rows.append(row)
        return np.array(rows).reshape(n, k)

    return LogitBatch(id_logits=draw(n_id, 5.0, cfg.m_in), ood_logits=draw(n_ood, 2.0, cfg.m_out))


def random_contrastive_batch(rng: np.random.Generator, n: int = 6, d: int = 8) -> ContrastiveBatch:
    labels = [0, 0] + [int(v) for v in rng.choice([0, 1, OUT_LABEL], size=n - 2)]
    return ContrastiveBatch(embeddings=rng.normal(size=(n, d)), labels=labels)


def _away_from(values: np.ndarray, kink: float, gap: float = 0.05) -> np.ndarray:
    close = np.abs(np.abs(values) - kink) < gap
    return np.where(close, values + np.sign(values) * 2 * gap, values)


def run_losscheck(seed: int = 0, cfg: Optional[LossConfig] = None, epsilon: float = FD_EPSILON, tolerance: float = GRAD_TOLERANCE) -> LossCheckReport:
    """Gradient verification suite; every loss is checked on its own random stream."""
    cfg = cfg or LossConfig()
    results = []

    def record(name: str, errors):
        worst = float(max(errors)) if errors else 0.0
        results.append(GradCheckResult(name=name, instances=len(errors), max_rel_error=worst, passed=worst <= tolerance))

    rng = stream_rng(seed, "losscheck/focal")
    errors = []
    for _ in range(50):
        labels = rng.integers(0, 2, size=8)
        errors.append(finite_diff_check(lambda x: focal_loss(x, labels, cfg.alpha, cfg.gamma), rng.uniform(-4, 4, size=8), epsilon))
    record("focal", errors)

    rng = stream_rng(seed, "losscheck/classification_focal")
    errors = []
    for _ in range(20):
        labels = [int(v) for v in rng.integers(-1, 4, size=5)]
        errors.append(
            finite_diff_check(lambda x: classification_focal_loss(x, labels, cfg.alpha, cfg.gamma), rng.uniform(-4, 4, size=(5, 4)), epsilon)
        )
    record("classification_focal", errors)

    rng = stream_rng(seed, "losscheck/energy_reg")
    errors = []
    for _ in range(20):
        batch = random_logit_batch(rng, cfg)
        n_id = batch.id_logits.shape[0]

        def handle(x, n_id=n_id):
            loss, (g_id, g_ood) = energy_reg_loss(LogitBatch(id_logits=x[:n_id], ood_logits=x[n_id:]), cfg)
            return loss, np.vstack([g_id, g_ood])

        errors.append(finite_diff_check(handle, np.vstack([batch.id_logits, batch.ood_logits]), epsilon))
    record("energy_reg", errors)

    rng = stream_rng(seed, "losscheck/supcon_ood")
    errors = []
    for _ in range(20):
        batch = random_contrastive_batch(rng)
        errors.append(
            finite_diff_check(
                lambda x, labels=batch.labels: supcon_ood_loss(ContrastiveBatch(embeddings=x, labels=labels), cfg.tau_c),
                batch.embeddings,
                epsilon,
            )
        )
    record("supcon_ood", errors)

    rng = stream_rng(seed, "losscheck/smooth_l1")
    errors = []
    for _ in range(20):
        target = rng.normal(size=7)
        pred = target + _away_from(rng.normal(0.0, 1.5, size=7), 1.0)
        errors.append(finite_diff_check(lambda x, target=target: smooth_l1_box_loss(x, target), pred, epsilon))
    record("smooth_l1", errors)

    report = LossCheckReport(seed=seed, epsilon=epsilon, tolerance=tolerance, losses=results, passed=all(r.passed for r in results))
    if not report.passed:
        failed = ", ".join(r.name for r in results if not r.passed)
        logger.error(f"Gradient check failed for: {failed}")
    return report
