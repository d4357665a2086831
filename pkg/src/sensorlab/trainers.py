"""Damped Gauss-Newton training: Levenberg-Marquardt and Bayesian regularization.

Both trainers share the inner step: solve the damped normal equations for a
parameter update, accept it only if the objective decreased, and move the
damping factor mu down on success / up on failure. They differ in the
objective and stopping rules:

* LM minimizes the training sum of squared errors and stops early when the
  validation error fails to improve for `max_fail` consecutive epochs
  (returning the parameters from the best validation epoch).

* BR minimizes F = beta * E_D + alpha * E_W, where E_D is the training SSE
  and E_W the sum of squared parameters. After every accepted step the
  effective-parameter count gamma = P - 2 alpha tr(H^-1) is re-estimated
  from the Gauss-Newton Hessian H = 2 beta J'J + 2 alpha I, and then
  alpha = gamma / (2 E_W), beta = (N_train - gamma) / (2 E_D). Validation
  data is split off but never used for stopping; BR stops when gamma
  stabilizes (|d gamma| < 1e-3 for five consecutive epochs) or on the
  shared criteria.

Both are strictly deterministic: same inputs, bit-identical results.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import Dataset, SplitIndices
from .netcore import MlpParams, flatten, unflatten

MU_FLOOR = 1e-20           # keeps mu from underflowing to an unrecoverable 0
GAMMA_STABLE_TOL = 1e-3
GAMMA_STABLE_EPOCHS = 5
POSITIVE_FLOOR = 1e-12     # clamp for alpha/beta if an update turns non-positive


class TrainingAbort(RuntimeError):
    """Numeric failure during training (non-finite loss); maps to CLI exit code 4."""


class TrainerKind(enum.Enum):
    LM = "LM"
    BR = "BR"


class StopReason(enum.Enum):
    MAX_EPOCHS = "max_epochs"
    VAL_PATIENCE = "val_patience"
    MIN_GRAD = "min_grad"
    MU_MAX = "mu_max"
    CONVERGED = "converged"


@dataclass(frozen=True)
class TrainOptions:
    max_epochs: int = 1000
    mu0: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    max_fail: int = 6        # validation patience, LM only
    min_grad: float = 1e-7

    def __post_init__(self):
        for name in ("max_epochs", "mu0", "mu_inc", "mu_dec", "mu_max", "max_fail", "min_grad"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"TrainOptions.{name} must be positive and finite")
        if not (self.mu_dec < 1.0 < self.mu_inc):
            raise ValueError("TrainOptions requires mu_dec < 1 < mu_inc")


@dataclass(frozen=True)
class EpochRecord:
    train_sse: float
    val_sse: float
    mu: float
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None


@dataclass(frozen=True)
class TrainedModel:
    params: MlpParams
    epochs_run: int
    stop_reason: StopReason
    history: tuple[EpochRecord, ...]
    clamp_events: int = 0  # BR alpha/beta updates that had to be floored positive

    @property
    def final_gamma(self) -> float | None:
        return self.history[-1].gamma if self.history else None


def train(kind: TrainerKind, init: MlpParams, data: Dataset, split: SplitIndices,
          opts: TrainOptions) -> TrainedModel:
    if kind is TrainerKind.LM:
        return train_lm(init, data, split, opts)
    if kind is TrainerKind.BR:
        return train_br(init, data, split, opts)
    raise ValueError(f"unknown trainer kind {kind!r}")


def _subsets(init: MlpParams, data: Dataset, split: SplitIndices):
    if init.d != data.d:
        raise ValueError(f"network expects {init.d} inputs, dataset has {data.d}")
    tr = np.asarray(split.train, dtype=int)
    va = np.asarray(split.val, dtype=int)
    return (data.inputs[tr], data.targets[tr], data.inputs[va], data.targets[va])


def _forward_flat(theta: np.ndarray, d: int, h: int, inputs: np.ndarray) -> np.ndarray:
    k = h * d
    iw = theta[:k].reshape(h, d)
    hidden = np.tanh(inputs @ iw.T + theta[k:k + h])
    return hidden @ theta[k + h:k + 2 * h] + theta[-1]


def _error_and_jacobian(theta, d, h, inputs, targets):
    k = h * d
    iw = theta[:k].reshape(h, d)
    hidden = np.tanh(inputs @ iw.T + theta[k:k + h])
    preds = hidden @ theta[k + h:k + 2 * h] + theta[-1]
    gate = (1.0 - hidden ** 2) * theta[k + h:k + 2 * h]
    n = inputs.shape[0]
    jac = np.hstack([
        np.einsum("nj,nk->njk", gate, inputs).reshape(n, k),
        gate,
        hidden,
        np.ones((n, 1)),
    ])
    return preds - targets, jac


def _solve_damped(a_matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """SPD solve of a_matrix x = rhs; None if the factorization fails numerically."""
    try:
        factor = scipy.linalg.cho_factor(a_matrix, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        return None


def _sse(err: np.ndarray) -> float:
    return float(np.dot(err, err))


def train_lm(init: MlpParams, data: Dataset, split: SplitIndices,
             opts: TrainOptions) -> TrainedModel:
    """Levenberg-Marquardt backpropagation on the training subset.

    Per epoch: build J and e at the current parameters, then raise mu until
    the step from (J'J + mu I) dtheta = -J'e lowers the training SSE. The
    returned parameters are those of the best validation epoch when stopping
    on validation patience, the current ones otherwise.
    """
    x_tr, t_tr, x_va, t_va = _subsets(init, data, split)
    d, h = init.d, init.h
    theta = flatten(init)
    mu = opts.mu0

    val_err = _forward_flat(theta, d, h, x_va) - t_va
    best_val = _sse(val_err)
    best_theta = theta.copy()
    fails = 0

    history: list[EpochRecord] = []
    stop = StopReason.MAX_EPOCHS
    identity = np.eye(theta.size)

    for _epoch in range(1, opts.max_epochs + 1):
        err, jac = _error_and_jacobian(theta, d, h, x_tr, t_tr)
        if not (np.isfinite(err).all() and np.isfinite(jac).all()):
            raise TrainingAbort(f"non-finite loss at epoch {_epoch} (LM)")
        sse = _sse(err)

        if sse == 0.0:
            history.append(_lm_record(theta, d, h, x_va, t_va, sse, mu))
            stop = StopReason.CONVERGED
            break
        jte = jac.T @ err
        grad_norm = 2.0 * math.sqrt(float(np.dot(jte, jte)))
        if grad_norm < opts.min_grad:
            history.append(_lm_record(theta, d, h, x_va, t_va, sse, mu))
            stop = StopReason.MIN_GRAD
            break

        jtj = jac.T @ jac
        accepted = False
        while True:
            step = _solve_damped(jtj + mu * identity, -jte)
            if step is not None:
                candidate = theta + step
                cand_err = _forward_flat(candidate, d, h, x_tr) - t_tr
                cand_sse = _sse(cand_err)
                if np.isfinite(cand_sse) and cand_sse < sse:
                    theta = candidate
                    sse = cand_sse
                    mu = max(mu * opts.mu_dec, MU_FLOOR)
                    accepted = True
                    break
            mu = mu * opts.mu_inc
            if mu > opts.mu_max:
                break
        if not accepted:
            history.append(_lm_record(theta, d, h, x_va, t_va, sse, mu))
            stop = StopReason.MU_MAX
            break

        val_sse = _sse(_forward_flat(theta, d, h, x_va) - t_va)
        history.append(EpochRecord(train_sse=sse, val_sse=val_sse, mu=mu))

        if val_sse < best_val:
            best_val = val_sse
            best_theta = theta.copy()
            fails = 0
        else:
            fails += 1
            if fails >= opts.max_fail:
                stop = StopReason.VAL_PATIENCE
                break

    final_theta = best_theta if stop is StopReason.VAL_PATIENCE else theta
    return TrainedModel(params=unflatten(final_theta, d, h),
                        epochs_run=len(history),
                        stop_reason=stop,
                        history=tuple(history))


def _lm_record(theta, d, h, x_va, t_va, sse, mu) -> EpochRecord:
    val_sse = _sse(_forward_flat(theta, d, h, x_va) - t_va)
    return EpochRecord(train_sse=sse, val_sse=val_sse, mu=mu)


def train_br(init: MlpParams, data: Dataset, split: SplitIndices,
             opts: TrainOptions) -> TrainedModel:
    """Bayesian-regularization backpropagation (LM steps on F = beta E_D + alpha E_W)."""
    x_tr, t_tr, x_va, t_va = _subsets(init, data, split)
    d, h = init.d, init.h
    theta = flatten(init)
    mu = opts.mu0
    n_params = theta.size
    n_train = x_tr.shape[0]

    # Reference-style initialization: start from gamma = P.
    err0 = _forward_flat(theta, d, h, x_tr) - t_tr
    e_data = _sse(err0)
    e_weights = float(np.dot(theta, theta))
    gamma = float(n_params)
    alpha = gamma / (2.0 * e_weights) if e_weights > 0.0 else 1.0
    beta = (n_train - gamma) / (2.0 * e_data) if e_data > 0.0 else 1.0
    if beta <= 0.0:
        beta = 1.0

    history: list[EpochRecord] = []
    stop = StopReason.MAX_EPOCHS
    identity = np.eye(n_params)
    stable_epochs = 0
    clamp_events = 0

    for _epoch in range(1, opts.max_epochs + 1):
        err, jac = _error_and_jacobian(theta, d, h, x_tr, t_tr)
        if not (np.isfinite(err).all() and np.isfinite(jac).all()):
            raise TrainingAbort(f"non-finite loss at epoch {_epoch} (BR)")
        e_data = _sse(err)
        e_weights = float(np.dot(theta, theta))
        objective = beta * e_data + alpha * e_weights

        grad = 2.0 * beta * (jac.T @ err) + 2.0 * alpha * theta
        if math.sqrt(float(np.dot(grad, grad))) < opts.min_grad:
            history.append(_br_record(theta, d, h, x_va, t_va, e_data, mu, alpha, beta, gamma))
            stop = StopReason.MIN_GRAD
            break

        jtj = jac.T @ jac
        hessian = 2.0 * beta * jtj + 2.0 * alpha * identity
        accepted = False
        while True:
            step = _solve_damped(hessian + mu * identity, -grad)
            if step is not None:
                candidate = theta + step
                cand_err = _forward_flat(candidate, d, h, x_tr) - t_tr
                cand_ed = _sse(cand_err)
                cand_ew = float(np.dot(candidate, candidate))
                cand_obj = beta * cand_ed + alpha * cand_ew
                if np.isfinite(cand_obj) and cand_obj < objective:
                    theta = candidate
                    e_data, e_weights = cand_ed, cand_ew
                    mu = max(mu * opts.mu_dec, MU_FLOOR)
                    accepted = True
                    break
            mu = mu * opts.mu_inc
            if mu > opts.mu_max:
                break
        if not accepted:
            history.append(_br_record(theta, d, h, x_va, t_va, e_data, mu, alpha, beta, gamma))
            stop = StopReason.MU_MAX
            break

        # Re-estimate the regularization from the Gauss-Newton Hessian at this
        # epoch's linearization point and the accepted parameters.
        gamma_prev = gamma
        gamma = _effective_params(jtj, alpha, beta, n_params)
        alpha = gamma / (2.0 * e_weights) if e_weights > 0.0 else 1.0
        beta = (n_train - gamma) / (2.0 * e_data) if e_data > 0.0 else 1.0
        if alpha <= 0.0:
            alpha = POSITIVE_FLOOR
            clamp_events += 1
        if beta <= 0.0:
            beta = POSITIVE_FLOOR
            clamp_events += 1

        history.append(_br_record(theta, d, h, x_va, t_va, e_data, mu, alpha, beta, gamma))

        if abs(gamma - gamma_prev) < GAMMA_STABLE_TOL:
            stable_epochs += 1
            if stable_epochs >= GAMMA_STABLE_EPOCHS:
                stop = StopReason.CONVERGED
                break
        else:
            stable_epochs = 0

    return TrainedModel(params=unflatten(theta, d, h),
                        epochs_run=len(history),
                        stop_reason=stop,
                        history=tuple(history),
                        clamp_events=clamp_events)


def _effective_params(jtj: np.ndarray, alpha: float, beta: float, n_params: int) -> float:
    """gamma = P - 2 alpha tr(H^-1) with H = 2 beta J'J + 2 alpha I; clamped to (0, P]."""
    hessian = 2.0 * beta * jtj + 2.0 * alpha * np.eye(n_params)
    try:
        factor = scipy.linalg.cho_factor(hessian, lower=True, check_finite=False)
        inverse = scipy.linalg.cho_solve(factor, np.eye(n_params), check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        inverse = np.linalg.inv(hessian)
    gamma = n_params - 2.0 * alpha * float(np.trace(inverse))
    return min(max(gamma, POSITIVE_FLOOR), float(n_params))


def _br_record(theta, d, h, x_va, t_va, e_data, mu, alpha, beta, gamma) -> EpochRecord:
    val_sse = _sse(_forward_flat(theta, d, h, x_va) - t_va)
    return EpochRecord(train_sse=e_data, val_sse=val_sse, mu=mu,
                       alpha=alpha, beta=beta, gamma=gamma)


def history_to_csv(model: TrainedModel, path) -> None:
    """Export the per-epoch history (BR columns stay blank for LM runs)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_sse", "val_sse", "mu", "alpha", "beta", "gamma"])
        for epoch, rec in enumerate(model.history, start=1):
            writer.writerow([
                epoch, repr(rec.train_sse), repr(rec.val_sse), repr(rec.mu),
                "" if rec.alpha is None else repr(rec.alpha),
                "" if rec.beta is None else repr(rec.beta),
                "" if rec.gamma is None else repr(rec.gamma),
            ])
