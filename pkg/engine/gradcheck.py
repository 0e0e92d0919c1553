"""
Central finite differences against the analytic reverse pass.

The analytic side treats the conv edge factors a_uc as constants, so the
numeric side evaluates a loss variant where those factors are computed from
a frozen copy of A_u / A_c while every other use of A follows the
perturbation. With detach_debias=False both sides use the full gradient.
"""

from typing import Dict, Iterable, Optional

import numpy as np

from engine.backward import backward
from model.forward import Batch, ModelInputs, forward
from model.params import GROUPS, Gradients, HyperParams, Parameters

STEP = 1e-5
# entries with |grad| below this are compared absolutely
ABS_FLOOR = 1e-3


def analytic_gradient(
    params: Parameters,
    hp: HyperParams,
    inputs: ModelInputs,
    batch: Batch,
    detach_debias: bool = True,
) -> Gradients:
    cache = forward(params, hp, inputs, batch, detach_debias=detach_debias)
    return backward(batch, cache, params)


def numeric_gradient(
    params: Parameters,
    hp: HyperParams,
    inputs: ModelInputs,
    batch: Batch,
    group: str,
    h: float = STEP,
    detach_debias: bool = True,
) -> np.ndarray:
    frozen = (params.A_u.copy(), params.A_c.copy()) if detach_debias else None

    def loss_at(p: Parameters) -> float:
        cache = forward(
            p, hp, inputs, batch, frozen_debias=frozen, detach_debias=detach_debias, requires_grad=False
        )
        return float(cache.total.data)

    base = getattr(params, group)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        probe = params.copy()
        arr = getattr(probe, group)
        arr[idx] = base[idx] + h
        plus = loss_at(probe)
        arr[idx] = base[idx] - h
        minus = loss_at(probe)
        grad[idx] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(
    params: Parameters,
    hp: HyperParams,
    inputs: ModelInputs,
    batch: Batch,
    groups: Optional[Iterable[str]] = None,
    h: float = STEP,
    detach_debias: bool = True,
) -> Dict[str, float]:
    """Worst relative error per parameter group."""
    analytic = analytic_gradient(params, hp, inputs, batch, detach_debias)
    worst = {}
    for group in groups or GROUPS:
        numeric = numeric_gradient(params, hp, inputs, batch, group, h, detach_debias)
        err = relative_error(getattr(analytic, group), numeric)
        worst[group] = float(err.max()) if err.size else 0.0
    return worst


def conv_path_component(
    params: Parameters,
    hp: HyperParams,
    inputs: ModelInputs,
    batch: Batch,
) -> Dict[str, np.ndarray]:
    """A_u / A_c gradient that only the full-gradient variant sees (through the convolution)."""
    full = analytic_gradient(params, hp, inputs, batch, detach_debias=False)
    detached = analytic_gradient(params, hp, inputs, batch, detach_debias=True)
    return {g: getattr(full, g) - getattr(detached, g) for g in ("A_u", "A_c")}
