from dataclasses import dataclass
from typing import Dict

import numpy as np

from model.params import Gradients, Parameters

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS

    @classmethod
    def zeros_like(cls, params: Parameters) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.groups()},
            v={name: np.zeros_like(arr) for name, arr in params.groups()},
        )

    def copy(self) -> "AdamState":
        # moments are mutated in place by adam_step
        return AdamState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            step=self.step,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )

    def to_arrays(self) -> Dict[str, np.ndarray]:
        out = {f"adam_m_{k}": a for k, a in self.m.items()}
        out.update({f"adam_v_{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], step: int) -> "AdamState":
        m = {k[len("adam_m_"):]: a for k, a in arrays.items() if k.startswith("adam_m_")}
        v = {k[len("adam_v_"):]: a for k, a in arrays.items() if k.startswith("adam_v_")}
        return cls(m=m, v=v, step=step)


def adam_step(params: Parameters, grads: Gradients, state: AdamState, lr: float) -> Parameters:
    """
    One bias-corrected Adam update:
        m = b1 m + (1 - b1) g
        v = b2 v + (1 - b2) g^2
        theta -= lr * m_hat / (sqrt(v_hat) + eps)
    Moments are updated in place; a new Parameters is returned.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t

    updated = {}
    for name, theta in params.groups():
        g = getattr(grads, name)
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {theta.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        updated[name] = theta - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return Parameters(**updated)
