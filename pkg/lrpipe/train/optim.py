from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

__all__ = 'OptimizerState', 'adamw_step'

Parameters = List[Dict[str, np.ndarray]]


@dataclass
class OptimizerState:
    """
    AdamW hyperparameters, moments and step counter.
    The moments mirror the structure of the parameters: one dict of arrays per layer.
    """
    lr: float = 1e-3
    beta1: float = .9
    beta2: float = .999
    eps: float = 1e-8
    weight_decay: float = .01
    step: int = 0
    first: Parameters = field(default=None, repr=False)
    second: Parameters = field(default=None, repr=False)


def _zeros_like(params: Parameters) -> Parameters:
    return [{name: np.zeros_like(value) for name, value in group.items()} for group in params]


def adamw_step(params: Parameters, grads: Sequence[Dict[str, np.ndarray]], state: OptimizerState,
               lr: float = None) -> Tuple[Parameters, OptimizerState]:
    """
    One AdamW update with bias-corrected moments and decoupled weight decay.

    Weight decay only applies to matrices: biases are never decayed.
    ``lr`` overrides ``state.lr`` for this step. Returns new parameters and a new state,
    the inputs are left intact.
    """
    if len(params) != len(grads):
        raise ValueError(f'Got gradients for {len(grads)} groups, but {len(params)} groups of parameters.')
    if lr is None:
        lr = state.lr

    first = state.first if state.first is not None else _zeros_like(params)
    second = state.second if state.second is not None else _zeros_like(params)
    step = state.step + 1
    first_correction = 1 - state.beta1 ** step
    second_correction = 1 - state.beta2 ** step

    new_params, new_first, new_second = [], [], []
    for group, grad, m, v in zip(params, grads, first, second):
        if set(group) != set(grad):
            raise ValueError(f'Gradient names {sorted(grad)} do not match the parameters {sorted(group)}.')

        updated, updated_m, updated_v = {}, {}, {}
        for name, value in group.items():
            g = grad[name]
            if g.shape != value.shape:
                raise ValueError(f'Gradient of "{name}" has shape {g.shape}, {value.shape} expected.')

            updated_m[name] = state.beta1 * m[name] + (1 - state.beta1) * g
            updated_v[name] = state.beta2 * v[name] + (1 - state.beta2) * g * g
            if value.ndim == 2 and state.weight_decay:
                value = value * (1 - lr * state.weight_decay)

            m_hat = updated_m[name] / first_correction
            v_hat = updated_v[name] / second_correction
            updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)

        new_params.append(updated)
        new_first.append(updated_m)
        new_second.append(updated_v)

    new_state = OptimizerState(state.lr, state.beta1, state.beta2, state.eps, state.weight_decay,
                               step, new_first, new_second)
    return new_params, new_state
