import numpy as np

from common.errors import NumericError
from model.forward import Batch, ForwardCache
from model.params import Gradients, Parameters


def backward(batch: Batch, cache: ForwardCache, params: Parameters) -> Gradients:
    """
    Reverse pass of the total loss held in `cache`.

    The conv edge factors a_uc were built as constants, so A_u / A_c only
    collect gradient from the restriction losses and the regularizer.
    Groups excluded by the ablation flags come back as zeros.
    """
    total = cache.total
    if not np.isfinite(total.data):
        raise NumericError(f"non-finite loss {float(total.data)} at batch {batch.index}")

    total.backward()

    grads = {}
    for name, arr in params.groups():
        t = cache.tensors[name]
        g = t.grad if t.grad is not None else np.zeros_like(arr)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter group {name} at batch {batch.index}")
        grads[name] = g
    return Gradients(**grads)
