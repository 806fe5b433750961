import numpy as np

from tensor.errors import ContractError
from tensor.tensor import Tensor


def _values(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def depth_metrics(pred, gt, mask=None):
    """
    Erreurs de profondeur sur les pixels du masque.

    Returns:
        dict: abs_rel = mean|p−g|/g, sq_rel = mean (p−g)²/g, rmse = sqrt(mean (p−g)²)

    Raises:
        ContractError: masque vide ou profondeur de référence non positive
    """
    pred, gt = _values(pred), _values(gt)
    mask = np.ones(gt.shape, dtype=bool) if mask is None else np.broadcast_to(np.asarray(mask, dtype=bool), gt.shape)
    if not mask.any():
        raise ContractError("depth_metrics: masque vide")
    p, g = pred[mask], gt[mask]
    if np.any(g <= 0):
        raise ContractError("depth_metrics: profondeur de référence non positive sur le masque")
    diff = p - g
    return {
        "abs_rel": float(np.mean(np.abs(diff) / g)),
        "sq_rel": float(np.mean(diff ** 2 / g)),
        "rmse": float(np.sqrt(np.mean(diff ** 2))),
    }
