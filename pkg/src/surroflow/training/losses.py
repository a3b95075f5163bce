"""Physics-aware losses and the early-stopping score."""

import torch
import torch.nn.functional as F

NEAR_ZERO_TAU = 1e-4


def pressure_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error; both arguments on the normalized pressure scale."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return F.mse_loss(pred, target)


def saturation_loss(pred_logits: torch.Tensor, target: torch.Tensor,
                    lambda_bce: float, tau: float = NEAR_ZERO_TAU) -> torch.Tensor:
    """MSE on the sigmoid-squashed prediction plus a weighted logit BCE
    against the plume-presence mask ``target > tau``."""
    if pred_logits.shape != target.shape:
        raise ValueError(
            f"shape mismatch {tuple(pred_logits.shape)} vs {tuple(target.shape)}")
    if float(target.min()) < 0.0 or float(target.max()) > 1.0:
        raise ValueError("saturation targets must lie in [0, 1]")
    mse = F.mse_loss(torch.sigmoid(pred_logits), target)
    mask = (target > tau).to(pred_logits.dtype)
    bce = F.binary_cross_entropy_with_logits(pred_logits, mask)
    return mse + lambda_bce * bce


def early_stop_score(train_loss: float, val_loss: float) -> float:
    """Plain sum; early stopping watches both fits at equal weight."""
    return train_loss + val_loss
