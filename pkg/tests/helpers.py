"""Shared test utilities: central finite-difference gradient checking."""

import torch


def finite_difference_gradient(fn, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central-difference gradient of scalar-valued ``fn`` w.r.t. ``x``.

    ``x`` must be float64 for the differences to be trustworthy.
    """
    assert x.dtype == torch.float64, "finite differences need double precision"
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            f_plus = float(fn(x))
            flat[i] = orig - eps
            f_minus = float(fn(x))
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def analytic_gradient(fn, x: torch.Tensor) -> torch.Tensor:
    x = x.detach().clone().requires_grad_(True)
    out = fn(x)
    out.backward()
    return x.grad.detach().clone()


def relative_gradient_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    """Max absolute deviation normalized by the largest gradient magnitude."""
    scale = max(analytic.abs().max().item(), numeric.abs().max().item(), 1e-12)
    return (analytic - numeric).abs().max().item() / scale


def gradient_check(fn, x: torch.Tensor, eps: float = 1e-6) -> float:
    """Relative error between autograd and central finite differences."""
    return relative_gradient_error(analytic_gradient(fn, x), finite_difference_gradient(fn, x, eps))
