"""
Gradient engine and parameter updates: reverse-mode gradients (autograd), Adam for
hyperparameters, and natural-gradient steps for the variational Gaussian (mu, Sigma).
"""

from typing import Any, Callable, Dict, Iterable, Tuple

import numpy as np
from autograd import value_and_grad
from autograd.misc import flatten
from scipy.linalg import cho_solve

from src.gp.numerics import symmetrize
from src.gp.svgp import VariationalGaussian
from src.utils.errors import NonFinite, StepRejected
from src.utils.logger import get_logger


Params = Dict[str, Any]

_log = get_logger("optimizers")


def value_and_gradient(loss_fn: Callable[[Params], Any], params: Params) -> Tuple[float, Params]:
    """Loss value and its gradient for every group in `params`; NonFinite names the bad group."""
    value, grads = value_and_grad(loss_fn)(params)
    if not np.isfinite(value):
        raise NonFinite(f"objective evaluated to {value}", group="objective")
    for key, g in grads.items():
        flat, _ = flatten(g)
        if not np.all(np.isfinite(flat)):
            raise NonFinite("gradient has NaN/Inf entries", group=key)
    return float(value), grads


def gradient(loss_fn: Callable[[Params], Any], params: Params) -> Params:
    return value_and_gradient(loss_fn, params)[1]


class Adam:
    """
    Adam on a dict of parameter groups. Moments and step counts are kept per group, so a
    group left out of `step` (e.g. frozen latent vectors) stays bit-identical.
    """

    def __init__(self, step_size: float = 1e-2, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if step_size <= 0:
            raise ValueError("Adam step size must be positive")
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}
        self._t: Dict[str, int] = {}

    def step(self, params: Params, grads: Params, keys: Iterable[str]) -> Params:
        """One descent step on `keys`; other groups are passed through untouched."""
        out = dict(params)
        for key in keys:
            flat_p, unflatten = flatten(params[key])
            flat_g, _ = flatten(grads[key])
            if flat_p.size == 0:
                continue
            m = self._m.get(key, np.zeros_like(flat_p))
            v = self._v.get(key, np.zeros_like(flat_p))
            t = self._t.get(key, 0) + 1
            m = self.beta1 * m + (1.0 - self.beta1) * flat_g
            v = self.beta2 * v + (1.0 - self.beta2) * flat_g**2
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            self._m[key], self._v[key], self._t[key] = m, v, t
            out[key] = unflatten(flat_p - self.step_size * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def natgrad_step(
    varstate: VariationalGaussian,
    grad_mu: np.ndarray,
    grad_sigma: np.ndarray,
    gamma: float,
    max_halvings: int = 10,
) -> VariationalGaussian:
    """
    One natural-gradient ascent step for q = N(mu, Sigma), given the gradient of the ELBO with
    respect to mu and Sigma. The step is taken in natural coordinates
    theta1 = Sigma^{-1} mu, theta2 = -Sigma^{-1}/2, where the natural gradient equals the
    ordinary gradient in expectation coordinates (mu, Sigma + mu mu^T). The step is halved
    while the updated precision is not positive definite.
    """
    if gamma == 0:
        return varstate
    mu = np.asarray(varstate.mu, dtype=float)
    lower = np.asarray(varstate.sigma_lower, dtype=float)
    eye = np.eye(len(mu))
    g_sigma = symmetrize(np.asarray(grad_sigma, dtype=float))
    d_eta1 = np.asarray(grad_mu, dtype=float) - 2.0 * g_sigma @ mu
    d_eta2 = g_sigma

    precision = cho_solve((lower, True), eye)
    theta1 = precision @ mu
    theta2 = -0.5 * symmetrize(precision)

    step = float(gamma)
    for attempt in range(max_halvings + 1):
        new_precision = symmetrize(-2.0 * (theta2 + step * d_eta2))
        try:
            prec_lower = np.linalg.cholesky(new_precision)
            new_sigma = symmetrize(cho_solve((prec_lower, True), eye))
            new_lower = np.linalg.cholesky(new_sigma)
        except np.linalg.LinAlgError:
            _log.debug(f"natural-gradient step {step:.3e} leaves Sigma indefinite; halving")
            step *= 0.5
            continue
        if attempt:
            _log.warning(f"natural-gradient step halved {attempt} time(s) to {step:.3e}")
        new_mu = cho_solve((prec_lower, True), theta1 + step * d_eta1)
        return VariationalGaussian(mu=new_mu, sigma_lower=new_lower)
    raise StepRejected(f"natural-gradient step rejected after {max_halvings} halvings (gamma={gamma})")
