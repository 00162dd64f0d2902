"""
Gaussian correlation over transformed inputs s = [x, z]:

    r(s, s') = exp{-(x - x')^T Phi (x - x') - (z - z')^T Phi_z (z - z')}

with Phi = diag(phi), Phi_z = diag(phi_z). Only this kernel is provided.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict

import autograd.numpy as anp
import numpy as np
from autograd.tracer import getval

from src.utils.errors import DimensionMismatch


PARAM_TRANSFORM = "log"


@dataclass(frozen=True)
class KernelParams:
    """
    Kernel hyperparameters held as unconstrained logs (`transform` records the map).
    `beta` has one entry per output the parameters serve; `log_noise` is the Gaussian
    likelihood noise variance sigma_n^2 on the log scale.
    """

    beta: np.ndarray
    log_sigma2: float
    log_phi: np.ndarray
    log_phi_z: np.ndarray
    log_noise: float = float(np.log(1e-2))
    transform: str = field(default=PARAM_TRANSFORM)

    @staticmethod
    def create(
        p: int,
        zdim: int,
        beta: Any = 0.0,
        sigma2: float = 1.0,
        phi: Any = None,
        phi_z: Any = None,
        noise: float = 1e-2,
    ) -> "KernelParams":
        phi = np.ones(p) if phi is None else np.broadcast_to(np.asarray(phi, dtype=float), (p,))
        phi_z = np.ones(zdim) if phi_z is None else np.broadcast_to(np.asarray(phi_z, dtype=float), (zdim,))
        with np.errstate(divide="ignore"):
            return KernelParams(
                beta=np.atleast_1d(np.asarray(beta, dtype=float)).copy(),
                log_sigma2=float(np.log(sigma2)),
                log_phi=np.log(phi),
                log_phi_z=np.log(phi_z),
                log_noise=float(np.log(noise)),
            )

    @property
    def sigma2(self) -> float:
        return float(np.exp(self.log_sigma2))

    @property
    def phi(self) -> np.ndarray:
        return np.exp(self.log_phi)

    @property
    def phi_z(self) -> np.ndarray:
        return np.exp(self.log_phi_z)

    @property
    def noise(self) -> float:
        return float(np.exp(self.log_noise))

    @property
    def width(self) -> int:
        return int(len(self.log_phi) + len(self.log_phi_z))

    def weights(self) -> np.ndarray:
        return kernel_weights(self.log_phi, self.log_phi_z)

    def with_beta(self, beta: Any) -> "KernelParams":
        return replace(self, beta=np.atleast_1d(np.asarray(beta, dtype=float)).copy())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "beta": np.asarray(self.beta).tolist(),
            "log_sigma2": float(self.log_sigma2),
            "log_phi": np.asarray(self.log_phi).tolist(),
            "log_phi_z": np.asarray(self.log_phi_z).tolist(),
            "log_noise": float(self.log_noise),
            "transform": self.transform,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "KernelParams":
        if data.get("transform", PARAM_TRANSFORM) != PARAM_TRANSFORM:
            raise ValueError(f"unsupported parameter transform {data.get('transform')!r}")
        return KernelParams(
            beta=np.asarray(data["beta"], dtype=float).reshape(-1),
            log_sigma2=float(data["log_sigma2"]),
            log_phi=np.asarray(data["log_phi"], dtype=float).reshape(-1),
            log_phi_z=np.asarray(data["log_phi_z"], dtype=float).reshape(-1),
            log_noise=float(data["log_noise"]),
        )


def kernel_weights(log_phi: Any, log_phi_z: Any) -> Any:
    """Diagonal of blockdiag(Phi, Phi_z) over the transformed coordinates."""
    return anp.exp(anp.concatenate([anp.reshape(log_phi, (-1,)), anp.reshape(log_phi_z, (-1,))]))


def correlation(A: Any, B: Any, weights: Any) -> Any:
    """Gaussian correlation matrix between rows of A and rows of B."""
    a_width = np.shape(getval(A))[1]
    b_width = np.shape(getval(B))[1]
    w_width = np.shape(getval(weights))[0]
    if a_width != b_width or a_width != w_width:
        raise DimensionMismatch(f"widths differ: A={a_width}, B={b_width}, weights={w_width}")
    diff = A[:, None, :] - B[None, :, :]
    return anp.exp(-anp.sum(weights * diff**2, axis=2))


def gaussian_correlation(s: Any, s_prime: Any, params: KernelParams) -> float:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    s_prime = np.atleast_1d(np.asarray(s_prime, dtype=float))
    if s.shape != s_prime.shape or s.shape[0] != params.width:
        raise DimensionMismatch(f"point widths {s.shape[0]}, {s_prime.shape[0]}; kernel width {params.width}")
    return float(correlation(s[None, :], s_prime[None, :], params.weights())[0, 0])


def cross_covariance(A: Any, B: Any, params: KernelParams) -> np.ndarray:
    return params.sigma2 * correlation(np.asarray(A, dtype=float), np.asarray(B, dtype=float), params.weights())
