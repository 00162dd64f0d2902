"""
Sparse variational GP over the transformed input space (SV-LVGP).

q(G_I) = N(mu, Sigma) over the zero-mean residual at inducing locations S_I; the ELBO under a
Gaussian likelihood is

    ELBO = (n / n_b) * sum_i [ln N(y_i; beta + a_i^T mu, sigma_n^2) - (a_i^T Sigma a_i + b_ii) / (2 sigma_n^2)] - KL

with A = K_XI K_II^{-1} (rows a_i) and b_ii the diagonal of K_XX - K_XI K_II^{-1} K_IX.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import autograd.numpy as anp
import numpy as np

from src.gp.kernels import KernelParams, correlation, kernel_weights
from src.gp.latent_map import Dataset, LatentMap, MixedInputs, MixedSchema, Normalization, encode_arrays
from src.gp.numerics import (
    CholFactor,
    chol_solve,
    cholesky_with_jitter,
    logdet,
    softplus,
    softplus_inverse,
    solve_lower,
)
from src.gp.prediction import Prediction
from src.utils.errors import DimensionMismatch
from src.utils.logger import get_logger


PREDICT_CHUNK = 2048
DEFAULT_JITTER = 1e-6

_log = get_logger("svgp")


@dataclass
class InducingSet:
    locations: np.ndarray  # (n_I, p + q*g)

    def __post_init__(self) -> None:
        self.locations = np.asarray(self.locations, dtype=float)
        if self.locations.ndim != 2 or self.locations.shape[0] < 1:
            raise ValueError("inducing set needs at least one location")

    @property
    def size(self) -> int:
        return int(self.locations.shape[0])

    @property
    def width(self) -> int:
        return int(self.locations.shape[1])


@dataclass
class VariationalGaussian:
    """q = N(mu, L L^T); L lower-triangular with positive diagonal."""

    mu: np.ndarray
    sigma_lower: np.ndarray

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        self.sigma_lower = np.tril(np.asarray(self.sigma_lower, dtype=float))
        n = len(self.mu)
        if self.sigma_lower.shape != (n, n):
            raise DimensionMismatch(f"sigma_lower shape {self.sigma_lower.shape} does not match mu of length {n}")
        if not np.all(np.diag(self.sigma_lower) > 0):
            raise ValueError("sigma_lower must have a strictly positive diagonal")

    @property
    def covariance(self) -> np.ndarray:
        return self.sigma_lower @ self.sigma_lower.T

    def to_raw(self) -> np.ndarray:
        """Unconstrained form: strict lower part as is, diagonal through inverse softplus."""
        raw = np.tril(self.sigma_lower, -1)
        raw[np.diag_indices_from(raw)] = softplus_inverse(np.diag(self.sigma_lower))
        return raw

    @staticmethod
    def from_raw(mu: np.ndarray, raw: np.ndarray) -> "VariationalGaussian":
        return VariationalGaussian(mu=np.asarray(mu), sigma_lower=np.asarray(lower_from_raw(np.asarray(raw))))

    @staticmethod
    def prior(K_II_chol: CholFactor) -> "VariationalGaussian":
        lower = np.asarray(K_II_chol.lower)
        return VariationalGaussian(mu=np.zeros(lower.shape[0]), sigma_lower=lower.copy())


def lower_from_raw(raw: Any) -> Any:
    return anp.tril(raw, -1) + anp.diag(softplus(anp.diag(raw)))


def covariance_from_raw(raw: Any) -> Any:
    lower = lower_from_raw(raw)
    return anp.dot(lower, anp.transpose(lower))


@dataclass
class GramBundle:
    K_II: Any
    chol: CholFactor
    K_IX: Any
    A: Any  # (n_b, n_I) = (K_II^{-1} K_IX)^T
    b_diag: Any  # (n_b,), floored at 0
    V: Any  # L^{-1} K_IX


def gram_bundle(S_batch: Any, S_I: Any, sigma2: Any, weights: Any, jitter: float) -> GramBundle:
    K_II = sigma2 * correlation(S_I, S_I, weights)
    chol = cholesky_with_jitter(K_II, jitter)
    K_IX = sigma2 * correlation(S_I, S_batch, weights)
    V = solve_lower(chol, K_IX)
    A = anp.transpose(chol_solve(chol, K_IX))
    b_diag = anp.maximum(sigma2 - anp.sum(V**2, axis=0), 0.0)
    return GramBundle(K_II=K_II, chol=chol, K_IX=K_IX, A=A, b_diag=b_diag, V=V)


def kl_divergence(mu: Any, Sigma: Any, K_II_chol: CholFactor) -> Any:
    """KL(N(mu, Sigma) || N(0, K_II))."""
    n_I = np.shape(mu)[0]
    if n_I != K_II_chol.order:
        raise DimensionMismatch(f"variational size {n_I} != inducing count {K_II_chol.order}")
    trace_term = anp.trace(chol_solve(K_II_chol, Sigma))
    quad_term = anp.dot(mu, chol_solve(K_II_chol, mu))
    logdet_sigma = anp.linalg.slogdet(Sigma)[1]
    return 0.5 * (logdet(K_II_chol) - logdet_sigma - n_I + trace_term + quad_term)


def kl_term(varstate: VariationalGaussian, K_II_chol: CholFactor) -> float:
    return float(kl_divergence(varstate.mu, varstate.covariance, K_II_chol))


def expected_log_density(y: Any, mean: Any, var: Any, noise: Any) -> Any:
    """E_q[ln N(y; f, noise)] for f ~ N(mean, var)."""
    return -0.5 * anp.log(2.0 * np.pi * noise) - 0.5 * ((y - mean) ** 2 + var) / noise


@dataclass
class ElboTerms:
    elbo: Any
    lt: Any
    kl: Any

    def values(self) -> "ElboTerms":
        from autograd.tracer import getval

        return ElboTerms(float(getval(self.elbo)), float(getval(self.lt)), float(getval(self.kl)))


def elbo_terms(
    S_batch: Any,
    y: Any,
    S_I: Any,
    mu: Any,
    Sigma: Any,
    beta: Any,
    sigma2: Any,
    weights: Any,
    noise: Any,
    jitter: float,
    n_total: int,
) -> ElboTerms:
    n_b = np.shape(S_batch)[0]
    if n_b < 1:
        raise ValueError("ELBO batch must be nonempty")
    bundle = gram_bundle(S_batch, S_I, sigma2, weights, jitter)
    kl = kl_divergence(mu, Sigma, bundle.chol)
    mean = beta + anp.dot(bundle.A, mu)
    var = anp.sum(anp.dot(bundle.A, Sigma) * bundle.A, axis=1) + bundle.b_diag
    lt = (float(n_total) / n_b) * anp.sum(expected_log_density(y, mean, var, noise))
    return ElboTerms(elbo=lt - kl, lt=lt, kl=kl)


def params_elbo(params: Dict[str, Any], x: np.ndarray, t: np.ndarray, y: np.ndarray, n_total: int, jitter: float) -> ElboTerms:
    """ELBO from a parameter dict; the variational covariance is read from `Sigma` or built from raw `sigma_lower`."""
    S = encode_arrays(x, t, params["z"], 0)
    Sigma = params["Sigma"][0] if "Sigma" in params else covariance_from_raw(params["sigma_lower"][0])
    return elbo_terms(
        S,
        y,
        params["inducing"][0],
        params["mu"][0],
        Sigma,
        params["beta"],
        anp.exp(params["log_sigma2"]),
        kernel_weights(params["log_phi"], params["log_phi_z"]),
        anp.exp(params["log_noise"]),
        jitter,
        n_total,
    )


@dataclass
class SVModel:
    params: KernelParams
    latent: LatentMap
    inducing: InducingSet
    varstate: VariationalGaussian
    schema: MixedSchema
    normalization: Normalization
    jitter: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        width = self.schema.encoded_width(self.latent.g)
        if self.inducing.width != width or self.params.width != width:
            raise DimensionMismatch(
                f"inducing width {self.inducing.width}, kernel width {self.params.width}, expected {width}"
            )
        if len(self.varstate.mu) != self.inducing.size:
            raise DimensionMismatch(f"variational size {len(self.varstate.mu)} != n_I {self.inducing.size}")
        if self.inducing.size > 0 and self.latent.copies != 1:
            raise DimensionMismatch("single-output sparse model uses exactly one latent copy")

    @property
    def n_outputs(self) -> int:
        return 1

    def encode(self, inputs: MixedInputs) -> np.ndarray:
        return self.latent.encode_batch(inputs, self.schema)

    def to_params(self, variational: str = "sigma_lower") -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "beta": np.asarray(self.params.beta, dtype=float).copy(),
            "log_sigma2": np.asarray(self.params.log_sigma2, dtype=float),
            "log_phi": np.asarray(self.params.log_phi, dtype=float).copy(),
            "log_phi_z": np.asarray(self.params.log_phi_z, dtype=float).copy(),
            "log_noise": np.asarray(self.params.log_noise, dtype=float),
            "z": [v.copy() for v in self.latent.values],
            "inducing": [self.inducing.locations.copy()],
            "mu": [self.varstate.mu.copy()],
        }
        if variational == "Sigma":
            out["Sigma"] = [self.varstate.covariance]
        else:
            out["sigma_lower"] = [self.varstate.to_raw()]
        return out

    @staticmethod
    def from_params(
        params: Dict[str, Any],
        schema: MixedSchema,
        normalization: Normalization,
        g: int,
        jitter: float,
        varstate: Optional[VariationalGaussian] = None,
    ) -> "SVModel":
        if varstate is None:
            varstate = VariationalGaussian.from_raw(params["mu"][0], params["sigma_lower"][0])
        kp = KernelParams(
            beta=np.asarray(params["beta"], dtype=float).reshape(-1),
            log_sigma2=float(params["log_sigma2"]),
            log_phi=np.asarray(params["log_phi"], dtype=float),
            log_phi_z=np.asarray(params["log_phi_z"], dtype=float),
            log_noise=float(params["log_noise"]),
        )
        return SVModel(
            params=kp,
            latent=LatentMap(g=g, structure="shared", values=[np.asarray(v) for v in params["z"]]),
            inducing=InducingSet(np.asarray(params["inducing"][0])),
            varstate=varstate,
            schema=schema,
            normalization=normalization,
            jitter=jitter,
        )

    def predict(self, queries: MixedInputs, full_cov: bool = False, include_noise: bool = False) -> Prediction:
        return predict(self, queries, full_cov=full_cov, include_noise=include_noise)

    def predict_mean(self, queries: MixedInputs) -> np.ndarray:
        return self.predict(queries).mean

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "latent": self.latent.to_dict(),
            "inducing": self.inducing.locations.tolist(),
            "mu": self.varstate.mu.tolist(),
            "sigma_lower": self.varstate.sigma_lower.tolist(),
            "normalization": self.normalization.to_dict(),
            "jitter": self.jitter,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any], schema: MixedSchema) -> "SVModel":
        return SVModel(
            params=KernelParams.from_dict(data["params"]),
            latent=LatentMap.from_dict(data["latent"]),
            inducing=InducingSet(np.asarray(data["inducing"], dtype=float)),
            varstate=VariationalGaussian(
                mu=np.asarray(data["mu"], dtype=float), sigma_lower=np.asarray(data["sigma_lower"], dtype=float)
            ),
            schema=schema,
            normalization=Normalization.from_dict(data["normalization"]),
            jitter=float(data["jitter"]),
        )


def init_inducing(
    data: Dataset, latent: LatentMap, n_inducing: int, rng: np.random.Generator, copy: int = 0
) -> InducingSet:
    """n_I distinct training rows, sampled without replacement, encoded into the transformed space."""
    n = len(data)
    if not 1 <= n_inducing <= n:
        raise ValueError(f"n_inducing must be in [1, {n}], got {n_inducing}")
    idx = rng.choice(n, size=n_inducing, replace=False)
    return InducingSet(latent.encode_batch(data.inputs.subset(idx), data.schema, copy))


def elbo(model: SVModel, batch: Dataset, n_total: int) -> float:
    return float(elbo_parts(model, batch, n_total).elbo)


def elbo_parts(model: SVModel, batch: Dataset, n_total: int) -> ElboTerms:
    """ELBO with its likelihood and KL terms; `batch` is in the model's (normalized) units."""
    return elbo_terms(
        model.encode(batch.inputs),
        batch.outputs[:, 0],
        model.inducing.locations,
        model.varstate.mu,
        model.varstate.covariance,
        model.params.beta,
        model.params.sigma2,
        model.params.weights(),
        model.params.noise,
        model.jitter,
        n_total,
    ).values()


def full_elbo(model: SVModel, data: Dataset, chunk: int = PREDICT_CHUNK) -> float:
    """Full-data ELBO accumulated over row chunks (KL counted once)."""
    n = len(data)
    kl = None
    lt = 0.0
    for start in range(0, n, chunk):
        part = elbo_parts(model, data.subset(np.arange(start, min(start + chunk, n))), n_total=min(chunk, n - start))
        lt += part.lt
        kl = part.kl
    return float(lt - kl)


def sparse_moments(
    S_query: np.ndarray,
    S_I: np.ndarray,
    mu: np.ndarray,
    sigma_lower: np.ndarray,
    sigma2: float,
    weights: np.ndarray,
    jitter: float,
    full_cov: bool,
):
    """Predictive residual mean and covariance (or variance) of the latent function at S_query."""
    K_II = sigma2 * correlation(S_I, S_I, weights)
    chol = cholesky_with_jitter(K_II, jitter)
    K_Iq = sigma2 * correlation(S_I, S_query, weights)
    V = solve_lower(chol, K_Iq)
    Aq = np.transpose(chol_solve(chol, K_Iq))
    mean = Aq @ mu
    proj = Aq @ sigma_lower
    if full_cov:
        cov = proj @ proj.T + sigma2 * correlation(S_query, S_query, weights) - V.T @ V
        return mean, cov
    var = np.sum(proj**2, axis=1) + sigma2 - np.sum(V**2, axis=0)
    return mean, var


def predict(model: SVModel, queries: MixedInputs, full_cov: bool = False, include_noise: bool = False) -> Prediction:
    """
    mean = beta + K_*I K_II^{-1} mu; covariance = Q Sigma Q^T + K_** - K_*I K_II^{-1} K_I* with
    Q = K_*I K_II^{-1}. Cost depends on n_I and the query count only. Results are in original units.
    """
    S_query = model.encode(queries)
    args = (
        model.inducing.locations,
        model.varstate.mu,
        model.varstate.sigma_lower,
        model.params.sigma2,
        model.params.weights(),
        model.jitter,
    )
    beta = float(model.params.beta[0])
    noise = model.params.noise if include_noise else 0.0
    if full_cov:
        mean, cov = sparse_moments(S_query, *args, full_cov=True)
        cov = cov + noise * np.eye(len(mean))
        variance = np.maximum(np.diag(cov), 0.0)
        cov[np.diag_indices_from(cov)] = variance
        return Prediction.single_output(beta + mean, variance, cov, model.normalization)

    means, variances = [], []
    for start in range(0, len(S_query), PREDICT_CHUNK):
        m, v = sparse_moments(S_query[start : start + PREDICT_CHUNK], *args, full_cov=False)
        means.append(m)
        variances.append(np.maximum(v, 0.0) + noise)
    mean = np.concatenate(means) if means else np.zeros(0)
    variance = np.concatenate(variances) if variances else np.zeros(0)
    return Prediction.single_output(beta + mean, variance, None, model.normalization)


def optimal_varstate(model: SVModel, data: Dataset, chunk: int = PREDICT_CHUNK) -> VariationalGaussian:
    """
    Optimal q(G_I) for a Gaussian likelihood with every other parameter held fixed:
    Sigma* = K_II M^{-1} K_II, mu* = K_II M^{-1} K_IX (y - beta) / sigma_n^2,
    M = K_II + K_IX K_XI / sigma_n^2. K_II carries the model jitter, as in the ELBO.
    """
    sigma2 = model.params.sigma2
    weights = model.params.weights()
    noise = model.params.noise
    S_I = model.inducing.locations
    n_I = S_I.shape[0]
    K_II = sigma2 * correlation(S_I, S_I, weights) + model.jitter * np.eye(n_I)
    gram = np.zeros((n_I, n_I))
    proj = np.zeros(n_I)
    for start in range(0, len(data), chunk):
        part = data.subset(np.arange(start, min(start + chunk, len(data))))
        K_IX = sigma2 * correlation(S_I, model.encode(part.inputs), weights)
        gram += K_IX @ K_IX.T
        proj += K_IX @ (part.outputs[:, 0] - model.params.beta[0])
    M = K_II + gram / noise
    chol_M = cholesky_with_jitter(0.5 * (M + M.T))
    X = solve_lower(chol_M, K_II)
    Sigma = X.T @ X
    mu = X.T @ solve_lower(chol_M, proj) / noise
    sigma_chol = cholesky_with_jitter(0.5 * (Sigma + Sigma.T))
    return VariationalGaussian(mu=mu, sigma_lower=np.asarray(sigma_chol.lower))


def initial_params(
    data: Dataset,
    rng: np.random.Generator,
    latent_dim: int,
    n_inducing: int,
    jitter: float,
    fixed_noise: Optional[float] = None,
) -> Dict[str, Any]:
    """
    Starting point for a fit on normalized single-output data: Z ~ U(-0.5, 0.5), log phi = 0,
    sigma^2 = var(y), sigma_n^2 = 1e-2 var(y), beta = mean(y), inducing rows drawn from the
    training data, q at the prior N(0, K_II).
    """
    y = data.outputs[:, 0]
    var_y = float(np.var(y)) if np.var(y) > 0 else 1.0
    latent = LatentMap.random(data.schema, rng, g=latent_dim)
    inducing = init_inducing(data, latent, n_inducing, rng)
    log_phi = np.zeros(data.schema.p)
    log_phi_z = np.zeros(data.schema.q * latent_dim)
    K_II = var_y * correlation(inducing.locations, inducing.locations, kernel_weights(log_phi, log_phi_z))
    prior = VariationalGaussian.prior(cholesky_with_jitter(K_II, jitter))
    noise = max(fixed_noise, 1e-8 * var_y) if fixed_noise is not None else 1e-2 * var_y
    return {
        "beta": np.array([float(np.mean(y))]),
        "log_sigma2": np.asarray(np.log(var_y)),
        "log_phi": log_phi,
        "log_phi_z": log_phi_z,
        "log_noise": np.asarray(np.log(noise)),
        "z": latent.values,
        "inducing": [inducing.locations],
        "mu": [prior.mu],
        "sigma_lower": [prior.to_raw()],
    }
