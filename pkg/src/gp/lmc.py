"""
Linear model of coregionalization over latent-variable GPs.

Outputs are Y_o(u) = beta_o + sum_l W_ol f_l(s_l(u)), with L independent unit-variance latent
functions f_l, each carrying its own inducing set and q(f_l(S_I,l)) = N(mu_l, Sigma_l).

  shared       one latent map for all functions; per-function phi and phi_z
  independent  one latent-map copy and one inducing set per function
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import autograd.numpy as anp
import numpy as np

from src.gp.kernels import correlation, kernel_weights
from src.gp.latent_map import Dataset, LatentMap, MixedInputs, MixedSchema, Normalization, Structure, encode_arrays
from src.gp.numerics import chol_solve, cholesky_with_jitter
from src.gp.prediction import Prediction
from src.gp.svgp import (
    DEFAULT_JITTER,
    PREDICT_CHUNK,
    ElboTerms,
    InducingSet,
    VariationalGaussian,
    covariance_from_raw,
    expected_log_density,
    gram_bundle,
    init_inducing,
    kl_divergence,
    sparse_moments,
)
from src.utils.errors import DimensionMismatch, UsageError
from src.utils.logger import get_logger


W_INIT_NOISE = 1e-2

_log = get_logger("lmc")


@dataclass
class LMCConfig:
    n_outputs: int
    n_functions: int
    structure: Structure = "shared"
    share_inducing: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.n_functions <= self.n_outputs:
            raise UsageError(f"need 1 <= L <= N_op, got L={self.n_functions}, N_op={self.n_outputs}")
        if self.structure not in ("shared", "independent"):
            raise UsageError(f"unknown latent structure {self.structure!r}")
        if self.structure == "independent":
            # functions live in different latent spaces, so their inducing sets cannot coincide
            self.share_inducing = False


@dataclass
class MultiSVState:
    inducing: List[InducingSet]  # 1 entry when locations are shared, else L
    varstates: List[VariationalGaussian]  # always L

    def inducing_for(self, function: int) -> InducingSet:
        return self.inducing[0] if len(self.inducing) == 1 else self.inducing[function]


@dataclass
class LMCModel:
    config: LMCConfig
    schema: MixedSchema
    latent: LatentMap
    W: np.ndarray  # (N_op, L)
    beta: np.ndarray  # (N_op,)
    log_noise: np.ndarray  # (N_op,)
    log_phi: np.ndarray  # (L, p)
    log_phi_z: np.ndarray  # (L, q*g)
    state: MultiSVState
    normalization: Normalization
    jitter: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        cfg = self.config
        L, n_op = cfg.n_functions, cfg.n_outputs
        self.W = np.asarray(self.W, dtype=float).reshape(n_op, L)
        self.beta = np.asarray(self.beta, dtype=float).reshape(n_op)
        self.log_noise = np.asarray(self.log_noise, dtype=float).reshape(n_op)
        self.log_phi = np.asarray(self.log_phi, dtype=float).reshape(L, self.schema.p)
        self.log_phi_z = np.asarray(self.log_phi_z, dtype=float).reshape(L, self.schema.q * self.latent.g)
        if not np.all(np.isfinite(self.W)):
            raise ValueError("mixing matrix W must be finite")
        expected_copies = 1 if cfg.structure == "shared" else L
        if self.latent.structure != cfg.structure or self.latent.copies != expected_copies:
            raise DimensionMismatch(
                f"{cfg.structure} structure expects {expected_copies} latent copies, got {self.latent.copies}"
            )
        if len(self.state.varstates) != L or len(self.state.inducing) not in (1, L):
            raise DimensionMismatch(f"state must hold {L} variational blocks and 1 or {L} inducing sets")
        if cfg.structure == "independent" and len(self.state.inducing) != L:
            raise DimensionMismatch("independent structure needs one inducing set per latent function")
        width = self.schema.encoded_width(self.latent.g)
        for l in range(L):
            inducing = self.state.inducing_for(l)
            if inducing.width != width or inducing.size != len(self.state.varstates[l].mu):
                raise DimensionMismatch(f"latent function {l + 1}: inducing/variational shapes disagree")

    @property
    def n_outputs(self) -> int:
        return self.config.n_outputs

    @property
    def n_functions(self) -> int:
        return self.config.n_functions

    @property
    def noise(self) -> np.ndarray:
        return np.exp(self.log_noise)

    def weights(self, function: int) -> np.ndarray:
        return kernel_weights(self.log_phi[function], self.log_phi_z[function])

    def encode(self, inputs: MixedInputs, function: int) -> np.ndarray:
        return self.latent.encode_batch(inputs, self.schema, self.latent.copy_index(function))

    def coregional_cov(self, i: int, j: int, u: MixedInputs, u_prime: MixedInputs) -> float:
        """Covariance of outputs i and j (0-based) between two single mixed points."""
        s = np.stack([self.encode(u, l)[0] for l in range(self.n_functions)])
        s_prime = np.stack([self.encode(u_prime, l)[0] for l in range(self.n_functions)])
        weights = np.stack([self.weights(l) for l in range(self.n_functions)])
        return coregional_cov(i, j, s, s_prime, self.W, weights)

    def to_params(self, variational: str = "sigma_lower") -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "beta": self.beta.copy(),
            "log_noise": self.log_noise.copy(),
            "W": self.W.copy(),
            "log_phi": self.log_phi.copy(),
            "log_phi_z": self.log_phi_z.copy(),
            "z": [v.copy() for v in self.latent.values],
            "inducing": [s.locations.copy() for s in self.state.inducing],
            "mu": [v.mu.copy() for v in self.state.varstates],
        }
        if variational == "Sigma":
            out["Sigma"] = [v.covariance for v in self.state.varstates]
        else:
            out["sigma_lower"] = [v.to_raw() for v in self.state.varstates]
        return out

    def with_params(self, params: Dict[str, Any], varstates: Optional[List[VariationalGaussian]] = None) -> "LMCModel":
        if varstates is None:
            varstates = [VariationalGaussian.from_raw(m, r) for m, r in zip(params["mu"], params["sigma_lower"])]
        return LMCModel(
            config=self.config,
            schema=self.schema,
            latent=self.latent.with_values(params["z"]),
            W=np.asarray(params["W"]),
            beta=np.asarray(params["beta"]),
            log_noise=np.asarray(params["log_noise"]),
            log_phi=np.asarray(params["log_phi"]),
            log_phi_z=np.asarray(params["log_phi_z"]),
            state=MultiSVState(inducing=[InducingSet(np.asarray(s)) for s in params["inducing"]], varstates=varstates),
            normalization=self.normalization,
            jitter=self.jitter,
        )

    def predict(self, queries: MixedInputs, full_cov: bool = False, include_noise: bool = False) -> Prediction:
        return multi_predict(self, queries, full_cov=full_cov, include_noise=include_noise)

    def predict_mean(self, queries: MixedInputs) -> np.ndarray:
        return self.predict(queries).mean

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_outputs": self.config.n_outputs,
            "n_functions": self.config.n_functions,
            "structure": self.config.structure,
            "share_inducing": self.config.share_inducing,
            "latent": self.latent.to_dict(),
            "W": self.W.tolist(),
            "beta": self.beta.tolist(),
            "log_noise": self.log_noise.tolist(),
            "log_phi": self.log_phi.tolist(),
            "log_phi_z": self.log_phi_z.tolist(),
            "inducing": [s.locations.tolist() for s in self.state.inducing],
            "mu": [v.mu.tolist() for v in self.state.varstates],
            "sigma_lower": [v.sigma_lower.tolist() for v in self.state.varstates],
            "normalization": self.normalization.to_dict(),
            "jitter": self.jitter,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any], schema: MixedSchema) -> "LMCModel":
        config = LMCConfig(
            n_outputs=int(data["n_outputs"]),
            n_functions=int(data["n_functions"]),
            structure=data["structure"],
            share_inducing=bool(data["share_inducing"]),
        )
        varstates = [
            VariationalGaussian(mu=np.asarray(m, dtype=float), sigma_lower=np.asarray(s, dtype=float))
            for m, s in zip(data["mu"], data["sigma_lower"])
        ]
        return LMCModel(
            config=config,
            schema=schema,
            latent=LatentMap.from_dict(data["latent"]),
            W=np.asarray(data["W"], dtype=float),
            beta=np.asarray(data["beta"], dtype=float),
            log_noise=np.asarray(data["log_noise"], dtype=float),
            log_phi=np.asarray(data["log_phi"], dtype=float),
            log_phi_z=np.asarray(data["log_phi_z"], dtype=float),
            state=MultiSVState(
                inducing=[InducingSet(np.asarray(s, dtype=float)) for s in data["inducing"]], varstates=varstates
            ),
            normalization=Normalization.from_dict(data["normalization"]),
            jitter=float(data["jitter"]),
        )


def coregional_cov(i: int, j: int, s: np.ndarray, s_prime: np.ndarray, W: np.ndarray, weights: np.ndarray) -> float:
    """
    sum_l W_il r_l(s_l, s'_l) W_jl.

    `s`, `s_prime` hold one transformed point per latent function, shape (L, D), or a single
    (D,) point used by every function; `weights` is (L, D).
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n_op, L = W.shape
    if not (0 <= i < n_op and 0 <= j < n_op):
        raise DimensionMismatch(f"output indices ({i}, {j}) out of range for {n_op} outputs")
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    s = np.broadcast_to(np.asarray(s, dtype=float), (L, weights.shape[1]))
    s_prime = np.broadcast_to(np.asarray(s_prime, dtype=float), (L, weights.shape[1]))
    if weights.shape[0] != L:
        raise DimensionMismatch(f"need kernel weights for {L} latent functions, got {weights.shape[0]}")
    total = 0.0
    for l in range(L):
        r = float(correlation(s[l][None, :], s_prime[l][None, :], weights[l])[0, 0])
        total += W[i, l] * r * W[j, l]
    return total


def params_multi_elbo(
    params: Dict[str, Any], x: np.ndarray, t: np.ndarray, Y: np.ndarray, n_total: int, jitter: float, copies: int
) -> ElboTerms:
    """
    Gaussian-likelihood ELBO of the mixed outputs. Per point and output the predictive mean is
    beta_o + sum_l W_ol a_l^T mu_l and the variance sum_l W_ol^2 (a_l^T Sigma_l a_l + b_l);
    the KL is the sum of the per-function terms.
    """
    W = params["W"]
    L = np.shape(W)[1]
    n_b = np.shape(x)[0]
    if n_b < 1:
        raise ValueError("ELBO batch must be nonempty")
    shared_inducing = len(params["inducing"]) == 1
    means, variances = [], []
    kl = 0.0
    for l in range(L):
        copy = l if copies > 1 else 0
        S_l = encode_arrays(x, t, params["z"], copy)
        S_I = params["inducing"][0 if shared_inducing else l]
        if "Sigma" in params:
            Sigma = params["Sigma"][l]
        else:
            Sigma = covariance_from_raw(params["sigma_lower"][l])
        weights = kernel_weights(params["log_phi"][l], params["log_phi_z"][l])
        bundle = gram_bundle(S_l, S_I, 1.0, weights, jitter)
        means.append(anp.dot(bundle.A, params["mu"][l]))
        variances.append(anp.sum(anp.dot(bundle.A, Sigma) * bundle.A, axis=1) + bundle.b_diag)
        kl = kl + kl_divergence(params["mu"][l], Sigma, bundle.chol)
    M = anp.stack(means, axis=1)  # (n_b, L)
    V = anp.stack(variances, axis=1)
    mean = params["beta"] + anp.dot(M, anp.transpose(W))
    var = anp.dot(V, anp.transpose(W**2))
    noise = anp.exp(params["log_noise"])
    lt = (float(n_total) / n_b) * anp.sum(expected_log_density(Y, mean, var, noise))
    return ElboTerms(elbo=lt - kl, lt=lt, kl=kl)


def multi_elbo(model: LMCModel, batch: Dataset, n_total: int) -> float:
    return float(multi_elbo_parts(model, batch, n_total).elbo)


def multi_elbo_parts(model: LMCModel, batch: Dataset, n_total: int) -> ElboTerms:
    if batch.n_outputs != model.n_outputs:
        raise DimensionMismatch(f"batch has {batch.n_outputs} outputs, model has {model.n_outputs}")
    batch.inputs.check(model.schema)
    return params_multi_elbo(
        model.to_params(variational="Sigma"),
        batch.inputs.x,
        batch.inputs.t,
        batch.outputs,
        n_total,
        model.jitter,
        model.latent.copies,
    ).values()


def full_multi_elbo(model: LMCModel, data: Dataset, chunk: int = PREDICT_CHUNK) -> float:
    n = len(data)
    lt, kl = 0.0, 0.0
    for start in range(0, n, chunk):
        part = multi_elbo_parts(model, data.subset(np.arange(start, min(start + chunk, n))), min(chunk, n - start))
        lt += part.lt
        kl = part.kl
    return float(lt - kl)


def _latent_moments(model: LMCModel, queries: MixedInputs, function: int, full_cov: bool):
    vs = model.state.varstates[function]
    return sparse_moments(
        model.encode(queries, function),
        model.state.inducing_for(function).locations,
        vs.mu,
        vs.sigma_lower,
        1.0,
        model.weights(function),
        model.jitter,
        full_cov=full_cov,
    )


def multi_predict(model: LMCModel, queries: MixedInputs, full_cov: bool = False, include_noise: bool = False) -> Prediction:
    """
    Per latent function, sparse predictive moments (beta = 0, sigma^2 = 1), then mixed by W.
    The full covariance is sum_l kron(C_l, W_l W_l^T) over index a * N_op + o.
    """
    L, n_op = model.n_functions, model.n_outputs
    n_q = len(queries)
    scale = model.normalization.scale
    noise = model.noise if include_noise else np.zeros(n_op)
    if full_cov:
        M = np.zeros((n_q, L))
        cov = np.zeros((n_q * n_op, n_q * n_op))
        for l in range(L):
            m_l, C_l = _latent_moments(model, queries, l, full_cov=True)
            M[:, l] = m_l
            cov += np.kron(C_l, np.outer(model.W[:, l], model.W[:, l]))
        cov += np.kron(np.eye(n_q), np.diag(noise))
        variance = np.maximum(np.diag(cov), 0.0)
        cov[np.diag_indices_from(cov)] = variance
        scale_full = np.tile(scale, n_q)
        mean = model.beta + M @ model.W.T
        return Prediction(
            mean=model.normalization.inverse(mean),
            variance=model.normalization.inverse_variance(variance.reshape(n_q, n_op)),
            covariance=cov * np.outer(scale_full, scale_full),
        )

    means, variances = [], []
    for start in range(0, n_q, PREDICT_CHUNK):
        chunk = queries.subset(np.arange(start, min(start + PREDICT_CHUNK, n_q)))
        M = np.zeros((len(chunk), L))
        V = np.zeros((len(chunk), L))
        for l in range(L):
            M[:, l], V[:, l] = _latent_moments(model, chunk, l, full_cov=False)
        means.append(model.beta + M @ model.W.T)
        variances.append(np.maximum(V, 0.0) @ (model.W**2).T + noise)
    mean = np.vstack(means) if means else np.zeros((0, n_op))
    variance = np.vstack(variances) if variances else np.zeros((0, n_op))
    return Prediction(mean=model.normalization.inverse(mean), variance=model.normalization.inverse_variance(variance))


def kronecker_covariance(model: LMCModel, inputs: MixedInputs) -> np.ndarray:
    """Dense (n * N_op)-square prior covariance sum_l kron(R_l, W_l W_l^T) of the mixed outputs."""
    n = len(inputs)
    K = np.zeros((n * model.n_outputs, n * model.n_outputs))
    for l in range(model.n_functions):
        S_l = model.encode(inputs, l)
        K += np.kron(correlation(S_l, S_l, model.weights(l)), np.outer(model.W[:, l], model.W[:, l]))
    return K


def dense_multi_predict(model: LMCModel, train: Dataset, queries: MixedInputs) -> Prediction:
    """
    Exact multi-output GP with the model's kernel and noise, conditioned on every training row.
    Intended for small n only; `train` is in the model's (normalized) units, results in original units.
    """
    n, n_op, n_q = len(train), model.n_outputs, len(queries)
    K = kronecker_covariance(model, train.inputs) + np.kron(np.eye(n), np.diag(model.noise))
    chol = cholesky_with_jitter(K, model.jitter)
    resid = (train.outputs - model.beta).reshape(-1)
    K_cross = np.zeros((n * n_op, n_q * n_op))
    K_qq = np.zeros((n_q * n_op, n_q * n_op))
    for l in range(model.n_functions):
        S_train = model.encode(train.inputs, l)
        S_query = model.encode(queries, l)
        T_l = np.outer(model.W[:, l], model.W[:, l])
        K_cross += np.kron(correlation(S_train, S_query, model.weights(l)), T_l)
        K_qq += np.kron(correlation(S_query, S_query, model.weights(l)), T_l)
    mean = model.beta + (K_cross.T @ chol_solve(chol, resid)).reshape(n_q, n_op)
    cov = K_qq - K_cross.T @ chol_solve(chol, K_cross)
    variance = np.maximum(np.diag(cov), 0.0).reshape(n_q, n_op)
    scale_full = np.tile(model.normalization.scale, n_q)
    return Prediction(
        mean=model.normalization.inverse(mean),
        variance=model.normalization.inverse_variance(variance),
        covariance=cov * np.outer(scale_full, scale_full),
    )


def init_lmc(
    data: Dataset,
    config: LMCConfig,
    rng: np.random.Generator,
    latent_dim: int,
    n_inducing: int,
    jitter: float = DEFAULT_JITTER,
    fixed_noise: Optional[float] = None,
) -> LMCModel:
    """
    Starting model on normalized multi-output data. W is the N_op x L slice of the identity plus
    small seeded noise; beta = column means; sigma_n,o^2 = 1e-2 var(y_o); q(f_l) at its prior.
    """
    if data.n_outputs != config.n_outputs:
        raise DimensionMismatch(f"data has {data.n_outputs} outputs, configuration expects {config.n_outputs}")
    L = config.n_functions
    schema = data.schema
    copies = 1 if config.structure == "shared" else L
    latent = LatentMap.random(schema, rng, g=latent_dim, structure=config.structure, copies=copies)
    W = np.eye(config.n_outputs, L) + W_INIT_NOISE * rng.standard_normal((config.n_outputs, L))
    var_y = np.var(data.outputs, axis=0)
    var_y = np.where(var_y > 0, var_y, 1.0)
    noise = np.maximum(fixed_noise, 1e-8 * var_y) if fixed_noise is not None else 1e-2 * var_y
    log_phi = np.zeros((L, schema.p))
    log_phi_z = np.zeros((L, schema.q * latent_dim))

    n_sets = 1 if config.share_inducing else L
    inducing = [init_inducing(data, latent, n_inducing, rng, copy=latent.copy_index(l)) for l in range(n_sets)]
    varstates = []
    for l in range(L):
        S_I = inducing[0 if n_sets == 1 else l].locations
        K_II = correlation(S_I, S_I, kernel_weights(log_phi[l], log_phi_z[l]))
        varstates.append(VariationalGaussian.prior(cholesky_with_jitter(K_II, jitter)))
    with np.errstate(divide="ignore"):
        log_noise = np.log(noise)
    return LMCModel(
        config=config,
        schema=schema,
        latent=latent,
        W=W,
        beta=data.outputs.mean(axis=0),
        log_noise=log_noise,
        log_phi=log_phi,
        log_phi_z=log_phi_z,
        state=MultiSVState(inducing=inducing, varstates=varstates),
        normalization=data.normalization,
        jitter=jitter,
    )
