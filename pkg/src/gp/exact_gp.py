"""
Dense GP / LVGP with a constant mean, fitted by maximum likelihood. Used as the small-n
reference for the sparse models.

    NLL = 1/2 ln|K| + 1/2 (y - 1 beta)^T K^{-1} (y - 1 beta),   K = sigma^2 R + sigma_n^2 I
"""

import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import autograd.numpy as anp
import numpy as np

from src.config.config import TrainConfig
from src.gp.kernels import KernelParams, correlation, kernel_weights
from src.gp.latent_map import Dataset, LatentMap, MixedInputs, MixedSchema, Normalization, encode_arrays
from src.gp.numerics import CholFactor, chol_solve, cholesky_with_jitter, logdet, make_rng, solve_lower, spawn_seeds
from src.gp.optimizers import Adam, value_and_gradient
from src.gp.prediction import Prediction
from src.gp.trace import TrainingTrace
from src.utils.errors import AllRestartsFailed, DenseCapExceeded, DimensionMismatch
from src.utils.logger import get_logger


LOG_2PI = float(np.log(2.0 * np.pi))
NOISE_FREE_FLOOR = 1e-8

_log = get_logger("exact_gp")


def _covariance(S: Any, sigma2: Any, weights: Any, noise: Any) -> Any:
    n = np.shape(S)[0]
    return sigma2 * correlation(S, S, weights) + noise * np.eye(n)


def dense_nll(S: Any, y: Any, beta: Any, sigma2: Any, weights: Any, noise: Any, jitter: float) -> Any:
    chol = cholesky_with_jitter(_covariance(S, sigma2, weights, noise), jitter)
    r = y - beta
    return 0.5 * logdet(chol) + 0.5 * anp.dot(r, chol_solve(chol, r))


def profiled_nll(S: Any, y: Any, sigma2: Any, weights: Any, noise: Any, jitter: float) -> Tuple[Any, Any]:
    """NLL with beta replaced by its generalized-least-squares estimate; returns (nll, beta_hat)."""
    chol = cholesky_with_jitter(_covariance(S, sigma2, weights, noise), jitter)
    ones = np.ones(np.shape(S)[0])
    beta = anp.dot(ones, chol_solve(chol, y)) / anp.dot(ones, chol_solve(chol, ones))
    r = y - beta
    return 0.5 * logdet(chol) + 0.5 * anp.dot(r, chol_solve(chol, r)), beta


def params_nll(params: Dict[str, Any], x: np.ndarray, t: np.ndarray, y: np.ndarray, jitter: float) -> Any:
    """Objective over a parameter dict. If `beta` is absent it is profiled out."""
    S = encode_arrays(x, t, params["z"], 0)
    weights = kernel_weights(params["log_phi"], params["log_phi_z"])
    sigma2 = anp.exp(params["log_sigma2"])
    noise = anp.exp(params["log_noise"])
    if "beta" in params:
        return dense_nll(S, y, params["beta"][0], sigma2, weights, noise, jitter)
    return profiled_nll(S, y, sigma2, weights, noise, jitter)[0]


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise DenseCapExceeded(f"dense GP limited to n <= {cap}, got n = {n}")


def neg_log_likelihood(
    params: KernelParams, latent: LatentMap, data: Dataset, jitter: float = 0.0, dense_cap: int = 2000
) -> float:
    """NLL (constants dropped) of output 0 of `data`, in the units the data is stored in."""
    _check_cap(len(data), dense_cap)
    S = latent.encode_batch(data.inputs, data.schema)
    return float(
        dense_nll(S, data.outputs[:, 0], params.beta[0], params.sigma2, params.weights(), params.noise, jitter)
    )


def log_marginal_likelihood(
    params: KernelParams, latent: LatentMap, data: Dataset, jitter: float = 0.0, dense_cap: int = 2000
) -> float:
    return -neg_log_likelihood(params, latent, data, jitter, dense_cap) - 0.5 * len(data) * LOG_2PI


@dataclass
class ExactModel:
    params: KernelParams
    latent: LatentMap
    schema: MixedSchema
    inputs: MixedInputs
    S_train: np.ndarray
    y_train: np.ndarray
    chol: CholFactor
    alpha: np.ndarray  # K^{-1} (y - beta)
    normalization: Normalization
    jitter: float = 0.0

    @property
    def n_outputs(self) -> int:
        return 1

    def predict(self, queries: MixedInputs, full_cov: bool = False, include_noise: bool = False) -> Prediction:
        return predict(self, queries, full_cov=full_cov, include_noise=include_noise)

    def predict_mean(self, queries: MixedInputs) -> np.ndarray:
        return self.predict(queries).mean

    def to_dict(self) -> Dict[str, Any]:
        # the training snapshot is rebuilt on load; only inputs and responses are stored
        return {
            "params": self.params.to_dict(),
            "latent": self.latent.to_dict(),
            "x_train": self.inputs.x.tolist(),
            "t_train": self.inputs.t.tolist(),
            "y_train": self.y_train.tolist(),
            "normalization": self.normalization.to_dict(),
            "jitter": self.jitter,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any], schema: MixedSchema) -> "ExactModel":
        n = len(data["y_train"])
        inputs = MixedInputs(
            x=np.asarray(data["x_train"], dtype=float).reshape(n, schema.p),
            t=np.asarray(data["t_train"], dtype=int).reshape(n, schema.q),
        )
        dataset = Dataset(schema, inputs, np.asarray(data["y_train"], dtype=float))
        return condition(
            KernelParams.from_dict(data["params"]),
            LatentMap.from_dict(data["latent"]),
            dataset,
            normalization=Normalization.from_dict(data["normalization"]),
            jitter=float(data["jitter"]),
        )


def condition(
    params: KernelParams,
    latent: LatentMap,
    data: Dataset,
    normalization: Optional[Normalization] = None,
    jitter: float = 0.0,
) -> ExactModel:
    """Factor K for the training set and store the snapshot needed by predict."""
    S = latent.encode_batch(data.inputs, data.schema)
    y = data.outputs[:, 0].copy()
    K = _covariance(S, params.sigma2, params.weights(), params.noise)
    chol = cholesky_with_jitter(K, jitter)
    alpha = chol_solve(chol, y - params.beta[0])
    return ExactModel(
        params=params,
        latent=latent,
        schema=data.schema,
        inputs=data.inputs,
        S_train=S,
        y_train=y,
        chol=chol,
        alpha=np.asarray(alpha),
        normalization=normalization if normalization is not None else data.normalization.column(0),
        jitter=jitter,
    )


def predict(model: ExactModel, queries: MixedInputs, full_cov: bool = False, include_noise: bool = False) -> Prediction:
    """
    mean = beta + k_*^T K^{-1} (y - 1 beta)
    cov  = sigma^2 R(*, *') - k_*^T K^{-1} k_*'
    """
    S_query = model.latent.encode_batch(queries, model.schema)
    if S_query.shape[1] != model.S_train.shape[1]:
        raise DimensionMismatch("query width does not match the training snapshot")
    sigma2 = model.params.sigma2
    weights = model.params.weights()
    K_xq = sigma2 * correlation(model.S_train, S_query, weights)
    mean = model.params.beta[0] + K_xq.T @ model.alpha
    V = solve_lower(model.chol, K_xq)
    noise = model.params.noise if include_noise else 0.0
    if full_cov:
        cov = sigma2 * correlation(S_query, S_query, weights) - V.T @ V + noise * np.eye(len(mean))
        variance = np.maximum(np.diag(cov), 0.0)
        cov[np.diag_indices_from(cov)] = variance
        return Prediction.single_output(mean, variance, cov, model.normalization)
    variance = np.maximum(sigma2 - np.sum(V**2, axis=0), 0.0) + noise
    return Prediction.single_output(mean, variance, None, model.normalization)


@dataclass
class RestartResult:
    index: int
    nll: float
    params: Dict[str, Any]
    trace: TrainingTrace


class MleFitter:
    """Multi-start Adam minimization of the profiled NLL; restarts run on a thread pool."""

    def __init__(self, config: TrainConfig, max_workers: int = 4):
        self._cfg = config
        self._max_workers = max(1, max_workers)
        self._log = get_logger("exact_gp.mle")
        self._failures_lock = threading.Lock()
        self._failures: List[Dict[str, str]] = []

    def initial_params(self, data: Dataset, index: int, rng: np.random.Generator) -> Dict[str, Any]:
        y = data.outputs[:, 0]
        var_y = float(np.var(y)) if np.var(y) > 0 else 1.0
        cfg = self._cfg
        if cfg.fixed_noise is not None:
            noise = max(cfg.fixed_noise, NOISE_FREE_FLOOR * var_y)
        else:
            noise = 1e-2 * var_y
        latent = LatentMap.random(data.schema, rng, g=cfg.latent_dim)
        log_phi = np.zeros(data.schema.p) if index == 0 else rng.uniform(-1.0, 1.0, size=data.schema.p)
        return {
            "log_sigma2": np.asarray(np.log(var_y)),
            "log_phi": log_phi,
            "log_phi_z": np.zeros(data.schema.q * cfg.latent_dim),
            "log_noise": np.asarray(np.log(noise)),
            "z": latent.values,
        }

    def _trainable(self, iteration: int) -> List[str]:
        keys = ["log_sigma2", "log_phi"]
        if self._cfg.fixed_noise is None:
            keys.append("log_noise")
        if iteration < self._cfg.z_freeze_iteration:
            keys.append("z")
        return keys

    def _run_one(self, data: Dataset, index: int, seed: int) -> RestartResult:
        cfg = self._cfg
        rng = make_rng(seed)
        params = self.initial_params(data, index, rng)
        x, t, y = data.inputs.x, data.inputs.t, data.outputs[:, 0]
        n = len(data)
        adam = Adam(cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps)
        trace = TrainingTrace()
        best_nll, best_params = np.inf, params
        start = time.perf_counter()

        def objective(p: Dict[str, Any]) -> Any:
            return params_nll(p, x, t, y, cfg.jitter)

        for it in range(cfg.max_iters):
            value, grads = value_and_gradient(objective, params)
            lml = -value - 0.5 * n * LOG_2PI
            trace.append(it, lml, 0.0, lml, time.perf_counter() - start)
            if value < best_nll:
                best_nll, best_params = value, params
            if it == cfg.z_freeze_iteration and trace.z_frozen_at is None and data.schema.q:
                trace.z_frozen_at = it
            if cfg.check_convergence and trace.converged(cfg.convergence_window, cfg.convergence_tol):
                trace.stopped_early = True
                break
            params = adam.step(params, grads, self._trainable(it))
        self._log.info(f"Restart {index}: NLL {best_nll:.6f} after {len(trace)} iterations")
        return RestartResult(index=index, nll=float(best_nll), params=best_params, trace=trace)

    def fit(self, data: Dataset) -> Tuple[RestartResult, List[RestartResult]]:
        _check_cap(len(data), self._cfg.dense_cap)
        seeds = spawn_seeds(self._cfg.seed, self._cfg.restarts)
        results: List[RestartResult] = []
        with ThreadPoolExecutor(max_workers=self._max_workers) as pool:
            futures = {pool.submit(self._run_one, data, i, s): i for i, s in enumerate(seeds)}
            for fut in as_completed(futures):
                try:
                    results.append(fut.result())
                except Exception as e:
                    index = futures[fut]
                    self._log.warning(f"Restart {index} failed: {e}")
                    with self._failures_lock:
                        self._failures.append({"restart": str(index), "error": str(e)})
        if not results:
            raise AllRestartsFailed(f"all {self._cfg.restarts} restarts failed")
        results.sort(key=lambda r: r.index)
        best = min(results, key=lambda r: (r.nll, r.index))
        return best, results

    def drain_failures(self) -> List[Dict[str, str]]:
        """Return and clear the failures captured during the last fit."""
        with self._failures_lock:
            out = list(self._failures)
            self._failures.clear()
            return out


def model_from_params(params: Dict[str, Any], data: Dataset, latent_dim: int, jitter: float) -> ExactModel:
    """Condition on `data` with beta at its GLS estimate for the given hyperparameters."""
    S = encode_arrays(data.inputs.x, data.inputs.t, params["z"], 0)
    weights = kernel_weights(params["log_phi"], params["log_phi_z"])
    _, beta = profiled_nll(
        S, data.outputs[:, 0], float(np.exp(params["log_sigma2"])), weights, float(np.exp(params["log_noise"])), jitter
    )
    kp = KernelParams(
        beta=np.array([float(beta)]),
        log_sigma2=float(params["log_sigma2"]),
        log_phi=np.asarray(params["log_phi"], dtype=float),
        log_phi_z=np.asarray(params["log_phi_z"], dtype=float),
        log_noise=float(params["log_noise"]),
    )
    latent = LatentMap(g=latent_dim, structure="shared", values=[np.asarray(v) for v in params["z"]])
    return condition(kp, latent, data, normalization=data.normalization.column(0), jitter=jitter)


def fit_mle(
    data: Dataset, config: TrainConfig, output: int = 0, max_workers: int = 4
) -> Tuple[ExactModel, TrainingTrace]:
    """Fit output `output` of `data` on z-scored responses; returns the best restart and its trace."""
    column = data.column(output).normalized()
    fitter = MleFitter(config, max_workers=max_workers)
    _log.info(f"Exact MLE on n={len(column)} with {config.restarts} restarts")
    best, results = fitter.fit(column)
    _log.info(f"Best restart {best.index} of {len(results)} succeeded (NLL {best.nll:.6f})")
    return model_from_params(best.params, column, config.latent_dim, config.jitter), best.trace
