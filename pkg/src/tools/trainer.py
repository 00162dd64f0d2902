import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from src.config.config import TrainConfig
from src.gp import exact_gp, lmc, svgp
from src.gp.exact_gp import ExactModel
from src.gp.latent_map import Dataset
from src.gp.lmc import LMCConfig, LMCModel
from src.gp.numerics import make_rng, spawn_seeds
from src.gp.optimizers import Adam, natgrad_step, value_and_gradient
from src.gp.prediction import PerOutputModel
from src.gp.svgp import ElboTerms, SVModel, VariationalGaussian
from src.gp.trace import TrainingTrace
from src.utils.errors import GPError
from src.utils.logger import get_logger


Model = Union[ExactModel, SVModel, LMCModel, PerOutputModel]
Params = Dict[str, Any]


@dataclass
class VariationalProblem:
    """What the loop needs from a model family: parameter groups, an ELBO and a way back to a model."""

    params: Params
    varstates: List[VariationalGaussian]
    adam_keys: List[str]
    terms: Callable[[Params, np.ndarray], ElboTerms]
    build: Callable[[Params, List[VariationalGaussian]], Any]
    full_elbo: Callable[[Any], float]


class VariationalTrainer:
    """
    Minibatch loop: natural-gradient steps on every (mu_l, Sigma_l), Adam on the remaining
    groups, latent vectors frozen from `z_freeze_iteration` on. Returns the model snapshot with
    the best window-mean ELBO.
    """

    def __init__(self, config: TrainConfig, name: str = "trainer"):
        self._cfg = config
        self._log = get_logger(name)

    def run(self, problem: VariationalProblem, n: int, rng: np.random.Generator) -> Tuple[Any, TrainingTrace]:
        cfg = self._cfg
        n_b = min(cfg.batch_size, n)
        if n_b < cfg.batch_size:
            self._log.warning(f"batch_size {cfg.batch_size} exceeds n={n}; using full batches")
        adam = Adam(cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps)
        params = dict(problem.params)
        params.pop("sigma_lower", None)
        varstates = list(problem.varstates)
        freeze_at = cfg.z_freeze_iteration
        has_latent = bool(params.get("z"))
        trace = TrainingTrace()
        best: Optional[Tuple[float, Params, List[VariationalGaussian]]] = None
        start = time.perf_counter()

        try:
            for it in range(cfg.max_iters):
                idx = np.sort(rng.choice(n, size=n_b, replace=False)) if n_b < n else np.arange(n)
                params["mu"] = [v.mu for v in varstates]
                params["Sigma"] = [v.covariance for v in varstates]
                captured: Dict[str, ElboTerms] = {}

                def loss(p: Params) -> Any:
                    captured["terms"] = problem.terms(p, idx)
                    return -captured["terms"].elbo

                _, grads = value_and_gradient(loss, params)
                terms = captured["terms"].values()
                trace.append(it, terms.elbo, terms.kl, terms.lt, time.perf_counter() - start)

                if has_latent and it == freeze_at:
                    trace.z_frozen_at = it
                    self._log.info(f"Latent vectors frozen at iteration {it}")
                if cfg.log_every and (it + 1) % cfg.log_every == 0:
                    self._log.info(f"iter {it + 1}: elbo={terms.elbo:.4f} kl={terms.kl:.4f} lt={terms.lt:.4f}")
                if (it + 1) % cfg.convergence_window == 0:
                    window_mean = trace.window_mean(cfg.convergence_window)
                    if best is None or window_mean > best[0]:
                        best = (window_mean, dict(params), list(varstates))
                if cfg.full_elbo_every and (it + 1) % cfg.full_elbo_every == 0:
                    value = problem.full_elbo(problem.build(params, varstates))
                    trace.full_elbo.append((it, value))
                    self._log.debug(f"iter {it + 1}: full-data elbo={value:.4f}")
                if cfg.check_convergence and trace.converged(cfg.convergence_window, cfg.convergence_tol):
                    trace.stopped_early = True
                    self._log.info(f"Converged after {it + 1} iterations")
                    break
                # the returned state must be the one scored last
                if it == cfg.max_iters - 1:
                    break

                varstates = [
                    natgrad_step(v, -grads["mu"][l], -grads["Sigma"][l], cfg.natgrad_gamma)
                    for l, v in enumerate(varstates)
                ]
                keys = [k for k in problem.adam_keys if k != "z" or it < freeze_at]
                params = adam.step(params, grads, keys)
        except GPError as e:
            e.trace = trace  # type: ignore[attr-defined]
            raise

        final_mean = trace.window_mean(cfg.convergence_window) if len(trace) else -np.inf
        if best is None or final_mean >= best[0]:
            best = (final_mean, params, varstates)
        _, best_params, best_varstates = best
        return problem.build(best_params, best_varstates), trace


def _sv_problem(data: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> VariationalProblem:
    params = svgp.initial_params(data, rng, cfg.latent_dim, cfg.n_inducing, cfg.jitter, cfg.fixed_noise)
    varstates = [VariationalGaussian.from_raw(params["mu"][0], params["sigma_lower"][0])]
    x, t, y = data.inputs.x, data.inputs.t, data.outputs[:, 0]
    n = len(data)
    keys = ["beta", "log_sigma2", "log_phi", "z", "inducing"]
    if cfg.fixed_noise is None:
        keys.append("log_noise")

    def terms(p: Params, idx: np.ndarray) -> ElboTerms:
        return svgp.params_elbo(p, x[idx], t[idx], y[idx], n, cfg.jitter)

    def build(p: Params, vs: List[VariationalGaussian]) -> SVModel:
        return SVModel.from_params(p, data.schema, data.normalization, cfg.latent_dim, cfg.jitter, varstate=vs[0])

    return VariationalProblem(
        params=params,
        varstates=varstates,
        adam_keys=keys,
        terms=terms,
        build=build,
        full_elbo=lambda model: svgp.full_elbo(model, data),
    )


def _lmc_problem(data: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> VariationalProblem:
    structure = "shared" if cfg.family == "lmc-shared" else "independent"
    lmc_cfg = LMCConfig(
        n_outputs=data.n_outputs,
        n_functions=cfg.n_latent_functions,
        structure=structure,
        share_inducing=cfg.share_inducing,
    )
    start = lmc.init_lmc(data, lmc_cfg, rng, cfg.latent_dim, cfg.n_inducing, cfg.jitter, cfg.fixed_noise)
    x, t, Y = data.inputs.x, data.inputs.t, data.outputs
    n = len(data)
    copies = start.latent.copies
    keys = ["beta", "W", "log_phi", "z", "inducing"]
    if structure == "shared":
        keys.append("log_phi_z")
    if cfg.fixed_noise is None:
        keys.append("log_noise")

    def terms(p: Params, idx: np.ndarray) -> ElboTerms:
        return lmc.params_multi_elbo(p, x[idx], t[idx], Y[idx], n, cfg.jitter, copies)

    return VariationalProblem(
        params=start.to_params(),
        varstates=list(start.state.varstates),
        adam_keys=keys,
        terms=terms,
        build=lambda p, vs: start.with_params(p, varstates=vs),
        full_elbo=lambda model: lmc.full_multi_elbo(model, data),
    )


def _clamp_inducing(cfg: TrainConfig, n: int) -> TrainConfig:
    if cfg.n_inducing > n:
        get_logger("trainer").warning(f"n_inducing={cfg.n_inducing} exceeds n={n}; using every training row")
        return replace(cfg, n_inducing=n)
    return cfg


def fit_sv(data: Dataset, cfg: TrainConfig) -> Tuple[SVModel, TrainingTrace]:
    """Single-output sparse fit on z-scored responses of output 0."""
    column = data.column(0).normalized()
    cfg = _clamp_inducing(cfg, len(column))
    get_logger("trainer").info(f"SV fit: n={len(column)}, n_I={cfg.n_inducing}, batch={cfg.batch_size}")
    rng = make_rng(cfg.seed)
    return VariationalTrainer(cfg, "trainer.sv").run(_sv_problem(column, cfg, rng), len(column), rng)


def fit_lmc(data: Dataset, cfg: TrainConfig) -> Tuple[LMCModel, TrainingTrace]:
    normalized = data.normalized()
    cfg = _clamp_inducing(cfg, len(normalized))
    get_logger("trainer").info(
        f"{cfg.family} fit: n={len(normalized)}, N_op={data.n_outputs}, L={cfg.n_latent_functions}, n_I={cfg.n_inducing}"
    )
    rng = make_rng(cfg.seed)
    return VariationalTrainer(cfg, "trainer.lmc").run(_lmc_problem(normalized, cfg, rng), len(normalized), rng)


def _fit_single(family: str, data: Dataset, cfg: TrainConfig, workers: int) -> Tuple[Any, TrainingTrace]:
    if family == "exact":
        return exact_gp.fit_mle(data, cfg, output=0, max_workers=workers)
    return fit_sv(data, cfg)


def fit(family: str, data: Dataset, cfg: TrainConfig, workers: int = 4) -> Tuple[Model, TrainingTrace]:
    """
    Fit `family` to `data`. Single-output families on multi-output data fit one independent
    model per output column (seeded from the config seed) and predict them side by side.
    """
    log = get_logger("trainer")
    if family != cfg.family:
        cfg = replace(cfg, family=family)
    cfg.validate()
    if family.startswith("lmc"):
        return fit_lmc(data, cfg)
    if data.n_outputs == 1:
        return _fit_single(family, data, cfg, workers)

    seeds = spawn_seeds(cfg.seed, data.n_outputs)
    models, traces = [], []
    for o in range(data.n_outputs):
        log.info(f"Per-output {family} fit for output {o + 1}/{data.n_outputs}")
        column_cfg = replace(cfg, seed=seeds[o])
        model, trace = _fit_single(family, data.column(o), column_cfg, workers)
        models.append(model)
        traces.append(trace)
    return PerOutputModel(models), TrainingTrace.merged(traces)
