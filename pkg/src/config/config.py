import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import yaml

from src.utils.errors import UsageError


Family = Literal["exact", "sv", "lmc-shared", "lmc-independent"]
FAMILIES = ("exact", "sv", "lmc-shared", "lmc-independent")

THREADS_ENV = "MIXEDGP_THREADS"
RUNTIME_FIELDS = ("workers", "log_level", "log_file")


@dataclass
class TrainConfig:
    family: Family = "sv"
    latent_dim: int = 2
    n_inducing: int = 50
    n_latent_functions: int = 2
    share_inducing: bool = True
    jitter: float = 1e-6
    batch_size: int = 100
    max_iters: int = 20000
    # Adam
    step_size: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # Natural gradient on (mu, Sigma)
    natgrad_gamma: float = 0.1
    z_freeze_fraction: float = 0.8
    seed: int = 0
    check_convergence: bool = True
    convergence_window: int = 500
    convergence_tol: float = 1e-4
    # Dense (exact) fits only
    restarts: int = 8
    dense_cap: int = 2000
    fixed_noise: Optional[float] = None
    full_elbo_every: Optional[int] = None
    log_every: int = 500

    def validate(self) -> "TrainConfig":
        if self.family not in FAMILIES:
            raise UsageError(f"unknown model family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if self.batch_size < 1 or self.max_iters < 1 or self.n_inducing < 1 or self.latent_dim < 1:
            raise UsageError("batch_size, max_iters, n_inducing and latent_dim must be >= 1")
        if self.step_size <= 0 or self.natgrad_gamma < 0:
            raise UsageError("step sizes must be positive")
        if not 0.0 <= self.z_freeze_fraction <= 1.0:
            raise UsageError("z_freeze_fraction must lie in [0, 1]")
        if self.restarts < 1 or self.convergence_window < 1:
            raise UsageError("restarts and convergence_window must be >= 1")
        if self.fixed_noise is not None and self.fixed_noise < 0:
            raise UsageError("fixed_noise must be nonnegative")
        return self

    @property
    def z_freeze_iteration(self) -> int:
        """First iteration at which latent vectors stay fixed."""
        return int(self.z_freeze_fraction * self.max_iters)


@dataclass
class AppConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    cv_folds: int = 10
    cv_seed: int = 0
    workers: int = 4
    log_level: str = "INFO"
    log_file: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        """Settings that determine a fit; runtime settings (threads, logging) are left out."""
        data = asdict(self)
        for key in RUNTIME_FIELDS:
            data.pop(key)
        return data


def default_config() -> AppConfig:
    cfg = AppConfig()
    threads = os.environ.get(THREADS_ENV)
    if threads:
        cfg.workers = max(1, int(threads))
    return cfg


def load_config_yaml(path: Path) -> AppConfig:
    with path.open("r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}

    model = data.get("model", {})
    training = data.get("training", {})
    adam = training.get("adam", {})
    convergence = training.get("convergence", {})
    exact = data.get("exact", {})
    cv = data.get("cv", {})
    runtime = data.get("runtime", {})
    base = default_config()
    defaults = base.train

    train = TrainConfig(
        family=resolve_family(str(model.get("family", defaults.family))),
        latent_dim=int(model.get("latent_dim", defaults.latent_dim)),
        n_inducing=int(model.get("n_inducing", defaults.n_inducing)),
        n_latent_functions=int(model.get("n_latent_functions", defaults.n_latent_functions)),
        share_inducing=bool(model.get("share_inducing", defaults.share_inducing)),
        jitter=float(model.get("jitter", defaults.jitter)),
        batch_size=int(training.get("batch_size", defaults.batch_size)),
        max_iters=int(training.get("max_iters", defaults.max_iters)),
        step_size=float(adam.get("step_size", defaults.step_size)),
        beta1=float(adam.get("beta1", defaults.beta1)),
        beta2=float(adam.get("beta2", defaults.beta2)),
        eps=float(adam.get("eps", defaults.eps)),
        natgrad_gamma=float(training.get("natgrad_gamma", defaults.natgrad_gamma)),
        z_freeze_fraction=float(training.get("z_freeze_fraction", defaults.z_freeze_fraction)),
        seed=int(training.get("seed", defaults.seed)),
        check_convergence=bool(convergence.get("enabled", defaults.check_convergence)),
        convergence_window=int(convergence.get("window", defaults.convergence_window)),
        convergence_tol=float(convergence.get("tol", defaults.convergence_tol)),
        restarts=int(exact.get("restarts", defaults.restarts)),
        dense_cap=int(exact.get("dense_cap", defaults.dense_cap)),
        fixed_noise=float(exact["fixed_noise"]) if exact.get("fixed_noise") is not None else None,
        full_elbo_every=int(training["full_elbo_every"]) if training.get("full_elbo_every") else None,
        log_every=int(training.get("log_every", defaults.log_every)),
    )

    cfg = AppConfig(
        train=train.validate(),
        cv_folds=int(cv.get("folds", base.cv_folds)),
        cv_seed=int(cv.get("seed", base.cv_seed)),
        workers=int(runtime.get("workers", base.workers)) if not os.environ.get(THREADS_ENV) else base.workers,
        log_level=str(runtime.get("log_level", base.log_level)),
        log_file=Path(runtime["log_file"]) if runtime.get("log_file") else None,
    )
    return cfg


def apply_overrides(cfg: AppConfig, **overrides: Any) -> AppConfig:
    """Command-line values win over the file; None means 'not given'."""
    train_names = {f.name for f in fields(TrainConfig)}
    app_names = {f.name for f in fields(AppConfig)} - {"train"}
    train_updates = {k: v for k, v in overrides.items() if v is not None and k in train_names}
    app_updates = {k: v for k, v in overrides.items() if v is not None and k in app_names}
    unknown = set(overrides) - train_names - app_names
    if unknown:
        raise UsageError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return replace(cfg, train=replace(cfg.train, **train_updates).validate(), **app_updates)


MODEL_ALIASES = {
    "exact": "exact",
    "lvgp": "exact",
    "sv": "sv",
    "sv-lvgp": "sv",
    "lmc-shared": "lmc-shared",
    "lmc-sv-lvgp-s": "lmc-shared",
    "lmc-sv-shared": "lmc-shared",
    "lmc-independent": "lmc-independent",
    "lmc-sv-lvgp-i": "lmc-independent",
    "lmc-sv-independent": "lmc-independent",
}


def resolve_family(name: str) -> str:
    try:
        return MODEL_ALIASES[name.lower()]
    except KeyError:
        raise UsageError(f"unknown model {name!r}; expected one of {', '.join(sorted(MODEL_ALIASES))}") from None


def config_from_args(config_path: Optional[str], **overrides: Any) -> AppConfig:
    """defaults < YAML file (when given or present at the default location) < flags."""
    default_path = Path("configs") / "main_config.yaml"
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        cfg = load_config_yaml(path)
    elif default_path.exists():
        cfg = load_config_yaml(default_path)
    else:
        cfg = default_config()
    if overrides.get("family") is not None:
        overrides["family"] = resolve_family(overrides["family"])
    return apply_overrides(cfg, **overrides)
