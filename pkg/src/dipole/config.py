"""Run configuration: one flat record covering every stage.

Configs load from JSON; unknown keys are rejected so typos fail loudly.
Command-line overrides are applied on top of file values.  A single
top-level seed feeds per-component streams (encoder init, connect
fitting, sampling, pairing, clustering, evaluation splits) so a run is
reproducible end to end from one integer.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .objectives import LossConfig, TrainConfig
from .sampler import SamplerConfig, SamplerThresholds
from .synthgen import SynthConfig

EVAL_VARIANTS = ("full", "no-interaction", "no-feature", "random-negatives",
                 "labels-1", "labels-2", "labels-5", "r0-30", "r0-60")

STREAMS = {"encoder": 0, "connect": 1, "negatives": 2, "pairs": 3,
           "kmeans": 4, "classifier": 5, "synth": 6, "eval": 7, "mu": 8}


def child_seed(root, stream):
    if stream not in STREAMS:
        raise ConfigError(f"unknown seed stream {stream!r}")
    return int(np.random.SeedSequence([int(root), STREAMS[stream]]).generate_state(1)[0])


def child_rng(root, stream):
    return np.random.default_rng(child_seed(root, stream))


@dataclass
class RunConfig:
    seed: int = 0

    # data files (optional; the generate command fills these in)
    edge_file: str | None = None
    feature_file: str | None = None
    label_file: str | None = None
    r0_file: str | None = None
    checkpoint: str | None = None

    # encoder
    d_h: int = 64
    d_po: int = 32
    d_in: int = 32
    adjacency: str = "unsigned"

    # sampler / connect
    sampler: str = "fast"
    connect: str = "adaptor-mlp"
    augmentation: str = "perturbation"
    bound: float = 1.0
    sigma1_quantile: float = 0.30
    sigma2_quantile: float = 0.70
    sigma3_quantile: float = 0.50
    d_adapt: int = 16
    adapt_hidden: int = 16
    connect_fit_steps: int = 60
    connect_fit_lr: float = 0.05
    connect_refit_every: int = 10

    # losses
    feature_weight: float = 1.0
    anchor_weight: float = 4.0
    eps: float = 1e-8
    n_neg: int = 5
    pairs_per_node: int = 10
    interaction_distance: str = "euclidean"
    feature_distance: str = "euclidean"

    # optimization
    epochs: int = 200
    init_epochs: int = 20
    lr: float = 0.01
    momentum: float = 0.9
    grad_clip: float = 10.0
    early_stop_tol: float = 1e-4
    early_stop_window: int = 10

    # clustering and flags
    sharpness: float = 5.0
    kmeans_iters: int = 100
    neutral_threshold: float = 0.7
    outlier_std: float = 2.0

    # supervision
    prompt_k_induced: int = 10
    prompt_epochs: int = 30
    prompt_lr: float = 0.05

    # synthetic generation
    graph_kind: str = "polarized"
    n_per_class: int = 500
    p_intra: float = 0.02
    p_inter: float = 0.002
    hostile_frac: float = 0.0
    neutral_frac: float = 0.0
    irrelevant_frac: float = 0.0
    d_x: int = 16
    signal: float = 3.0
    irrelevant_offset: float = 4.0

    # evaluation suite
    eval_seeds: int = 5
    eval_variants: list = field(default_factory=lambda: list(EVAL_VARIANTS))

    def __post_init__(self):
        if self.graph_kind not in ("polarized", "unpolarized"):
            raise ConfigError(f"graph_kind must be polarized or unpolarized, got {self.graph_kind!r}")
        if self.eval_seeds < 1:
            raise ConfigError("eval_seeds must be at least 1")
        for v in self.eval_variants:
            if v not in EVAL_VARIANTS:
                raise ConfigError(f"unknown eval variant {v!r}; known: {', '.join(EVAL_VARIANTS)}")
        for q in ("sigma1_quantile", "sigma2_quantile", "sigma3_quantile"):
            val = getattr(self, q)
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"{q} must lie in [0, 1], got {val}")
        if self.sigma1_quantile > self.sigma2_quantile:
            raise ConfigError("sigma1_quantile must not exceed sigma2_quantile")
        # delegate the rest so every constraint lives in one place
        self.loss_config()
        self.train_config()
        self.sampler_config()
        self.synth_config()

    def loss_config(self):
        return LossConfig(feature_weight=self.feature_weight,
                          anchor_weight=self.anchor_weight, eps=self.eps,
                          n_neg=self.n_neg, pairs_per_node=self.pairs_per_node,
                          interaction_distance=self.interaction_distance,
                          feature_distance=self.feature_distance)

    def train_config(self, **overrides):
        kw = dict(epochs=self.epochs, init_epochs=self.init_epochs, lr=self.lr,
                  momentum=self.momentum, seed=self.seed, d_h=self.d_h,
                  d_po=self.d_po, d_in=self.d_in, adjacency=self.adjacency,
                  grad_clip=self.grad_clip, early_stop_tol=self.early_stop_tol,
                  early_stop_window=self.early_stop_window)
        kw.update(overrides)
        return TrainConfig(**kw)

    def sampler_config(self, **overrides):
        thresholds = SamplerThresholds(low_quantile=self.sigma1_quantile,
                                       high_quantile=self.sigma2_quantile,
                                       invariant_quantile=self.sigma3_quantile)
        kw = dict(kind=self.sampler, connect=self.connect,
                  augmentation=self.augmentation, bound=self.bound,
                  thresholds=thresholds, d_adapt=self.d_adapt,
                  adapt_hidden=self.adapt_hidden, fit_steps=self.connect_fit_steps,
                  fit_lr=self.connect_fit_lr, refit_every=self.connect_refit_every)
        kw.update(overrides)
        return SamplerConfig(**kw)

    def synth_config(self, seed=None):
        return SynthConfig(n_per_class=self.n_per_class, p_intra=self.p_intra,
                           p_inter=self.p_inter, hostile_frac=self.hostile_frac,
                           neutral_frac=self.neutral_frac,
                           irrelevant_frac=self.irrelevant_frac, d_x=self.d_x,
                           signal=self.signal,
                           irrelevant_offset=self.irrelevant_offset,
                           seed=self.seed if seed is None else seed)

    def to_dict(self):
        return dataclasses.asdict(self)


def _known_fields():
    return {f.name for f in dataclasses.fields(RunConfig)}


def config_from_dict(values):
    known = _known_fields()
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    try:
        with open(path) as fh:
            values = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(values)


def apply_overrides(cfg, overrides):
    """Rebuild the config with key=value overrides (already parsed)."""
    if not overrides:
        return cfg
    values = cfg.to_dict()
    known = _known_fields()
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    return config_from_dict(values)


def parse_override(text):
    """Parse one KEY=VALUE command-line override; values are JSON when
    possible, bare strings otherwise."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
