"""Alternating critic/generator training with checkpoint/resume.

A run is fully determined by its :class:`TrainConfig`: parameter
initialization, data order, and noise are drawn from generators seeded by
``config.seed``, and all mutable state (parameters, batch-norm running
statistics, Adam moments, the Lagrange multiplier, the RNG state and the
step counter) round-trips through a checkpoint.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_io
from .arch import Network, build_discriminator, build_generator, get_arch
from .fisher import FisherState, critic_objective_tensor, generator_objective_tensor, lambda_update
from .ops import LinearParams, leaky_relu, linear, relu
from .tensor import Tape, Tensor, backward, concat, no_grad, take_rows

log = logging.getLogger(__name__)

METRICS_HEADER = ("step", "loss_critic", "ipm", "omega_hat", "lambda", "loss_gen")
CHECKPOINT_FORMAT = "densegan-checkpoint"
CHECKPOINT_VERSION = 1
DATASETS = ("cifar10", "gauss2d", "ring2d")


class DivergenceError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"divergence detected at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    arch_name: str = "fisher-base"
    dataset: str = "cifar10"
    batch_size: int = 64
    critic_steps_per_gen: int = 1
    learning_rate: float = 5e-5
    gen_lr_scale: float = 1.0
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rho: float = 1e-6
    total_gen_steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 100
    noise_dim: int = 100
    data_dir: str = "data/cifar-10-batches-bin"
    cifar_subset: int = 0
    hidden_dim: int = 64
    synthetic_components: int = 4
    synthetic_radius: float = 2.0
    synthetic_std: float = 0.1

    def validate(self) -> "TrainConfig":
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.dataset == "cifar10":
            spec = get_arch(self.arch_name)
            if spec.image_size != 32:
                raise ValueError(f"{self.arch_name} produces {spec.image_size}px images; CIFAR-10 is 32px")
        else:
            get_arch(self.arch_name)
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.critic_steps_per_gen < 1 or self.checkpoint_every < 1 or self.noise_dim < 1:
            raise ValueError("step counts and noise_dim must be positive")
        if self.total_gen_steps < 0:
            raise ValueError("total_gen_steps must be non-negative")
        if self.learning_rate < 0 or self.gen_lr_scale < 0 or self.rho < 0 or self.adam_eps <= 0:
            raise ValueError("rates must be non-negative")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        return self

    @property
    def is_toy(self) -> bool:
        return self.dataset != "cifar10"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        """Parse flat ``key = value`` lines; ``#`` starts a comment, unknown keys are rejected."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            kind = types[key]
            values[key] = int(value) if kind == "int" else float(value) if kind == "float" else value
        return cls(**values).validate()

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in dataclasses.asdict(self).items())


# --- optimizer ------------------------------------------------------------------


@dataclass
class AdamMoments:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamMoments":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_update(params, grads, moments: AdamMoments, lr: float, beta1: float, beta2: float,
                eps: float = 1e-8) -> tuple[list[np.ndarray], AdamMoments]:
    """One bias-corrected Adam step over parallel lists of arrays."""
    if not (len(params) == len(grads) == len(moments.m) == len(moments.v)):
        raise ValueError("params, grads and moments must have equal length")
    t = moments.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, moments.m, moments.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamMoments(new_m, new_v, t)


# --- toy networks ---------------------------------------------------------------


class MLP:
    """Three-layer fully connected network for the 2-D toy problems."""

    def __init__(self, sizes, rng, activation: str, name: str = ""):
        self.layers = [LinearParams.init(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.activation = activation
        self.name = name

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x: Tensor) -> Tensor:
        x = x.reshape(x.shape[0], -1)
        for i, layer in enumerate(self.layers):
            x = linear(x, layer)
            if i < len(self.layers) - 1:
                x = relu(x) if self.activation == "relu" else leaky_relu(x)
        return x

    __call__ = forward

    def train(self):
        return self

    def eval(self):
        return self

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.param{i}": np.array(p.data) for i, p in enumerate(self.parameters())}

    def load_state_arrays(self, prefix: str, arrays) -> None:
        for i, p in enumerate(self.parameters()):
            p.assign(arrays[f"{prefix}.param{i}"])


# --- state ----------------------------------------------------------------------


@dataclass
class StepMetrics:
    step: int
    critic_objective: float
    ipm: float
    omega_hat: float
    lam: float
    gen_loss: float

    def row(self) -> list[str]:
        return [str(self.step)] + [repr(float(v)) for v in
                                   (-self.critic_objective, self.ipm, self.omega_hat, self.lam, self.gen_loss)]


@dataclass
class TrainState:
    config: TrainConfig
    generator: Network | MLP
    critic: Network | MLP
    fisher: FisherState
    gen_moments: AdamMoments
    critic_moments: AdamMoments
    rng: np.random.Generator
    fixed_noise: np.ndarray
    step: int = 0
    real_data: np.ndarray | None = field(default=None, repr=False)

    def sample_real(self, n: int) -> np.ndarray:
        cfg = self.config
        if cfg.is_toy:
            spec = data_io.SyntheticSpec(cfg.dataset, cfg.synthetic_components, cfg.synthetic_radius,
                                         cfg.synthetic_std, cfg.seed)
            return data_io.sample_synthetic(spec, n, rng=self.rng)
        idx = self.rng.integers(0, len(self.real_data), size=n)
        return self.real_data[idx]

    def sample_noise(self, n: int) -> np.ndarray:
        shape = (n, self.config.noise_dim) if self.config.is_toy else (n, self.config.noise_dim, 1, 1)
        return self.rng.standard_normal(shape)


def _build_networks(cfg: TrainConfig, rng):
    if cfg.is_toy:
        h = cfg.hidden_dim
        gen = MLP([cfg.noise_dim, h, h, 2], rng, "relu", name="toy-generator")
        critic = MLP([2, h, h, 1], rng, "leaky_relu", name="toy-critic")
        return gen, critic
    spec = dataclasses.replace(get_arch(cfg.arch_name), noise_dim=cfg.noise_dim)
    gen = build_generator(spec, rng)
    critic = build_discriminator(spec.image_size, 64, rng)
    return gen, critic


def _load_real(cfg: TrainConfig) -> np.ndarray | None:
    if cfg.is_toy:
        return None
    images, _ = data_io.load_cifar10(cfg.data_dir, train=True, limit=cfg.cifar_subset or None)
    return images


def init_state(cfg: TrainConfig, real_data: np.ndarray | None = None, load_data: bool = True) -> TrainState:
    cfg.validate()
    if real_data is None and load_data:
        real_data = _load_real(cfg)
    gen, critic = _build_networks(cfg, np.random.default_rng([cfg.seed, 0]))
    noise_rng = np.random.default_rng([cfg.seed, 2])
    fixed_shape = (64, cfg.noise_dim) if cfg.is_toy else (64, cfg.noise_dim, 1, 1)
    return TrainState(
        config=cfg,
        generator=gen,
        critic=critic,
        fisher=FisherState(lam=0.0, rho=cfg.rho),
        gen_moments=AdamMoments.zeros_like([p.data for p in gen.parameters()]),
        critic_moments=AdamMoments.zeros_like([p.data for p in critic.parameters()]),
        rng=np.random.default_rng([cfg.seed, 1]),
        fixed_noise=noise_rng.standard_normal(fixed_shape),
        real_data=real_data,
    )


def _apply_adam(params: list[Tensor], grads: dict, moments: AdamMoments, cfg: TrainConfig,
                lr: float) -> AdamMoments:
    g = [grads[p].data if p in grads else np.zeros_like(p.data) for p in params]
    new, moments = adam_update([p.data for p in params], g, moments, lr,
                               cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    for p, value in zip(params, new):
        p.assign(value)
    return moments


def _critic_pair(critic, real: np.ndarray, fake: Tensor) -> tuple[Tensor, Tensor]:
    # real and fake share one forward so batch-norm statistics are common to both
    n = real.shape[0]
    scores = critic(concat([Tensor(real), fake], axis=0))
    return take_rows(scores, 0, n), take_rows(scores, n, scores.shape[0])


def train_step(state: TrainState) -> StepMetrics:
    """``critic_steps_per_gen`` critic ascents (each followed by a multiplier step), then one generator step."""
    cfg = state.config
    step = state.step + 1
    n = cfg.batch_size
    state.generator.train()
    state.critic.train()

    for _ in range(cfg.critic_steps_per_gen):
        real = state.sample_real(n)
        with no_grad():
            fake = state.generator(Tensor(state.sample_noise(n))).detach()
        with Tape() as tape:
            f_real, f_fake = _critic_pair(state.critic, real, fake)
            lagr, ipm, omega = critic_objective_tensor(f_real, f_fake, state.fisher)
            loss = -lagr
        if not np.isfinite(loss.item()):
            raise DivergenceError(step)
        grads = backward(loss, tape)
        state.critic_moments = _apply_adam(state.critic.parameters(), grads, state.critic_moments, cfg,
                                            cfg.learning_rate)
        state.fisher = lambda_update(state.fisher, omega.item())
        crit_value, ipm_value, omega_value = lagr.item(), ipm.item(), omega.item()

    real = state.sample_real(n)
    z = Tensor(state.sample_noise(n))
    with Tape() as tape:
        fake = state.generator(z)
        _, f_fake = _critic_pair(state.critic, real, fake)
        gen_loss = generator_objective_tensor(f_fake)
    if not np.isfinite(gen_loss.item()):
        raise DivergenceError(step)
    grads = backward(gen_loss, tape)
    state.gen_moments = _apply_adam(state.generator.parameters(), grads, state.gen_moments, cfg,
                                     cfg.learning_rate * cfg.gen_lr_scale)
    for p in state.critic.parameters():
        p.zero_grad()
    for p in state.generator.parameters():
        p.zero_grad()

    state.step = step
    if not all(np.all(np.isfinite(p.data)) for p in state.generator.parameters() + state.critic.parameters()):
        raise DivergenceError(step)
    return StepMetrics(step, crit_value, ipm_value, omega_value, state.fisher.lam, gen_loss.item())


# --- checkpoints ----------------------------------------------------------------


def save_checkpoint(state: TrainState, path) -> None:
    """Write a self-describing ``.npz`` container (format tag + version + JSON config)."""
    arrays: dict[str, np.ndarray] = {
        "format": np.array(CHECKPOINT_FORMAT),
        "version": np.array(CHECKPOINT_VERSION),
        "config": np.array(json.dumps(dataclasses.asdict(state.config), sort_keys=True)),
        "rng_state": np.array(json.dumps(state.rng.bit_generator.state)),
        "step": np.array(state.step),
        "lambda": np.array(state.fisher.lam),
        "rho": np.array(state.fisher.rho),
        "fixed_noise": state.fixed_noise,
    }
    arrays.update(state.generator.state_arrays("gen"))
    arrays.update(state.critic.state_arrays("critic"))
    for prefix, mom in (("gen_adam", state.gen_moments), ("critic_adam", state.critic_moments)):
        arrays[f"{prefix}.t"] = np.array(mom.t)
        for i, (m, v) in enumerate(zip(mom.m, mom.v)):
            arrays[f"{prefix}.m{i}"] = m
            arrays[f"{prefix}.v{i}"] = v
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def load_checkpoint(path, real_data: np.ndarray | None = None, load_data: bool = True) -> TrainState:
    """Restore a training state; ``load_data=False`` skips the dataset (enough for sampling)."""
    with np.load(path, allow_pickle=False) as f:
        arrays = {k: f[k] for k in f.files}
    if str(arrays.get("format")) != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a densegan checkpoint")
    if int(arrays["version"]) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {int(arrays['version'])}")
    cfg = TrainConfig(**json.loads(str(arrays["config"])))
    state = init_state(cfg, real_data=real_data, load_data=load_data)
    state.generator.load_state_arrays("gen", arrays)
    state.critic.load_state_arrays("critic", arrays)
    state.fisher = FisherState(lam=float(arrays["lambda"]), rho=float(arrays["rho"]))
    state.rng.bit_generator.state = json.loads(str(arrays["rng_state"]))
    state.step = int(arrays["step"])
    state.fixed_noise = arrays["fixed_noise"]
    for prefix, attr in (("gen_adam", "gen_moments"), ("critic_adam", "critic_moments")):
        mom = getattr(state, attr)
        k = len(mom.m)
        setattr(state, attr, AdamMoments(
            [arrays[f"{prefix}.m{i}"] for i in range(k)],
            [arrays[f"{prefix}.v{i}"] for i in range(k)],
            int(arrays[f"{prefix}.t"]),
        ))
    return state


# --- loop -----------------------------------------------------------------------


def _write_samples(state: TrainState, out_dir: Path) -> None:
    if state.config.is_toy:
        return
    state.generator.eval()
    with no_grad():
        images = state.generator(Tensor(state.fixed_noise))
    state.generator.train()
    data_io.write_image_grid(images.data, 8, out_dir / f"samples_{state.step:06d}.png")


def _prepare_csv(path: Path, keep_through: int) -> None:
    rows = []
    if keep_through > 0 and path.exists():
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            rows = [r for r in reader if r and int(r[0]) <= keep_through]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        writer.writerows(rows)


def train_loop(config: TrainConfig | None, out_dir, resume=None, until: int | None = None) -> TrainState:
    """Run (or resume) training, streaming ``metrics.csv`` and checkpoints into ``out_dir``.

    ``until`` overrides ``total_gen_steps`` as the stopping step. On
    divergence the current state is checkpointed to ``ckpt_diverged.npz``
    and :class:`DivergenceError` propagates.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if resume is not None:
        state = load_checkpoint(resume)
    else:
        state = init_state(config)
    cfg = state.config
    stop = cfg.total_gen_steps if until is None else until

    metrics_path = out_dir / "metrics.csv"
    _prepare_csv(metrics_path, state.step)
    if resume is None:
        save_checkpoint(state, out_dir / f"ckpt_{state.step:06d}.npz")
        _write_samples(state, out_dir)

    with metrics_path.open("a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        while state.step < stop:
            try:
                metrics = train_step(state)
            except DivergenceError:
                save_checkpoint(state, out_dir / "ckpt_diverged.npz")
                raise
            writer.writerow(metrics.row())
            fh.flush()
            if state.step % cfg.checkpoint_every == 0 or state.step == stop:
                save_checkpoint(state, out_dir / f"ckpt_{state.step:06d}.npz")
                _write_samples(state, out_dir)
                log.info("step %d: omega_hat=%.4f lambda=%.4g", state.step, metrics.omega_hat, metrics.lam)
    save_checkpoint(state, out_dir / "ckpt_latest.npz")
    return state


def read_metrics(path) -> list[dict[str, float]]:
    with Path(path).open(newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
