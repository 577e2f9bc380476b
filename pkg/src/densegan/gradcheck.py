"""Finite-difference verification of every differentiable op.

Each op case builds a scalar loss ``sum(op(inputs) * R)`` with a fixed random
projection ``R`` and compares the tape gradient of every input against
:func:`~densegan.tensor.finite_diff_grad`. The composed cases differentiate
the Fisher critic and generator objectives with respect to network
parameters.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import ops
from .arch import ArchSpec, build_discriminator, build_generator
from .fisher import FisherState, critic_objective_tensor, generator_objective_tensor
from .tensor import Tape, Tensor, backward, concat, finite_diff_grad, log_softmax, tanh, take_rows

EPS = 1e-5
TOLERANCE = 1e-4
FLOOR = 1e-6
KINK_MARGIN = 1e-3
MAX_PROBE_ATTEMPTS = 50


def relative_error(analytic, numeric, floor: float = FLOOR) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def check_gradients(fn: Callable[..., Tensor], inputs: list[Tensor], eps: float = EPS) -> float:
    """Max relative error between tape and central-difference gradients over all ``inputs``."""
    with Tape() as tape:
        loss = fn(*inputs)
    grads = backward(loss, tape)
    worst = 0.0
    for i, x in enumerate(inputs):

        def f(xi, i=i):
            args = list(inputs)
            args[i] = xi
            return fn(*args)

        numeric = finite_diff_grad(f, x, eps).data
        worst = max(worst, relative_error(grads[x].data, numeric))
    return worst


def check_parameter_gradients(loss_fn: Callable[[], Tensor], params: list[Tensor], eps: float = EPS) -> float:
    """Like :func:`check_gradients`, perturbing live parameter tensors in place of explicit inputs."""
    with Tape() as tape:
        loss = loss_fn()
    grads = backward(loss, tape)
    worst = 0.0
    for p in params:
        original = p.data

        def f(v, p=p, original=original):
            p.data = v.data
            try:
                return loss_fn()
            finally:
                p.data = original

        numeric = finite_diff_grad(f, Tensor(original), eps).data
        worst = max(worst, relative_error(grads[p].data, numeric))
        p.zero_grad()
    return worst


def _uniform(rng, *shape, low=-1.0, high=1.0, min_abs=0.0):
    v = rng.uniform(low, high, size=shape)
    if min_abs:
        # keep kinked ops (relu family) away from the kink by more than eps
        v = np.where(np.abs(v) < min_abs, np.copysign(min_abs, v), v)
    return Tensor(v, requires_grad=True)


def _projected(out: Tensor, r: np.ndarray) -> Tensor:
    return (out * Tensor(r)).sum()


def _conv_case(rng, transposed, in_c, out_c, k, s, p, size, n=2):
    x = _uniform(rng, n, in_c, size, size)
    w = _uniform(rng, *((in_c, out_c, k, k) if transposed else (out_c, in_c, k, k)))
    op = ops.conv_transpose2d if transposed else ops.conv2d
    out_size = (ops.conv_transpose_output_size if transposed else ops.conv_output_size)(size, k, s, p)
    r = rng.uniform(-1, 1, size=(n, out_c, out_size, out_size))

    def fn(x, w):
        return _projected(op(x, ops.ConvParams(in_c, out_c, k, s, p, w, transposed=transposed)), r)

    return check_gradients(fn, [x, w])


def _bn_case(rng, mode):
    x = _uniform(rng, 4, 3, 2, 2)
    gamma = _uniform(rng, 3, low=0.5, high=1.5)
    beta = _uniform(rng, 3)
    r = rng.uniform(-1, 1, size=x.shape)
    running_mean = rng.uniform(-0.5, 0.5, size=3)
    running_var = rng.uniform(0.5, 1.5, size=3)

    def fn(x, gamma, beta):
        state = ops.BatchNormState(gamma, beta, running_mean.copy(), running_var.copy(), mode=mode)
        return _projected(ops.batch_norm(x, state), r)

    return check_gradients(fn, [x, gamma, beta])


def _elementwise_case(rng, op, min_abs=0.0):
    x = _uniform(rng, 3, 4, min_abs=min_abs)
    r = rng.uniform(-1, 1, size=x.shape)
    return check_gradients(lambda x: _projected(op(x), r), [x])


def _concat_case(rng):
    xs = [_uniform(rng, 2, c, 3, 3) for c in (2, 1, 3)]
    r = rng.uniform(-1, 1, size=(2, 6, 3, 3))
    return check_gradients(lambda *xs: _projected(ops.concat_channels(list(xs)), r), xs)


def _linear_case(rng):
    x, w, b = _uniform(rng, 5, 3), _uniform(rng, 3, 2), _uniform(rng, 2)
    r = rng.uniform(-1, 1, size=(5, 2))
    return check_gradients(lambda x, w, b: _projected(ops.linear(x, ops.LinearParams(w, b)), r), [x, w, b])


def _probe_networks(rng):
    spec = ArchSpec("probe", image_size=8, noise_dim=3, base_channels=4, dense_per_block=2)
    return build_generator(spec, rng), build_discriminator(8, 2, rng), spec.noise_dim


def _smooth_probe(rng, make_case):
    """Draw probe points until no relu-family input lies within ``KINK_MARGIN`` of zero."""
    for _ in range(MAX_PROBE_ATTEMPTS):
        loss, params = make_case(rng)
        with ops.kink_margin() as margin:
            loss()
        if margin.value >= KINK_MARGIN:
            return loss, params
    raise RuntimeError("could not find a probe point away from activation kinks")


def _critic_objective_case(rng):
    def make(rng):
        _, critic, _ = _probe_networks(rng)
        real = Tensor(rng.uniform(-1, 1, size=(2, 3, 8, 8)))
        fake = Tensor(rng.uniform(-1, 1, size=(2, 3, 8, 8)))
        state = FisherState(lam=float(rng.uniform(-1, 1)), rho=0.5)

        def loss():
            scores = critic(concat([real, fake], axis=0))
            lagr, _, _ = critic_objective_tensor(take_rows(scores, 0, 2), take_rows(scores, 2, 4), state)
            return -lagr

        return loss, critic.parameters()

    return check_parameter_gradients(*_smooth_probe(rng, make))


def _generator_objective_case(rng):
    def make(rng):
        gen, critic, noise_dim = _probe_networks(rng)
        z = Tensor(rng.standard_normal((3, noise_dim, 1, 1)))
        real = Tensor(rng.uniform(-1, 1, size=(3, 3, 8, 8)))

        def loss():
            scores = critic(concat([real, gen(z)], axis=0))
            return generator_objective_tensor(take_rows(scores, 3, 6))

        return loss, gen.parameters()

    return check_parameter_gradients(*_smooth_probe(rng, make))


def _three_layer_case(rng):
    def make(rng):
        chans = [3, 4, 3, 2]
        weights = [_uniform(rng, a, b, 3, 3, low=-0.5, high=0.5) for a, b in zip(chans[:-1], chans[1:])]
        norms = [ops.BatchNormState.init(c, rng) for c in chans[1:-1]]
        x = Tensor(rng.uniform(-1, 1, size=(2, 3, 3, 3)))
        r = rng.uniform(-1, 1, size=(2, 2, 3, 3))

        def loss():
            h = x
            for i, w in enumerate(weights):
                if i:
                    h = ops.leaky_relu(ops.batch_norm(h, norms[i - 1]))
                h = ops.conv_transpose2d(h, ops.ConvParams(chans[i], chans[i + 1], 3, 1, 1, w, transposed=True))
            return _projected(h, r)

        return loss, weights + [p for n in norms for p in n.parameters()]

    return check_parameter_gradients(*_smooth_probe(rng, make))


CASES: dict[str, Callable[[np.random.Generator], float]] = {
    "conv2d[k3,s1,p1]": lambda rng: _conv_case(rng, False, 3, 4, 3, 1, 1, 5),
    "conv2d[k4,s2,p1]": lambda rng: _conv_case(rng, False, 2, 3, 4, 2, 1, 6),
    "conv_transpose2d[k4,s2,p1]": lambda rng: _conv_case(rng, True, 3, 2, 4, 2, 1, 3),
    "conv_transpose2d[k4,s1,p0]": lambda rng: _conv_case(rng, True, 4, 3, 4, 1, 0, 1),
    "conv_transpose2d[k1,s1,p0]": lambda rng: _conv_case(rng, True, 5, 2, 1, 1, 0, 3),
    "batch_norm[train]": lambda rng: _bn_case(rng, "train"),
    "batch_norm[eval]": lambda rng: _bn_case(rng, "eval"),
    "relu": lambda rng: _elementwise_case(rng, ops.relu, min_abs=1e-2),
    "leaky_relu": lambda rng: _elementwise_case(rng, ops.leaky_relu, min_abs=1e-2),
    "tanh": lambda rng: _elementwise_case(rng, tanh),
    "log_softmax": lambda rng: _elementwise_case(rng, log_softmax),
    "concat_channels": _concat_case,
    "linear": _linear_case,
    "convT_bn_leaky_3layer": _three_layer_case,
    "critic_objective": _critic_objective_case,
    "generator_objective": _generator_objective_case,
}


def run_suite(seed: int = 0, cases=None) -> dict[str, float]:
    """Max relative error per case, each case drawing from its own stream of ``seed``."""
    names = list(CASES) if cases is None else list(cases)
    return {name: CASES[name](np.random.default_rng([seed, i])) for i, name in enumerate(names)}
