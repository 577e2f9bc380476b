"""Fisher GAN with dense skip-connected generators, on a small numpy autograd engine."""
from .arch import REGISTRY, ArchSpec, build_discriminator, build_generator, describe, get_arch
from .fisher import FisherState, critic_objective, lambda_update, omega_hat
from .kernels import BACKEND
from .metrics import inception_score, kl_divergence
from .tensor import Tape, Tensor, backward, finite_diff_grad, no_grad
from .train import TrainConfig, train_loop

__version__ = "0.1.0"

__all__ = [
    "REGISTRY", "ArchSpec", "build_discriminator", "build_generator", "describe", "get_arch",
    "FisherState", "critic_objective", "lambda_update", "omega_hat",
    "BACKEND",
    "inception_score", "kl_divergence",
    "Tape", "Tensor", "backward", "finite_diff_grad", "no_grad",
    "TrainConfig", "train_loop",
]
