"""White-box attacks (FGSM, PGD, CW-L2) and the robustness table.

All attacks differentiate through the model's real inference path, i.e. the
softmax over cosine scores of the frozen head. Inputs live in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from dfa.errors import DataError, NumericError, ParameterError


class Method(str, Enum):
    FGSM = "fgsm"
    PGD = "pgd"
    CW = "cw"


@dataclass(frozen=True)
class AttackConfig:
    method: Method = Method.PGD
    epsilon: float = 4 / 255
    step_size: float = 2 / 255
    steps: int = 8
    cw_c: float = 0.01
    cw_lr: float = 0.01
    random_start: bool = True
    rng_seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 <= self.epsilon <= 1:
            raise ParameterError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.method is not Method.FGSM and self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.method is Method.PGD and not self.step_size > 0:
            raise ParameterError(f"step_size must be positive, got {self.step_size}")
        if self.method is Method.CW and (self.cw_c < 0 or not self.cw_lr > 0):
            raise ParameterError("cw_c must be >= 0 and cw_lr > 0")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        eps = Fraction(self.epsilon).limit_denominator(1000)
        if self.method is Method.FGSM:
            return f"FGSM ({eps})"
        if self.method is Method.PGD:
            return f"PGD-{self.steps} ({eps})"
        return f"CW-{self.steps} (c={self.cw_c:g})"


# budgets of the reference benchmark: FGSM at 8/255, PGD at 4/255 with 2/255 steps,
# CW with 100 iterations at c in {0.01, 0.05}
BENCHMARK = (
    AttackConfig(Method.FGSM, epsilon=8 / 255),
    AttackConfig(Method.PGD, epsilon=4 / 255, step_size=2 / 255, steps=8),
    AttackConfig(Method.PGD, epsilon=4 / 255, step_size=2 / 255, steps=16),
    AttackConfig(Method.CW, steps=100, cw_c=0.01),
    AttackConfig(Method.CW, steps=100, cw_c=0.05),
)


def _input_grad(model, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    x = x.detach().clone().requires_grad_(True)
    loss = F.cross_entropy(model(x), y, reduction="sum")
    (grad,) = torch.autograd.grad(loss, x)
    if not bool(torch.isfinite(grad).all()):
        raise NumericError("input gradient is non-finite")
    return grad


def fgsm(model, x: torch.Tensor, y: torch.Tensor, epsilon: float) -> torch.Tensor:
    """x + epsilon * sign(grad_x CE), clipped to [0, 1]."""
    grad = _input_grad(model, x, y)
    return torch.clamp(x + epsilon * grad.sign(), 0.0, 1.0).detach()


def pgd(model, x: torch.Tensor, y: torch.Tensor, epsilon: float, step_size: float, steps: int,
        random_start: bool = True, rng: np.random.Generator | None = None,
        callback: Callable[[int, torch.Tensor], None] | None = None) -> torch.Tensor:
    """Projected sign-gradient ascent inside the l-inf ball of radius epsilon around x.

    ``callback(k, x_k)`` sees every iterate, including the start point (k=0).
    """
    if not step_size > 0:
        raise ParameterError("step_size must be positive")
    lower, upper = x - epsilon, x + epsilon
    x_adv = x.detach().clone()
    if random_start and epsilon > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        start = rng.uniform(-epsilon, epsilon, size=tuple(x.shape))
        x_adv = torch.clamp(x_adv + torch.from_numpy(start).to(x.dtype), 0.0, 1.0)
    if callback:
        callback(0, x_adv)
    for k in range(steps):
        grad = _input_grad(model, x_adv, y)
        x_adv = x_adv + step_size * grad.sign()
        x_adv = torch.clamp(torch.minimum(torch.maximum(x_adv, lower), upper), 0.0, 1.0)
        if callback:
            callback(k + 1, x_adv)
    return x_adv.detach()


def cw_margin(logits: torch.Tensor, y: torch.Tensor, kappa: float = 0.0) -> torch.Tensor:
    """max(z_true - max_{k != true} z_k, -kappa) per sample."""
    true = logits.gather(1, y[:, None]).squeeze(1)
    others = logits.masked_fill(F.one_hot(y, logits.shape[1]).bool(), float("-inf"))
    return torch.clamp(true - others.max(dim=1).values, min=-kappa)


def cw(model, x: torch.Tensor, y: torch.Tensor, c: float = 0.01, steps: int = 100,
       lr: float = 0.01, kappa: float = 0.0, box: str = "tanh") -> torch.Tensor:
    """Untargeted CW-L2 with a fixed trade-off constant.

    Minimises ||delta||^2 + c * margin(x + delta) with Adam. ``box='tanh'``
    optimises in tanh space so iterates never leave [0, 1]; ``box='project'``
    clips after each step instead. Returns, per sample, the smallest-distortion
    misclassified iterate, or ``x`` itself when none was found.
    """
    if box not in ("tanh", "project"):
        raise ParameterError(f"box must be 'tanh' or 'project', got {box!r}")
    x = x.detach()
    flat = lambda t: t.flatten(1)  # noqa: E731
    with torch.no_grad():
        already = model(x).argmax(1) != y
    best = x.clone()
    best_l2 = torch.where(already, torch.zeros(len(x), dtype=x.dtype),
                          torch.full((len(x),), float("inf"), dtype=x.dtype))
    if box == "tanh":
        w = torch.atanh((2 * x - 1).clamp(-1 + 1e-6, 1 - 1e-6)).requires_grad_(True)
        to_image = lambda w: (torch.tanh(w) + 1) / 2  # noqa: E731
    else:
        w = x.clone().requires_grad_(True)
        to_image = lambda w: w  # noqa: E731
    opt = torch.optim.Adam([w], lr=lr)
    for _ in range(steps):
        x_adv = to_image(w)
        logits = model(x_adv)
        l2 = flat(x_adv - x).pow(2).sum(1)
        loss = (l2 + c * cw_margin(logits, y, kappa)).sum()
        opt.zero_grad()
        loss.backward()
        if not bool(torch.isfinite(w.grad).all()):
            raise NumericError("CW gradient is non-finite")
        with torch.no_grad():
            improved = (logits.argmax(1) != y) & (l2 < best_l2)
            best_l2 = torch.where(improved, l2, best_l2)
            best[improved] = x_adv[improved].detach()
        opt.step()
        if box == "project":
            with torch.no_grad():
                w.clamp_(0.0, 1.0)
    # the last update has not been scored yet
    with torch.no_grad():
        x_adv = to_image(w)
        l2 = flat(x_adv - x).pow(2).sum(1)
        improved = (model(x_adv).argmax(1) != y) & (l2 < best_l2)
        best[improved] = x_adv[improved]
    return best.clamp(0.0, 1.0).detach()


def run_attack(model, x: torch.Tensor, y: torch.Tensor, config: AttackConfig) -> torch.Tensor:
    if config.method is Method.FGSM:
        return fgsm(model, x, y, config.epsilon)
    if config.method is Method.PGD:
        return pgd(model, x, y, config.epsilon, config.step_size, config.steps,
                   config.random_start, np.random.default_rng(config.rng_seed))
    return cw(model, x, y, config.cw_c, config.steps, config.cw_lr)


def evaluate_robustness(model, x: torch.Tensor, y: torch.Tensor,
                        attacks: Sequence[AttackConfig] = BENCHMARK,
                        batch_size: int = 512) -> dict:
    """Clean and per-attack accuracy (percent), plus mean and population std across attacks."""
    if len(x) == 0:
        raise DataError("robustness evaluation needs a non-empty test set")
    model.eval()

    def acc(xs):
        return 100.0 * float((torch.cat([model.predict(b) for b in xs]) == y).double().mean())

    chunks = [(x[i:i + batch_size], y[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    table = {"clean": acc([b for b, _ in chunks]), "attacks": {}}
    for cfg in attacks:
        adv = [run_attack(model, bx, by, cfg) for bx, by in chunks]
        table["attacks"][cfg.label] = acc(adv)
    values = np.array(list(table["attacks"].values()), dtype=np.float64)
    table["mean"] = float(values.mean()) if len(values) else float("nan")
    table["std"] = float(values.std()) if len(values) else float("nan")
    return table
