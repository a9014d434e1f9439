"""Adversarial entailment model over the rule universe.

A convolutional generator maps a span's token matrix to a rule
indicator in [0,1]^|U|; a convolutional discriminator judges indicator
vectors against the extracted rule sets. Training alternates single
Adam updates of the discriminator (with a gradient penalty on
real/fake interpolates) and the generator (with a smoothness penalty
tying adjacent spans together and a class-balanced entailment term
anchoring each span to its own indicator row; see TrainConfig). At
dialog time the generator predicts the rule set entailed by the
conversation history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, NonFiniteLoss, ShapeMismatch

GENERATOR_FILTERS = 30
GENERATOR_WINDOW = 3
GENERATOR_FEATURE_SCALE = 15.0
DISC_FILTERS = 30
DISC_WIDTH = 5
DISC_DROPOUT = 0.1
MIN_DISC_LEN = 8
CHECKPOINT_KIND = "entailment-gan"


@dataclass(frozen=True)
class TrainConfig:
    adam_beta1: float = 0.5
    adam_beta2: float = 0.98
    lr_g: float = 1e-4
    lr_d: float = 1e-5
    weight_decay_d: float = 1e-4
    total_steps: int = 2000
    gp_coeff: float = 10.0
    smooth_coeff: float = 1.0
    # Weight of the supervised entailment term tying each span's output to
    # its own rule indicator. 0.0 restores the pure adversarial objective,
    # which cannot identify which indicator coordinate belongs to which
    # rule (any coordinate relabeling is an equally good optimum).
    entail_coeff: float = 3.0
    seed: int = 0
    non_saturating: bool = False
    batch_size: Optional[int] = None
    checkpoint_every: int = 500

    def __post_init__(self):
        if min(self.lr_g, self.lr_d) <= 0:
            raise ValueError("learning rates must be positive")
        if self.total_steps % 2 != 0:
            raise ValueError("total_steps must be even (strict alternation)")

    def to_dict(self) -> dict:
        return {
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "lr_g": self.lr_g,
            "lr_d": self.lr_d,
            "weight_decay_d": self.weight_decay_d,
            "total_steps": self.total_steps,
            "gp_coeff": self.gp_coeff,
            "smooth_coeff": self.smooth_coeff,
            "entail_coeff": self.entail_coeff,
            "seed": self.seed,
            "non_saturating": self.non_saturating,
            "batch_size": self.batch_size,
            "checkpoint_every": self.checkpoint_every,
        }


def _derived_seed(seed: int, stream: int) -> int:
    state = np.random.SeedSequence([seed, stream]).generate_state(1, dtype=np.uint64)
    return int(state[0] & 0x7FFF_FFFF_FFFF_FFFF)


class Generator(nn.Module):
    """Conv over token windows, max-pool, ReLU, linear map to |U| sigmoids."""

    def __init__(
        self,
        token_dim: int,
        universe_size: int,
        filters: int = GENERATOR_FILTERS,
        window: int = GENERATOR_WINDOW,
        feature_scale: float = GENERATOR_FEATURE_SCALE,
    ):
        super().__init__()
        self.token_dim = token_dim
        self.universe_size = universe_size
        self.window = window
        self.feature_scale = feature_scale
        self.conv = nn.Conv1d(token_dim, filters, window)
        self.out = nn.Linear(filters, universe_size)
        # Window responses get stddev ~feature_scale on unit-norm token
        # rows; the zero output layer starts every logit at exactly 0 so
        # Adam's per-coordinate movement budget is spent on separation
        # rather than on undoing a random initial pattern.
        bound = feature_scale * math.sqrt(3.0 / window)
        nn.init.uniform_(self.conv.weight, -bound, bound)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)
        self.double()

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.dim() != 2 or tokens.shape[1] != self.token_dim:
            raise ShapeMismatch(
                f"token matrix {tuple(tokens.shape)} does not match dim {self.token_dim}"
            )
        n = tokens.shape[0]
        if n < self.window:
            pad = torch.zeros(
                self.window - n, self.token_dim, dtype=tokens.dtype
            )
            tokens = torch.cat([tokens, pad], dim=0)
        x = tokens.t().unsqueeze(0)
        windows = self.conv(x)
        pooled = windows.max(dim=2).values
        return torch.sigmoid(self.out(F.relu(pooled))).squeeze(0)


def _dropout(x: torch.Tensor, p: float, rng: Optional[torch.Generator]) -> torch.Tensor:
    mask = (torch.rand(x.shape, generator=rng, dtype=x.dtype) >= p).to(x.dtype)
    return x * mask / (1.0 - p)


class Discriminator(nn.Module):
    """conv,conv,maxpool,conv,conv,maxpool, dropout, linear to one logit."""

    def __init__(
        self,
        universe_size: int,
        filters: int = DISC_FILTERS,
        width: int = DISC_WIDTH,
        dropout: float = DISC_DROPOUT,
    ):
        super().__init__()
        self.universe_size = universe_size
        self.eff_len = max(MIN_DISC_LEN, universe_size)
        self.dropout = dropout
        self.conv1 = nn.Conv1d(1, filters, width, padding="same")
        self.conv2 = nn.Conv1d(filters, filters, width, padding="same")
        self.conv3 = nn.Conv1d(filters, filters, width, padding="same")
        self.conv4 = nn.Conv1d(filters, filters, width, padding="same")
        pooled_len = (self.eff_len // 2) // 2
        self.fc = nn.Linear(filters * pooled_len, 1)
        self.double()

    def forward(
        self,
        indicator: torch.Tensor,
        train_mode: bool = False,
        rng: Optional[torch.Generator] = None,
    ) -> torch.Tensor:
        single = indicator.dim() == 1
        x = indicator.unsqueeze(0) if single else indicator
        if x.dim() != 2 or x.shape[1] != self.universe_size:
            raise ShapeMismatch(
                f"indicator shape {tuple(indicator.shape)} does not match "
                f"universe size {self.universe_size}"
            )
        if self.eff_len > self.universe_size:
            x = F.pad(x, (0, self.eff_len - self.universe_size))
        h = x.unsqueeze(1)
        h = F.relu(self.conv1(h))
        h = F.relu(self.conv2(h))
        h = F.max_pool1d(h, 2, 2)
        h = F.relu(self.conv3(h))
        h = F.relu(self.conv4(h))
        h = F.max_pool1d(h, 2, 2)
        if train_mode and self.dropout > 0.0:
            h = _dropout(h, self.dropout, rng)
        logits = self.fc(h.flatten(1)).squeeze(1)
        return logits[0] if single else logits


def _as_tensor(arr: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(arr, dtype=np.float64))


def generator_forward(tokens: np.ndarray, gen: Generator) -> np.ndarray:
    """Rule-indicator probabilities for one token matrix."""
    with torch.no_grad():
        return gen(_as_tensor(tokens)).numpy()


def discriminator_forward(
    indicator: np.ndarray,
    disc: Discriminator,
    train_mode: bool = False,
    rng: Optional[torch.Generator] = None,
) -> float:
    """Single logit for one indicator vector; deterministic in eval mode."""
    if train_mode:
        return float(disc(_as_tensor(indicator), True, rng).detach())
    with torch.no_grad():
        return float(disc(_as_tensor(indicator), False))


def _gp_tensor(
    disc: Discriminator,
    real: torch.Tensor,
    fake: torch.Tensor,
    eps: torch.Tensor,
    train_mode: bool,
    rng: Optional[torch.Generator],
) -> torch.Tensor:
    """Batched penalty: rows of real/fake are interpolated elementwise."""
    mixed = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    logits = disc(mixed, train_mode, rng)
    (grad,) = torch.autograd.grad(logits.sum(), mixed, create_graph=True)
    if mixed.dim() == 1:
        return (grad.norm(2) - 1.0) ** 2
    return ((grad.norm(2, dim=1) - 1.0) ** 2).mean()


def gradient_penalty(
    disc: Discriminator,
    real: np.ndarray,
    fake: np.ndarray,
    eps: Optional[float] = None,
    seed: int = 0,
) -> float:
    """(||grad_x D(x_hat)|| - 1)^2 at a random interpolate of real and fake."""
    real_t, fake_t = _as_tensor(real), _as_tensor(fake)
    if real_t.shape != fake_t.shape:
        raise ShapeMismatch(f"real {tuple(real_t.shape)} vs fake {tuple(fake_t.shape)}")
    if eps is None:
        rng = torch.Generator().manual_seed(_derived_seed(seed, 0))
        eps = float(torch.rand(1, generator=rng, dtype=torch.float64))
    penalty = _gp_tensor(disc, real_t, fake_t, torch.tensor(float(eps)), False, None)
    return float(penalty.detach())


def smoothness_penalty(outputs: Sequence[np.ndarray]) -> float:
    """Mean squared distance between consecutive indicator vectors."""
    if len(outputs) == 0:
        raise ValueError("need at least one output")
    if len(outputs) == 1:
        return 0.0
    total = 0.0
    for a, b in zip(outputs, outputs[1:]):
        d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
        total += float(d @ d)
    return total / (len(outputs) - 1)


def _smoothness_tensor(outputs: Sequence[torch.Tensor]) -> torch.Tensor:
    if len(outputs) == 1:
        return outputs[0].sum() * 0.0
    terms = [((a - b) ** 2).sum() for a, b in zip(outputs, outputs[1:])]
    return torch.stack(terms).mean()


@dataclass
class LossReport:
    step: int
    updated: str
    d_adv: Optional[float] = None
    gp: Optional[float] = None
    g_adv: Optional[float] = None
    sp: Optional[float] = None
    entail: Optional[float] = None

    def check_finite(self) -> "LossReport":
        for name in ("d_adv", "gp", "g_adv", "sp", "entail"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise NonFiniteLoss(f"{name} became {value} at step {self.step}")
        return self


def _balanced_bce(outputs: torch.Tensor, real: torch.Tensor) -> torch.Tensor:
    """Per-span entailment loss, positives upweighted by the class ratio."""
    pos = real.sum()
    total = real.numel()
    pos_weight = (total - pos) / pos if 0.0 < float(pos) < total else torch.tensor(1.0)
    p = outputs.clamp(1e-12, 1.0 - 1e-12)
    elementwise = -(pos_weight * real * torch.log(p) + (1.0 - real) * torch.log1p(-p))
    return elementwise.sum(dim=1).mean()


@dataclass
class GanTrainer:
    token_dim: int
    universe_size: int
    config: TrainConfig
    generator: Generator = field(init=False)
    discriminator: Discriminator = field(init=False)

    def __post_init__(self):
        if self.universe_size < 2:
            raise ValueError("universe must contain at least two rules")
        torch.manual_seed(_derived_seed(self.config.seed, 0xC0FFEE))
        self.generator = Generator(self.token_dim, self.universe_size)
        self.discriminator = Discriminator(self.universe_size)
        cfg = self.config
        self.opt_g = torch.optim.Adam(
            self.generator.parameters(), lr=cfg.lr_g, betas=(cfg.adam_beta1, cfg.adam_beta2)
        )
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(),
            lr=cfg.lr_d,
            betas=(cfg.adam_beta1, cfg.adam_beta2),
            weight_decay=cfg.weight_decay_d,
        )

    def _batch(
        self,
        spans: Sequence[np.ndarray],
        indicators: np.ndarray,
        rng: np.random.Generator,
    ) -> tuple[list[torch.Tensor], torch.Tensor]:
        n = len(spans)
        size = self.config.batch_size
        if size is None or size >= n:
            idx = np.arange(n)
        else:
            # Sorted sample keeps batch order aligned with span adjacency
            # for the smoothness term.
            idx = np.sort(rng.choice(n, size=size, replace=False))
        batch_spans = [_as_tensor(spans[i]) for i in idx]
        batch_real = _as_tensor(indicators[idx])
        return batch_spans, batch_real

    def step(
        self,
        batch_spans: Sequence[np.ndarray] | Sequence[torch.Tensor],
        batch_real: np.ndarray | torch.Tensor,
        step_index: int,
    ) -> LossReport:
        """One alternating update: even steps train D, odd steps train G."""
        spans = [t if isinstance(t, torch.Tensor) else _as_tensor(t) for t in batch_spans]
        real = batch_real if isinstance(batch_real, torch.Tensor) else _as_tensor(batch_real)
        if real.shape[0] != len(spans):
            raise ShapeMismatch("one real indicator row per span required")
        rng = torch.Generator().manual_seed(_derived_seed(self.config.seed, step_index))
        cfg = self.config
        if step_index % 2 == 0:
            with torch.no_grad():
                fakes = torch.stack([self.generator(s) for s in spans])
            logit_real = self.discriminator(real, True, rng)
            logit_fake = self.discriminator(fakes, True, rng)
            d_adv = F.logsigmoid(logit_real).mean() + F.logsigmoid(-logit_fake).mean()
            eps = torch.rand((len(spans), 1), generator=rng, dtype=torch.float64)
            gp = _gp_tensor(self.discriminator, real, fakes, eps, True, rng)
            loss = -d_adv + cfg.gp_coeff * gp
            self.opt_d.zero_grad()
            loss.backward()
            self.opt_d.step()
            return LossReport(
                step_index, "D", d_adv=float(d_adv.detach()), gp=float(gp.detach())
            ).check_finite()
        outputs = torch.stack([self.generator(s) for s in spans])
        logits = self.discriminator(outputs, True, rng)
        if cfg.non_saturating:
            g_adv = -F.logsigmoid(logits).mean()
        else:
            g_adv = F.logsigmoid(-logits).mean()
        sp = _smoothness_tensor(list(outputs))
        loss = g_adv + cfg.smooth_coeff * sp
        entail = None
        if cfg.entail_coeff > 0.0:
            entail = _balanced_bce(outputs, real)
            loss = loss + cfg.entail_coeff * entail
        self.opt_g.zero_grad()
        loss.backward()
        self.opt_g.step()
        return LossReport(
            step_index,
            "G",
            g_adv=float(g_adv.detach()),
            sp=float(sp.detach()),
            entail=None if entail is None else float(entail.detach()),
        ).check_finite()

    # -- checkpointing ----------------------------------------------------

    def _array_table(self, step: int) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        for prefix, module in (("g", self.generator), ("d", self.discriminator)):
            for name, tensor in module.state_dict().items():
                arrays[f"{prefix}.{name}"] = tensor.detach().numpy().copy()
        for prefix, opt in (("optg", self.opt_g), ("optd", self.opt_d)):
            state = opt.state_dict()["state"]
            for pid, entry in state.items():
                for key, value in entry.items():
                    arrays[f"{prefix}.{pid}.{key}"] = (
                        value.detach().numpy().copy()
                        if isinstance(value, torch.Tensor)
                        else np.asarray(value, dtype=np.float64)
                    )
        arrays["meta.step"] = np.asarray([step], dtype=np.int64)
        return arrays

    def save(self, path: str | Path, step: int) -> None:
        save_checkpoint(
            path,
            CHECKPOINT_KIND,
            {
                "token_dim": self.token_dim,
                "universe_size": self.universe_size,
                "train": self.config.to_dict(),
            },
            step,
            self.config.seed,
            self._array_table(step),
        )

    def _load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for prefix, module in (("g", self.generator), ("d", self.discriminator)):
            state = {
                name: torch.as_tensor(arrays[f"{prefix}.{name}"])
                for name in module.state_dict()
            }
            module.load_state_dict(state)
        for prefix, opt in (("optg", self.opt_g), ("optd", self.opt_d)):
            groups = opt.state_dict()["param_groups"]
            n_params = sum(len(g["params"]) for g in groups)
            state: dict[int, dict] = {}
            for pid in range(n_params):
                entry = {}
                for key in ("step", "exp_avg", "exp_avg_sq"):
                    name = f"{prefix}.{pid}.{key}"
                    if name in arrays:
                        arr = arrays[name]
                        entry[key] = (
                            torch.as_tensor(arr)
                            if key != "step"
                            else torch.as_tensor(arr, dtype=torch.float32).reshape(())
                        )
                if entry:
                    state[pid] = entry
            opt.load_state_dict({"state": state, "param_groups": groups})

    def _validate_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        exact = {"meta.step": (1,)}
        for prefix, module in (("g", self.generator), ("d", self.discriminator)):
            for name, tensor in module.state_dict().items():
                exact[f"{prefix}.{name}"] = tuple(tensor.shape)
        optional: dict[str, tuple[int, ...]] = {}
        for prefix, module in (("optg", self.generator), ("optd", self.discriminator)):
            for pid, param in enumerate(module.parameters()):
                optional[f"{prefix}.{pid}.step"] = ()
                optional[f"{prefix}.{pid}.exp_avg"] = tuple(param.shape)
                optional[f"{prefix}.{pid}.exp_avg_sq"] = tuple(param.shape)
        missing = sorted(set(exact) - set(arrays))
        unknown = sorted(set(arrays) - set(exact) - set(optional))
        wrong = sorted(
            name
            for name, arr in arrays.items()
            if name in exact and tuple(arr.shape) != exact[name]
        ) + sorted(
            name
            for name, arr in arrays.items()
            if name in optional and tuple(arr.shape) != optional[name]
        )
        if missing or unknown or wrong:
            raise CheckpointError(
                f"shape table mismatch: missing={missing} unknown={unknown} wrong={wrong}"
            )

    @classmethod
    def load(cls, path: str | Path) -> tuple["GanTrainer", int]:
        """Restore a trainer and the step count it was saved at."""
        payload = load_checkpoint(path, CHECKPOINT_KIND)
        config = payload["config"]
        trainer = cls(
            token_dim=config["token_dim"],
            universe_size=config["universe_size"],
            config=TrainConfig(**config["train"]),
        )
        trainer._validate_arrays(payload["arrays"])
        trainer._load_arrays(payload["arrays"])
        return trainer, payload["step"]


def train(
    spans: Sequence[np.ndarray],
    indicators: np.ndarray,
    token_dim: int,
    config: TrainConfig,
    checkpoint_dir: Optional[str | Path] = None,
    resume_from: Optional[str | Path] = None,
    report_sink: Optional[list[LossReport]] = None,
) -> GanTrainer:
    """Alternating adversarial training over (span, rule indicator) pairs.

    Deterministic given the config seed; checkpoints every
    config.checkpoint_every steps when checkpoint_dir is set, and a
    resumed run reproduces the uninterrupted one bit for bit.
    """
    indicators = np.asarray(indicators, dtype=np.float64)
    if len(spans) == 0 or indicators.shape[0] != len(spans):
        raise ValueError("need one indicator row per span")
    if indicators.shape[1] < 2:
        raise ValueError("universe must contain at least two rules")
    start_step = 0
    if resume_from is not None:
        trainer, start_step = GanTrainer.load(resume_from)
    else:
        trainer = GanTrainer(token_dim, indicators.shape[1], config)
    old_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        for step_index in range(start_step, trainer.config.total_steps):
            batch_rng = np.random.default_rng(
                np.random.SeedSequence([trainer.config.seed, 1 << 40, step_index])
            )
            batch_spans, batch_real = trainer._batch(spans, indicators, batch_rng)
            report = trainer.step(batch_spans, batch_real, step_index)
            if report_sink is not None:
                report_sink.append(report)
            done = step_index + 1
            if checkpoint_dir is not None and done % trainer.config.checkpoint_every == 0:
                trainer.save(Path(checkpoint_dir) / f"gan-{done:06d}.ckpt.json", done)
    finally:
        torch.set_num_threads(old_threads)
    return trainer


def predict_rules(
    history_token_matrices: Sequence[np.ndarray],
    gen: Generator,
    threshold: float = 0.5,
) -> set[int]:
    """Universe indices whose probability reaches the threshold.

    History sentences' token rows are concatenated in dialog order into
    one matrix before the forward pass.
    """
    if not history_token_matrices:
        raise ValueError("history must be non-empty")
    tokens = np.vstack([np.asarray(m, dtype=np.float64) for m in history_token_matrices])
    probs = generator_forward(tokens, gen)
    return {int(i) for i in np.flatnonzero(probs >= threshold)}
