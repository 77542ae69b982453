"""The five training conditions for the fixed CNN.

random  : He-normal init, never trained (the architecture baseline).
bp      : plain SGD on softmax cross-entropy with exact gradients.
fa      : backprop with error transport through fixed random feedback
          tensors instead of the transposed forward weights. FC transport
          is a matrix product with B; conv transport is the transposed
          convolution with a fixed random filter bank of the forward
          kernel's shape. The loss gradient at the output is untouched,
          and BN/ReLU/pool routing stays local, so setting B to the
          forward transposes reproduces BP exactly.
pc      : hierarchical predictive coding on the conv stack. Each level
          keeps a representation r_l on the post-block (post-pool) grid;
          learned prediction weights (transposed convolutions, stride 2)
          generate top-down predictions r_hat_{l-1} from r_l. Errors
          eps_l = r_l - r_hat_l define the energy F = sum_l ||eps_l||^2;
          inference runs T_inf explicit gradient-descent steps on F over
          the representations with the input clamped, then conv weights
          update Hebbian-style from (error, lower representation) pairs.
          FC1/FC2 are a backprop-trained readout on the settled top
          representation.
stdp    : activations become Bernoulli spike trains over T timesteps;
          each conv synapse updates from the first-spike timing
          difference of its pre/post units through the exponential
          LTP/LTD kernel, averaged over batch items and shared spatial
          positions. FC1/FC2 are again a backprop-trained readout.

All rules are deterministic given (seed, config, dataset order): RNG use
is split into named streams (init / order / spikes / feedback / pc_init)
so enabling one consumer cannot perturb another.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ops
from .errors import ConfigurationError, TrainingDivergedError
from .network import (
    DEFAULT_CHANNELS,
    NetworkState,
    apply_sgd,
    backward,
    forward,
    forward_cached,
    init_he_normal,
)
from .ops import ConvSpec
from .seeding import named_rng

log = logging.getLogger(__name__)

RULES = ("random", "bp", "fa", "pc", "stdp")


@dataclass
class LearningRuleConfig:
    """One training condition plus its hyperparameters."""

    rule: str
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.01            # BP/FA steps and every BP-trained readout
    pc_t_inf: int = 10
    pc_alpha: float = 0.02
    pc_eta_w: float = 1e-4
    stdp_t: int = 10
    stdp_tau_plus_ms: float = 20.0
    stdp_tau_minus_ms: float = 20.0
    stdp_a_plus: float = 0.003
    stdp_a_minus: float = 0.003
    stdp_lr: float = 5e-4
    stdp_timestep_ms: float = 2.0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown rule {self.rule!r}; known rules: {RULES}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError(
                f"epochs must be >= 0 and batch_size >= 1, got {self.epochs}/{self.batch_size}"
            )
        if self.pc_t_inf < 1:
            raise ConfigurationError(f"pc_t_inf must be >= 1, got {self.pc_t_inf}")
        if self.stdp_t < 1:
            raise ConfigurationError(f"stdp_t must be >= 1, got {self.stdp_t}")
        for name in ("lr", "pc_alpha", "pc_eta_w", "stdp_tau_plus_ms", "stdp_tau_minus_ms",
                     "stdp_a_plus", "stdp_a_minus", "stdp_lr", "stdp_timestep_ms"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0, got {getattr(self, name)}")


# ---------------------------------------------------------------------------
# Backprop / feedback alignment
# ---------------------------------------------------------------------------

def bp_step(state: NetworkState, batch, labels, lr: float):
    """One SGD step on softmax cross-entropy. Mutates `state`; returns (loss, logits)."""
    cache = forward_cached(state, batch, mode="train")
    loss, grad_logits = ops.softmax_xent(cache.logits, labels)
    grads = backward(state, cache, grad_logits)
    apply_sgd(state, grads, lr)
    return loss, cache.logits


@dataclass
class FeedbackWeights:
    """Fixed random error-transport tensors, one per trainable layer.

    fc2/fc1 have the transposed shapes of the forward matrices and are
    applied as `delta @ B`. conv entries share the forward kernel shape and
    replace the kernel in the transposed-convolution transport; conv[0]
    exists for shape symmetry but no error is transported below conv1.
    """

    fc2: np.ndarray
    fc1: np.ndarray
    conv: list

    def check_against(self, state: NetworkState) -> None:
        expect_fc2 = (state.fc2.w.shape[1], state.fc2.w.shape[0])
        expect_fc1 = (state.fc1.w.shape[1], state.fc1.w.shape[0])
        if self.fc2.shape != expect_fc2 or self.fc1.shape != expect_fc1:
            raise ConfigurationError(
                f"feedback shapes fc2 {self.fc2.shape} / fc1 {self.fc1.shape} do not mirror "
                f"forward transposes {expect_fc2} / {expect_fc1}"
            )
        for b, block in zip(self.conv, state.conv_blocks()):
            if b.shape != block.w.shape:
                raise ConfigurationError(
                    f"conv feedback {b.shape} does not match forward kernel {block.w.shape}"
                )


def make_feedback_weights(state: NetworkState, seed: int) -> FeedbackWeights:
    """Draw the run's fixed feedback tensors, He-scaled like the forward layers."""
    rng = named_rng(seed, "feedback")
    conv = []
    for block in state.conv_blocks():
        fan_in = block.spec.in_channels * block.spec.kernel_size ** 2
        conv.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=block.w.shape))
    fc1 = rng.normal(0.0, np.sqrt(2.0 / state.fc1.w.shape[0]),
                     size=(state.fc1.w.shape[1], state.fc1.w.shape[0]))
    fc2 = rng.normal(0.0, np.sqrt(2.0 / state.fc2.w.shape[0]),
                     size=(state.fc2.w.shape[1], state.fc2.w.shape[0]))
    return FeedbackWeights(fc2=fc2, fc1=fc1, conv=conv)


def feedback_from_transposes(state: NetworkState) -> FeedbackWeights:
    """Feedback tensors equal to the forward transposes, under which the FA
    backward reduces exactly to BP. (A conv kernel is its own transport
    tensor: the transposed convolution reuses the kernel as stored.)"""
    return FeedbackWeights(
        fc2=state.fc2.w.T.copy(),
        fc1=state.fc1.w.T.copy(),
        conv=[b.w.copy() for b in state.conv_blocks()],
    )


def fa_step(state: NetworkState, feedback: FeedbackWeights, batch, labels, lr: float):
    """One feedback-alignment step: BP's update rule with B-transported deltas."""
    feedback.check_against(state)
    cache = forward_cached(state, batch, mode="train")
    loss, grad_logits = ops.softmax_xent(cache.logits, labels)
    grads = backward(state, cache, grad_logits, feedback=feedback)
    apply_sgd(state, grads, lr)
    return loss, cache.logits


# ---------------------------------------------------------------------------
# Predictive coding
# ---------------------------------------------------------------------------

@dataclass
class PcState:
    """Prediction weights of the generative (top-down) pathway.

    p[i] predicts level i from level i+1 through a stride-2 transposed
    convolution; specs[i] is the matching forward-direction geometry
    (level i grid -> level i+1 grid).
    """

    p: list
    specs: list


def init_pc_state(state: NetworkState, seed: int) -> PcState:
    rng = named_rng(seed, "pc_init")
    dims = (state.in_channels,) + state.channels
    p, specs = [], []
    for i in range(3):
        spec = ConvSpec(in_channels=dims[i], out_channels=dims[i + 1],
                        kernel_size=2, stride=2, padding=0)
        fan_in = dims[i + 1] * spec.kernel_size ** 2
        p.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=spec.weight_shape))
        specs.append(spec)
    return PcState(p=p, specs=specs)


def pc_errors(pc: PcState, reps):
    """Top-down predictions and errors eps_l = r_l - r_hat_l for every
    predicted level (all but the top)."""
    eps = []
    for i in range(len(pc.p)):
        r_hat = ops.conv2d_input_grad(reps[i + 1], pc.p[i], pc.specs[i], reps[i].shape[2:])
        eps.append(reps[i] - r_hat)
    return eps


def pc_energy(eps) -> float:
    return float(sum(np.sum(e * e) for e in eps))


def pc_representation_grads(pc: PcState, eps):
    """dF/dr_l for the free levels l = 1..L, with F = sum_l ||eps_l||^2.

    Level l feels its own error (2*eps_l, absent at the top) minus the
    back-projected error of the level it predicts (the adjoint of the
    transposed convolution is the forward convolution).
    """
    top = len(pc.p)
    grads = []
    for l in range(1, top + 1):
        zero_bias = np.zeros(pc.specs[l - 1].out_channels)
        g = -2.0 * ops.conv2d_forward(eps[l - 1], pc.p[l - 1], zero_bias, pc.specs[l - 1])
        if l < top:
            g = g + 2.0 * eps[l]
        grads.append(g)
    return grads


def pc_inference(pc: PcState, reps, t_inf: int, alpha: float):
    """Run t_inf gradient-descent steps on F over r_1..r_3 (input clamped).

    Returns (settled representations, final errors, energy trace). The
    trace has t_inf + 1 entries: the energy before any step and after each
    step. Aborts if the energy becomes non-finite.
    """
    reps = [reps[0]] + [r.copy() for r in reps[1:]]
    eps = pc_errors(pc, reps)
    energies = [pc_energy(eps)]
    for _ in range(t_inf):
        grads = pc_representation_grads(pc, eps)
        for l, g in enumerate(grads, start=1):
            reps[l] = reps[l] - alpha * g
        eps = pc_errors(pc, reps)
        f = pc_energy(eps)
        if not np.isfinite(f):
            raise TrainingDivergedError("predictive-coding energy became non-finite")
        energies.append(f)
    return reps, eps, energies


def pc_infer_and_learn(state: NetworkState, pc: PcState, batch, labels,
                       cfg: LearningRuleConfig):
    """One predictive-coding pass over a batch. Mutates state and pc.

    (a) feedforward pass initialises the representations (train-mode BN,
        so running stats keep tracking the data);
    (b) T_inf inference steps settle r_1..r_3 under clamped input;
    (c) conv weights update from (eps_l, r_{l-1}) pairs at rate pc_eta_w,
        with the error routed through the block's pooling argmax; the top
        conv block has no top-down error and receives no update;
        prediction weights update from the matching (eps_{l-1}, r_l) pairs;
    (d) the FC readout takes one BP step on the settled top representation.

    Returns (readout loss, logits, energy trace).
    """
    cache = forward_cached(state, batch, mode="train")
    reps0 = [batch] + [c.out for c in cache.blocks]
    reps, eps, energies = pc_inference(pc, reps0, cfg.pc_t_inf, cfg.pc_alpha)
    B = batch.shape[0]

    blocks = state.conv_blocks()
    for l in (1, 2):  # eps_3 does not exist: conv3 keeps its weights
        routed = ops.maxpool2x2_backward(eps[l], cache.blocks[l - 1].pool_idx)
        dw = ops.conv2d_weight_grad(routed, reps[l - 1], blocks[l - 1].spec) / B
        blocks[l - 1].w += cfg.pc_eta_w * dw
    for i in range(3):
        dp = ops.conv2d_weight_grad(reps[i + 1], eps[i], pc.specs[i]) / B
        pc.p[i] += cfg.pc_eta_w * dp

    feats = ops.global_avg_pool(reps[3])
    loss, logits = _readout_step(state, feats, labels, cfg.lr)
    return loss, logits, energies


# ---------------------------------------------------------------------------
# STDP
# ---------------------------------------------------------------------------

def stdp_kernel(dt_ms, a_plus=0.003, a_minus=0.003, tau_plus_ms=20.0, tau_minus_ms=20.0):
    """Exponential LTP/LTD kernel of the timing difference dt = t_post - t_pre.

    dt > 0 -> +a_plus * exp(-dt/tau_plus); dt < 0 -> -a_minus * exp(dt/tau_minus);
    dt == 0 -> 0.
    """
    dt = np.asarray(dt_ms, dtype=float)
    out = np.zeros_like(dt)
    pos, neg = dt > 0, dt < 0
    out[pos] = a_plus * np.exp(-dt[pos] / tau_plus_ms)
    out[neg] = -a_minus * np.exp(dt[neg] / tau_minus_ms)
    return out if out.ndim else float(out)


def first_spike_times(rates, t_steps: int, rng) -> np.ndarray:
    """Sample Bernoulli spike trains over t_steps and return each unit's
    first spike step; units that never spike get the sentinel t_steps."""
    t = np.full(rates.shape, t_steps, dtype=np.int16)
    for step in range(t_steps):
        spikes = rng.random(rates.shape) < rates
        np.copyto(t, step, where=(t == t_steps) & spikes)
    return t


def _pair_kernel_table(cfg: LearningRuleConfig) -> np.ndarray:
    """K[t_post, t_pre] for steps 0..T-1 plus the never-spiked sentinel T."""
    T = cfg.stdp_t
    table = np.zeros((T + 1, T + 1))
    steps = np.arange(T)
    dt = (steps[:, None] - steps[None, :]) * cfg.stdp_timestep_ms
    table[:T, :T] = stdp_kernel(dt, cfg.stdp_a_plus, cfg.stdp_a_minus,
                                cfg.stdp_tau_plus_ms, cfg.stdp_tau_minus_ms)
    return table


def stdp_conv_delta(t_pre, t_post, spec: ConvSpec, cfg: LearningRuleConfig) -> np.ndarray:
    """Per-kernel-weight timing update, averaged over batch items and all
    shared spatial positions (never-spiked pairs contribute zero)."""
    B, O, Ho, Wo = t_post.shape
    k, s, p = spec.kernel_size, spec.stride, spec.padding
    table = _pair_kernel_table(cfg)
    if p:
        t_pre = np.pad(t_pre, ((0, 0), (0, 0), (p, p), (p, p)),
                       constant_values=cfg.stdp_t)  # padding never spikes
    total = np.zeros(spec.weight_shape)
    # chunk the batch so the [b,O,C,Ho,Wo] lookup stays small
    chunk = max(1, int(4e6) // max(1, O * spec.in_channels * Ho * Wo))
    for ki in range(k):
        for kj in range(k):
            for b0 in range(0, B, chunk):
                post = t_post[b0 : b0 + chunk]
                pre = t_pre[b0 : b0 + chunk, :, ki : ki + s * Ho : s, kj : kj + s * Wo : s]
                vals = table[post[:, :, None, :, :], pre[:, None, :, :, :]]
                total[:, :, ki, kj] += vals.sum(axis=(0, 3, 4))
    return total / (B * Ho * Wo)


def stdp_step(state: NetworkState, batch, labels, cfg: LearningRuleConfig, spike_rng):
    """One STDP pass over a batch: spike-timing updates for every conv
    kernel, then a BP readout step on the cached features. Mutates state."""
    cache = forward_cached(state, batch, mode="train")
    pre_maps = [batch, cache.blocks[0].out, cache.blocks[1].out]
    for block, c, pre in zip(state.conv_blocks(), cache.blocks, pre_maps):
        p_pre = pre / max(float(pre.max()), 1e-8)
        p_post = c.post_relu / max(float(c.post_relu.max()), 1e-8)
        t_pre = first_spike_times(p_pre, cfg.stdp_t, spike_rng)
        t_post = first_spike_times(p_post, cfg.stdp_t, spike_rng)
        block.w += cfg.stdp_lr * stdp_conv_delta(t_pre, t_post, block.spec, cfg)
    loss, logits = _readout_step(state, cache.gap, labels, cfg.lr)
    return loss, logits


# ---------------------------------------------------------------------------
# Shared readout, evaluation, training loop
# ---------------------------------------------------------------------------

def _readout_step(state: NetworkState, feats, labels, lr: float):
    """BP/SGD step on FC1+FC2 only, from fixed [B, C3] features."""
    fc1_pre = ops.affine_forward(feats, state.fc1.w, state.fc1.b)
    fc1_act = ops.relu_forward(fc1_pre)
    logits = ops.affine_forward(fc1_act, state.fc2.w, state.fc2.b)
    loss, grad_logits = ops.softmax_xent(logits, labels)
    grad_fc2_w = fc1_act.T @ grad_logits
    grad_fc2_b = grad_logits.sum(axis=0)
    delta = ops.relu_backward(grad_logits @ state.fc2.w.T, fc1_pre)
    grad_fc1_w = feats.T @ delta
    grad_fc1_b = delta.sum(axis=0)
    state.fc2.w -= lr * grad_fc2_w
    state.fc2.b -= lr * grad_fc2_b
    state.fc1.w -= lr * grad_fc1_w
    state.fc1.b -= lr * grad_fc1_b
    return loss, logits


def evaluate_accuracy(state: NetworkState, images, labels, batch_size: int = 256) -> float:
    """Eval-mode classification accuracy."""
    correct = 0
    for start in range(0, images.shape[0], batch_size):
        logits, _ = forward(state, images[start : start + batch_size], mode="eval")
        correct += int(np.sum(np.argmax(logits, axis=1) == labels[start : start + batch_size]))
    return correct / images.shape[0]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float | None


def _append_metrics(path, rows, rule: str, seed: int) -> None:
    path = Path(path)
    write_header = not path.exists()
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if write_header:
            w.writerow(["epoch", "loss", "train_acc", "test_acc", "rule", "seed"])
        for r in rows:
            test = "" if r.test_acc is None else repr(r.test_acc)
            w.writerow([r.epoch, repr(r.loss), repr(r.train_acc), test, rule, seed])


def train(config: LearningRuleConfig, dataset, seed: int, eval_set=None,
          metrics_path=None, channels=DEFAULT_CHANNELS, num_classes: int = 10):
    """Train one condition on a LabeledImageSet; returns the final NetworkState.

    rule="random" returns the He init untouched. Per-epoch loss/accuracy is
    logged and optionally appended to a metrics CSV. Raises
    TrainingDivergedError (with the epoch index) if the loss goes non-finite.
    """
    images, labels = dataset.images, dataset.labels
    if images.shape[0] == 0:
        raise ConfigurationError("training dataset is empty")
    state = init_he_normal(seed, channels=channels, num_classes=num_classes,
                           in_channels=images.shape[1])
    if config.rule == "random":
        log.info("rule=random: returning untrained He init (seed %d)", seed)
        return state

    feedback = make_feedback_weights(state, seed) if config.rule == "fa" else None
    pc = init_pc_state(state, seed) if config.rule == "pc" else None
    spike_rng = named_rng(seed, "spikes") if config.rule == "stdp" else None
    order_rng = named_rng(seed, "order")

    n = images.shape[0]
    history = []
    for epoch in range(config.epochs):
        perm = order_rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb, yb = images[idx], labels[idx]
            if config.rule == "bp":
                loss, logits = bp_step(state, xb, yb, config.lr)
            elif config.rule == "fa":
                loss, logits = fa_step(state, feedback, xb, yb, config.lr)
            elif config.rule == "pc":
                try:
                    loss, logits, _ = pc_infer_and_learn(state, pc, xb, yb, config)
                except TrainingDivergedError as e:
                    raise TrainingDivergedError(f"{e} (epoch {epoch})", epoch=epoch) from None
            else:  # stdp
                loss, logits = stdp_step(state, xb, yb, config, spike_rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}", epoch=epoch)
            total_loss += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == yb))
        rec = EpochRecord(
            epoch=epoch,
            loss=total_loss / n,
            train_acc=correct / n,
            test_acc=(evaluate_accuracy(state, eval_set.images, eval_set.labels)
                      if eval_set is not None else None),
        )
        history.append(rec)
        log.info("rule=%s seed=%d epoch=%d loss=%.4f train_acc=%.3f",
                 config.rule, seed, epoch, rec.loss, rec.train_acc)
    if metrics_path is not None:
        _append_metrics(metrics_path, history, config.rule, seed)
    return state
