"""Tensor neural network ansatz for 1D soft-Coulomb systems.

Mode j of the ansatz is a fully connected tanh subnetwork r -> (ψ_1j(r), ..., ψ_pj(r)).
The losses touch the networks only through their values and first
derivatives on the quadrature nodes, so the gradient is a reverse pass over
the quadrature contractions followed by a reverse pass through each
subnetwork's forward-mode derivative computation.
"""
import math
import time
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from config.models import System1D, TnnArch, TrainConfig
from services.optimizer import Adam, get_scheduler
from services.quantum1d import (
    QuadratureGrid,
    SeparableContraction,
    SeparableFunction,
    overlap,
    swap_penalty,
)
from utils.errors import (
    AnnihilatedAnsatzError,
    ConfigError,
    DegenerateNormError,
    NonFiniteGradientError,
    OrderLimitError,
    TrainingDivergedError,
)
from utils.logger import setup_logger
from utils.permutations import all_permutations

logger = setup_logger(__name__)

MAX_ANTISYM_ORDER = 6
DIVERGENCE_LIMIT = 1e8
ANNIHILATION_RATIO = 1e-10
INIT_RETRIES = 5

Layer = Tuple[np.ndarray, np.ndarray]


def layer_shapes(arch: TnnArch) -> List[Tuple[int, int]]:
    """(out, in) of every layer of one subnetwork, output layer last"""
    shapes = []
    fan_in = 1
    for _ in range(arch.hidden_layers):
        shapes.append((arch.width, fan_in))
        fan_in = arch.width
    shapes.append((arch.rank, fan_in))
    return shapes


class ParameterBlock(NamedTuple):
    mode: int
    layer: int
    kind: str
    start: int
    stop: int
    is_output: bool


@dataclass(frozen=True, eq=False)
class TnnModel:
    arch: TnnArch
    modes: Tuple[Tuple[Layer, ...], ...]

    @property
    def parameters_per_mode(self) -> int:
        return sum(o * i + o for o, i in layer_shapes(self.arch))

    @property
    def size(self) -> int:
        return self.parameters_per_mode * self.arch.n_modes

    def flat(self) -> np.ndarray:
        return np.concatenate([
            np.concatenate([W.ravel(), b]) for layers in self.modes for W, b in layers
        ])

    def with_flat(self, vector: np.ndarray) -> "TnnModel":
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise ConfigError(f"parameter vector has shape {vector.shape}, expected ({self.size},)")
        modes, offset = [], 0
        for _ in range(self.arch.n_modes):
            layers = []
            for out_dim, in_dim in layer_shapes(self.arch):
                W = vector[offset:offset + out_dim * in_dim].reshape(out_dim, in_dim)
                offset += out_dim * in_dim
                b = vector[offset:offset + out_dim]
                offset += out_dim
                layers.append((W.copy(), b.copy()))
            modes.append(tuple(layers))
        return TnnModel(self.arch, tuple(modes))

    def layout(self) -> List[ParameterBlock]:
        blocks, offset = [], 0
        shapes = layer_shapes(self.arch)
        for mode in range(self.arch.n_modes):
            for layer, (out_dim, in_dim) in enumerate(shapes):
                is_output = layer == len(shapes) - 1
                blocks.append(ParameterBlock(mode, layer, "weight", offset, offset + out_dim * in_dim, is_output))
                offset += out_dim * in_dim
                blocks.append(ParameterBlock(mode, layer, "bias", offset, offset + out_dim, is_output))
                offset += out_dim
        return blocks


def tnn_init(arch: TnnArch, seed: int, constant: Optional[float] = None) -> TnnModel:
    """Uniform fan-in initialization on [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    With ``constant`` every weight and hidden bias is zero and the output
    biases equal ``constant``, so each ψ_ij is that constant.
    """
    rng = np.random.default_rng(seed)
    shapes = layer_shapes(arch)
    modes = []
    for _ in range(arch.n_modes):
        layers = []
        for layer, (out_dim, in_dim) in enumerate(shapes):
            if constant is not None:
                W = np.zeros((out_dim, in_dim))
                b = np.full(out_dim, float(constant)) if layer == len(shapes) - 1 else np.zeros(out_dim)
            else:
                bound = 1.0 / math.sqrt(in_dim)
                W = rng.uniform(-bound, bound, size=(out_dim, in_dim))
                b = rng.uniform(-bound, bound, size=out_dim)
            layers.append((W, b))
        modes.append(tuple(layers))
    return TnnModel(arch, tuple(modes))


class _ModeCache(NamedTuple):
    hidden: List[np.ndarray]
    dhidden: List[np.ndarray]
    dz: List[np.ndarray]


def _mode_forward(layers: Tuple[Layer, ...], x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, _ModeCache]:
    """Outputs (n, p) and their exact r-derivatives via forward-mode chain rule"""
    h = x[:, None]
    dh = np.ones_like(h)
    hidden, dhidden, dzs = [h], [dh], []
    for W, b in layers[:-1]:
        z = h @ W.T + b
        dz = dh @ W.T
        h = np.tanh(z)
        dh = (1.0 - h ** 2) * dz
        hidden.append(h)
        dhidden.append(dh)
        dzs.append(dz)
    W_out, b_out = layers[-1]
    return h @ W_out.T + b_out, dh @ W_out.T, _ModeCache(hidden, dhidden, dzs)


def _mode_backward(layers: Tuple[Layer, ...], cache: _ModeCache,
                   bar_y: np.ndarray, bar_dy: np.ndarray) -> List[Layer]:
    W_out, _ = layers[-1]
    h, dh = cache.hidden[-1], cache.dhidden[-1]
    grads: List[Layer] = [(bar_y.T @ h + bar_dy.T @ dh, bar_y.sum(axis=0))]
    bar_h = bar_y @ W_out
    bar_dh = bar_dy @ W_out
    for k in range(len(layers) - 2, -1, -1):
        W, _ = layers[k]
        h = cache.hidden[k + 1]
        dz = cache.dz[k]
        slope = 1.0 - h ** 2
        bar_dz = bar_dh * slope
        bar_h = bar_h + bar_dh * dz * (-2.0 * h)
        bar_z = bar_h * slope
        h_prev, dh_prev = cache.hidden[k], cache.dhidden[k]
        grads.append((bar_z.T @ h_prev + bar_dz.T @ dh_prev, bar_z.sum(axis=0)))
        bar_h = bar_z @ W
        bar_dh = bar_dz @ W
    grads.reverse()
    return grads


def _evaluate(model: TnnModel, grid: QuadratureGrid) -> Tuple[SeparableFunction, List[_ModeCache]]:
    values, derivs, caches = [], [], []
    for layers in model.modes:
        y, dy, cache = _mode_forward(layers, grid.nodes)
        values.append(y.T)
        derivs.append(dy.T)
        caches.append(cache)
    return SeparableFunction(np.stack(values, axis=1), np.stack(derivs, axis=1)), caches


def tnn_eval_modes(model: TnnModel, grid: QuadratureGrid) -> SeparableFunction:
    return _evaluate(model, grid)[0]


def antisymmetrized_function(sep: SeparableFunction) -> SeparableFunction:
    """Attach the N! signed permutations with prefactor 1/N!; values are shared."""
    N = sep.order
    if N > MAX_ANTISYM_ORDER:
        raise OrderLimitError(
            f"explicit antisymmetrization is limited to N <= {MAX_ANTISYM_ORDER}, got {N}",
            order=N, limit=MAX_ANTISYM_ORDER)
    permutations = tuple((perm.sign, perm.mapping) for perm in all_permutations(N))
    return SeparableFunction(sep.values, sep.derivs, permutations, 1.0 / math.factorial(N))


class PenalizedLoss(NamedTuple):
    loss: float
    energy: float
    penalty: float


class AntisymmetrizedLoss(NamedTuple):
    loss: float
    energy: float


def _contract(loss_tag: str, sep: SeparableFunction, system: System1D, grid: QuadratureGrid):
    if loss_tag == "antisymmetrized":
        sep = antisymmetrized_function(sep)
    elif loss_tag != "penalized":
        raise ConfigError(f"Unsupported loss '{loss_tag}'", loss=loss_tag)
    return sep, SeparableContraction(sep, grid, system)


def _loss_and_gradient(loss_tag: str, model: TnnModel, system: System1D, grid: QuadratureGrid,
                       beta: float, with_gradient: bool = True) -> Tuple[PenalizedLoss, Optional[np.ndarray]]:
    base, caches = _evaluate(model, grid)
    sep, contraction = _contract(loss_tag, base, system, grid)
    try:
        terms = contraction.energy_terms()
    except DegenerateNormError as e:
        if loss_tag == "antisymmetrized":
            raise AnnihilatedAnsatzError(e.norm)
        raise

    norm = terms.norm
    energy = terms.rayleigh_quotient
    penalty = 0.0
    if loss_tag == "penalized":
        penalty = float(np.real(contraction.value(contraction.penalty_monomials()))) / norm
    else:
        beta = 0.0
    loss = energy + beta * penalty
    evaluation = PenalizedLoss(loss, energy, penalty)
    if not with_gradient:
        return evaluation, None

    seeds = [
        (1.0 / norm, contraction.kinetic_monomials()),
        (1.0 / norm, contraction.one_body_monomials()),
        (1.0 / norm, contraction.two_body_monomials()),
        (beta / norm, contraction.penalty_monomials()),
        (-loss / norm, contraction.norm_monomials()),
    ]
    bar_values, bar_derivs = contraction.backward(seeds)

    pieces = []
    for j, layers in enumerate(model.modes):
        for gW, gb in _mode_backward(layers, caches[j], bar_values[:, j, :].T, bar_derivs[:, j, :].T):
            pieces.append(gW.ravel())
            pieces.append(gb)
    grad = np.concatenate(pieces)
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise NonFiniteGradientError(int(bad[0]), float(grad[bad[0]]))
    return evaluation, grad


def loss_penalized(model: TnnModel, system: System1D, grid: QuadratureGrid, beta: float) -> PenalizedLoss:
    if beta < 0:
        raise ConfigError(f"penalty beta must be >= 0, got {beta}", beta=beta)
    evaluation, _ = _loss_and_gradient("penalized", model, system, grid, beta, with_gradient=False)
    return evaluation


def loss_antisymmetrized(model: TnnModel, system: System1D, grid: QuadratureGrid) -> AntisymmetrizedLoss:
    evaluation, _ = _loss_and_gradient("antisymmetrized", model, system, grid, 0.0, with_gradient=False)
    return AntisymmetrizedLoss(evaluation.loss, evaluation.energy)


def gradient(loss_tag: str, model: TnnModel, system: System1D, grid: QuadratureGrid,
             config: TrainConfig) -> np.ndarray:
    """Exact gradient of the selected loss w.r.t. the flat parameter vector"""
    _, grad = _loss_and_gradient(loss_tag, model, system, grid, config.penalty_beta)
    return grad


def sign_flip_error(sep: SeparableFunction, samples: int = 50, seed: int = 0) -> float:
    """Worst relative |f(x) + f(x with r_i, r_j swapped)| over random tuples of distinct nodes"""
    rng = np.random.default_rng(seed)
    tuples = np.array([rng.choice(sep.n_nodes, sep.order, replace=False) for _ in range(samples)])
    reference = sep.evaluate_nodes(tuples)
    floor = 1e-6 * max(float(np.max(np.abs(reference))), 1e-300)
    worst = 0.0
    for i in range(sep.order):
        for j in range(i + 1, sep.order):
            swapped = tuples.copy()
            swapped[:, [i, j]] = swapped[:, [j, i]]
            flipped = sep.evaluate_nodes(swapped)
            error = np.abs(reference + flipped) / np.maximum(np.abs(reference), floor)
            worst = max(worst, float(np.max(error)))
    return worst


def prepare_initial_model(arch: TnnArch, grid: QuadratureGrid, seed: int) -> TnnModel:
    """Draw a model whose antisymmetrization is not annihilated, re-drawing the seed if needed"""
    for attempt in range(INIT_RETRIES + 1):
        model = tnn_init(arch, seed + attempt)
        sep = tnn_eval_modes(model, grid)
        plain = overlap(sep, sep, grid).real
        anti = overlap(antisymmetrized_function(sep), antisymmetrized_function(sep), grid).real
        if plain > 0 and math.sqrt(max(anti, 0.0)) >= ANNIHILATION_RATIO * math.sqrt(plain):
            return model
        logger.warning(f"⚠️ Seed {seed + attempt}: antisymmetrized ansatz is degenerate, re-drawing")
    raise AnnihilatedAnsatzError(0.0)


@dataclass
class TrainRecord:
    k: int
    loss: float
    energy: float
    penalty: float
    lr: float
    seconds: float


@dataclass
class TrainTrace:
    label: str
    records: List[TrainRecord] = field(default_factory=list)
    final_model: Optional[TnnModel] = field(default=None, repr=False)

    COLUMNS = ("iter", "loss", "energy", "penalty", "lr", "seconds")

    @property
    def final(self) -> TrainRecord:
        return self.records[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.k, r.loss, r.energy, r.penalty, r.lr, r.seconds) for r in self.records],
            columns=list(self.COLUMNS),
        )

    def to_csv(self, comments: Optional[List[str]] = None) -> str:
        header = "".join(f"# {line}\n" for line in (comments or []))
        return header + self.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n")


def train(arch: TnnArch, system: System1D, grid: QuadratureGrid, config: TrainConfig,
          initial_model: Optional[TnnModel] = None, label: Optional[str] = None) -> TrainTrace:
    """Adam on the configured loss; logs every eval_stride iterations and at the end."""
    if arch.n_modes != system.n_electrons:
        raise ConfigError(
            f"architecture has {arch.n_modes} modes, system has {system.n_electrons} electrons",
            modes=arch.n_modes, electrons=system.n_electrons)
    model = initial_model if initial_model is not None else prepare_initial_model(arch, grid, config.seed)
    scheduler = get_scheduler(config)
    params = model.flat()
    optimizer = Adam.from_config(params.size, config)
    trace = TrainTrace(label or config.loss)

    logger.info(f"🚀 Training {config.loss} loss on {system.name or 'system'}: N={arch.n_modes}, "
                f"p={arch.rank}, L={arch.hidden_layers}, m={arch.width}, {config.iterations} iterations")
    start = time.perf_counter()

    def record(k: int, evaluation: PenalizedLoss, current: TnnModel):
        penalty = evaluation.penalty
        if config.loss == "antisymmetrized":
            penalty = swap_penalty(antisymmetrized_function(tnn_eval_modes(current, grid)), grid)
        trace.records.append(TrainRecord(k, evaluation.loss, evaluation.energy, penalty,
                                          scheduler.lr_at(k), time.perf_counter() - start))
        logger.debug(f"iter {k}: loss={evaluation.loss:.10f} energy={evaluation.energy:.10f}")

    def check(k: int, evaluation: PenalizedLoss):
        if not math.isfinite(evaluation.loss) or abs(evaluation.loss) > DIVERGENCE_LIMIT:
            logger.error(f"❌ Loss diverged at iteration {k}: {evaluation.loss}")
            raise TrainingDivergedError(k, evaluation.loss, trace)

    for k in range(config.iterations):
        current = model.with_flat(params)
        evaluation, grad = _loss_and_gradient(config.loss, current, system, grid, config.penalty_beta)
        check(k, evaluation)
        if k % config.eval_stride == 0:
            record(k, evaluation, current)
        params = optimizer.step(params, grad, scheduler.lr_at(k))

    current = model.with_flat(params)
    evaluation, _ = _loss_and_gradient(config.loss, current, system, grid, config.penalty_beta,
                                       with_gradient=False)
    check(config.iterations, evaluation)
    record(config.iterations, evaluation, current)
    trace.final_model = current

    logger.info(f"✅ Finished {config.loss} run: final energy {trace.final.energy:.8f} "
                f"in {trace.final.seconds:.1f}s")
    return trace
