"""
Trainings-Harness im Spielzeugmaßstab: Optimierer, Gradienten-Check,
Lehrer-Schüler-Aufgaben, LoRA/CoSA-Vergleich und (a,b)-Sweeps.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .adapter import (AdaptedLinear, CosaAdapter, LoraAdapter, layer_backward,
                      layer_forward, merge_delta)
from .budget import layer_params
from .config import TRAIN_DEFAULTS, worker_pool
from .errors import ArgumentError, NumericalError, ShapeError, TrainingError
from .models import LayerShape, MethodSpec, OptimizerConfig, ToyTaskSpec
from .numerics import frobenius_norm
from .projection import leading_block, make_pair
from .randgen import derive_seed, gaussian_matrix, new_stream

logger = logging.getLogger(__name__)

GRAD_CHECK_MAX_ENTRIES = 256
GRAD_CHECK_FLOOR = 1e-8


class OptimizerState:
    """Zustand für eine trainierbare Matrix; Momente starten bei null"""

    def __init__(self, config: OptimizerConfig, shape):
        self.config = config
        self.step = 0
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)

    @property
    def kind(self) -> str:
        return self.config.kind


def optimizer_step(state: OptimizerState, Y: np.ndarray, grad: np.ndarray, lr: float = None) -> np.ndarray:
    """
    Ein Update nach SGD, Adam (L2 im Gradienten) oder AdamW (entkoppelter
    Weight Decay). Liefert das neue Y; der Zustand wird fortgeschrieben.
    """
    Y = np.asarray(Y, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if Y.shape != grad.shape or Y.shape != state.m.shape:
        raise ShapeError("optimizer shapes differ", Y.shape, grad.shape, state.m.shape)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    cfg = state.config
    lr = cfg.lr if lr is None else lr
    state.step += 1
    if cfg.kind == "sgd":
        return Y - lr * (grad + cfg.weight_decay * Y)

    if cfg.kind == "adam" and cfg.weight_decay:
        grad = grad + cfg.weight_decay * Y
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = state.m / (1.0 - cfg.beta1 ** state.step)
    v_hat = state.v / (1.0 - cfg.beta2 ** state.step)
    updated = Y - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if cfg.kind == "adamw" and cfg.weight_decay:
        updated = updated - lr * cfg.weight_decay * Y
    return updated


def scheduled_lr(cfg: OptimizerConfig, step: int, total_steps: int) -> float:
    """Lernrate für Schritt step (0-basiert) mit linearem Warmup"""
    warmup = int(cfg.warmup_ratio * total_steps)
    if step < warmup:
        return cfg.lr * (step + 1) / warmup
    if cfg.schedule == "constant":
        return cfg.lr
    progress = (step - warmup) / max(1, total_steps - warmup)
    if cfg.schedule == "linear":
        return cfg.lr * (1.0 - progress)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: Optional[float]) -> Dict[str, np.ndarray]:
    """Skaliert alle Gradienten gemeinsam auf globale Norm <= max_norm"""
    if max_norm is None:
        return grads
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    return {name: g * (max_norm / total) for name, g in grads.items()}


def _half_sq_error_diff(Zp: np.ndarray, Zm: np.ndarray, target: np.ndarray) -> float:
    # ½‖Zp−T‖² − ½‖Zm−T‖² ohne Auslöschung
    return 0.5 * float(np.sum((Zp - Zm) * (Zp + Zm - 2.0 * target)))


def grad_check(layer: AdaptedLinear, X: np.ndarray, target: np.ndarray, step: float = 1e-5) -> float:
    """
    Zentrale Differenzen von ½‖Z − T‖² gegen die analytischen Gradienten.

    Liefert den größten eintragsweisen relativen Fehler (absoluter Boden 1e-8).
    """
    X = np.asarray(X, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    Z = layer_forward(layer, X)
    if target.shape != Z.shape:
        raise ShapeError("target shape mismatch", target.shape, Z.shape)
    analytic = layer_backward(layer, X, Z - target).as_dict()
    adapter = layer.adapter
    worst = 0.0
    for name, value in adapter.trainable().items():
        if value.size > GRAD_CHECK_MAX_ENTRIES:
            raise ArgumentError(f"grad_check limited to {GRAD_CHECK_MAX_ENTRIES} entries per matrix, "
                                f"{name} has {value.size}")
        original = value.copy()
        for idx in np.ndindex(value.shape):
            plus = original.copy()
            plus[idx] += step
            adapter.assign(name, plus)
            Zp = layer_forward(layer, X)
            minus = original.copy()
            minus[idx] -= step
            adapter.assign(name, minus)
            Zm = layer_forward(layer, X)
            numeric = _half_sq_error_diff(Zp, Zm, target) / (2.0 * step)
            exact = float(analytic[name][idx])
            scale = max(abs(exact), abs(numeric), GRAD_CHECK_FLOOR)
            worst = max(worst, abs(exact - numeric) / scale)
        adapter.assign(name, original)
    return worst


def random_layer(seed: int, m: int, n: int, a: int = None, b: int = None, r: int = None,
                 alpha_scale: float = 1.0) -> AdaptedLinear:
    """Zufällige Testschicht mit nicht-null Kern (CoSA bei a/b, LoRA bei r)"""
    W0 = gaussian_matrix(derive_seed(seed, 1), m, n)
    if r is not None:
        adapter = LoraAdapter(m, n, r, seed=derive_seed(seed, 0), alpha_scale=alpha_scale)
        adapter.B = gaussian_matrix(derive_seed(seed, 2), m, r)
    else:
        adapter = CosaAdapter(m, n, a, b, seed=derive_seed(seed, 0), alpha_scale=alpha_scale)
        adapter.Y = gaussian_matrix(derive_seed(seed, 2), a, b)
    return AdaptedLinear(W0, adapter)


def gradcheck_fixture(seed: int, kind: str = "cosa"):
    """Kleine Zufallsschicht mit Eingabe und Ziel; Dimensionen 2..8 aus dem Seed"""
    stream = new_stream(seed)
    m = 2 + stream.randbelow(7)
    n = 2 + stream.randbelow(7)
    batch = (1, 3)[stream.randbelow(2)]
    if kind == "lora":
        layer = random_layer(seed, m, n, r=1 + stream.randbelow(min(m, n)))
    elif kind == "cosa":
        layer = random_layer(seed, m, n, a=1 + stream.randbelow(m), b=1 + stream.randbelow(n))
    else:
        raise ArgumentError(f"unknown adapter kind {kind!r}")
    X = gaussian_matrix(derive_seed(seed, 3), n, batch)
    target = gaussian_matrix(derive_seed(seed, 4), m, batch)
    return layer, X, target


@dataclass
class TrainTrace:
    task: ToyTaskSpec
    losses: List[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    final_relative_error: float = float("nan")
    final_delta_error: float = float("nan")
    num_params: int = 0
    converged_step: Optional[int] = None
    wall_time: float = 0.0
    adapter: Optional[object] = field(default=None, repr=False)

    def window_means(self, window: int = 100) -> List[float]:
        return [float(np.mean(self.losses[i:i + window]))
                for i in range(0, len(self.losses) - window + 1, window)]

    def as_dict(self, include_losses: bool = True) -> Dict:
        body = {
            'task': self.task.model_dump(mode="json"),
            'steps': len(self.losses),
            'num_params': self.num_params,
            'initial_loss': self.initial_loss,
            'final_loss': self.final_loss,
            'final_relative_error': self.final_relative_error,
            'final_delta_error': self.final_delta_error,
            'converged_step': self.converged_step,
        }
        if include_losses:
            body['losses'] = list(self.losses)
        return body


@dataclass
class ToySetup:
    layer: AdaptedLinear
    teacher_delta: np.ndarray
    planted: Optional[np.ndarray]
    batches: List[np.ndarray]
    targets: List[np.ndarray]


def build_task(task: ToyTaskSpec, init: np.ndarray = None) -> ToySetup:
    """
    Lehrer, Datenpool und Schüler einer Aufgabe.

    Lehrer und Projektionen werden bei draw_dims gezogen; der Schüler nutzt
    den führenden (a, b)-Block. inspan: ΔW* = α·L·Y*·R; offspan: dichtes
    Gauß-ΔW* (im Allgemeinen außerhalb des Wörterbuch-Spanns).
    """
    da, db = task.draw_dims or (task.a, task.b)
    full = make_pair(derive_seed(task.seed, 0), task.m, task.n, da, db, orthonormalize=task.orthonormalize)
    pair = full if (da, db) == (task.a, task.b) else leading_block(full, task.a, task.b)
    W0 = gaussian_matrix(derive_seed(task.seed, 1), task.m, task.n) / math.sqrt(task.n)

    planted = None
    if task.kind == "inspan_recovery":
        planted = gaussian_matrix(derive_seed(task.seed, 2), da, db)
        teacher_delta = task.alpha_scale * (full.L @ planted @ full.R)
    else:
        teacher_delta = gaussian_matrix(derive_seed(task.seed, 3), task.m, task.n)

    pool = gaussian_matrix(derive_seed(task.seed, 4), task.n, task.batch_size * task.pool_batches)
    batches = [pool[:, k * task.batch_size:(k + 1) * task.batch_size] for k in range(task.pool_batches)]
    targets = [(W0 + teacher_delta) @ X for X in batches]

    if task.adapter == "cosa":
        adapter = CosaAdapter(task.m, task.n, task.a, task.b, seed=pair.seed,
                              alpha_scale=task.alpha_scale, Y=init, pair=pair)
    else:
        if init is not None:
            raise ArgumentError("warm start is only supported for CoSA adapters")
        adapter = LoraAdapter(task.m, task.n, task.lora_rank, seed=derive_seed(task.seed, 5),
                              alpha_scale=task.alpha_scale)
    return ToySetup(layer=AdaptedLinear(W0, adapter), teacher_delta=teacher_delta,
                    planted=planted if (da, db) == (task.a, task.b) else None,
                    batches=batches, targets=targets)


def _teacher_gap(setup: ToySetup) -> float:
    # Verlust des Schülers mit ΔW = 0
    losses = [0.5 * float(np.sum((setup.teacher_delta @ X) ** 2)) / X.shape[1] for X in setup.batches]
    return float(np.mean(losses))


def _pool_loss(setup: ToySetup) -> float:
    losses = [0.5 * float(np.sum((layer_forward(setup.layer, X) - T) ** 2)) / X.shape[1]
              for X, T in zip(setup.batches, setup.targets)]
    return float(np.mean(losses))


def run_toy(task: ToyTaskSpec, init: np.ndarray = None) -> TrainTrace:
    """
    Trainiert den Schüler vom Start (Y = 0 bzw. init) auf MSE über den Batch-Pool.

    Bezugsgröße ist max(Anfangsverlust, Verlust bei ΔW = 0). Divergenz
    (Verlust > 1e6·Bezug) oder nicht-endliche Verluste lösen TrainingError
    mit angehängtem Trace aus. Unter 1e-20·Bezug endet das Training vorzeitig,
    der Schritt steht in converged_step.
    """
    started = time.perf_counter()
    setup = build_task(task, init)
    layer = setup.layer
    adapter = layer.adapter
    trace = TrainTrace(task=task, num_params=adapter.num_params)
    trace.initial_loss = _pool_loss(setup)
    states = {name: OptimizerState(task.optimizer, value.shape)
              for name, value in adapter.trainable().items()}
    reference = max(trace.initial_loss, _teacher_gap(setup), 1e-300)
    limit = TRAIN_DEFAULTS['divergence_factor'] * reference
    floor = TRAIN_DEFAULTS['convergence_floor'] * reference

    for step in range(task.steps):
        X = setup.batches[step % len(setup.batches)]
        T = setup.targets[step % len(setup.targets)]
        residual = layer_forward(layer, X) - T
        loss = 0.5 * float(np.sum(residual * residual)) / X.shape[1]
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}", trace=trace)
        if loss > limit:
            raise TrainingError(f"training diverged at step {step} (loss {loss:.3e})", trace=trace)
        trace.losses.append(loss)
        if loss <= floor:
            trace.converged_step = step
            logger.debug(f"Schritt {step}: Verlust {loss:.3e} unter Konvergenzschwelle")
            break
        grads = clip_gradients(layer_backward(layer, X, residual / X.shape[1]).as_dict(),
                               task.optimizer.max_grad_norm)
        lr = scheduled_lr(task.optimizer, step, task.steps)
        for name, value in adapter.trainable().items():
            adapter.assign(name, optimizer_step(states[name], value, grads[name], lr))
        if step % 1000 == 0:
            logger.debug(f"Schritt {step}: Verlust {loss:.6e}, lr {lr:.3e}")

    trace.final_loss = _pool_loss(setup)
    delta = merge_delta(layer)
    teacher_norm = frobenius_norm(setup.teacher_delta)
    trace.final_delta_error = frobenius_norm(delta - setup.teacher_delta) / teacher_norm
    if adapter.kind == "cosa" and setup.planted is not None:
        trace.final_relative_error = frobenius_norm(adapter.Y - setup.planted) / frobenius_norm(setup.planted)
    else:
        trace.final_relative_error = trace.final_delta_error
    trace.adapter = adapter
    trace.wall_time = time.perf_counter() - started
    logger.info(f"Training {task.kind} ({task.adapter}, a={task.a}, b={task.b}): "
                f"Verlust {trace.initial_loss:.4e} -> {trace.final_loss:.4e}, "
                f"rel. Fehler {trace.final_relative_error:.3e} in {trace.wall_time:.1f}s")
    return trace


def compare_adapters(task: ToyTaskSpec, lora_rank: int, threads: int = 1) -> List[Dict]:
    """CoSA und LoRA auf identischem Lehrer; Verlust, ΔW-Fehler und Parameterzahl"""
    variants = [task.model_copy(update={'adapter': 'cosa'}),
                task.model_copy(update={'adapter': 'lora', 'lora_rank': lora_rank})]
    with worker_pool(threads) as pool:
        traces = list(pool.map(run_toy, variants))
    return [{'adapter': t.task.adapter, 'a': t.task.a, 'b': t.task.b,
             'r': t.task.lora_rank if t.task.adapter == 'lora' else None,
             'params': t.num_params, 'final_loss': t.final_loss,
             'final_delta_error': t.final_delta_error} for t in traces]


def sweep_ab(base: ToyTaskSpec, a_list: Sequence[int], b_list: Sequence[int], threads: int = 1) -> List[Dict]:
    """
    Gitter über (a, b) mit festem Lehrer.

    Alle Schüler sind führende Blöcke des bei (max a, max b) gezogenen Paares,
    die Hypothesenräume sind also verschachtelt.
    """
    if not a_list or not b_list:
        raise ArgumentError("a_list and b_list must be non-empty")
    draw = (max(a_list), max(b_list))
    grid = [(a, b) for a in a_list for b in b_list]
    tasks = [base.model_copy(update={'a': a, 'b': b, 'adapter': 'cosa'}) for a, b in grid]
    # model_copy validiert nicht; Dimensionen hier prüfen
    tasks = [ToyTaskSpec.model_validate(dict(t.model_dump(), draw_dims=draw)) for t in tasks]
    with worker_pool(threads) as pool:
        traces = list(pool.map(run_toy, tasks))
    rows = []
    for (a, b), trace in zip(grid, traces):
        rows.append({
            'a': a, 'b': b,
            'params': layer_params(MethodSpec(method="cosa", a=a, b=b), LayerShape(name="toy", m=base.m, n=base.n)),
            'final_loss': trace.final_loss,
            'final_delta_error': trace.final_delta_error,
        })
    return rows


def asymmetry(rows: Sequence[Dict]) -> List[Dict]:
    """Paare (a, b) / (b, a) im Gitter: Verlustdifferenz, ohne Richtung vorzugeben"""
    by_dims = {(row['a'], row['b']): row for row in rows}
    pairs = []
    for (a, b), row in by_dims.items():
        if a > b and (b, a) in by_dims:
            other = by_dims[(b, a)]
            pairs.append({'larger_a': f"{a}x{b}", 'larger_b': f"{b}x{a}",
                          'loss_larger_a': row['final_loss'], 'loss_larger_b': other['final_loss'],
                          'difference': row['final_loss'] - other['final_loss']})
    return pairs
