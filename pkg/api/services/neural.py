# api/services/neural.py
"""
Réseau Q à deux flux en numpy : convolutions 3x3 (same, stride 1, ReLU) sur
le tenseur spatial, couche dense sur le vecteur stratégique, fusion dense puis
tête linéaire à 5 sorties. Gradients dérivés à la main, perte de Huber
pondérée, AdamW, écrêtage de norme globale et moyenne de Polyak.

Format des points de sauvegarde (.npz, version 1) :
  __meta__            chaîne JSON (format, version, pas global, NetworkSpec,
                      scalaires de l'optimiseur, dtype, métadonnées libres)
  theta/<nom>         paramètres en ligne
  target/<nom>        paramètres cibles
  opt_m/<nom>         premiers moments AdamW
  opt_v/<nom>         seconds moments AdamW
"""
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import CheckpointError, ShapeError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'netmapf-checkpoint'
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Section `network` de la RunConfig : tailles des couches et mise à l'échelle des entrées"""
    in_channels: int = 4
    view_size: int = 15
    vector_dim: int = 13
    conv_filters: Tuple[int, ...] = (32, 64, 64)
    kernel_size: int = 3
    vector_hidden: int = 64
    merge_hidden: int = 128
    n_actions: int = 5
    # 2 * rayon du champ de vision
    waypoint_scale: float = 14.0

    @property
    def flat_conv_size(self) -> int:
        return self.conv_filters[-1] * self.view_size * self.view_size

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes = {}
        channels = self.in_channels
        for layer, filters in enumerate(self.conv_filters, start=1):
            shapes[f'conv{layer}.w'] = (filters, channels, self.kernel_size, self.kernel_size)
            shapes[f'conv{layer}.b'] = (filters,)
            channels = filters
        shapes['vector.w'] = (self.vector_dim, self.vector_hidden)
        shapes['vector.b'] = (self.vector_hidden,)
        shapes['merge.w'] = (self.flat_conv_size + self.vector_hidden, self.merge_hidden)
        shapes['merge.b'] = (self.merge_hidden,)
        shapes['head.w'] = (self.merge_hidden, self.n_actions)
        shapes['head.b'] = (self.n_actions,)
        return shapes

    def input_scale(self) -> np.ndarray:
        """
        Facteurs appliqués au vecteur : (dx, dy) objectif, drapeau, puis points
        de passage. Le décalage d'objectif arrive déjà divisé par la diagonale
        de la carte ; seuls les points de passage sont remis à l'échelle ici.
        """
        scale = np.full(self.vector_dim, 1.0 / self.waypoint_scale)
        scale[:min(3, self.vector_dim)] = 1.0
        return scale


@dataclass
class NetworkParams:
    """Poids et biais nommés ; les instantanés publiés ne sont jamais modifiés"""
    spec: NetworkSpec
    tensors: Dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def names(self) -> List[str]:
        return list(self.spec.shapes())

    @property
    def dtype(self):
        return self.tensors['head.w'].dtype

    @property
    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> 'NetworkParams':
        return NetworkParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> 'NetworkParams':
        return NetworkParams(self.spec, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[name].ravel() for name in self.names])

    @classmethod
    def from_flat(cls, spec: NetworkSpec, flat: np.ndarray) -> 'NetworkParams':
        tensors, offset = {}, 0
        for name, shape in spec.shapes().items():
            size = int(np.prod(shape))
            if offset + size > flat.size:
                raise ShapeError(f"vecteur plat trop court pour {name}")
            tensors[name] = flat[offset:offset + size].reshape(shape).copy()
            offset += size
        if offset != flat.size:
            raise ShapeError(f"vecteur plat de {flat.size} valeurs, {offset} attendues")
        return cls(spec, tensors)


@dataclass
class OptimizerState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ForwardCache:
    batch_size: int
    conv_cols: List[np.ndarray] = field(default_factory=list)
    conv_pre: List[np.ndarray] = field(default_factory=list)
    vector_in: Optional[np.ndarray] = None
    vector_pre: Optional[np.ndarray] = None
    merge_in: Optional[np.ndarray] = None
    merge_pre: Optional[np.ndarray] = None
    merge_out: Optional[np.ndarray] = None


class Checkpoint(NamedTuple):
    params: NetworkParams
    target: NetworkParams
    optimizer: OptimizerState
    global_step: int
    extra: dict


# ============================================================================
# INITIALISATION
# ============================================================================

def init_network(seed: int, spec: NetworkSpec = NetworkSpec(), dtype=np.float32) -> NetworkParams:
    """Kaiming uniforme U(−√(6/fan_in), +√(6/fan_in)) pour les poids, biais nuls"""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in spec.shapes().items():
        if name.endswith('.b'):
            tensors[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
        bound = np.sqrt(6.0 / fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return NetworkParams(spec, tensors)


def init_optimizer(params: NetworkParams, lr: float = 1e-4, weight_decay: float = 1e-2,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(v) for k, v in params.tensors.items()},
        v={k: np.zeros_like(v) for k, v in params.tensors.items()},
        lr=lr, weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps,
    )


# ============================================================================
# PASSES AVANT / ARRIÈRE
# ============================================================================

def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    n, c, h, w = x.shape
    pad = kernel // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (kernel, kernel), axis=(2, 3))
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * kernel * kernel)


def _col2im(cols: np.ndarray, shape: Tuple[int, int, int, int], kernel: int) -> np.ndarray:
    n, c, h, w = shape
    pad = kernel // 2
    cols = cols.reshape(n, h, w, c, kernel, kernel)
    padded = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            padded[:, :, i:i + h, j:j + w] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return padded[:, :, pad:pad + h, pad:pad + w]


def _check_inputs(spec: NetworkSpec, spatial: np.ndarray, vector: np.ndarray):
    expected = (spec.in_channels, spec.view_size, spec.view_size)
    if spatial.ndim != 4 or spatial.shape[1:] != expected:
        raise ShapeError(f"entrée spatiale {spatial.shape}, (N, {expected[0]}, {expected[1]}, {expected[2]}) attendue")
    if vector.ndim != 2 or vector.shape[1] != spec.vector_dim:
        raise ShapeError(f"entrée vectorielle {vector.shape}, (N, {spec.vector_dim}) attendue")
    if spatial.shape[0] != vector.shape[0]:
        raise ShapeError(f"tailles de lot différentes : {spatial.shape[0]} et {vector.shape[0]}")


def forward(params: NetworkParams, spatial, vector) -> Tuple[np.ndarray, ForwardCache]:
    """Valeurs Q (N x n_actions) et cache des activations pour `backward`"""
    spec = params.spec
    dtype = params.dtype
    spatial = np.asarray(spatial)
    vector = np.asarray(vector)
    if spatial.ndim == 3:
        spatial = spatial[None]
    if vector.ndim == 1:
        vector = vector[None]
    _check_inputs(spec, spatial, vector)

    n = spatial.shape[0]
    cache = ForwardCache(batch_size=n)
    hidden = spatial.astype(dtype, copy=False)
    for layer in range(1, len(spec.conv_filters) + 1):
        weights = params[f'conv{layer}.w']
        filters = weights.shape[0]
        cols = _im2col(hidden, spec.kernel_size)
        pre = cols @ weights.reshape(filters, -1).T + params[f'conv{layer}.b']
        pre = pre.reshape(n, spec.view_size, spec.view_size, filters).transpose(0, 3, 1, 2)
        cache.conv_cols.append(cols)
        cache.conv_pre.append(pre)
        hidden = np.maximum(pre, 0)

    vector_in = vector.astype(dtype, copy=False) * spec.input_scale().astype(dtype)
    vector_pre = vector_in @ params['vector.w'] + params['vector.b']
    merge_in = np.concatenate([hidden.reshape(n, -1), np.maximum(vector_pre, 0)], axis=1)
    merge_pre = merge_in @ params['merge.w'] + params['merge.b']
    merge_out = np.maximum(merge_pre, 0)
    q_values = merge_out @ params['head.w'] + params['head.b']

    cache.vector_in = vector_in
    cache.vector_pre = vector_pre
    cache.merge_in = merge_in
    cache.merge_pre = merge_pre
    cache.merge_out = merge_out
    return q_values, cache


def backward(params: NetworkParams, cache: ForwardCache, grad_q: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients analytiques de tous les tenseurs à partir de dL/dQ"""
    spec = params.spec
    n = cache.batch_size
    grad_q = np.asarray(grad_q, dtype=params.dtype)
    if grad_q.shape != (n, spec.n_actions):
        raise ShapeError(f"dL/dQ de forme {grad_q.shape}, ({n}, {spec.n_actions}) attendue")
    grads = {}

    grads['head.w'] = cache.merge_out.T @ grad_q
    grads['head.b'] = grad_q.sum(axis=0)
    grad_merge_pre = (grad_q @ params['head.w'].T) * (cache.merge_pre > 0)
    grads['merge.w'] = cache.merge_in.T @ grad_merge_pre
    grads['merge.b'] = grad_merge_pre.sum(axis=0)
    grad_merge_in = grad_merge_pre @ params['merge.w'].T

    flat_size = spec.flat_conv_size
    grad_vector_pre = grad_merge_in[:, flat_size:] * (cache.vector_pre > 0)
    grads['vector.w'] = cache.vector_in.T @ grad_vector_pre
    grads['vector.b'] = grad_vector_pre.sum(axis=0)

    grad_hidden = grad_merge_in[:, :flat_size].reshape(
        n, spec.conv_filters[-1], spec.view_size, spec.view_size,
    )
    for layer in range(len(spec.conv_filters), 0, -1):
        weights = params[f'conv{layer}.w']
        filters, channels = weights.shape[:2]
        grad_pre = grad_hidden * (cache.conv_pre[layer - 1] > 0)
        grad_rows = grad_pre.transpose(0, 2, 3, 1).reshape(-1, filters)
        grads[f'conv{layer}.w'] = (grad_rows.T @ cache.conv_cols[layer - 1]).reshape(weights.shape)
        grads[f'conv{layer}.b'] = grad_rows.sum(axis=0)
        if layer > 1:
            grad_cols = grad_rows @ weights.reshape(filters, -1)
            grad_hidden = _col2im(
                grad_cols, (n, channels, spec.view_size, spec.view_size), spec.kernel_size,
            )
    return grads


def greedy_actions(params: NetworkParams, spatial, vector) -> np.ndarray:
    q_values, _ = forward(params, spatial, vector)
    return np.argmax(q_values, axis=1)


# ============================================================================
# PERTE ET OPTIMISATION
# ============================================================================

def huber_loss_and_grad(q_pred, targets, weights=None, delta: float = 1.0) -> Tuple[float, np.ndarray]:
    """L = (1/M)·Σ w_i·ℓ_δ(q_i − y_i) et ∂L/∂q_i = (w_i/M)·clip(q_i − y_i, −δ, δ)"""
    q_pred = np.asarray(q_pred, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if q_pred.shape != targets.shape:
        raise ShapeError(f"prédictions {q_pred.shape} et cibles {targets.shape} incompatibles")
    weights = np.ones_like(q_pred) if weights is None else np.asarray(weights, dtype=float)
    count = q_pred.size
    error = q_pred - targets
    magnitude = np.abs(error)
    per_sample = np.where(magnitude <= delta, 0.5 * error ** 2, delta * (magnitude - 0.5 * delta))
    loss = float(np.sum(weights * per_sample) / count)
    grad = weights * np.clip(error, -delta, delta) / count
    return loss, grad


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: float = 1.0) -> Dict[str, np.ndarray]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


def adamw_step(params: NetworkParams, grads: Dict[str, np.ndarray],
               opt: OptimizerState) -> Tuple[NetworkParams, OptimizerState]:
    """Pas AdamW à décroissance découplée : p ← p − lr·m̂/(√v̂ + ε) − lr·λ·p"""
    step = opt.step + 1
    correction1 = 1.0 - opt.beta1 ** step
    correction2 = 1.0 - opt.beta2 ** step
    tensors, first, second = {}, {}, {}
    for name, value in params.tensors.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(f"gradient {name} de forme {grad.shape}, {value.shape} attendue")
        m = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * grad
        v = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * grad * grad
        update = (m / correction1) / (np.sqrt(v / correction2) + opt.eps)
        tensors[name] = (value - opt.lr * update - opt.lr * opt.weight_decay * value).astype(value.dtype)
        first[name] = m.astype(value.dtype)
        second[name] = v.astype(value.dtype)
    return NetworkParams(params.spec, tensors), replace(opt, m=first, v=second, step=step)


def polyak_update(target: NetworkParams, online: NetworkParams, tau: float = 0.005) -> NetworkParams:
    """θ⁻ ← τ·θ + (1 − τ)·θ⁻, élément par élément"""
    tensors = {}
    for name, value in target.tensors.items():
        if online.tensors[name].shape != value.shape:
            raise ShapeError(f"tenseur {name} de formes différentes")
        tensors[name] = (tau * online.tensors[name] + (1.0 - tau) * value).astype(value.dtype)
    return NetworkParams(target.spec, tensors)


# ============================================================================
# POINTS DE SAUVEGARDE
# ============================================================================

def save_checkpoint(path, params: NetworkParams, target: NetworkParams, optimizer: OptimizerState,
                    global_step: int, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = asdict(params.spec)
    spec['conv_filters'] = list(spec['conv_filters'])
    meta = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'global_step': int(global_step),
        'dtype': np.dtype(params.dtype).name,
        'spec': spec,
        'optimizer': {
            'step': optimizer.step, 'lr': optimizer.lr, 'weight_decay': optimizer.weight_decay,
            'beta1': optimizer.beta1, 'beta2': optimizer.beta2, 'eps': optimizer.eps,
        },
        'extra': extra or {},
    }
    arrays = {'__meta__': np.array(json.dumps(meta))}
    for prefix, tensors in (('theta', params.tensors), ('target', target.tensors),
                            ('opt_m', optimizer.m), ('opt_v', optimizer.v)):
        for name, value in tensors.items():
            arrays[f'{prefix}/{name}'] = value
    with open(path, 'wb') as handle:
        np.savez(handle, **arrays)
    logger.info(f"Point de sauvegarde écrit : {path} (pas {global_step})")
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"point de sauvegarde introuvable : {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data['__meta__']))
            arrays = {key: data[key] for key in data.files if key != '__meta__'}
    except (OSError, ValueError, KeyError) as e:
        raise CheckpointError(f"point de sauvegarde illisible {path} : {e}") from e

    if meta.get('format') != CHECKPOINT_FORMAT or meta.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"format {meta.get('format')} v{meta.get('version')} non pris en charge "
            f"(attendu {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})"
        )
    spec_fields = {f.name for f in fields(NetworkSpec)}
    spec_data = {k: v for k, v in meta['spec'].items() if k in spec_fields}
    spec_data['conv_filters'] = tuple(spec_data.get('conv_filters', NetworkSpec.conv_filters))
    spec = NetworkSpec(**spec_data)

    def collect(prefix):
        tensors = {}
        for name, shape in spec.shapes().items():
            key = f'{prefix}/{name}'
            if key not in arrays:
                raise CheckpointError(f"tenseur manquant dans {path} : {key}")
            if arrays[key].shape != shape:
                raise CheckpointError(f"tenseur {key} de forme {arrays[key].shape}, {shape} attendue")
            tensors[name] = arrays[key]
        return tensors

    scalars = meta['optimizer']
    optimizer = OptimizerState(
        m=collect('opt_m'), v=collect('opt_v'), step=int(scalars['step']), lr=scalars['lr'],
        weight_decay=scalars['weight_decay'], beta1=scalars['beta1'], beta2=scalars['beta2'],
        eps=scalars['eps'],
    )
    return Checkpoint(
        params=NetworkParams(spec, collect('theta')),
        target=NetworkParams(spec, collect('target')),
        optimizer=optimizer,
        global_step=int(meta['global_step']),
        extra=meta.get('extra', {}),
    )
