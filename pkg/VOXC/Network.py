from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit
from VOXC.Config import worker_count
from VOXC.Errors import Input_Error
from VOXC.Gene import Architecture, Parameters
from VOXC.Grid import Occupancy_Grid, Weighted_Grid

LOSS_CLAMP = 1e-7        # Predictions are clamped to [LOSS_CLAMP, 1 - LOSS_CLAMP] inside the loss only
OUTPUT_CLAMP = 1e-12     # Probabilities stay in [OUTPUT_CLAMP, 1 - OUTPUT_CLAMP] once the logits saturate
GRADIENT_CHUNK = 8       # Samples per gradient job


######## Layers ########
# Every layer is stateless: forward returns (output, cache), backward consumes the cache
# Activations are (batch, channels, x, y, z) for conv layers and (batch, features) for dense layers

# Valid (no padding) 3D cross-correlation, stride 1
class Conv3D:
  def __init__(self, name: str, kernel: int, input_grad: bool = True):
    self.name = name
    self.kernel = kernel
    self.input_grad = input_grad      # First layer never needs d(loss)/d(input)

  # Rows are output voxels (x-major), columns are (channel, i, j, k)
  def _columns(self, sample: np.ndarray) -> np.ndarray:
    k = self.kernel
    win = sliding_window_view(sample, (k, k, k), axis=(1, 2, 3))
    return win.transpose(1, 2, 3, 0, 4, 5, 6).reshape(-1, sample.shape[0] * k ** 3)

  def forward(self, params: Parameters, x: np.ndarray):
    w = params[f"{self.name}.weight"]
    b = params[f"{self.name}.bias"]
    o = x.shape[2] - self.kernel + 1
    w_mat = w.reshape(w.shape[0], -1)
    y = np.empty((x.shape[0], w.shape[0], o, o, o))
    for n in range(x.shape[0]):
      y[n] = (self._columns(x[n]) @ w_mat.T + b).T.reshape(w.shape[0], o, o, o)
    return y, x

  def backward(self, params: Parameters, grads: Parameters, x: np.ndarray, dy: np.ndarray):
    k = self.kernel
    w = params[f"{self.name}.weight"]
    n_out = w.shape[0]
    dw = grads[f"{self.name}.weight"].reshape(n_out, -1)
    grads[f"{self.name}.bias"] += dy.sum(axis=(0, 2, 3, 4))
    for n in range(x.shape[0]):
      dw += dy[n].reshape(n_out, -1) @ self._columns(x[n])
    if not self.input_grad:
      return None
    # Full correlation of the padded output gradient with the flipped kernel
    w_flip = w[:, :, ::-1, ::-1, ::-1].transpose(0, 2, 3, 4, 1).reshape(-1, w.shape[1])
    dy_pad = np.pad(dy, ((0, 0), (0, 0)) + ((k - 1, k - 1),) * 3)
    dx = np.empty_like(x)
    side = x.shape[2]
    for n in range(x.shape[0]):
      dx[n] = (self._columns(dy_pad[n]) @ w_flip).T.reshape(w.shape[1], side, side, side)
    return dx


class ReLU:
  def forward(self, params: Parameters, x: np.ndarray):
    mask = x > 0
    return x * mask, mask

  def backward(self, params: Parameters, grads: Parameters, mask: np.ndarray, dy: np.ndarray):
    return dy * mask


# Non-overlapping max pooling; trailing voxels that do not fill a window are dropped
class Max_Pool:
  def __init__(self, size: int):
    self.size = size

  def _windows(self, x: np.ndarray) -> np.ndarray:
    p = self.size
    a = x.shape[2] // p
    n = a * p
    xr = x[:, :, :n, :n, :n].reshape(x.shape[0], x.shape[1], a, p, a, p, a, p)
    return xr.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(x.shape[0], x.shape[1], a, a, a, p ** 3)

  def forward(self, params: Parameters, x: np.ndarray):
    win = self._windows(x)
    idx = np.argmax(win, axis=-1)[..., None]
    return np.take_along_axis(win, idx, axis=-1)[..., 0], (x.shape, idx)

  def backward(self, params: Parameters, grads: Parameters, cache, dy: np.ndarray):
    shape, idx = cache
    p = self.size
    a = dy.shape[2]
    n = a * p
    win = np.zeros(dy.shape + (p ** 3,))
    np.put_along_axis(win, idx, dy[..., None], axis=-1)     # Gradient routed to the argmax only
    dx = np.zeros(shape)
    dx[:, :, :n, :n, :n] = win.reshape(shape[0], shape[1], a, a, a, p, p, p) \
                              .transpose(0, 1, 2, 5, 3, 6, 4, 7).reshape(shape[0], shape[1], n, n, n)
    return dx


class Flatten:
  def forward(self, params: Parameters, x: np.ndarray):
    return x.reshape(x.shape[0], -1), x.shape

  def backward(self, params: Parameters, grads: Parameters, shape, dy: np.ndarray):
    return dy.reshape(shape)


class Dense:
  def __init__(self, name: str):
    self.name = name

  def forward(self, params: Parameters, x: np.ndarray):
    return x @ params[f"{self.name}.weight"] + params[f"{self.name}.bias"], x

  def backward(self, params: Parameters, grads: Parameters, x: np.ndarray, dy: np.ndarray):
    grads[f"{self.name}.weight"] += x.T @ dy
    grads[f"{self.name}.bias"] += dy.sum(axis=0)
    return dy @ params[f"{self.name}.weight"].T


# Layer chain for an architecture: [conv, relu, (pool)]*, flatten, [dense, relu]*, dense (logits)
def build_layers(arch: Architecture) -> list:
  layers = []
  for i, (_, k, pool) in enumerate(arch.conv_layers):
    layers += [Conv3D(f"conv{i}", k, input_grad=i > 0), ReLU()]
    if pool > 1:
      layers.append(Max_Pool(pool))
  layers.append(Flatten())
  for j in range(len(arch.dense_sizes)):
    layers.append(Dense(f"dense{j}"))
    if j < len(arch.dense_sizes) - 1:
      layers.append(ReLU())
  return layers


######## Model ########

@dataclass
class Adam_State:
  m: np.ndarray
  v: np.ndarray
  t: int = 0

  @classmethod
  def zeros(cls, n: int) -> 'Adam_State':
    return cls(np.zeros(n), np.zeros(n), 0)

  def copy(self) -> 'Adam_State':
    return Adam_State(self.m.copy(), self.v.copy(), self.t)


# Network weights as one flat vector plus named per-layer views, and the optimizer state
class Model:
  def __init__(self, arch: Architecture, vector: np.ndarray, adam: Adam_State = None):
    self.arch = arch
    self.vector = np.ascontiguousarray(vector, dtype=np.float64)
    if len(self.vector) != arch.parameter_count():
      raise Input_Error(f"parameter vector has {len(self.vector)} values, architecture needs {arch.parameter_count()}")
    self.params = arch.zeros().from_array(self.vector)
    self.adam = Adam_State.zeros(len(self.vector)) if adam is None else adam
    if self.adam.m.shape != self.vector.shape or self.adam.v.shape != self.vector.shape:
      raise Input_Error("optimizer state does not match the parameter vector")
    self.layers = build_layers(arch)

  @property
  def input_side(self) -> int:
    return self.arch.input_side

  def copy(self) -> 'Model':
    return Model(self.arch, self.vector.copy(), self.adam.copy())


# Fresh model: He-normal ReLU layers, Glorot-uniform sigmoid layer, zero biases
def init_model(arch: Architecture, seed: int) -> Model:
  return Model(arch, arch.initialize(seed).as_array())


# Accept an Occupancy_Grid, a (G, G, G) array or a (B, G, G, G) batch; returns (B, 1, G, G, G) floats
def _as_batch(model: Model, x) -> np.ndarray:
  data = x.data if isinstance(x, (Occupancy_Grid, Weighted_Grid)) else np.asarray(x)
  if data.ndim == 3:
    data = data[None]
  g = model.input_side
  if data.ndim != 4 or data.shape[1:] != (g, g, g):
    raise Input_Error(f"input dims {data.shape[-3:]} do not match network input side {g}")
  return data.astype(np.float64)[:, None]


def _logits(model: Model, xb: np.ndarray):
  caches = []
  a = xb
  for layer in model.layers:
    a, cache = layer.forward(model.params, a)
    caches.append(cache)
  return a, caches


# Sigmoid occupancy probabilities for a batch, shape (B, G, G, G), strictly inside (0, 1)
def forward_batch(model: Model, x) -> np.ndarray:
  xb = _as_batch(model, x)
  logits, _ = _logits(model, xb)
  g = model.input_side
  return np.clip(expit(logits), OUTPUT_CLAMP, 1 - OUTPUT_CLAMP).reshape(len(xb), g, g, g)


def forward(model: Model, x: Occupancy_Grid) -> Weighted_Grid:
  data = x.data if isinstance(x, Occupancy_Grid) else np.asarray(x)
  if data.ndim != 3:
    raise Input_Error(f"forward expects a single 3D grid, got shape {data.shape}")
  return Weighted_Grid(forward_batch(model, data)[0])


# Mean binary cross-entropy over all voxels (and batch entries)
def cross_entropy(y, y_pred) -> float:
  target = np.asarray(y.data if isinstance(y, (Occupancy_Grid, Weighted_Grid)) else y, dtype=np.float64)
  pred = np.asarray(y_pred.data if isinstance(y_pred, Weighted_Grid) else y_pred, dtype=np.float64)
  if target.shape != pred.shape:
    raise Input_Error(f"loss operands differ in shape: {target.shape} vs {pred.shape}")
  p = np.clip(pred, LOSS_CLAMP, 1 - LOSS_CLAMP)
  return float(np.mean(-(target * np.log(p) + (1 - target) * np.log(1 - p))))


# Gradient of the batch-mean loss for one slice of the batch; `total` is the full element count
def _chunk_gradient(model: Model, xb: np.ndarray, yb: np.ndarray, total: int) -> np.ndarray:
  logits, caches = _logits(model, xb)
  grads = model.arch.zeros()
  flat = grads.as_array()
  grads.from_array(flat)
  delta = (expit(logits) - yb.reshape(len(yb), -1)) / total     # Sigmoid + cross-entropy fused
  for layer, cache in zip(reversed(model.layers), reversed(caches)):
    delta = layer.backward(model.params, grads, cache, delta)
    if delta is None:
      break
  return flat


# Gradient of the mean cross-entropy w.r.t. every parameter (flat, in the model's vector layout)
# Inputs: model, x batch (or single grid), y batch (or single grid)
# Outputs: gradient vector
def backward(model: Model, x, y) -> np.ndarray:
  xb = _as_batch(model, x)
  yb = _as_batch(model, y)[:, 0]
  if len(xb) != len(yb):
    raise Input_Error(f"batch sizes differ: {len(xb)} inputs vs {len(yb)} targets")
  total = yb.size
  starts = range(0, len(xb), GRADIENT_CHUNK)
  if len(starts) == 1:
    return _chunk_gradient(model, xb, yb, total)
  with ThreadPoolExecutor(max_workers=worker_count()) as executor:
    parts = list(executor.map(lambda s: _chunk_gradient(model, xb[s:s + GRADIENT_CHUNK],
                                                        yb[s:s + GRADIENT_CHUNK], total), starts))
  grad = parts[0]
  for part in parts[1:]:
    grad += part                      # Fixed summation order regardless of completion order
  return grad


# Binary completion at the 0.5 threshold
def predict(model: Model, x: Occupancy_Grid, threshold: float = 0.5) -> Occupancy_Grid:
  return forward(model, x).threshold(threshold)
