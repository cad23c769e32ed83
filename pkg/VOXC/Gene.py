import numpy as np
from VOXC.Errors import Input_Error

# Conv stack as (out_channels, kernel_side, pool_side); valid convolutions, floor pooling
FULL_CONV_LAYERS = [(64, 4, 2), (64, 4, 2), (64, 4, 1)]
SMALL_CONV_LAYERS = [(16, 4, 2), (32, 3, 2), (32, 2, 1)]
DEFAULT_HIDDEN = 3000
DESK_HIDDEN = 512


# Named parameter arrays of a network, views into one flat vector when built by Architecture
class Parameters(dict):
  def __init__(self, values: dict = None, batch: int = 0):
    super().__init__()
    self.batch = batch              # Training batch the values belong to
    if values is not None:
      self.update(values)

  # Convert self to flattened-numpy array representation
  def as_array(self) -> np.ndarray:
    return np.concatenate([param.ravel() for param in self.values()])

  # Re-point every entry at its slice of array (entries become views, no copy)
  def from_array(self, array: np.ndarray):
    index = 0
    for name, param in self.items():
      size = int(np.prod(param.shape))
      self[name] = array[index:index + size].reshape(param.shape)
      index += size
    if index != len(array):
      raise Input_Error(f"flat vector has {len(array)} values, parameters need {index}")
    return self

  def size(self) -> int:
    return int(sum(param.size for param in self.values()))


# One parameter tensor of the network and how to initialize it
class Layer_Spec:
  def __init__(self, shape: tuple, init: str = 'zeros', fan_in: int = 1, fan_out: int = 1):
    if init not in ('he', 'glorot', 'zeros'):
      raise Input_Error(f"unknown initializer '{init}'")
    self.shape = tuple(int(s) for s in shape)
    self.init = init
    self.fan_in = fan_in
    self.fan_out = fan_out

  # He: N(0, 2/fan_in) for ReLU layers; Glorot: U(+-sqrt(6/(fan_in+fan_out))) for the sigmoid layer
  def sample(self, rng: np.random.Generator) -> np.ndarray:
    if self.init == 'he':
      return rng.normal(0.0, np.sqrt(2.0 / self.fan_in), size=self.shape)
    if self.init == 'glorot':
      limit = np.sqrt(6.0 / (self.fan_in + self.fan_out))
      return rng.uniform(-limit, limit, size=self.shape)
    return np.zeros(self.shape)

  def to_json(self):
    return {'shape': list(self.shape), 'init': self.init, 'fan_in': self.fan_in, 'fan_out': self.fan_out}


# Layer layout of the completion network: conv stack then dense layers, last dense size = input_side^3
# Generates Parameters (the ordered Layer_Specs fix the flat vector layout)
class Architecture(dict):
  def __init__(self, input_side: int, conv_layers: list, dense_sizes: list):
    super().__init__()
    self.input_side = int(input_side)
    self.conv_layers = [tuple(int(v) for v in layer) for layer in conv_layers]
    self.dense_sizes = [int(n) for n in dense_sizes]
    self.validate()

    channels = 1
    for i, (out_ch, k, _) in enumerate(self.conv_layers):
      fan_in = channels * k ** 3
      self[f"conv{i}.weight"] = Layer_Spec((out_ch, channels, k, k, k), 'he', fan_in, out_ch * k ** 3)
      self[f"conv{i}.bias"] = Layer_Spec((out_ch,))
      channels = out_ch
    n_in = self.flat_size()
    for j, n_out in enumerate(self.dense_sizes):
      last = j == len(self.dense_sizes) - 1
      self[f"dense{j}.weight"] = Layer_Spec((n_in, n_out), 'glorot' if last else 'he', n_in, n_out)
      self[f"dense{j}.bias"] = Layer_Spec((n_out,))
      n_in = n_out

  def validate(self):
    if self.input_side < 1:
      raise Input_Error(f"input side must be positive, got {self.input_side}")
    for layer in self.conv_layers:
      if len(layer) != 3 or min(layer) < 1:
        raise Input_Error(f"conv layer must be (channels, kernel, pool) with all values >= 1, got {layer}")
    if not self.dense_sizes:
      raise Input_Error("architecture needs at least one dense layer")
    if min(self.dense_sizes) < 1:
      raise Input_Error(f"dense sizes must be positive, got {self.dense_sizes}")
    if self.dense_sizes[-1] != self.input_side ** 3:
      raise Input_Error(f"final dense size {self.dense_sizes[-1]} must equal input_side^3 = {self.input_side ** 3}")
    if min(self.spatial_sizes()) < 1:
      raise Input_Error(f"conv stack {self.conv_layers} does not fit a {self.input_side}^3 input")

  # Spatial side after each conv layer's pooling, starting with the input side
  def spatial_sizes(self) -> list[int]:
    sizes = [self.input_side]
    for _, k, pool in self.conv_layers:
      sizes.append((sizes[-1] - k + 1) // pool)
    return sizes

  def flat_size(self) -> int:
    channels = self.conv_layers[-1][0] if self.conv_layers else 1
    return channels * self.spatial_sizes()[-1] ** 3

  # Full 64-channel stack when it fits the grid, a smaller stack otherwise
  @classmethod
  def default(cls, input_side: int, hidden: int = DEFAULT_HIDDEN) -> 'Architecture':
    for conv in (FULL_CONV_LAYERS, SMALL_CONV_LAYERS):
      try:
        return cls(input_side, conv, [hidden, input_side ** 3])
      except Input_Error:
        continue
    return cls(input_side, [], [hidden, input_side ** 3])

  def parameter_count(self) -> int:
    return int(sum(np.prod(spec.shape) for spec in self.values()))

  # Called when a fresh model is needed
  # Inputs: seed
  # Outputs: new Parameters (views into one flat vector)
  def initialize(self, seed: int) -> Parameters:
    rng = np.random.default_rng(seed)
    params = Parameters({name: spec.sample(rng) for name, spec in self.items()})
    return params.from_array(params.as_array())

  # Zero-valued Parameters with this layout (gradient buffers)
  def zeros(self) -> Parameters:
    params = Parameters({name: np.zeros(spec.shape) for name, spec in self.items()})
    return params.from_array(np.zeros(self.parameter_count()))

  def to_json(self):
    return {'input_side': self.input_side, 'conv_layers': [list(c) for c in self.conv_layers],
            'dense_sizes': self.dense_sizes}

  @classmethod
  def from_json(cls, d: dict) -> 'Architecture':
    return cls(d['input_side'], d['conv_layers'], d['dense_sizes'])

  def __eq__(self, other):
    if not isinstance(other, Architecture):
      return NotImplemented
    return self.to_json() == other.to_json()

  def __hash__(self):
    return hash(str(self.to_json()))
