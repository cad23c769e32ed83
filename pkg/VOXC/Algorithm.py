from abc import abstractmethod
from dataclasses import dataclass, asdict
import numpy as np
from VOXC.Errors import Input_Error, Numerical_Error
from VOXC.Network import Model

DEFAULT_LEARNING_RATE = 1e-4
DEFAULT_BATCH_SIZE = 32
DEFAULT_EVAL_SAMPLES = 50       # Pairs per split scored at every evaluation
SEED_LIMIT = 2 ** 64             # Seeds and batch indices are unsigned 64-bit words of the batch stream key


@dataclass
class Train_Config:
  batch_size: int = DEFAULT_BATCH_SIZE
  learning_rate: float = DEFAULT_LEARNING_RATE
  beta1: float = 0.9
  beta2: float = 0.999
  epsilon: float = 1e-8
  max_batches: int = 2000
  eval_every: int = 100
  eval_samples: int = DEFAULT_EVAL_SAMPLES
  seed: int = 0

  def validate(self):
    if self.batch_size < 1:
      raise Input_Error(f"batch_size must be >= 1, got {self.batch_size}")
    if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
      raise Input_Error(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
    if self.learning_rate < 0 or self.epsilon <= 0:
      raise Input_Error("learning rate must be >= 0 and epsilon > 0")
    if self.max_batches < 0 or self.eval_every < 1 or self.eval_samples < 1:
      raise Input_Error("max_batches must be >= 0, eval_every and eval_samples >= 1")
    if not 0 <= self.seed < SEED_LIMIT:
      raise Input_Error(f"seed must lie in [0, 2**64), got {self.seed}")
    return self

  def to_json(self):
    return asdict(self)


## Base class for optimizers ##
# Holds the batch counter and the end condition of a training run
class Optimizer_Base:
  def __init__(self, cfg: Train_Config):
    self.cfg = cfg.validate()
    self.current_batch = 0

  @abstractmethod
  # Update model parameters in place from a gradient
  def step(self, model: Model, grad: np.ndarray) -> Model:
    pass

  # End condition for run. Ends after cfg.max_batches batches
  def end_condition(self) -> bool:
    return self.current_batch >= self.cfg.max_batches


class Adam(Optimizer_Base):

  # Inputs: model, gradient (flat, model layout)
  # Outputs: Model (same object, updated)
  def step(self, model: Model, grad: np.ndarray) -> Model:
    self.current_batch += 1
    return adam_step(model, grad, self.cfg)


# Standard bias-corrected Adam update of model.vector, moments in model.adam (in place)
def adam_step(model: Model, grad: np.ndarray, cfg: Train_Config) -> Model:
  grad = np.asarray(grad, dtype=np.float64)
  if grad.shape != model.vector.shape:
    raise Input_Error(f"gradient has shape {grad.shape}, parameters have {model.vector.shape}")
  if not np.all(np.isfinite(grad)):
    raise Numerical_Error("gradient overflow")
  state = model.adam
  state.t += 1
  state.m *= cfg.beta1
  state.m += (1 - cfg.beta1) * grad
  state.v *= cfg.beta2
  state.v += (1 - cfg.beta2) * grad * grad
  m_hat = state.m / (1 - cfg.beta1 ** state.t)
  v_hat = state.v / (1 - cfg.beta2 ** state.t)
  model.vector -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)    # Views in model.params follow
  return model
