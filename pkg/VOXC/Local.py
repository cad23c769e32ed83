import logging
import os
import time
import numpy as np
from VOXC.Algorithm import Adam, Train_Config, SEED_LIMIT
from VOXC.Data_Gen import Dataset, Split
from VOXC.Errors import Input_Error
from VOXC.File_IO import write_log, write_error_log, write_run_info, LOG_DIR
from VOXC.Metrics import jaccard
from VOXC.Network import Model, backward, forward_batch

logger = logging.getLogger(__name__)

THRESHOLD = 0.5
EVAL_CHUNK = 16        # Pairs per forward batch during evaluation


# Reproducible batch generator: one Philox stream per (seed, batch index)
def batch_rng(seed: int, batch_index: int) -> np.random.Generator:
  if not (0 <= seed < SEED_LIMIT and 0 <= batch_index < SEED_LIMIT):
    raise Input_Error(f"seed and batch index must lie in [0, 2**64), got {seed} and {batch_index}")
  return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(batch_index)))


# Fixed evaluation subset per split (without replacement, at most n pairs each)
def eval_subsets(dataset: Dataset, n: int, seed: int) -> dict:
  rng = np.random.default_rng(seed)
  subsets = {}
  for split in Split:
    pairs = dataset.pairs(split)
    if not pairs:
      continue
    idx = np.sort(rng.choice(len(pairs), size=min(n, len(pairs)), replace=False))
    subsets[split] = [pairs[i] for i in idx]
  return subsets


# Mean Jaccard (threshold 0.5) of the model's completions over a list of pairs
def mean_jaccard(model: Model, pairs: list) -> float:
  scores = []
  for start in range(0, len(pairs), EVAL_CHUNK):
    chunk = pairs[start:start + EVAL_CHUNK]
    probs = forward_batch(model, np.stack([p.x.data for p in chunk]))
    scores += [jaccard(prob >= THRESHOLD, p.y.data) for prob, p in zip(probs, chunk)]
  return float(np.mean(scores))


# Single-process training loop: sample a batch, backprop, Adam step, evaluate every eval_every batches
class Synchronized_Trainer:
  def __init__(self, model: Model, dataset: Dataset, cfg: Train_Config, run_name: str = None):
    cfg.validate()
    if dataset.side != model.input_side:
      raise Input_Error(f"dataset side {dataset.side} does not match model input side {model.input_side}")
    self.train_pairs = dataset.pairs(Split.TrainView)
    if not self.train_pairs:
      raise Input_Error("dataset has no TrainView pairs")
    if run_name is not None:
      os.makedirs(os.path.join(run_name, LOG_DIR), exist_ok=True)

    self.run_name = run_name
    self.model = model
    self.cfg = cfg
    self.optimizer = Adam(cfg)
    self.subsets = eval_subsets(dataset, cfg.eval_samples, cfg.seed)
    self.history = []
    self.peak = None            # (jaccard, batch, model copy) at best HoldoutModel score
    self.x_train = np.stack([p.x.data for p in self.train_pairs])
    self.y_train = np.stack([p.y.data for p in self.train_pairs])

  def end_condition(self) -> bool:
    return self.optimizer.end_condition()

  def step(self) -> float:
    batch_index = self.optimizer.current_batch
    idx = batch_rng(self.cfg.seed, batch_index).integers(0, len(self.train_pairs), size=self.cfg.batch_size)
    grad = backward(self.model, self.x_train[idx], self.y_train[idx])
    self.optimizer.step(self.model, grad)
    return float(np.linalg.norm(grad))

  def evaluate(self):
    batch = self.optimizer.current_batch
    for split, pairs in self.subsets.items():
      record = {'batch': batch, 'split': split.value, 'jaccard': mean_jaccard(self.model, pairs)}
      self.history.append(record)
      if self.run_name is not None:
        write_log(self.run_name, dict(record, timestamp=time.strftime('%H:%M:%S', time.localtime())))
      if split is Split.HoldoutModel and (self.peak is None or record['jaccard'] > self.peak[0]):
        self.peak = (record['jaccard'], batch, self.model.copy())
    logger.info("batch %d: %s", batch,
                ", ".join(f"{r['split']}={r['jaccard']:.4f}" for r in self.history[-len(self.subsets):]))

  def run(self) -> tuple[Model, list, Model]:
    if self.run_name is not None:
      write_run_info(self.run_name, {'train_config': self.cfg, 'architecture': self.model.arch,
                                     'train_pairs': len(self.train_pairs),
                                     'eval_pairs': {s.value: len(p) for s, p in self.subsets.items()}})

    # Loop until end condition met
    while not self.end_condition():
      try:
        self.step()
      except Exception as e:
        if self.run_name is not None:
          write_error_log(self.run_name, {'batch': self.optimizer.current_batch, 'error': repr(e)})
        raise
      if self.optimizer.current_batch % self.cfg.eval_every == 0:
        self.evaluate()

    peak = self.model.copy() if self.peak is None else self.peak[2]
    return self.model, self.history, peak


# Train a model in place
# Inputs: model, dataset, Train_Config, optional run folder for logs
# Outputs: (final model, history of {batch, split, jaccard}, model at peak HoldoutModel Jaccard)
def train(model: Model, dataset: Dataset, cfg: Train_Config, run_name: str = None) -> tuple[Model, list, Model]:
  if len(dataset) == 0:
    raise Input_Error("empty dataset")
  return Synchronized_Trainer(model, dataset, cfg, run_name).run()
