import numpy as np
import pytest
from VOXC.Algorithm import Train_Config
from VOXC.Completion import Completer, Strategy, mean_pair_jaccard
from VOXC.Data_Gen import Dataset, Split, Split_Config, build_dataset
from VOXC.Errors import Input_Error
from VOXC.File_IO import read_log, read_run_info
from VOXC.Gene import Architecture
from VOXC.Geometry import Camera_Config
from VOXC.Local import Synchronized_Trainer, batch_rng, eval_subsets, mean_jaccard, train
from VOXC.Network import init_model
from VOXC.Shapes import desk_shapes

# Family-count comparison runs at the small test resolution
SWEEP_SIDE = 16
SWEEP_CAMERA = Camera_Config(width=32, height=32)


def tiny_model(side: int, seed: int = 0):
  return init_model(Architecture.default(side, hidden=32), seed)


def test_batch_streams_are_reproducible():
  a = batch_rng(7, 3).integers(0, 100, size=10)
  b = batch_rng(7, 3).integers(0, 100, size=10)
  c = batch_rng(7, 4).integers(0, 100, size=10)
  np.testing.assert_array_equal(a, b)
  assert not np.array_equal(a, c)


def test_batch_streams_need_unsigned_seeds():
  top = 2 ** 64 - 1
  assert not np.array_equal(batch_rng(top, 0).random(4), batch_rng(0, top).random(4))
  for seed, batch in ((-1, 0), (0, -1), (2 ** 64, 0)):
    with pytest.raises(Input_Error):
      batch_rng(seed, batch)
  with pytest.raises(Input_Error):
    Train_Config(seed=-3).validate()


def test_eval_subsets_are_capped(small_dataset):
  subsets = eval_subsets(small_dataset, 3, seed=0)
  assert set(subsets) == set(Split)
  assert all(len(pairs) <= 3 for pairs in subsets.values())
  assert all(p.view.split is split for split, pairs in subsets.items() for p in pairs)


def test_history_layout(small_dataset):
  cfg = Train_Config(batch_size=4, learning_rate=1e-3, max_batches=4, eval_every=2, eval_samples=3, seed=0)
  model, history, peak = train(tiny_model(16), small_dataset, cfg)
  assert [row['batch'] for row in history] == [2, 2, 2, 4, 4, 4]
  assert [row['split'] for row in history[:3]] == [s.value for s in Split]
  assert all(0.0 <= row['jaccard'] <= 1.0 for row in history)
  assert model.adam.t == 4
  best = max(row['jaccard'] for row in history if row['split'] == Split.HoldoutModel.value)
  holdout = eval_subsets(small_dataset, 3, seed=0)[Split.HoldoutModel]
  assert mean_jaccard(peak, holdout) == pytest.approx(best)


def test_same_seed_same_history(small_dataset):
  cfg = Train_Config(batch_size=4, learning_rate=1e-3, max_batches=3, eval_every=1, eval_samples=3, seed=5)
  _, first, _ = train(tiny_model(16, 1), small_dataset, cfg)
  _, second, _ = train(tiny_model(16, 1), small_dataset, cfg)
  assert first == second


def test_zero_learning_rate_keeps_history_flat(small_dataset):
  cfg = Train_Config(batch_size=4, learning_rate=0.0, max_batches=3, eval_every=1, eval_samples=3, seed=0)
  model = tiny_model(16)
  start = model.vector.copy()
  model, history, _ = train(model, small_dataset, cfg)
  np.testing.assert_array_equal(model.vector, start)
  for split in Split:
    scores = {row['jaccard'] for row in history if row['split'] == split.value}
    assert len(scores) == 1


def test_no_batches_means_no_history(small_dataset):
  model, history, peak = train(tiny_model(16), small_dataset, Train_Config(max_batches=0))
  assert history == []
  np.testing.assert_array_equal(peak.vector, model.vector)


def test_run_logs(small_dataset, tmp_path):
  run = str(tmp_path / "run")
  cfg = Train_Config(batch_size=2, learning_rate=1e-3, max_batches=2, eval_every=1, eval_samples=2, seed=0)
  train(tiny_model(16), small_dataset, cfg, run)
  logs = read_log(run)
  assert len(logs) == 2 * len(Split)
  assert {'batch', 'split', 'jaccard', 'timestamp'} <= set(logs[0])
  info = read_run_info(run)
  assert info['train_config']['learning_rate'] == 1e-3
  assert info['architecture']['input_side'] == 16


def test_training_preconditions(small_dataset):
  with pytest.raises(Input_Error):
    train(tiny_model(16), Dataset(16), Train_Config())
  with pytest.raises(Input_Error):
    Synchronized_Trainer(tiny_model(24), small_dataset, Train_Config())
  only_holdout = Dataset(16, small_dataset.pairs(Split.HoldoutModel))
  with pytest.raises(Input_Error):
    train(tiny_model(16), only_holdout, Train_Config())
  with pytest.raises(Input_Error):
    train(tiny_model(16), small_dataset, Train_Config(seed=-1))


@pytest.mark.slow
def test_desk_training_beats_the_baselines(desk_dataset, desk_runs):
  pairs = desk_dataset.pairs(Split.TrainView)
  before = np.mean([mean_jaccard(initial, pairs) for initial, _, _ in desk_runs])
  after = np.mean([mean_jaccard(model, pairs) for _, model, _ in desk_runs])
  mirror = mean_pair_jaccard(Completer(Strategy.Mirror), pairs)
  partial = mean_pair_jaccard(Completer(Strategy.Partial), pairs)
  assert after > 0.60
  assert after - before >= 0.2
  assert after >= mirror + 0.10
  assert after >= partial + 0.10
  for _, _, history in desk_runs:
    scores = [row['jaccard'] for row in history if row['split'] == Split.TrainView.value]
    assert scores[-1] > scores[0]


def held_out_score(families: list, seed: int, test_set) -> float:
  split_cfg = Split_Config(holdout_model_frac=0.0, holdout_view_frac=0.0, views=(3, 3, 4), camera=SWEEP_CAMERA)
  dataset = build_dataset(desk_shapes(families, per_family=2, seed=seed), split_cfg, SWEEP_SIDE, seed=seed)
  cfg = Train_Config(batch_size=16, learning_rate=1e-3, max_batches=400, eval_every=400, eval_samples=20, seed=seed)
  model, _, _ = train(init_model(Architecture.default(SWEEP_SIDE, hidden=64), seed), dataset, cfg)
  return mean_jaccard(model, test_set)


@pytest.mark.slow
def test_more_families_generalize_better():
  wide = ['box', 'cube', 'sphere', 'cylinder', 'cone', 'torus']
  narrow = ['box', 'cube']
  split_cfg = Split_Config(holdout_model_frac=0.0, holdout_view_frac=0.0, views=(2, 2, 2), camera=SWEEP_CAMERA)
  test_set = build_dataset(desk_shapes(wide, per_family=1, seed=99), split_cfg, SWEEP_SIDE, seed=99).pairs()
  seeds = (0, 1, 2)
  wide_score = np.mean([held_out_score(wide, seed, test_set) for seed in seeds])
  narrow_score = np.mean([held_out_score(narrow, seed, test_set) for seed in seeds])
  assert wide_score > narrow_score
