import time
import numpy as np
import pytest
from VOXC.Completion import Strategy, Completer, Timing_Report, cluster, mirror_points, run_completer, complete, \
  complete_pair, complete_scene, mean_pair_jaccard
from VOXC.Config import THREADS_ENV
from VOXC.Data_Gen import Split
from VOXC.Errors import Input_Error
from VOXC.Gene import Architecture, DESK_HIDDEN
from VOXC.Grid import embed_pointcloud, grid_to_pointcloud
from VOXC.Metrics import jaccard
from VOXC.Network import init_model, forward
from VOXC.Post_Process import reconstruct


def blob(rng, center, n: int, spread: float = 0.002) -> np.ndarray:
  return rng.normal(scale=spread, size=(n, 3)) + np.asarray(center, dtype=np.float64)


def shell(rng, center, radius: float, n: int) -> np.ndarray:
  d = rng.normal(size=(n, 3))
  return radius * d / np.linalg.norm(d, axis=1, keepdims=True) + np.asarray(center, dtype=np.float64)


######## cluster ########

def test_two_separated_blobs(rng):
  a = blob(rng, [0, 0, 0.5], 100)
  b = blob(rng, [0.2, 0, 0.5], 100)
  clusters = cluster(np.vstack([a, b]), tol=0.02)
  assert [len(c) for c in clusters] == [100, 100]
  np.testing.assert_array_equal(clusters[0], a)


def test_chain_is_one_cluster():
  chain = np.column_stack([np.arange(20) * 0.01, np.zeros(20), np.zeros(20)])
  assert len(cluster(chain, tol=0.02)) == 1


def test_small_clusters_are_dropped(rng):
  assert cluster(blob(rng, [0, 0, 0], 5)) == []
  assert cluster(np.zeros((0, 3))) == []
  big, small = blob(rng, [0, 0, 0], 60), blob(rng, [1, 0, 0], 5)
  mid = blob(rng, [0, 1, 0], 30)
  clusters = cluster(np.vstack([mid, small, big]))
  assert [len(c) for c in clusters] == [60, 30]
  assert sum(len(c) for c in clusters) + len(small) == 95


def test_cluster_tolerance_must_be_positive(rng):
  with pytest.raises(Input_Error):
    cluster(blob(rng, [0, 0, 0], 20), tol=0.0)


######## complete ########

def test_partial_is_the_embedding(rng):
  pc = shell(rng, [0, 0, 0.5], 0.05, 2000)
  grid, t = complete(Completer(Strategy.Partial), pc, 16)
  expected, expected_t = embed_pointcloud(pc, 16)
  assert grid == expected
  assert t == expected_t


def test_mirror_completes_a_hemisphere(rng):
  pc = shell(rng, [0, 0, 0.5], 0.05, 40000)
  front = pc[pc[:, 2] <= 0.5]
  partial, _ = complete(Completer(Strategy.Partial), front, 16)
  mirrored, _ = complete(Completer(Strategy.Mirror), front, 16)
  assert np.all(mirrored.data[partial.data])
  ratio = mirrored.occupied_count() / partial.occupied_count()
  assert 1.5 <= ratio <= 2.5


def test_mirror_plane_passes_through_centroid():
  pc = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 3.0]])
  np.testing.assert_array_equal(mirror_points(pc), [[0.0, 0.0, 3.0], [1.0, 0.0, 1.0]])


def test_cnn_completion(rng):
  model = init_model(Architecture.default(16, hidden=16), seed=0)
  pc = shell(rng, [0, 0, 0.5], 0.05, 2000)
  result = run_completer(Completer.from_name("CNN", model), pc, 16)
  partial, t = embed_pointcloud(pc, 16)
  assert result.transform == t
  np.testing.assert_array_equal(result.raw.data, forward(model, partial).data)
  assert result.grid == result.raw.threshold(0.5)
  assert result.grid.voxel_size == pytest.approx(t.voxel_size)
  with pytest.raises(Input_Error):
    complete(Completer(Strategy.CNN, model), pc, 24)


def test_completer_construction():
  with pytest.raises(Input_Error):
    Completer(Strategy.CNN)
  with pytest.raises(Input_Error):
    Completer.from_name("poisson")
  assert Completer.from_name("Mirror").strategy is Strategy.Mirror
  with pytest.raises(Input_Error):
    complete(Completer(Strategy.Partial), np.zeros((0, 3)), 16)


######## dataset pairs ########

def test_pair_completion_uses_the_pair_frame(small_dataset):
  pair = small_dataset.pairs()[0]
  assert complete_pair(Completer(Strategy.Partial), pair) is pair.x
  observed = grid_to_pointcloud(pair.x, pair.transform)
  expected, _ = complete(Completer(Strategy.Mirror), observed, 16, pair.transform)
  assert complete_pair(Completer(Strategy.Mirror), pair) == expected
  mirrored = complete_pair(Completer(Strategy.Mirror), pair)
  assert np.all(mirrored.data[pair.x.data])


def test_mean_pair_jaccard(small_dataset):
  pairs = small_dataset.pairs()
  expected = np.mean([jaccard(pair.x, pair.y) for pair in pairs])
  assert mean_pair_jaccard(Completer(Strategy.Partial), pairs) == pytest.approx(expected)
  with pytest.raises(Input_Error):
    mean_pair_jaccard(Completer(Strategy.Partial), [])


@pytest.mark.slow
def test_trained_cnn_beats_mirror(desk_dataset, desk_runs):
  pairs = desk_dataset.pairs(Split.TrainView)
  mirror = mean_pair_jaccard(Completer(Strategy.Mirror), pairs)
  for _, model, _ in desk_runs:
    assert mean_pair_jaccard(Completer(Strategy.CNN, model), pairs) > mirror


@pytest.mark.slow
def test_cnn_fast_path_throughput(monkeypatch, rng):
  monkeypatch.setenv(THREADS_ENV, "1")
  model = init_model(Architecture.default(40, DESK_HIDDEN), seed=0)
  pc = shell(rng, [0, 0, 0.5], 0.08, 4000)
  c = Completer(Strategy.CNN, model)
  complete(c, pc, 40)                             # Warm-up
  start = time.perf_counter()
  grid, t = complete(c, pc, 40)
  forward_seconds = time.perf_counter() - start
  start = time.perf_counter()
  grid, t = complete(c, pc, 40)
  reconstruct(grid, None, t, fast=True)
  fast_seconds = time.perf_counter() - start
  assert forward_seconds < 2.0
  assert fast_seconds < 5.0


######## complete_scene ########

def test_timing_report():
  timing = Timing_Report(1.0, 2.0, 0.5, 3)
  assert timing.t_completion == 4.5
  assert "t_completion=4.5000" in timing.line()
  assert "n_non_target=3" in timing.line()


def test_scene_completion(rng):
  scene = np.vstack([shell(rng, [0.3, 0, 0.6], 0.03, 300), shell(rng, [0, 0, 0.6], 0.03, 600)])
  result = complete_scene(scene, Completer(Strategy.Partial), 16, target_index=0)
  assert len(result.meshes) == 2
  assert not any(m.is_empty() for m in result.meshes)
  assert result.timing.n_non_target == 1
  assert result.timing.t_completion >= result.timing.t_target


def test_scene_target_only(rng):
  scene = np.vstack([shell(rng, [0, 0, 0.6], 0.03, 600), shell(rng, [0.3, 0, 0.6], 0.03, 300)])
  result = complete_scene(scene, Completer(Strategy.Mirror), 16, target_index=1, fast_target=True,
                          all_objects=False)
  assert result.meshes[0].is_empty() and not result.meshes[1].is_empty()
  assert result.timing.n_non_target == 0
  assert result.timing.t_non_target == 0.0


def test_scene_target_out_of_range(rng):
  scene = shell(rng, [0, 0, 0.6], 0.03, 300)
  with pytest.raises(Input_Error, match="available clusters: 0: 300 points"):
    complete_scene(scene, Completer(Strategy.Partial), 16, target_index=3)
