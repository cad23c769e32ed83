import itertools
import numpy as np
import pytest
from scipy.optimize import lsq_linear
from VOXC.Completion import Completer, Strategy, complete_pair
from VOXC.Data_Gen import Split
from VOXC.Errors import Input_Error, Numerical_Error
from VOXC.Geometry import euler_characteristic, is_watertight, mesh_bounds
from VOXC.Grid import Occupancy_Grid, Embed_Transform, grid_to_pointcloud
from VOXC.Metrics import hausdorff_symmetric
from VOXC.Post_Process import Source, Merge_State, density_ratio, upsample, merge, fill_gaps, laplacian_energy, \
  laplacian_energy_gradient, free_band, qp_smooth, reconstruct


def lattice(n: int, spacing: float) -> np.ndarray:
  axis = np.arange(n) * spacing
  return np.stack(np.meshgrid(axis, axis, axis, indexing='ij'), axis=-1).reshape(-1, 3)


def solid_sphere(side: int, radius: float) -> Occupancy_Grid:
  c = (np.arange(side) + 0.5) - side / 2
  x, y, z = np.meshgrid(c, c, c, indexing='ij')
  return Occupancy_Grid(x * x + y * y + z * z <= radius * radius)


def column_state(column: list, d_ratio: int) -> Merge_State:
  data = np.array(column, dtype=bool).reshape(1, 1, -1)
  mask = np.where(data, Source.FromCNN, Source.Empty).astype(np.uint8)
  return Merge_State(d_ratio, Occupancy_Grid(data), mask)


######## density_ratio ########

def test_identical_clouds_give_one():
  pc = lattice(5, 0.001)
  assert density_ratio(pc, pc.copy()) == 1


def test_lattice_spacings():
  observed = lattice(10, 0.001)
  assert density_ratio(observed, lattice(5, 0.002)) == 2
  assert density_ratio(observed, lattice(4, 0.007)) == 4


def test_density_ratio_needs_ten_points():
  with pytest.raises(Input_Error):
    density_ratio(lattice(2, 1.0), lattice(5, 1.0))


######## upsample ########

# Corner vote of every new voxel evaluated one at a time
def brute_force_upsample(data: np.ndarray, d: int, proximity: bool) -> np.ndarray:
  n = data.shape
  out = np.zeros(tuple(s * d for s in n), dtype=bool)
  for idx in itertools.product(*(range(s * d) for s in n)):
    p = [(i + 0.5) / d for i in idx]
    c = [int(np.floor(q - 0.5)) for q in p]
    if all(0 <= ci and ci + 1 <= s - 1 for ci, s in zip(c, n)):
      t = [q - 0.5 - ci for q, ci in zip(p, c)]
      score = 0.0
      for dx, dy, dz in itertools.product((0, 1), repeat=3):
        sign = 1.0 if data[c[0] + dx, c[1] + dy, c[2] + dz] else -1.0
        l1 = ((1 - t[0]) if dx else t[0]) + ((1 - t[1]) if dy else t[1]) + ((1 - t[2]) if dz else t[2])
        score += sign * ((3.0 - l1) if proximity else l1)
      out[idx] = score >= 0
    else:
      out[idx] = data[tuple(int(np.floor(q)) for q in p)]
  return out


def test_upsample_by_one_is_identity(rng):
  g = Occupancy_Grid(rng.random((5, 5, 5)) < 0.5)
  assert upsample(g, 1) == g


def test_unanimous_corners():
  out = upsample(Occupancy_Grid(np.ones((2, 2, 2), dtype=bool)), 3)
  assert out.dims == (6, 6, 6)
  assert out.data.all()


def test_half_space_upsamples_to_plane():
  data = np.zeros((6, 6, 6), dtype=bool)
  data[:3] = True
  out = upsample(Occupancy_Grid(data), 2)
  np.testing.assert_array_equal(out.data, brute_force_upsample(data, 2, True))
  expected = np.zeros((12, 12, 12), dtype=bool)
  expected[:6] = True
  np.testing.assert_array_equal(out.data, expected)


@pytest.mark.parametrize("proximity", [True, False])
@pytest.mark.parametrize("side, d", [(2, 2), (3, 3), (4, 2), (5, 3), (6, 2)])
def test_upsample_matches_brute_force(side, d, proximity):
  data = np.random.default_rng(side * 10 + d).random((side, side, side)) < 0.5
  out = upsample(Occupancy_Grid(data), d, proximity)
  np.testing.assert_array_equal(out.data, brute_force_upsample(data, d, proximity))


def test_upsample_every_two_cube_pattern():
  for bits in itertools.product((False, True), repeat=8):
    data = np.array(bits).reshape(2, 2, 2)
    assert upsample(Occupancy_Grid(data), 1) == Occupancy_Grid(data)
    for d in (2, 3):
      for proximity in (True, False):
        out = upsample(Occupancy_Grid(data), d, proximity)
        np.testing.assert_array_equal(out.data, brute_force_upsample(data, d, proximity))


def test_upsample_scales_voxels():
  out = upsample(Occupancy_Grid(np.ones((3, 3, 3), dtype=bool), voxel_size=0.3, origin=[1, 2, 3]), 3)
  assert out.voxel_size == pytest.approx(0.1)
  np.testing.assert_array_equal(out.origin, [1, 2, 3])
  with pytest.raises(Input_Error):
    upsample(out, 0)


######## merge ########

def test_single_observed_point():
  ms = merge(Occupancy_Grid.empty(4), np.array([[1.5, 2.5, 0.5]]), Embed_Transform())
  assert ms.hi_grid.occupied_count() == 1
  assert ms.hi_grid.data[1, 2, 0]
  assert ms.source_mask[1, 2, 0] == Source.FromObserved
  assert np.count_nonzero(ms.source_mask) == 1


def test_disjoint_union_and_ties():
  cnn = Occupancy_Grid.empty(4)
  cnn.data[0, 0, 0] = True
  cnn.data[1, 1, 1] = True
  observed = np.array([[3.2, 3.2, 3.2], [1.5, 1.5, 1.5]])
  ms = merge(cnn, observed, Embed_Transform(), d_ratio=1)
  assert ms.hi_grid.occupied_count() == 3
  assert ms.source_mask[0, 0, 0] == Source.FromCNN
  assert ms.source_mask[1, 1, 1] == Source.FromObserved
  assert ms.source_mask[3, 3, 3] == Source.FromObserved


def test_outside_points():
  inside = lattice(4, 1.0) + 0.5
  one_stray = np.vstack([np.tile(inside, (2, 1)), [[9.0, 0.5, 0.5]]])
  ms = merge(Occupancy_Grid.empty(4), one_stray, Embed_Transform())
  assert ms.hi_grid.data[3, 0, 0]
  with pytest.raises(Input_Error):
    merge(Occupancy_Grid.empty(4), np.vstack([inside[:10], [[9.0, 0.5, 0.5]]]), Embed_Transform())
  with pytest.raises(Input_Error):
    merge(Occupancy_Grid.empty(4), np.zeros((0, 3)), Embed_Transform())


def test_merge_every_two_cube_pattern():
  centers = lattice(2, 1.0) + 0.5
  for cnn_bits in itertools.product((False, True), repeat=8):
    cnn = np.array(cnn_bits).reshape(2, 2, 2)
    for obs_bits in itertools.product((False, True), repeat=8):
      if not any(obs_bits):
        continue
      obs = np.array(obs_bits).reshape(2, 2, 2)
      ms = merge(Occupancy_Grid(cnn), centers[np.array(obs_bits)], Embed_Transform())
      np.testing.assert_array_equal(ms.hi_grid.data, cnn | obs)
      expected = np.where(obs, Source.FromObserved, np.where(cnn, Source.FromCNN, Source.Empty))
      np.testing.assert_array_equal(ms.source_mask, expected)


######## fill_gaps ########

@pytest.mark.parametrize("column, d_ratio, expected", [
  ([1, 0, 0, 1], 3, [1, 1, 1, 1]),
  ([1, 0, 0, 0, 1], 3, [1, 0, 0, 0, 1]),
  ([0, 0, 0, 0], 3, [0, 0, 0, 0]),
  ([0, 1, 0, 0], 2, [0, 1, 0, 0]),
  ([1, 0, 1, 0, 1], 3, [1, 1, 1, 0, 1]),
])
def test_fill_first_gap(column, d_ratio, expected):
  ms = fill_gaps(column_state(column, d_ratio))
  np.testing.assert_array_equal(ms.hi_grid.data.ravel(), expected)
  filled = np.array(expected, dtype=bool) & ~np.array(column, dtype=bool)
  assert np.all(ms.source_mask.ravel()[filled] == Source.Filled)


def test_fill_every_gap():
  ms = fill_gaps(column_state([1, 0, 1, 0, 1, 0, 0, 0, 1], 2), repeat=True)
  np.testing.assert_array_equal(ms.hi_grid.data.ravel(), [1, 1, 1, 1, 1, 0, 0, 0, 1])


# Gaps between consecutive occupied voxels, filled when shorter than d_ratio
def fill_column(column: tuple, d_ratio: int, repeat: bool) -> list:
  occupied = [i for i, v in enumerate(column) if v]
  gaps = list(zip(occupied, occupied[1:]))
  out = list(column)
  for first, nxt in (gaps if repeat else gaps[:1]):
    if 1 < nxt - first < d_ratio + 1:
      out[first + 1:nxt] = [1] * (nxt - first - 1)
  return out


def test_fill_every_six_voxel_column():
  for column in itertools.product((0, 1), repeat=6):
    for d_ratio in (1, 2, 3):
      for repeat in (False, True):
        ms = fill_gaps(column_state(list(column), d_ratio), repeat=repeat)
        expected = fill_column(column, d_ratio, repeat)
        np.testing.assert_array_equal(ms.hi_grid.data.ravel(), expected)
        filled = np.array(expected, dtype=bool) & ~np.array(column, dtype=bool)
        assert np.all(ms.source_mask.ravel()[filled] == Source.Filled)
        assert np.count_nonzero(ms.source_mask == Source.Filled) == filled.sum()


######## Laplacian energy ########

# Rows of sqrt(weight) * second difference, one per stencil, matching the energy's boundary rule
def energy_matrix(dims: tuple) -> np.ndarray:
  index = np.arange(np.prod(dims)).reshape(dims)
  rows = []
  for axis in range(3):
    n = dims[axis]
    if n < 3:
      continue
    weights = np.ones(n - 2)
    weights[0] += 1
    weights[-1] += 1
    for base in itertools.product(*(range(s) for s in dims)):
      if base[axis] > n - 3:
        continue
      row = np.zeros(index.size)
      for offset, coeff in ((0, 1.0), (1, -2.0), (2, 1.0)):
        pos = list(base)
        pos[axis] += offset
        row[index[tuple(pos)]] += coeff
      rows.append(np.sqrt(weights[base[axis]]) * row)
  return np.array(rows)


def test_energy_examples():
  assert laplacian_energy(np.zeros((4, 4, 4))) == 0.0
  x = np.arange(5.0)
  linear = x[:, None, None] + 2 * x[None, :, None] - x[None, None, :]
  assert laplacian_energy(linear) == pytest.approx(0.0, abs=1e-20)
  f = np.array([0.0, 1.0, 0.0, 0.0]).reshape(4, 1, 1)
  assert laplacian_energy(f) == pytest.approx(2 * 4 + 2 * 1)


def test_energy_matches_matrix_form(rng):
  f = rng.normal(size=(4, 5, 3))
  m = energy_matrix(f.shape)
  assert laplacian_energy(f) == pytest.approx(np.sum((m @ f.ravel()) ** 2), rel=1e-12)


def test_energy_gradient_matches_finite_differences(rng):
  f = rng.normal(size=(4, 5, 3))
  grad = laplacian_energy_gradient(f)
  h = 1e-6
  numeric = np.zeros_like(f)
  for idx in np.ndindex(f.shape):
    up, down = f.copy(), f.copy()
    up[idx] += h
    down[idx] -= h
    numeric[idx] = (laplacian_energy(up) - laplacian_energy(down)) / (2 * h)
  np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-6)


def test_free_band():
  occ = np.zeros((7, 7, 7), dtype=bool)
  occ[3, 3, 3] = True
  band = free_band(occ, 1)
  assert band[3, 3, 3] and band[2, 3, 3] and not band[2, 2, 3]
  assert free_band(occ, 2)[2, 2, 3]
  assert not free_band(np.ones((4, 4, 4), dtype=bool)).any()
  with pytest.raises(Input_Error):
    free_band(occ, 0)


######## qp_smooth ########

def test_all_occupied_grid_is_already_optimal():
  ms = Merge_State(1, Occupancy_Grid(np.ones((5, 5, 5), dtype=bool)), np.ones((5, 5, 5), dtype=np.uint8))
  f = qp_smooth(ms)
  assert np.all(f.data >= 0)
  assert laplacian_energy(f.data) <= 1e-12


def test_slab_energy_decreases_and_signs_hold():
  occ = np.zeros((8, 8, 8), dtype=bool)
  occ[:, :, 3] = True
  ms = Merge_State(1, Occupancy_Grid(occ), occ.astype(np.uint8))
  energies = []
  f = qp_smooth(ms, iters=200, energies=energies)
  assert len(energies) > 2
  assert all(b <= a for a, b in zip(energies, energies[1:]))
  assert energies[-1] < energies[0]
  v = np.where(occ, 1.0, -1.0)
  assert np.all(v * f.data >= 0)
  assert np.all(f.data[occ] >= 0)


@pytest.mark.parametrize("seed, side", [(0, 3), (1, 4), (2, 4), (3, 5)])
def test_qp_matches_dense_solver(seed, side):
  rng = np.random.default_rng(seed)
  occ = np.zeros((side,) * 3, dtype=bool)
  occ[tuple(rng.integers(0, side, size=(3, side * 2)))] = True
  ms = Merge_State(1, Occupancy_Grid(occ), occ.astype(np.uint8))
  f = qp_smooth(ms, iters=20000, tol=0.0)

  v = np.where(occ, 1.0, -1.0).ravel()
  free = free_band(occ).ravel()
  m = energy_matrix(occ.shape)
  lower = np.where(v[free] > 0, 0.0, -np.inf)
  upper = np.where(v[free] > 0, np.inf, 0.0)
  reference = lsq_linear(m[:, free], -m[:, ~free] @ v[~free], bounds=(lower, upper), method='bvls', tol=1e-14)
  best = np.sum(reference.fun ** 2)
  assert laplacian_energy(f.data) == pytest.approx(best, abs=1e-6)
  assert np.all(v * f.data.ravel() >= 0)


def test_qp_arguments():
  ms = column_state([1, 0, 1], 1)
  with pytest.raises(Input_Error):
    qp_smooth(ms, iters=0)
  with pytest.raises(Input_Error):
    qp_smooth(ms, step=0.0)


def test_oversized_step_is_reported():
  occ = np.zeros((8, 8, 8), dtype=bool)
  occ[2:6, 2:6, 2:6] = True
  ms = Merge_State(1, Occupancy_Grid(occ), occ.astype(np.uint8))
  with pytest.raises(Numerical_Error, match="step too large"):
    qp_smooth(ms, step=1e6)


######## reconstruct ########

def test_fast_mesh_of_a_solid_sphere():
  g = solid_sphere(16, 5.0)
  mesh = reconstruct(g, np.zeros((0, 3)), Embed_Transform(), fast=True)
  assert is_watertight(mesh)
  assert euler_characteristic(mesh) == 2


def test_fast_mesh_is_in_world_units():
  g = solid_sphere(16, 5.0)
  t = Embed_Transform(scale=100.0, offset=np.full(3, 8.0))
  lo, hi = mesh_bounds(reconstruct(g, None, t, fast=True))
  np.testing.assert_allclose((lo + hi) / 2, 0.0, atol=1e-9)
  assert np.all(hi - lo < 0.11)


def test_detailed_mesh_with_unit_ratio():
  g = solid_sphere(16, 5.0)
  front = g.data & ~np.roll(g.data, 1, axis=2)        # First occupied voxel of each z column
  observed = grid_to_pointcloud(Occupancy_Grid(front), Embed_Transform())
  assert density_ratio(observed, grid_to_pointcloud(g, Embed_Transform())) == 1
  mesh = reconstruct(g, observed, Embed_Transform(), fast=False)
  assert not mesh.is_empty()
  lo, hi = mesh_bounds(mesh)
  assert np.all(lo >= -0.5) and np.all(hi <= 16.5)


def test_detailed_mesh_needs_observations():
  with pytest.raises(Input_Error):
    reconstruct(solid_sphere(16, 5.0), np.zeros((0, 3)), Embed_Transform())


@pytest.mark.parametrize("cnn_voxels", [0, 3])
def test_detailed_mesh_from_a_sparse_completion(cnn_voxels):
  g = solid_sphere(16, 5.0)
  observed = grid_to_pointcloud(g, Embed_Transform())
  sparse = Occupancy_Grid.empty(16)
  sparse.data[7:7 + cnn_voxels, 8, 8] = True
  mesh = reconstruct(sparse, observed, Embed_Transform())
  reference = reconstruct(g, observed, Embed_Transform())
  assert not mesh.is_empty()
  np.testing.assert_array_equal(mesh.vertices, reference.vertices)
  np.testing.assert_array_equal(mesh.triangles, reference.triangles)


@pytest.mark.slow
def test_detailed_meshes_track_the_truth_closer(desk_dataset, desk_runs):
  completer = Completer(Strategy.CNN, desk_runs[0][1])
  pairs = desk_dataset.pairs(Split.TrainView)
  fast_scores, detailed_scores = [], []
  for pair in pairs[::max(1, len(pairs) // 24)]:
    t = pair.transform
    truth = reconstruct(pair.y, None, t, fast=True)
    grid = complete_pair(completer, pair)
    observed = grid_to_pointcloud(pair.x, t)
    fast = reconstruct(grid, observed, t, fast=True)
    detailed = reconstruct(grid, observed, t)
    if truth.is_empty() or fast.is_empty() or detailed.is_empty():
      continue
    fast_scores.append(hausdorff_symmetric(fast, truth, 2000, seed=0))
    detailed_scores.append(hausdorff_symmetric(detailed, truth, 2000, seed=0))
  assert len(fast_scores) >= 20
  assert np.mean(detailed_scores) <= np.mean(fast_scores)
