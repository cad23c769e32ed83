from dataclasses import dataclass
from enum import IntEnum
import itertools
import logging
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from VOXC.Errors import Input_Error, Numerical_Error
from VOXC.Geometry import Tri_Mesh, marching_cubes
from VOXC.Grid import Occupancy_Grid, Weighted_Grid, Embed_Transform, PointCloud, as_cloud, voxelize_points, \
  grid_to_pointcloud

logger = logging.getLogger(__name__)

# Density ratio
MIN_CLOUD_POINTS = 10
SAMPLE_FRACTION = 10          # 1 in SAMPLE_FRACTION points sampled for nearest-neighbor spacing
MAX_D_RATIO = 4
DENSITY_SEED = 0

# Upsampling: True scores corners by s * (D - L1) so nearer corners dominate, False uses s * L1 as written
PROXIMITY_WEIGHTS = True
CUBE_L1_DIAMETER = 3.0

MAX_OUTSIDE_FRACTION = 0.05   # Observed points allowed outside the high-resolution grid before merge fails

# QP smoothing
QP_ITERATIONS = 300
QP_BAND = 2
QP_TOLERANCE = 1e-8
QP_MAX_REJECTIONS = 10
QP_LIPSCHITZ = 192.0          # Bound on the largest Hessian eigenvalue of the energy
QP_STEP = 1.0 / QP_LIPSCHITZ
ENERGY_NOISE = 1e-14          # Relative energy increase treated as round-off

FAST_ISOLEVEL = 0.5
DETAILED_ISOLEVEL = 0.0


class Source(IntEnum):
  Empty = 0
  FromCNN = 1
  FromObserved = 2
  Filled = 3


# High-resolution merged occupancy and per-voxel provenance
@dataclass(eq=False)
class Merge_State:
  d_ratio: int
  hi_grid: Occupancy_Grid
  source_mask: np.ndarray       # uint8 Source codes, same dims as hi_grid
  transform: Embed_Transform = None

  def copy(self) -> 'Merge_State':
    return Merge_State(self.d_ratio, self.hi_grid.copy(), self.source_mask.copy(), self.transform)


def _mean_spacing(pc: np.ndarray, rng: np.random.Generator) -> float:
  n = max(1, len(pc) // SAMPLE_FRACTION)
  picks = pc[rng.choice(len(pc), size=n, replace=False)]
  dist, _ = cKDTree(pc).query(picks, k=2)       # k=1 is the point itself
  return float(dist[:, 1].mean())


# Integer ratio of CNN-cloud spacing to observed-cloud spacing, half-up rounded, clamped to [1, 4]
def density_ratio(observed: PointCloud, cnn_cloud: PointCloud, seed: int = DENSITY_SEED) -> int:
  observed, cnn_cloud = as_cloud(observed), as_cloud(cnn_cloud)
  if len(observed) < MIN_CLOUD_POINTS or len(cnn_cloud) < MIN_CLOUD_POINTS:
    raise Input_Error(f"density ratio needs clouds of >= {MIN_CLOUD_POINTS} points, "
                      f"got {len(observed)} observed and {len(cnn_cloud)} completed")
  rng = np.random.default_rng(seed)
  spacing_obs = _mean_spacing(observed, rng)
  spacing_cnn = _mean_spacing(cnn_cloud, rng)
  if spacing_obs <= 0:
    return MAX_D_RATIO
  ratio = int(np.floor(spacing_cnn / spacing_obs + 0.5))
  return int(np.clip(ratio, 1, MAX_D_RATIO))


# Per output index along one axis: lower cube corner, fractional offset from it, and interior flag
def _axis_layout(n: int, d: int):
  p = (np.arange(n * d) + 0.5) / d                 # New voxel centers in source voxel units
  c = np.floor(p - 0.5).astype(np.int64)
  interior = (c >= 0) & (c + 1 <= n - 1)
  t = p - 0.5 - c
  nearest = np.floor(p).astype(np.int64)
  return np.clip(c, 0, max(n - 2, 0)), t, interior, nearest


# Upsample by d_ratio: each new voxel inside a cube of 8 source centers is voted by the cube corners
# Inputs: binary grid, d_ratio >= 1
# Outputs: grid with every side multiplied by d_ratio
def upsample(g: Occupancy_Grid, d_ratio: int, proximity: bool = PROXIMITY_WEIGHTS) -> Occupancy_Grid:
  if d_ratio < 1:
    raise Input_Error(f"d_ratio must be >= 1, got {d_ratio}")
  voxel_size = g.voxel_size / d_ratio
  if d_ratio == 1:
    return Occupancy_Grid(g.data.copy(), voxel_size, g.origin.copy())
  signs = np.where(g.data, 1.0, -1.0)
  layouts = [_axis_layout(n, d_ratio) for n in g.dims]
  (cx, tx, ix, nx), (cy, ty, iy, ny), (cz, tz, iz, nz) = layouts

  if min(g.dims) >= 2:
    score = np.zeros((len(cx), len(cy), len(cz)))
    for dx, dy, dz in itertools.product((0, 1), repeat=3):
      corner = signs[np.ix_(cx + dx, cy + dy, cz + dz)]
      l1 = (np.where(dx, 1 - tx, tx)[:, None, None] + np.where(dy, 1 - ty, ty)[None, :, None] +
            np.where(dz, 1 - tz, tz)[None, None, :])
      score += corner * (CUBE_L1_DIAMETER - l1 if proximity else l1)
    out = score >= 0
    interior = ix[:, None, None] & iy[None, :, None] & iz[None, None, :]
  else:
    out = np.zeros(tuple(n * d_ratio for n in g.dims), dtype=bool)
    interior = np.zeros_like(out)
  copied = g.data[np.ix_(nx, ny, nz)]                # Boundary half-voxels copy their nearest source voxel
  out = np.where(interior, out, copied)
  return Occupancy_Grid(out, voxel_size, g.origin.copy())


# Union of the upsampled completion and the voxelized observed cloud; observed provenance wins ties
# Inputs: upsampled grid, observed cloud (world), transform into the upsampled grid, d_ratio
# Outputs: Merge_State
def merge(upsampled: Occupancy_Grid, observed: PointCloud, t: Embed_Transform, d_ratio: int = 1) -> Merge_State:
  observed = as_cloud(observed)
  if len(observed) == 0:
    raise Input_Error("merge needs a non-empty observed cloud")
  obs_grid, n_outside = voxelize_points(observed, t, upsampled.dims, clamp=True)
  if n_outside > MAX_OUTSIDE_FRACTION * len(observed):
    raise Input_Error(f"{n_outside} of {len(observed)} observed points fall outside the merged grid")
  if n_outside:
    logger.warning("clamped %d observed points into the merged grid", n_outside)
  mask = np.zeros(upsampled.dims, dtype=np.uint8)
  mask[upsampled.data] = Source.FromCNN
  mask[obs_grid.data] = Source.FromObserved
  hi = Occupancy_Grid(upsampled.data | obs_grid.data, t.voxel_size, t.origin)
  return Merge_State(d_ratio, hi, mask, t)


# Fill short runs of empty voxels between occupied voxels along +z
# Default: only the gap after the first occupied voxel of each (x, y) column; repeat=True fills every gap
def fill_gaps(ms: Merge_State, repeat: bool = False) -> Merge_State:
  occ = ms.hi_grid.data
  nz = occ.shape[2]
  z = np.arange(nz)
  prev_occ = np.maximum.accumulate(np.where(occ, z, -1), axis=2)
  next_occ = np.minimum.accumulate(np.where(occ, z, nz)[:, :, ::-1], axis=2)[:, :, ::-1]
  fill = ~occ & (prev_occ >= 0) & (next_occ < nz) & (next_occ - prev_occ < ms.d_ratio + 1)
  if not repeat:
    fill &= np.cumsum(occ, axis=2) == 1          # Between the first and second occupied voxel only
  ms.hi_grid.data = occ | fill
  ms.source_mask[fill] = Source.Filled
  return ms


######## QP smoothing ########

# Per-axis weights of the second-difference stencils; end stencils are duplicated
def _stencil_weights(n: int) -> np.ndarray:
  w = np.ones(n - 2)
  w[0] += 1
  w[-1] += 1
  return w


def _second_differences(f: np.ndarray, axis: int) -> np.ndarray:
  n = f.shape[axis]
  lo = np.take(f, np.arange(0, n - 2), axis=axis)
  mid = np.take(f, np.arange(1, n - 1), axis=axis)
  hi = np.take(f, np.arange(2, n), axis=axis)
  return lo - 2 * mid + hi


def _weights_along(n: int, axis: int) -> np.ndarray:
  shape = [1, 1, 1]
  shape[axis] = n - 2
  return _stencil_weights(n).reshape(shape)


# Sum over axes and voxels of the squared second derivative of f
def laplacian_energy(f: np.ndarray) -> float:
  total = 0.0
  for axis in range(3):
    if f.shape[axis] < 3:
      continue
    d2 = _second_differences(f, axis)
    total += float(np.sum(_weights_along(f.shape[axis], axis) * d2 * d2))
  return total


def laplacian_energy_gradient(f: np.ndarray) -> np.ndarray:
  grad = np.zeros_like(f)
  for axis in range(3):
    n = f.shape[axis]
    if n < 3:
      continue
    s = 2 * _weights_along(n, axis) * _second_differences(f, axis)
    idx = [slice(None)] * 3
    for offset, coeff in ((0, 1.0), (1, -2.0), (2, 1.0)):
      idx[axis] = slice(offset, offset + n - 2)
      grad[tuple(idx)] += coeff * s
  return grad


# Voxels within `band` layers of a 6-neighbour label change
def free_band(occupied: np.ndarray, band: int = QP_BAND) -> np.ndarray:
  if band < 1:
    raise Input_Error(f"band must be >= 1, got {band}")
  structure = ndimage.generate_binary_structure(3, 1)
  boundary = occupied & ~ndimage.binary_erosion(occupied, structure, border_value=1)
  boundary |= ~occupied & ndimage.binary_dilation(occupied, structure)
  if band > 1:
    boundary = ndimage.binary_dilation(boundary, structure, iterations=band - 1)
  return boundary


# Minimize the Laplacian energy of the embedding function subject to sign agreement with the merged grid
# Inputs: Merge_State, iteration cap, initial step, free band width, relative tolerance, optional energy log
# Outputs: Weighted_Grid f with v * f >= 0 everywhere (v = +1 occupied, -1 empty)
def qp_smooth(ms: Merge_State, iters: int = QP_ITERATIONS, step: float = QP_STEP, band: int = QP_BAND,
              tol: float = QP_TOLERANCE, energies: list = None) -> Weighted_Grid:
  if iters < 1:
    raise Input_Error(f"iters must be >= 1, got {iters}")
  if not step > 0:
    raise Input_Error(f"step must be positive, got {step}")
  v = np.where(ms.hi_grid.data, 1.0, -1.0)
  free = free_band(ms.hi_grid.data, band)

  def project(x):
    x = np.where(free, x, v)
    return np.where(v > 0, np.maximum(x, 0.0), np.minimum(x, 0.0))

  f = v.copy()
  energy = laplacian_energy(f)
  if energies is not None:
    energies.append(energy)
  y, theta, rejections = f.copy(), 1.0, 0
  for _ in range(iters):
    if energy == 0.0 or not np.any(free):
      break
    trial = project(y - step * laplacian_energy_gradient(y))
    trial_energy = laplacian_energy(trial)
    if trial_energy > energy:
      if trial_energy - energy <= ENERGY_NOISE * energy:
        break                                   # Converged to round-off
      if theta > 1.0:
        y, theta = f.copy(), 1.0                # Momentum overshoot: restart from the last accepted iterate
        continue
      rejections += 1
      if rejections >= QP_MAX_REJECTIONS:
        raise Numerical_Error("step too large")
      step /= 2
      continue
    rejections = 0
    theta_next = (1 + np.sqrt(1 + 4 * theta * theta)) / 2
    y = trial + ((theta - 1) / theta_next) * (trial - f)
    theta = theta_next
    change = (energy - trial_energy) / max(energy, np.finfo(float).tiny)
    f, energy = trial, trial_energy
    if energies is not None:
      energies.append(energy)
    if change < tol:
      break
  return Weighted_Grid(project(f))


######## Reconstruction ########

def _to_world(mesh: Tri_Mesh, t: Embed_Transform) -> Tri_Mesh:
  if mesh.is_empty():
    return mesh
  return Tri_Mesh(t.to_world(mesh.vertices), mesh.triangles)


# Fast mesh straight from the completion, or the detailed upsample/merge/fill/smooth chain
# Inputs: completed grid, observed cloud (world), embedding transform of both, fast flag
# Outputs: Tri_Mesh in world coordinates
def reconstruct(cnn_out: Occupancy_Grid, observed: PointCloud, t: Embed_Transform, fast: bool = False,
                iters: int = QP_ITERATIONS, repeat_fill: bool = False) -> Tri_Mesh:
  if fast:
    return _to_world(marching_cubes(Weighted_Grid(cnn_out.data.astype(np.float64)), FAST_ISOLEVEL), t)
  observed = as_cloud(observed)
  if len(observed) == 0:
    raise Input_Error("detailed reconstruction needs the observed cloud")
  cnn_cloud = grid_to_pointcloud(cnn_out, t)
  if min(len(observed), len(cnn_cloud)) < MIN_CLOUD_POINTS:
    logger.warning("sparse completion (%d voxels, %d observed points); merging at the network resolution",
                   len(cnn_cloud), len(observed))
    d = 1
  else:
    d = density_ratio(observed, cnn_cloud)
  t_hi = t.refined(d)
  ms = merge(upsample(cnn_out, d), observed, t_hi, d)
  ms = fill_gaps(ms, repeat=repeat_fill)
  f = qp_smooth(ms, iters)
  logger.debug("detailed reconstruction: d_ratio=%d, hi-res side %d", d, ms.hi_grid.side)
  return _to_world(marching_cubes(f, DETAILED_ISOLEVEL), t_hi)
