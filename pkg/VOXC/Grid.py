from dataclasses import dataclass, field
import numpy as np
from VOXC.Errors import Input_Error

# Embedding constants: cloud bbox fits FIT_FRACTION * G voxels, bbox center lands on CENTER_FRACTION * G
FIT_FRACTION = 0.8
CENTER_FRACTION = (0.5, 0.5, 0.45)
MIN_EMBED_SIDE = 8

# Point clouds are plain (N, 3) float64 arrays
PointCloud = np.ndarray


# Validate and convert anything array-like into an (N, 3) float64 cloud
def as_cloud(points) -> PointCloud:
  pc = np.asarray(points, dtype=np.float64)
  if pc.size == 0:
    return np.zeros((0, 3))
  if pc.ndim != 2 or pc.shape[1] != 3:
    raise Input_Error(f"point cloud must have shape (N, 3), got {pc.shape}")
  return pc


# Uniform world -> grid map: grid = scale * world + offset
@dataclass(frozen=True)
class Embed_Transform:
  scale: float = 1.0
  offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

  def __post_init__(self):
    if not self.scale > 0:
      raise Input_Error(f"transform scale must be positive, got {self.scale}")
    object.__setattr__(self, 'offset', np.asarray(self.offset, dtype=np.float64).reshape(3))

  def to_grid(self, points: PointCloud) -> np.ndarray:
    return as_cloud(points) * self.scale + self.offset

  def to_world(self, grid_points: np.ndarray) -> PointCloud:
    return (as_cloud(grid_points) - self.offset) / self.scale

  # Same world frame at d times the resolution (used by the upsampled grids)
  def refined(self, d_ratio: int) -> 'Embed_Transform':
    return Embed_Transform(self.scale * d_ratio, self.offset * d_ratio)

  # Physical size of one voxel edge and world position of the (0, 0, 0) voxel corner
  @property
  def voxel_size(self) -> float:
    return 1.0 / self.scale

  @property
  def origin(self) -> np.ndarray:
    return -self.offset / self.scale

  def __eq__(self, other):
    if not isinstance(other, Embed_Transform):
      return NotImplemented
    return self.scale == other.scale and np.array_equal(self.offset, other.offset)


# Dense binary voxel grid, indexed [x, y, z]
@dataclass(eq=False)
class Occupancy_Grid:
  data: np.ndarray
  voxel_size: float = 1.0
  origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

  def __post_init__(self):
    self.data = np.asarray(self.data, dtype=bool)
    self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
    if self.data.ndim != 3 or min(self.data.shape) < 1:
      raise Input_Error(f"grid data must be a non-empty 3D array, got shape {self.data.shape}")
    if not self.voxel_size > 0:
      raise Input_Error(f"voxel_size must be positive, got {self.voxel_size}")

  @classmethod
  def empty(cls, side: int | tuple, voxel_size: float = 1.0, origin=None) -> 'Occupancy_Grid':
    dims = (side,) * 3 if np.isscalar(side) else tuple(side)
    return cls(np.zeros(dims, dtype=bool), voxel_size, np.zeros(3) if origin is None else origin)

  @property
  def dims(self) -> tuple:
    return self.data.shape

  @property
  def side(self) -> int:
    return self.data.shape[0]

  def occupied_count(self) -> int:
    return int(np.count_nonzero(self.data))

  def copy(self) -> 'Occupancy_Grid':
    return Occupancy_Grid(self.data.copy(), self.voxel_size, self.origin.copy())

  def __eq__(self, other):
    if not isinstance(other, Occupancy_Grid):
      return NotImplemented
    return np.array_equal(self.data, other.data)


# Dense real-valued voxel grid (network output, QP embedding function)
@dataclass(eq=False)
class Weighted_Grid:
  data: np.ndarray

  def __post_init__(self):
    self.data = np.asarray(self.data, dtype=np.float64)
    if self.data.ndim != 3 or min(self.data.shape) < 1:
      raise Input_Error(f"grid data must be a non-empty 3D array, got shape {self.data.shape}")

  @property
  def dims(self) -> tuple:
    return self.data.shape

  # Binary grid of voxels at or above threshold
  def threshold(self, level: float = 0.5) -> Occupancy_Grid:
    return Occupancy_Grid(self.data >= level)


# Mark every voxel holding at least one point (half-open voxels)
# Inputs: points (world), transform, grid dims, clamp (True: clamp strays into the grid, False: drop them)
# Outputs: (grid, number of points that fell outside the grid)
def voxelize_points(points: PointCloud, transform: Embed_Transform, dims: tuple,
                    clamp: bool = True) -> tuple[Occupancy_Grid, int]:
  dims = tuple(int(d) for d in dims)
  grid = Occupancy_Grid(np.zeros(dims, dtype=bool), transform.voxel_size, transform.origin)
  pc = as_cloud(points)
  if len(pc) == 0:
    return grid, 0
  idx = np.floor(transform.to_grid(pc)).astype(np.int64)
  upper = np.array(dims) - 1
  inside = np.all((idx >= 0) & (idx <= upper), axis=1)
  outside = int(len(idx) - np.count_nonzero(inside))
  if clamp:
    idx = np.clip(idx, 0, upper)
  else:
    idx = idx[inside]
  grid.data[idx[:, 0], idx[:, 1], idx[:, 2]] = True
  return grid, outside


# Scale and center a cloud into a G^3 grid: bbox fits 0.8*G voxels, bbox center at (0.5G, 0.5G, 0.45G)
# Inputs: cloud (N, 3), grid side G
# Outputs: (occupancy grid, world -> grid transform)
def embed_pointcloud(pc: PointCloud, grid_side: int) -> tuple[Occupancy_Grid, Embed_Transform]:
  pc = as_cloud(pc)
  if len(pc) == 0:
    raise Input_Error("empty input cloud")
  if not np.all(np.isfinite(pc)):
    raise Input_Error("input cloud contains non-finite coordinates")
  if grid_side < MIN_EMBED_SIDE:
    raise Input_Error(f"grid side must be >= {MIN_EMBED_SIDE}, got {grid_side}")

  lo, hi = pc.min(axis=0), pc.max(axis=0)
  largest = float(np.max(hi - lo))
  scale = FIT_FRACTION * grid_side / largest if largest > 0 else 1.0   # Degenerate bbox keeps unit scale
  center = (lo + hi) / 2
  target = np.array(CENTER_FRACTION) * grid_side
  transform = Embed_Transform(scale, target - scale * center)
  grid, _ = voxelize_points(pc, transform, (grid_side,) * 3, clamp=True)
  return grid, transform


# Max-pool a grid down to out_side^3 with index map floor(i * out / in) per axis
def downsample(g: Occupancy_Grid, out_side: int) -> Occupancy_Grid:
  if out_side <= 0:
    raise Input_Error(f"output side must be positive, got {out_side}")
  if any(out_side > d for d in g.dims):
    raise Input_Error(f"output side {out_side} exceeds input dims {g.dims}")
  out = np.zeros((out_side,) * 3, dtype=bool)
  occupied = np.argwhere(g.data)
  if len(occupied):
    mapped = occupied * out_side // np.array(g.dims)
    out[mapped[:, 0], mapped[:, 1], mapped[:, 2]] = True
  return Occupancy_Grid(out, g.voxel_size * g.dims[0] / out_side, g.origin.copy())


# One world point per occupied voxel center
def grid_to_pointcloud(g: Occupancy_Grid, t: Embed_Transform) -> PointCloud:
  occupied = np.argwhere(g.data)
  if len(occupied) == 0:
    return np.zeros((0, 3))
  return t.to_world(occupied + 0.5)
