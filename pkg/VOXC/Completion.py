from dataclasses import dataclass, field
from enum import Enum
import logging
import time
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from VOXC.Errors import Input_Error
from VOXC.Geometry import Tri_Mesh
from VOXC.Grid import Occupancy_Grid, Weighted_Grid, Embed_Transform, PointCloud, as_cloud, embed_pointcloud, \
  voxelize_points, grid_to_pointcloud
from VOXC.Metrics import jaccard
from VOXC.Network import Model, forward
from VOXC.Post_Process import reconstruct

logger = logging.getLogger(__name__)

CLUSTER_TOLERANCE = 0.02     # meters
MIN_CLUSTER_SIZE = 10
THRESHOLD = 0.5


class Strategy(Enum):
  Partial = "partial"
  Mirror = "mirror"
  CNN = "cnn"


@dataclass(frozen=True)
class Completer:
  strategy: Strategy
  model: Model = None

  def __post_init__(self):
    if self.strategy is Strategy.CNN and self.model is None:
      raise Input_Error("CNN completion needs a model")

  @classmethod
  def from_name(cls, name: str, model: Model = None) -> 'Completer':
    try:
      return cls(Strategy(name.lower()), model)
    except ValueError:
      raise Input_Error(f"unknown completion method '{name}', expected one of "
                        f"{[s.value for s in Strategy]}") from None


# Completed grid, the embedding used, and the raw network output when there is one
@dataclass(eq=False)
class Completion_Result:
  grid: Occupancy_Grid
  transform: Embed_Transform
  raw: Weighted_Grid = None


# Euclidean cluster extraction: single-linkage components under a neighbor radius
# Inputs: cloud, radius (meters), minimum cluster size
# Outputs: clusters sorted by descending size (ties keep first-point order)
def cluster(pc: PointCloud, tol: float = CLUSTER_TOLERANCE, min_size: int = MIN_CLUSTER_SIZE) -> list[PointCloud]:
  if not tol > 0:
    raise Input_Error(f"cluster tolerance must be positive, got {tol}")
  pc = as_cloud(pc)
  if len(pc) == 0:
    return []
  pairs = cKDTree(pc).query_pairs(tol, output_type='ndarray')
  adjacency = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(pc), len(pc)))
  _, labels = connected_components(adjacency, directed=False)
  sizes = np.bincount(labels)
  kept = [label for label in np.unique(labels) if sizes[label] >= min_size]
  kept.sort(key=lambda label: (-sizes[label], np.argmax(labels == label)))
  return [pc[labels == label] for label in kept]


# Reflect the cloud through the plane z = centroid_z (normal along the camera view direction)
def mirror_points(pc: PointCloud) -> PointCloud:
  reflected = pc.copy()
  reflected[:, 2] = 2 * pc[:, 2].mean() - pc[:, 2]
  return reflected


# Complete one camera-frame cloud into a side^3 grid
# Inputs: completer, cloud, grid side, optional embedding (defaults to embed_pointcloud's)
# Outputs: Completion_Result
def run_completer(c: Completer, pc: PointCloud, side: int, transform: Embed_Transform = None) -> Completion_Result:
  pc = as_cloud(pc)
  if len(pc) == 0:
    raise Input_Error("empty input cloud")
  if c.strategy is Strategy.CNN and c.model.input_side != side:
    raise Input_Error(f"model input side {c.model.input_side} does not match grid side {side}")
  if transform is None:
    grid, transform = embed_pointcloud(pc, side)
  else:
    grid, _ = voxelize_points(pc, transform, (side,) * 3, clamp=True)

  if c.strategy is Strategy.Partial:
    return Completion_Result(grid, transform)
  if c.strategy is Strategy.Mirror:
    reflected, _ = voxelize_points(mirror_points(pc), transform, grid.dims, clamp=False)   # Outside points dropped
    out = grid.copy()
    out.data |= reflected.data
    return Completion_Result(out, transform)
  raw = forward(c.model, grid)
  out = raw.threshold(THRESHOLD)
  out.voxel_size, out.origin = transform.voxel_size, transform.origin
  return Completion_Result(out, transform, raw)


def complete(c: Completer, pc: PointCloud, side: int,
             transform: Embed_Transform = None) -> tuple[Occupancy_Grid, Embed_Transform]:
  result = run_completer(c, pc, side, transform)
  return result.grid, result.transform


# Complete a dataset pair from its observed voxels, in the pair's own frame
def complete_pair(c: Completer, pair) -> Occupancy_Grid:
  if c.strategy is Strategy.Partial:
    return pair.x
  grid, _ = complete(c, grid_to_pointcloud(pair.x, pair.transform), pair.x.dims[0], pair.transform)
  return grid


def mean_pair_jaccard(c: Completer, pairs: list) -> float:
  if not pairs:
    raise Input_Error("no pairs to score")
  return float(np.mean([jaccard(complete_pair(c, pair), pair.y) for pair in pairs]))


# T_completion = T_segment + T_target + n * T_non_target (seconds)
@dataclass
class Timing_Report:
  t_segment: float = 0.0
  t_target: float = 0.0
  t_non_target: float = 0.0
  n_non_target: int = 0

  @property
  def t_completion(self) -> float:
    return self.t_segment + self.t_target + self.n_non_target * self.t_non_target

  def as_dict(self) -> dict:
    return {'t_segment': self.t_segment, 't_target': self.t_target, 't_non_target': self.t_non_target,
            'n_non_target': self.n_non_target, 't_completion': self.t_completion}

  def line(self) -> str:
    return "\t".join(f"{key}={value:.4f}" if isinstance(value, float) else f"{key}={value}"
                     for key, value in self.as_dict().items())


@dataclass(eq=False)
class Scene_Result:
  meshes: list = field(default_factory=list)    # Tri_Mesh per cluster, in cluster order
  target_index: int = 0
  timing: Timing_Report = field(default_factory=Timing_Report)


# Segment a scene, complete the target in detail and every other object with the fast path
# Inputs: scene cloud, completer, grid side, target cluster index, cluster radius, fast flag for the target
# Outputs: Scene_Result
def complete_scene(pc: PointCloud, completer: Completer, side: int, target_index: int = 0,
                   tol: float = CLUSTER_TOLERANCE, fast_target: bool = False, all_objects: bool = True) -> Scene_Result:
  start = time.perf_counter()
  clusters = cluster(pc, tol)
  t_segment = time.perf_counter() - start
  if not 0 <= target_index < len(clusters):
    sizes = ", ".join(f"{i}: {len(c)} points" for i, c in enumerate(clusters)) or "none"
    raise Input_Error(f"cluster index {target_index} out of range; available clusters: {sizes}")

  meshes = [Tri_Mesh() for _ in clusters]
  start = time.perf_counter()
  target = run_completer(completer, clusters[target_index], side)
  meshes[target_index] = reconstruct(target.grid, clusters[target_index], target.transform, fast=fast_target)
  t_target = time.perf_counter() - start

  others = [i for i in range(len(clusters)) if i != target_index] if all_objects else []
  start = time.perf_counter()
  for i in others:
    result = run_completer(completer, clusters[i], side)
    meshes[i] = reconstruct(result.grid, clusters[i], result.transform, fast=True)
  t_others = time.perf_counter() - start
  timing = Timing_Report(t_segment, t_target, t_others / len(others) if others else 0.0, len(others))
  logger.info("scene completion: %s", timing.line())
  return Scene_Result(meshes, target_index, timing)
