from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
import logging
import numpy as np
from VOXC.Config import worker_count
from VOXC.Errors import Input_Error, Not_Visible_Error
from VOXC.Geometry import Tri_Mesh, Camera_Pose, Camera_Config, rotation_matrix, render_depth, \
  depth_to_cloud, voxelize_mesh_in_frame, mesh_bounds, DEFAULT_DISTANCE
from VOXC.Grid import Occupancy_Grid, Embed_Transform, embed_pointcloud
from VOXC.Pool import Pair_Pool, split_pool

logger = logging.getLogger(__name__)

DISTANCE_FACTOR = 2.5        # Camera distance in bounding-sphere radii
MIN_HIT_FRACTION = 0.01      # Views with fewer object pixels are skipped
DEFAULT_VIEWS = (11, 6, 11)  # roll x pitch x yaw lattice


class Split(Enum):
  TrainView = "TrainView"
  HoldoutView = "HoldoutView"
  HoldoutModel = "HoldoutModel"


@dataclass(frozen=True, eq=False)
class View_Spec:
  mesh_id: str
  pose: Camera_Pose
  split: Split
  view_index: int = 0

  @property
  def name(self) -> str:
    return f"{self.mesh_id}/{self.view_index:04d}"


# Partial grid x and ground-truth grid y in the same embedding frame (camera coordinates)
@dataclass(eq=False)
class Training_Pair:
  x: Occupancy_Grid
  y: Occupancy_Grid
  view: View_Spec
  transform: Embed_Transform

  def __post_init__(self):
    if self.x.dims != self.y.dims:
      raise Input_Error(f"pair grids differ in dims: {self.x.dims} vs {self.y.dims}")

  @property
  def name(self) -> str:
    return self.view.name


@dataclass
class Split_Config:
  holdout_model_frac: float = 0.2   # Fraction of meshes whose views are all HoldoutModel
  holdout_view_frac: float = 0.2    # Fraction of each training mesh's views held out
  views: tuple = DEFAULT_VIEWS
  camera: Camera_Config = field(default_factory=Camera_Config)

  def validate(self):
    for name in ('holdout_model_frac', 'holdout_view_frac'):
      value = getattr(self, name)
      if not 0 <= value <= 1:
        raise Input_Error(f"{name} must lie in [0, 1], got {value}")
    if self.holdout_model_frac + self.holdout_view_frac > 1:
      raise Input_Error("split fractions must sum to <= 1")
    if len(self.views) != 3 or min(self.views) < 1:
      raise Input_Error(f"view lattice counts must all be >= 1, got {self.views}")


# Ordered collection of training pairs with one proxy pool per split
class Dataset:
  def __init__(self, side: int, pairs: list = None):
    self.side = side
    self.pool = Pair_Pool()
    self.splits = {split: split_pool(split) for split in Split}
    for sub_pool in self.splits.values():
      self.pool.add_subset_pool(sub_pool)
    for pair in pairs or []:
      self.add(pair)

  def add(self, pair: Training_Pair):
    if pair.x.dims != (self.side,) * 3:
      raise Input_Error(f"pair {pair.name} has dims {pair.x.dims}, dataset side is {self.side}")
    self.pool[pair.name] = pair

  def pairs(self, split: Split = None) -> list[Training_Pair]:
    source = self.pool if split is None else self.splits[split]
    return list(source.values())

  def counts(self) -> dict:
    return {split.value: len(pool) for split, pool in self.splits.items()}

  # Rows of (mesh_id, view_index, split, pose, transform) in dataset order
  def manifest(self) -> list[dict]:
    rows = []
    for pair in self.pool.values():
      v = pair.view
      rows.append({'mesh_id': v.mesh_id, 'view_index': v.view_index, 'split': v.split.value,
                   'position': v.pose.position.tolist(), 'orientation': list(v.pose.orientation),
                   'scale': pair.transform.scale, 'offset': pair.transform.offset.tolist()})
    return rows

  def __len__(self):
    return len(self.pool)


# Camera poses on a roll-pitch-yaw lattice, each looking at center from a fixed distance
# Roll and yaw cover [0, 2pi) endpoint-exclusive, pitch covers [-pi/2, pi/2] endpoint-inclusive
def sample_views(n_roll: int, n_pitch: int, n_yaw: int, center=None,
                 distance: float = DEFAULT_DISTANCE) -> list[Camera_Pose]:
  if min(n_roll, n_pitch, n_yaw) < 1:
    raise Input_Error(f"view counts must all be >= 1, got {(n_roll, n_pitch, n_yaw)}")
  center = np.zeros(3) if center is None else np.asarray(center, dtype=np.float64)
  rolls = 2 * np.pi * np.arange(n_roll) / n_roll
  yaws = 2 * np.pi * np.arange(n_yaw) / n_yaw
  pitches = np.array([-np.pi / 2]) if n_pitch == 1 else np.linspace(-np.pi / 2, np.pi / 2, n_pitch)
  poses = []
  for roll in rolls:
    for pitch in pitches:
      for yaw in yaws:
        forward = rotation_matrix(roll, pitch, yaw)[:, 2]
        poses.append(Camera_Pose(center - distance * forward, (roll, pitch, yaw)))
  return poses


# Render one view of a mesh and build its overlaid (x, y) grids
# Inputs: mesh (world), camera pose, grid side, camera intrinsics
# Outputs: Training_Pair (frame = camera coordinates embedded by the visible cloud)
def generate_pair(m: Tri_Mesh, pose: Camera_Pose, side: int, camera: Camera_Config = None,
                  view: View_Spec = None) -> Training_Pair:
  camera = Camera_Config() if camera is None else camera
  depth = render_depth(m, pose, camera.width, camera.height, camera.fov_y)
  if depth.hit_fraction() < MIN_HIT_FRACTION:
    raise Not_Visible_Error()
  cloud = depth_to_cloud(depth)
  x, transform = embed_pointcloud(cloud, side)
  camera_mesh = Tri_Mesh(pose.world_to_camera(m.vertices), m.triangles)
  y = voxelize_mesh_in_frame(camera_mesh, transform, x.dims)
  if view is None:
    view = View_Spec("mesh", pose, Split.TrainView)
  return Training_Pair(x, y, view, transform)


# Bounding-sphere center and radius from the bounding box
def bounding_sphere(m: Tri_Mesh) -> tuple[np.ndarray, float]:
  lo, hi = mesh_bounds(m)
  center = (lo + hi) / 2
  return center, float(np.max(np.linalg.norm(m.vertices - center, axis=1)))


# Assign splits and view lattices; the order of the returned specs is (mesh order, view index)
def plan_views(meshes: list, split_cfg: Split_Config, seed: int) -> list[View_Spec]:
  rng = np.random.default_rng(seed)
  n = len(meshes)
  n_holdout = min(max(1, int(round(split_cfg.holdout_model_frac * n))), n - 1)
  holdout_models = set(rng.permutation(n)[:n_holdout].tolist())
  specs = []
  for i, (mesh_id, mesh) in enumerate(meshes):
    center, radius = bounding_sphere(mesh)
    poses = sample_views(*split_cfg.views, center=center, distance=DISTANCE_FACTOR * radius)
    if i in holdout_models:
      splits = [Split.HoldoutModel] * len(poses)
    else:
      n_hold = int(round(split_cfg.holdout_view_frac * len(poses)))
      held = set(rng.permutation(len(poses))[:n_hold].tolist())
      splits = [Split.HoldoutView if k in held else Split.TrainView for k in range(len(poses))]
    specs += [View_Spec(mesh_id, pose, split, k) for k, (pose, split) in enumerate(zip(poses, splits))]
  return specs


# Generate every view's pair in parallel; unusable views are logged and skipped
# Inputs: list of (mesh_id, Tri_Mesh), split config, grid side, seed
# Outputs: Dataset in deterministic (mesh, view index) order
def build_dataset(meshes: list, split_cfg: Split_Config, side: int, seed: int) -> Dataset:
  if len(meshes) < 2:
    raise Input_Error("at least 2 meshes are needed so a holdout-model split exists")
  split_cfg.validate()
  ids = [mesh_id for mesh_id, _ in meshes]
  if len(set(ids)) != len(ids):
    raise Input_Error("mesh ids must be unique")
  lookup = dict(meshes)
  specs = plan_views(meshes, split_cfg, seed)

  def job(spec: View_Spec):
    try:
      return generate_pair(lookup[spec.mesh_id], spec.pose, side, split_cfg.camera, spec)
    except Not_Visible_Error:
      logger.warning("skipping view %s: object not visible", spec.name)
      return None

  with ThreadPoolExecutor(max_workers=worker_count()) as executor:
    results = list(executor.map(job, specs))    # map preserves submission order
  dataset = Dataset(side, [pair for pair in results if pair is not None])
  logger.info("built dataset of %d pairs from %d meshes: %s", len(dataset), len(meshes), dataset.counts())
  return dataset
