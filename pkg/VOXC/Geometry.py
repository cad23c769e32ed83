from dataclasses import dataclass, field
import logging
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from skimage import measure
from VOXC.Errors import Input_Error, Not_Visible_Error
from VOXC.Grid import Occupancy_Grid, Weighted_Grid, Embed_Transform, PointCloud, as_cloud, embed_pointcloud, \
  downsample

logger = logging.getLogger(__name__)

# Ray casting constants
DET_EPSILON = 1e-9          # Moller-Trumbore determinant cutoff
TIE_EPSILON = 1e-12         # Barycentric tolerance that flags a grazing parity ray
JITTER = 1e-6               # Row jitter (voxels) used to break parity ties
RAY_CHUNK = 256             # Triangles tested per vectorized ray batch
PAIR_CHUNK = 1_000_000      # Max (triangle, voxel) or (point, triangle) pairs held in memory at once

# Default synthetic camera (desk scale)
DEFAULT_WIDTH = 64
DEFAULT_HEIGHT = 64
DEFAULT_FOV_Y = np.deg2rad(45.0)
DEFAULT_DISTANCE = 0.7
MIN_IMAGE_SIDE = 16

LAPLACIAN_ITERATIONS = 3
LAPLACIAN_WEIGHT = 1.0


# Indexed triangle mesh (meters)
@dataclass(eq=False)
class Tri_Mesh:
  vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
  triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

  def __post_init__(self):
    self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
    self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
    if len(self.triangles):
      if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
        raise Input_Error("triangle index out of range")
      t = self.triangles
      if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        raise Input_Error("triangle with repeated vertices")
    if not np.all(np.isfinite(self.vertices)):
      raise Input_Error("mesh has non-finite vertex coordinates")

  def is_empty(self) -> bool:
    return len(self.triangles) == 0

  def corners(self) -> np.ndarray:
    return self.vertices[self.triangles]     # (T, 3, 3)

  def copy(self) -> 'Tri_Mesh':
    return Tri_Mesh(self.vertices.copy(), self.triangles.copy())


# Camera position plus roll-pitch-yaw orientation (radians)
@dataclass(frozen=True, eq=False)
class Camera_Pose:
  position: np.ndarray = field(default_factory=lambda: np.zeros(3))
  orientation: tuple = (0.0, 0.0, 0.0)

  def __post_init__(self):
    object.__setattr__(self, 'position', np.asarray(self.position, dtype=np.float64).reshape(3))
    object.__setattr__(self, 'orientation', tuple(float(a) for a in self.orientation))
    if not np.all(np.isfinite(self.orientation)):
      raise Input_Error("camera angles must be finite")

  # Columns are the camera x (right), y (down), z (forward) axes in world coordinates
  def rotation(self) -> np.ndarray:
    return rotation_matrix(*self.orientation)

  def world_to_camera(self, points: np.ndarray) -> np.ndarray:
    return (as_cloud(points) - self.position) @ self.rotation()

  def camera_to_world(self, points: np.ndarray) -> np.ndarray:
    return as_cloud(points) @ self.rotation().T + self.position


@dataclass(eq=False)
class Depth_Image:
  width: int
  height: int
  depths: np.ndarray        # (height, width), +inf where the ray misses
  fov_y: float

  def hit_mask(self) -> np.ndarray:
    return np.isfinite(self.depths)

  def hit_fraction(self) -> float:
    return float(np.count_nonzero(self.hit_mask())) / (self.width * self.height)

  def focal(self) -> float:
    return (self.height / 2) / np.tan(self.fov_y / 2)


@dataclass
class Camera_Config:
  width: int = DEFAULT_WIDTH
  height: int = DEFAULT_HEIGHT
  fov_y: float = DEFAULT_FOV_Y
  distance: float = DEFAULT_DISTANCE


# R = Rz(yaw) @ Ry(pitch) @ Rx(roll): roll applied first, then pitch, then yaw
def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
  cr, sr = np.cos(roll), np.sin(roll)
  cp, sp = np.cos(pitch), np.sin(pitch)
  cy, sy = np.cos(yaw), np.sin(yaw)
  rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
  ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
  rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
  return rz @ ry @ rx


######## Mesh utilities ########

def transform_mesh(m: Tri_Mesh, rotation: np.ndarray = None, translation=None, scale: float = 1.0) -> Tri_Mesh:
  v = m.vertices * scale
  if rotation is not None:
    v = v @ np.asarray(rotation).T
  if translation is not None:
    v = v + np.asarray(translation, dtype=np.float64)
  return Tri_Mesh(v, m.triangles.copy())


def mesh_bounds(m: Tri_Mesh) -> tuple[np.ndarray, np.ndarray]:
  used = m.vertices[np.unique(m.triangles)] if len(m.triangles) else m.vertices
  if len(used) == 0:
    raise Input_Error("empty mesh")
  return used.min(axis=0), used.max(axis=0)


def triangle_areas(m: Tri_Mesh) -> np.ndarray:
  c = m.corners()
  return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


# Signed enclosed volume (positive for outward-oriented closed meshes)
def signed_volume(m: Tri_Mesh) -> float:
  c = m.corners()
  return float(np.sum(np.einsum('ij,ij->i', c[:, 0], np.cross(c[:, 1], c[:, 2]))) / 6.0)


# Unique undirected edges and how many triangles use each one
def edges(m: Tri_Mesh) -> tuple[np.ndarray, np.ndarray]:
  if m.is_empty():
    return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
  t = m.triangles
  e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
  e.sort(axis=1)
  return np.unique(e, axis=0, return_counts=True)


def is_watertight(m: Tri_Mesh) -> bool:
  _, counts = edges(m)
  return len(counts) > 0 and bool(np.all(counts == 2))


def euler_characteristic(m: Tri_Mesh) -> int:
  e, _ = edges(m)
  used = len(np.unique(m.triangles)) if len(m.triangles) else 0
  return used - len(e) + len(m.triangles)


# Drop vertices no triangle references
def compact(m: Tri_Mesh) -> Tri_Mesh:
  if m.is_empty():
    return Tri_Mesh()
  used, inverse = np.unique(m.triangles, return_inverse=True)
  return Tri_Mesh(m.vertices[used], inverse.reshape(-1, 3))


def vertex_adjacency(m: Tri_Mesh, weighted: bool = False) -> sparse.csr_matrix:
  e, _ = edges(m)
  n = len(m.vertices)
  if weighted:
    w = np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1)
  else:
    w = np.ones(len(e))
  i = np.concatenate([e[:, 0], e[:, 1]])
  j = np.concatenate([e[:, 1], e[:, 0]])
  return sparse.csr_matrix((np.concatenate([w, w]), (i, j)), shape=(n, n))


def largest_component(m: Tri_Mesh) -> Tri_Mesh:
  m = compact(m)
  if m.is_empty():
    return m
  n_comp, labels = connected_components(vertex_adjacency(m), directed=False)
  if n_comp == 1:
    return m
  biggest = np.argmax(np.bincount(labels))
  keep = labels[m.triangles[:, 0]] == biggest
  return compact(Tri_Mesh(m.vertices, m.triangles[keep]))


# Uniform (umbrella) Laplacian smoothing: v <- v + w * (mean(neighbors) - v)
def laplacian_smooth(m: Tri_Mesh, iterations: int = LAPLACIAN_ITERATIONS,
                     weight: float = LAPLACIAN_WEIGHT) -> Tri_Mesh:
  if m.is_empty() or iterations <= 0:
    return m.copy()
  adj = vertex_adjacency(m)
  degree = np.asarray(adj.sum(axis=1)).ravel()
  degree[degree == 0] = 1
  v = m.vertices.copy()
  for _ in range(iterations):
    v = v + weight * ((adj @ v) / degree[:, None] - v)
  return Tri_Mesh(v, m.triangles.copy())


######## Distances ########

# Closest points on triangles (a, b, c) to points p, all (N, 3); region tests after Ericson
def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
  ab, ac, ap = b - a, c - a, p - a
  bp, cp = p - b, p - c

  def dot(x, y):
    return np.einsum('ij,ij->i', x, y)

  d1, d2 = dot(ab, ap), dot(ac, ap)
  d3, d4 = dot(ab, bp), dot(ac, bp)
  d5, d6 = dot(ab, cp), dot(ac, cp)
  va = d3 * d6 - d5 * d4
  vb = d5 * d2 - d1 * d6
  vc = d1 * d4 - d3 * d2

  with np.errstate(all='ignore'):
    denom = va + vb + vc
    v = np.where(denom != 0, vb / denom, 0.0)
    w = np.where(denom != 0, vc / denom, 0.0)
    result = a + ab * v[:, None] + ac * w[:, None]   # Face interior

    # Later assignments take priority (mirrors the early-return order of the scalar routine)
    t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    m_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    result = np.where(m_bc[:, None], b + (c - b) * np.nan_to_num(t_bc)[:, None], result)
    t_ac = d2 / (d2 - d6)
    m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    result = np.where(m_ac[:, None], a + ac * np.nan_to_num(t_ac)[:, None], result)
    m_c = (d6 >= 0) & (d5 <= d6)
    result = np.where(m_c[:, None], c, result)
    t_ab = d1 / (d1 - d3)
    m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    result = np.where(m_ab[:, None], a + ab * np.nan_to_num(t_ab)[:, None], result)
    m_b = (d3 >= 0) & (d4 <= d3)
    result = np.where(m_b[:, None], b, result)
    m_a = (d1 <= 0) & (d2 <= 0)
    result = np.where(m_a[:, None], a, result)
  return result


# Exact distance from every point to the nearest triangle of m
# Inputs: points (N, 3), mesh
# Outputs: (N,) distances
def point_mesh_distance(points: PointCloud, m: Tri_Mesh, chunk: int = PAIR_CHUNK) -> np.ndarray:
  pts = as_cloud(points)
  if m.is_empty():
    raise Input_Error("empty mesh")
  tri = m.corners()
  n_tri = len(tri)
  best = np.full(len(pts), np.inf)
  step = max(1, chunk // n_tri)
  for start in range(0, len(pts), step):
    p = pts[start:start + step]
    pp = np.repeat(p, n_tri, axis=0)
    a = np.tile(tri[:, 0], (len(p), 1))
    b = np.tile(tri[:, 1], (len(p), 1))
    c = np.tile(tri[:, 2], (len(p), 1))
    d = np.linalg.norm(closest_point_on_triangles(pp, a, b, c) - pp, axis=1)
    best[start:start + len(p)] = d.reshape(len(p), n_tri).min(axis=1)
  return best


######## Ray casting ########

# Nearest hit distance of each ray against all triangles (Moller-Trumbore, boundary hits count)
# Inputs: origins (R, 3), directions (R, 3), triangles (T, 3, 3)
# Outputs: (R,) ray parameter of the nearest hit with t > 0, +inf on a miss
def ray_mesh_hits(origins: np.ndarray, directions: np.ndarray, triangles: np.ndarray,
                  chunk: int = RAY_CHUNK) -> np.ndarray:
  nearest = np.full(len(origins), np.inf)
  for start in range(0, len(triangles), chunk):
    tri = triangles[start:start + chunk]
    v0 = tri[None, :, 0]
    e1 = tri[None, :, 1] - v0
    e2 = tri[None, :, 2] - v0
    d = directions[:, None, :]
    pvec = np.cross(d, e2)
    det = np.sum(e1 * pvec, axis=2)
    valid = np.abs(det) > DET_EPSILON
    inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
    tvec = origins[:, None, :] - v0
    u = np.sum(tvec * pvec, axis=2) * inv_det
    qvec = np.cross(tvec, e1)
    v = np.sum(d * qvec, axis=2) * inv_det
    t = np.sum(e2 * qvec, axis=2) * inv_det
    hit = valid & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    t = np.where(hit, t, np.inf)
    nearest = np.minimum(nearest, t.min(axis=1))
  return nearest


# Camera-frame ray direction (z component 1) for every pixel center, row-major (v, u)
def pixel_rays(width: int, height: int, fov_y: float) -> np.ndarray:
  f = (height / 2) / np.tan(fov_y / 2)
  u, v = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
  return np.stack([(u - width / 2) / f, (v - height / 2) / f, np.ones_like(u)], axis=-1).reshape(-1, 3)


# Synthetic depth image: z-depth to the nearest surface along each pixel ray, +inf on a miss
def render_depth(m: Tri_Mesh, pose: Camera_Pose, w: int = DEFAULT_WIDTH, h: int = DEFAULT_HEIGHT,
                 fov_y: float = DEFAULT_FOV_Y) -> Depth_Image:
  if m.is_empty():
    raise Input_Error("empty mesh")
  if w < MIN_IMAGE_SIDE or h < MIN_IMAGE_SIDE:
    raise Input_Error(f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {w}x{h}")
  cam_vertices = pose.world_to_camera(m.vertices)
  triangles = cam_vertices[m.triangles]
  rays = pixel_rays(w, h, fov_y)
  depth = ray_mesh_hits(np.zeros_like(rays), rays, triangles)    # Ray z is 1, so t is z-depth
  return Depth_Image(w, h, depth.reshape(h, w), fov_y)


# Back-project hit pixels to camera-frame points
def depth_to_cloud(d: Depth_Image) -> PointCloud:
  rays = pixel_rays(d.width, d.height, d.fov_y)
  z = d.depths.reshape(-1)
  hit = np.isfinite(z)
  return rays[hit] * z[hit, None]


# Visible-surface occupancy grid plus the camera-frame cloud it was built from
def depth_to_partial_grid(d: Depth_Image, side: int) -> tuple[Occupancy_Grid, PointCloud]:
  cloud = depth_to_cloud(d)
  if len(cloud) == 0:
    raise Not_Visible_Error()
  grid, _ = embed_pointcloud(cloud, side)
  return grid, cloud


######## Solid voxelization ########

# Expand per-item integer boxes [lo, hi] (inclusive, (N, k)) into (item index, cell coords) pairs
def _box_pairs(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
  extent = np.maximum(hi - lo + 1, 0)
  sizes = np.prod(extent, axis=1)
  total = int(sizes.sum())
  if total == 0:
    return np.zeros(0, dtype=np.int64), np.zeros((0, lo.shape[1]), dtype=np.int64)
  item = np.repeat(np.arange(len(lo)), sizes)
  local = np.arange(total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
  coords = np.empty((total, lo.shape[1]), dtype=np.int64)
  ext = extent[item]
  for axis in range(lo.shape[1] - 1, -1, -1):
    coords[:, axis] = local % ext[:, axis] + lo[item, axis]
    local = local // ext[:, axis]
  return item, coords


# Chunk triangle indices so that the expanded pair count stays bounded
def _pair_chunks(lo: np.ndarray, hi: np.ndarray):
  sizes = np.prod(np.maximum(hi - lo + 1, 0), axis=1)
  start, acc = 0, 0
  for i, s in enumerate(sizes):
    if acc + s > PAIR_CHUNK and i > start:
      yield np.arange(start, i)
      start, acc = i, 0
    acc += s
  if start < len(sizes):
    yield np.arange(start, len(sizes))


# Per-voxel crossing parity along +x for rows through voxel centers (y + jitter, z + jitter)
# Outputs: (inside mask, tied-row mask)
def _parity_pass(tri: np.ndarray, dims: tuple, jitter: float) -> tuple[np.ndarray, np.ndarray]:
  nx, ny, nz = dims
  toggles = np.zeros((nx + 1, ny, nz), dtype=np.int64)
  tied = np.zeros((ny, nz), dtype=bool)
  yz = tri[:, :, 1:]
  lo = np.ceil(yz.min(axis=1) - 0.5 - jitter).astype(np.int64)
  hi = np.floor(yz.max(axis=1) - 0.5 - jitter).astype(np.int64)
  lo = np.maximum(lo, 0)
  hi = np.minimum(hi, np.array([ny - 1, nz - 1]))
  for chunk in _pair_chunks(lo, hi):
    item, rows = _box_pairs(lo[chunk], hi[chunk])
    if len(item) == 0:
      continue
    t = tri[chunk][item]
    py = rows[:, 0] + 0.5 + jitter
    pz = rows[:, 1] + 0.5 + jitter
    ay, az = t[:, 0, 1], t[:, 0, 2]
    by, bz = t[:, 1, 1], t[:, 1, 2]
    cy, cz = t[:, 2, 1], t[:, 2, 2]
    det = (by - ay) * (cz - az) - (cy - ay) * (bz - az)
    ok = np.abs(det) > TIE_EPSILON                # Triangles edge-on to +x never count as crossings
    det = np.where(ok, det, 1.0)
    l1 = ((by - py) * (cz - pz) - (cy - py) * (bz - pz)) / det
    l2 = ((cy - py) * (az - pz) - (ay - py) * (cz - pz)) / det
    l3 = 1.0 - l1 - l2
    bary = np.stack([l1, l2, l3], axis=1)
    inside = ok & np.all(bary >= -TIE_EPSILON, axis=1)
    graze = inside & np.any(np.abs(bary) <= TIE_EPSILON, axis=1)
    tied[rows[graze, 0], rows[graze, 1]] = True
    x = l1 * t[:, 0, 0] + l2 * t[:, 1, 0] + l3 * t[:, 2, 0]
    first = np.clip(np.ceil(x - 0.5), 0, nx).astype(np.int64)   # First voxel whose center lies past the crossing
    sel = inside
    np.add.at(toggles, (first[sel], rows[sel, 0], rows[sel, 1]), 1)
  counts = np.cumsum(toggles, axis=0)[:nx]
  return counts % 2 == 1, tied


# Voxels whose center passes the +x parity test; grazing rows are re-cast with a small jitter
def parity_inside(tri: np.ndarray, dims: tuple) -> np.ndarray:
  inside, tied = _parity_pass(tri, dims, 0.0)
  if np.any(tied):
    jittered, _ = _parity_pass(tri, dims, JITTER)
    inside[:, tied] = jittered[:, tied]
  return inside


# Voxels whose center lies within radius (grid units) of any triangle
def surface_band(tri: np.ndarray, dims: tuple, radius: float = np.sqrt(3) / 2) -> np.ndarray:
  band = np.zeros(dims, dtype=bool)
  lo = np.maximum(np.ceil(tri.min(axis=1) - radius - 0.5).astype(np.int64), 0)
  hi = np.minimum(np.floor(tri.max(axis=1) + radius - 0.5).astype(np.int64), np.array(dims) - 1)
  for chunk in _pair_chunks(lo, hi):
    item, cells = _box_pairs(lo[chunk], hi[chunk])
    if len(item) == 0:
      continue
    t = tri[chunk][item]
    centers = cells + 0.5
    d = np.linalg.norm(closest_point_on_triangles(centers, t[:, 0], t[:, 1], t[:, 2]) - centers, axis=1)
    near = cells[d <= radius]
    band[near[:, 0], near[:, 1], near[:, 2]] = True
  return band


# Solid voxelization into an existing frame (interior by parity, plus the half-diagonal surface band)
# Inputs: mesh (world), world -> grid transform, dims, supersample (voxelize s times finer then max-pool down)
# Outputs: Occupancy_Grid in the given frame
def voxelize_mesh_in_frame(m: Tri_Mesh, transform: Embed_Transform, dims: tuple,
                           supersample: int = 1) -> Occupancy_Grid:
  if m.is_empty():
    raise Input_Error("empty mesh")
  dims = tuple(int(d) for d in dims)
  if supersample > 1:
    fine = voxelize_mesh_in_frame(m, transform.refined(supersample), tuple(d * supersample for d in dims))
    out = downsample(fine, dims[0])
    return Occupancy_Grid(out.data, transform.voxel_size, transform.origin)
  tri = transform.to_grid(m.vertices)[m.triangles]
  occupied = surface_band(tri, dims)
  if is_watertight(m):
    occupied |= parity_inside(tri, dims)
  else:
    logger.warning("mesh is not closed; voxelizing its surface only")
  return Occupancy_Grid(occupied, transform.voxel_size, transform.origin)


# Cubic frame of `side` voxels around [lo, hi] leaving one empty voxel of margin on the longest axis
def frame_for_bounds(lo: np.ndarray, hi: np.ndarray, side: int) -> Embed_Transform:
  extent = float(np.max(hi - lo))
  if extent <= 0:
    raise Input_Error("mesh has zero extent")
  voxel = extent / max(side - 2, 1)
  center = (lo + hi) / 2
  origin = center - voxel * side / 2
  return Embed_Transform(1.0 / voxel, -origin / voxel)


def solid_voxelize(m: Tri_Mesh, side: int) -> Occupancy_Grid:
  if m.is_empty():
    raise Input_Error("empty mesh")
  if side < 2:
    raise Input_Error(f"side must be >= 2, got {side}")
  lo, hi = mesh_bounds(m)
  return voxelize_mesh_in_frame(m, frame_for_bounds(lo, hi, side), (side,) * 3)


######## Surfaces ########

# Isosurface of a voxel field; vertices in grid units with voxel (i, j, k) sampled at (i+.5, j+.5, k+.5)
# Inputs: weighted grid (values above isolevel are inside), isolevel, method ("lewiner" or "lorensen")
# Outputs: outward-oriented Tri_Mesh (empty when the field never crosses the isolevel)
def marching_cubes(f: Weighted_Grid, isolevel: float, method: str = "lewiner") -> Tri_Mesh:
  if min(f.dims) < 2:
    raise Input_Error(f"marching cubes needs at least 2 voxels per axis, got {f.dims}")
  volume = np.pad(f.data, 1, constant_values=isolevel - 1.0)    # Closes surfaces touching the border
  if not (volume.min() < isolevel < volume.max()):
    return Tri_Mesh()
  verts, faces, _, _ = measure.marching_cubes(volume, level=isolevel, method=method, allow_degenerate=False)
  mesh = compact(Tri_Mesh(np.asarray(verts, dtype=np.float64) - 0.5, faces))
  if signed_volume(mesh) < 0:
    mesh = Tri_Mesh(mesh.vertices, mesh.triangles[:, ::-1])
  return mesh


# Area-uniform surface samples (triangle by area, uniform barycentric inside)
def sample_surface(m: Tri_Mesh, n: int, seed: int) -> PointCloud:
  if n < 1:
    raise Input_Error(f"sample count must be >= 1, got {n}")
  if m.is_empty():
    raise Input_Error("empty mesh")
  areas = triangle_areas(m)
  total = areas.sum()
  if not total > 0:
    raise Input_Error("mesh has zero surface area")
  rng = np.random.default_rng(seed)
  tri = rng.choice(len(areas), size=n, p=areas / total)
  r1 = np.sqrt(rng.random(n))
  r2 = rng.random(n)
  c = m.corners()[tri]
  return (c[:, 0] * (1 - r1)[:, None] + c[:, 1] * (r1 * (1 - r2))[:, None] + c[:, 2] * (r1 * r2)[:, None])
