from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.spatial.distance import jensenshannon
from scipy.stats import norm
from sklearn.mixture import GaussianMixture
from VOXC.Config import worker_count
from VOXC.Errors import Input_Error, Numerical_Error
from VOXC.Geometry import Tri_Mesh, mesh_bounds, frame_for_bounds, voxelize_mesh_in_frame, sample_surface, \
  point_mesh_distance, largest_component, vertex_adjacency
from VOXC.Grid import Occupancy_Grid

logger = logging.getLogger(__name__)

MESH_JACCARD_SIDE = 80
HAUSDORFF_SAMPLES = 5000
GEODESIC_SAMPLES = 500
GMM_COMPONENTS = 3
GMM_MAX_ITER = 100
GMM_TOL = 1e-8
GMM_REG_COVAR = 1e-6         # Variance floor added by the EM fit
MIN_VARIANCE = 1e-12
QUADRATURE_POINTS = 2048
METERS_TO_MM = 1000.0


@dataclass
class Metric_Report:
  jaccard: float
  hausdorff_mm: float
  geodesic_js: float

  def as_dict(self) -> dict:
    return {'jaccard': self.jaccard, 'hausdorff_mm': self.hausdorff_mm, 'geodesic_js': self.geodesic_js}


# Normalized mean-geodesic values per sampled vertex and their 1-D mixture fit
@dataclass
class Geodesic_Descriptor:
  values: np.ndarray
  gmm: list = field(default_factory=list)      # (weight, mean, variance) per component

  def pdf(self, xs: np.ndarray) -> np.ndarray:
    return sum(w * norm.pdf(xs, mu, np.sqrt(var)) for w, mu, var in self.gmm)


######## Voxel overlap ########

def _grid_data(g) -> np.ndarray:
  return g.data if isinstance(g, Occupancy_Grid) else np.asarray(g, dtype=bool)


# |A n B| / |A u B|; two empty grids count as identical
def jaccard(a, b) -> float:
  a, b = _grid_data(a), _grid_data(b)
  if a.shape != b.shape:
    raise Input_Error(f"grid dims differ: {a.shape} vs {b.shape}")
  union = np.count_nonzero(a | b)
  if union == 0:
    return 1.0
  return np.count_nonzero(a & b) / union


# Solid-voxelize both meshes in the frame of their joint bounding box, then compare
def mesh_jaccard(a: Tri_Mesh, b: Tri_Mesh, side: int = MESH_JACCARD_SIDE) -> float:
  if a.is_empty() or b.is_empty():
    raise Input_Error("mesh_jaccard needs two non-empty meshes")
  lo_a, hi_a = mesh_bounds(a)
  lo_b, hi_b = mesh_bounds(b)
  frame = frame_for_bounds(np.minimum(lo_a, lo_b), np.maximum(hi_a, hi_b), side)
  dims = (side,) * 3
  return jaccard(voxelize_mesh_in_frame(a, frame, dims), voxelize_mesh_in_frame(b, frame, dims))


######## Surface distance ########

# Mean of the two directed mean point-to-surface distances, in millimeters
# Each mesh is sampled with the same seed so the value does not depend on argument order
def hausdorff_symmetric(a: Tri_Mesh, b: Tri_Mesh, n_samples: int = HAUSDORFF_SAMPLES, seed: int = 0) -> float:
  if n_samples < 100:
    raise Input_Error(f"n_samples must be >= 100, got {n_samples}")
  if a.is_empty() or b.is_empty():
    raise Input_Error("hausdorff_symmetric needs two non-empty meshes")
  pa = sample_surface(a, n_samples, seed)
  pb = sample_surface(b, n_samples, seed)
  d_ab = point_mesh_distance(pa, b).mean()
  d_ba = point_mesh_distance(pb, a).mean()
  return float(METERS_TO_MM * (d_ab + d_ba) / 2)


######## Geodesic shape descriptor ########

# 1-D Gaussian mixture by EM; one re-seed on a degenerate fit, then Numerical_Error
def fit_mixture(values: np.ndarray, k: int = GMM_COMPONENTS, seed: int = 0) -> list:
  if k < 1:
    raise Input_Error(f"mixture needs k >= 1 components, got {k}")
  if len(values) < k:
    raise Input_Error(f"{len(values)} values cannot support {k} mixture components")
  for attempt in range(2):
    gmm = GaussianMixture(n_components=k, covariance_type='full', max_iter=GMM_MAX_ITER, tol=GMM_TOL,
                          reg_covar=GMM_REG_COVAR, random_state=seed + attempt)
    try:
      gmm.fit(np.asarray(values, dtype=np.float64).reshape(-1, 1))
    except ValueError as e:
      logger.warning("mixture fit failed (%s), seed %d", e, seed + attempt)
      continue
    variances = gmm.covariances_.reshape(-1)
    if np.all(variances >= MIN_VARIANCE):
      order = np.argsort(gmm.means_.ravel())
      return [(float(gmm.weights_[i]), float(gmm.means_[i, 0]), float(variances[i])) for i in order]
    logger.warning("degenerate mixture component (variance < %g), seed %d", MIN_VARIANCE, seed + attempt)
  raise Numerical_Error("degenerate Gaussian mixture fit")


# Per sampled vertex: mean edge-graph geodesic distance to the other samples, divided by the max of those means
def geodesic_descriptor(m: Tri_Mesh, n_samples: int = GEODESIC_SAMPLES, k: int = GMM_COMPONENTS,
                        seed: int = 0) -> Geodesic_Descriptor:
  m = largest_component(m)
  if m.is_empty():
    raise Input_Error("geodesic descriptor needs a non-empty mesh")
  rng = np.random.default_rng(seed)
  n = min(n_samples, len(m.vertices))
  if n < 2:
    raise Input_Error("geodesic descriptor needs at least 2 vertices")
  samples = np.sort(rng.choice(len(m.vertices), size=n, replace=False))
  dist = dijkstra(vertex_adjacency(m, weighted=True), directed=False, indices=samples)[:, samples]
  means = dist.sum(axis=1) / (n - 1)
  top = means.max()
  if not np.isfinite(top) or top <= 0:
    raise Numerical_Error("geodesic distances are degenerate")
  values = means / top
  return Geodesic_Descriptor(values, fit_mixture(values, k, seed))


# Jensen-Shannon divergence (natural log) of two mixtures by quadrature over [0, 1]
def descriptor_divergence(da: Geodesic_Descriptor, db: Geodesic_Descriptor,
                          points: int = QUADRATURE_POINTS) -> float:
  xs = np.linspace(0.0, 1.0, points)
  p, q = da.pdf(xs), db.pdf(xs)
  if not (p.sum() > 0 and q.sum() > 0):
    raise Numerical_Error("mixture density has no mass on [0, 1]")
  return float(jensenshannon(p / p.sum(), q / q.sum()) ** 2)


def geodesic_divergence(a: Tri_Mesh, b: Tri_Mesh, n_samples: int = GEODESIC_SAMPLES, k: int = GMM_COMPONENTS,
                        seed: int = 0) -> float:
  if n_samples < 200:
    raise Input_Error(f"n_samples must be >= 200, got {n_samples}")
  return descriptor_divergence(geodesic_descriptor(a, n_samples, k, seed), geodesic_descriptor(b, n_samples, k, seed))


######## Suites ########

# One completed mesh with its ground truth; grid_jaccard, when known, replaces the mesh voxelization
@dataclass
class Completion_Record:
  method: str
  split: str
  completed: Tri_Mesh
  truth: Tri_Mesh
  name: str = ""
  grid_jaccard: float = None


def evaluate_record(record: Completion_Record, jaccard_side: int = MESH_JACCARD_SIDE,
                    hausdorff_samples: int = HAUSDORFF_SAMPLES, geodesic_samples: int = GEODESIC_SAMPLES,
                    k: int = GMM_COMPONENTS, seed: int = 0) -> Metric_Report:
  if record.completed.is_empty():
    logger.warning("%s/%s: empty completion, distance metrics undefined", record.method, record.name)
    j = record.grid_jaccard if record.grid_jaccard is not None else 0.0
    return Metric_Report(j, float('nan'), float('nan'))
  j = record.grid_jaccard if record.grid_jaccard is not None else \
    mesh_jaccard(record.completed, record.truth, jaccard_side)
  return Metric_Report(j, hausdorff_symmetric(record.completed, record.truth, hausdorff_samples, seed),
                       geodesic_divergence(record.completed, record.truth, geodesic_samples, k, seed))


# Per-record metrics and per-(method, split) means
# Inputs: list of Completion_Record, metric settings
# Outputs: (summary rows, per-pair rows) as lists of dicts in first-seen (method, split) order
def evaluate_suite(records: list, jaccard_side: int = MESH_JACCARD_SIDE, hausdorff_samples: int = HAUSDORFF_SAMPLES,
                   geodesic_samples: int = GEODESIC_SAMPLES, k: int = GMM_COMPONENTS,
                   seed: int = 0) -> tuple[list[dict], list[dict]]:
  if not records:
    raise Input_Error("no completions to evaluate")

  def job(record):
    return evaluate_record(record, jaccard_side, hausdorff_samples, geodesic_samples, k, seed)

  with ThreadPoolExecutor(max_workers=worker_count()) as executor:
    reports = list(executor.map(job, records))

  pair_rows = [dict({'method': r.method, 'split': r.split, 'pair': r.name}, **rep.as_dict())
               for r, rep in zip(records, reports)]
  cells = {}
  for row in pair_rows:
    cells.setdefault((row['method'], row['split']), []).append(row)
  summary = []
  for (method, split), rows in cells.items():
    entry = {'method': method, 'split': split, 'n': len(rows)}
    for metric in ('jaccard', 'hausdorff_mm', 'geodesic_js'):
      values = np.array([row[metric] for row in rows], dtype=np.float64)
      finite = values[np.isfinite(values)]
      entry[metric] = float(finite.mean()) if len(finite) else float('nan')
    summary.append(entry)
  return summary, pair_rows
