import numpy as np
from VOXC.Errors import Input_Error
from VOXC.Geometry import Tri_Mesh, signed_volume

# Procedural closed meshes standing in for the YCB / Grasp Database objects at desk scale (meters)

DEFAULT_SEGMENTS = 24


# Flip triangle winding when the enclosed volume comes out negative
def orient_outward(m: Tri_Mesh) -> Tri_Mesh:
  if signed_volume(m) < 0:
    return Tri_Mesh(m.vertices, m.triangles[:, ::-1].copy())
  return m


# Extrude a CCW polygon (star-shaped from vertex 0) along z, centered on z = 0
def extrude(polygon: np.ndarray, height: float) -> Tri_Mesh:
  poly = np.asarray(polygon, dtype=np.float64)
  n = len(poly)
  bottom = np.column_stack([poly, np.full(n, -height / 2)])
  top = np.column_stack([poly, np.full(n, height / 2)])
  vertices = np.vstack([bottom, top])
  tris = []
  for i in range(1, n - 1):
    tris.append((0, i + 1, i))              # Bottom cap faces -z
    tris.append((n, n + i, n + i + 1))      # Top cap faces +z
  for i in range(n):
    j = (i + 1) % n
    tris.append((i, j, n + j))
    tris.append((i, n + j, n + i))
  return Tri_Mesh(vertices, np.array(tris))


# Surface of revolution around z; profile runs from the bottom pole (r=0) to the top pole (r=0)
def revolve(profile: np.ndarray, segments: int = DEFAULT_SEGMENTS) -> Tri_Mesh:
  prof = np.asarray(profile, dtype=np.float64)
  rings = prof[1:-1]
  theta = 2 * np.pi * np.arange(segments) / segments
  ring_points = [np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full(segments, z)]) for r, z in rings]
  vertices = np.vstack([[0.0, 0.0, prof[0, 1]]] + ring_points + [[0.0, 0.0, prof[-1, 1]]])
  top_pole = len(vertices) - 1

  def ring(k, j):
    return 1 + k * segments + (j % segments)

  tris = []
  for j in range(segments):
    tris.append((0, ring(0, j + 1), ring(0, j)))
  for k in range(len(rings) - 1):
    for j in range(segments):
      tris.append((ring(k, j), ring(k, j + 1), ring(k + 1, j + 1)))
      tris.append((ring(k, j), ring(k + 1, j + 1), ring(k + 1, j)))
  last = len(rings) - 1
  for j in range(segments):
    tris.append((top_pole, ring(last, j), ring(last, j + 1)))
  return Tri_Mesh(vertices, np.array(tris))


def box(size) -> Tri_Mesh:
  sx, sy, sz = size
  rect = np.array([[-sx / 2, -sy / 2], [sx / 2, -sy / 2], [sx / 2, sy / 2], [-sx / 2, sy / 2]])
  return extrude(rect, sz)


def uv_sphere(radius: float, n_lat: int = 16, n_lon: int = DEFAULT_SEGMENTS) -> Tri_Mesh:
  phi = np.linspace(0, np.pi, n_lat + 1)
  return revolve(np.column_stack([radius * np.sin(phi), -radius * np.cos(phi)]), n_lon)


def icosphere(radius: float, subdivisions: int = 2) -> Tri_Mesh:
  t = (1 + np.sqrt(5)) / 2
  verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
           (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
  faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2),
           (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5), (2, 4, 11),
           (6, 2, 10), (8, 6, 7), (9, 8, 1)]
  verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
  for _ in range(subdivisions):
    midpoint_cache = {}

    def midpoint(a, b):
      key = (min(a, b), max(a, b))
      if key not in midpoint_cache:
        m = verts[a] + verts[b]
        verts.append(m / np.linalg.norm(m))
        midpoint_cache[key] = len(verts) - 1
      return midpoint_cache[key]

    new_faces = []
    for a, b, c in faces:
      ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
      new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    faces = new_faces
  return orient_outward(Tri_Mesh(np.array(verts) * radius, np.array(faces)))


def ellipsoid(radii, subdivisions: int = 2) -> Tri_Mesh:
  sphere = icosphere(1.0, subdivisions)
  return Tri_Mesh(sphere.vertices * np.asarray(radii, dtype=np.float64), sphere.triangles)


def cylinder(radius: float, height: float, segments: int = DEFAULT_SEGMENTS) -> Tri_Mesh:
  h = height / 2
  return revolve(np.array([[0, -h], [radius, -h], [radius, h], [0, h]]), segments)


def cone(radius: float, height: float, segments: int = DEFAULT_SEGMENTS) -> Tri_Mesh:
  h = height / 2
  return revolve(np.array([[0, -h], [radius, -h], [0, h]]), segments)


# L-shaped cross section (outer width x depth, arm thickness) extruded by height
def l_prism(width: float, depth: float, thickness: float, height: float) -> Tri_Mesh:
  if not 0 < thickness < min(width, depth):
    raise Input_Error("L-prism arm thickness must be smaller than its width and depth")
  w, d, t = width, depth, thickness
  # Starts at the reflex corner so the cap fan stays inside the polygon
  poly = np.array([[t, t], [t, d], [0, d], [0, 0], [w, 0], [w, t]]) - np.array([w / 2, d / 2])
  return extrude(poly, height)


def wedge(width: float, depth: float, height: float) -> Tri_Mesh:
  tri = np.array([[-width / 2, -depth / 2], [width / 2, -depth / 2], [-width / 2, depth / 2]])
  return extrude(tri, height)


def torus(major: float, minor: float, n_major: int = DEFAULT_SEGMENTS, n_minor: int = 12) -> Tri_Mesh:
  u = 2 * np.pi * np.arange(n_major) / n_major
  v = 2 * np.pi * np.arange(n_minor) / n_minor
  uu, vv = np.meshgrid(u, v, indexing='ij')
  x = (major + minor * np.cos(vv)) * np.cos(uu)
  y = (major + minor * np.cos(vv)) * np.sin(uu)
  z = minor * np.sin(vv)
  vertices = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
  tris = []
  for i in range(n_major):
    for j in range(n_minor):
      a = i * n_minor + j
      b = ((i + 1) % n_major) * n_minor + j
      c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
      d = i * n_minor + (j + 1) % n_minor
      tris += [(a, b, c), (a, c, d)]
  return orient_outward(Tri_Mesh(vertices, np.array(tris)))


# Family name -> builder drawing proportions from rng at a characteristic size `scale` (meters)
def _box(rng, s):
  return box(s * rng.uniform(0.5, 1.0, 3))


def _cube(rng, s):
  return box([s * rng.uniform(0.6, 1.0)] * 3)


def _sphere(rng, s):
  return icosphere(s * rng.uniform(0.3, 0.5), 2)


def _globe(rng, s):
  return uv_sphere(s * rng.uniform(0.3, 0.5))


def _ellipsoid(rng, s):
  return ellipsoid(s * np.array([rng.uniform(0.4, 0.5), rng.uniform(0.25, 0.4), rng.uniform(0.15, 0.3)]), 2)


def _cylinder(rng, s):
  return cylinder(s * rng.uniform(0.2, 0.4), s * rng.uniform(0.6, 1.0))


def _cone(rng, s):
  return cone(s * rng.uniform(0.25, 0.45), s * rng.uniform(0.6, 1.0))


def _l_prism(rng, s):
  w, d = s * rng.uniform(0.6, 1.0), s * rng.uniform(0.6, 1.0)
  return l_prism(w, d, min(w, d) * rng.uniform(0.3, 0.5), s * rng.uniform(0.3, 0.7))


def _torus(rng, s):
  major = s * rng.uniform(0.25, 0.33)
  return torus(major, major * rng.uniform(0.3, 0.5))


def _wedge(rng, s):
  return wedge(s * rng.uniform(0.6, 1.0), s * rng.uniform(0.6, 1.0), s * rng.uniform(0.3, 0.7))


SHAPE_FAMILIES = {
  'box': _box,
  'cube': _cube,
  'sphere': _sphere,
  'globe': _globe,
  'ellipsoid': _ellipsoid,
  'cylinder': _cylinder,
  'cone': _cone,
  'l_prism': _l_prism,
  'torus': _torus,
  'wedge': _wedge,
}

# Characteristic object sizes (meters) sampled per shape
MIN_SCALE = 0.08
MAX_SCALE = 0.2


def shape_family(name: str, scale: float, seed: int) -> Tri_Mesh:
  if name not in SHAPE_FAMILIES:
    raise Input_Error(f"unknown shape family '{name}', expected one of {sorted(SHAPE_FAMILIES)}")
  return SHAPE_FAMILIES[name](np.random.default_rng(seed), scale)


# Deterministic list of (mesh_id, mesh) with per_family shapes of each family at varied scales
def desk_shapes(families: list = None, per_family: int = 1, seed: int = 0) -> list[tuple[str, Tri_Mesh]]:
  families = list(SHAPE_FAMILIES) if families is None else list(families)
  rng = np.random.default_rng(seed)
  shapes = []
  for name in families:
    for k in range(per_family):
      scale = rng.uniform(MIN_SCALE, MAX_SCALE)
      shapes.append((f"{name}_{k:02d}", shape_family(name, scale, int(rng.integers(2**31)))))
  return shapes
