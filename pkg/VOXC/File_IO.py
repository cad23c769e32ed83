from enum import Enum
import json
import os
import struct
import tempfile
import time
import zlib
from os.path import join as file_path
import jsbeautifier
import numpy as np
import portalocker
from VOXC.Errors import Input_Error
from VOXC.Gene import Architecture
from VOXC.Geometry import Tri_Mesh, Camera_Pose
from VOXC.Grid import Occupancy_Grid, Embed_Transform, PointCloud, as_cloud
from VOXC.Network import Model, Adam_State
from VOXC.Data_Gen import Dataset, Training_Pair, View_Spec, Split


# Constants for filesystem
LOG_DIR = "logs"
RUN_INFO = "run_info"
RUN_INFO_NAME = "RUN_INFO.json"
TRAIN_LOG_NAME = "TRAIN.log"
ERROR_LOG_NAME = "ERROR_LOG.log"
LOG_LOCK_NAME = "LOG_LOCK.lock"
LOCK_TIMEOUT = 10

# Binary formats (all little-endian, CRC32 trailer over every preceding byte)
MODEL_MAGIC = b"VXCN"
MODEL_VERSION = 1
DATASET_MAGIC = b"VXDS"
DATASET_VERSION = 1
CLOUD_MAGIC = b"VXPC"
CLOUD_VERSION = 1
ZLIB_LEVEL = 6


# Transform any non-json compatible types
def jsonify(d):
  if isinstance(d, dict):
    return {str(k): jsonify(v) for k, v in d.items()}
  elif isinstance(d, (list, tuple)):
    return [jsonify(i) for i in d]
  elif isinstance(d, np.ndarray):
    return d.tolist()
  elif isinstance(d, np.generic):
    return d.item()
  elif isinstance(d, Enum):
    return d.value
  elif isinstance(d, type):
    return str(d)
  elif hasattr(d, 'to_json'):
    return d.to_json()
  return d


######## Atomic writes ########

# Write bytes to path through a temp file + rename, holding a lock beside the target
def atomic_write(path: str, data: bytes):
  directory = os.path.dirname(os.path.abspath(path))
  os.makedirs(directory, exist_ok=True)
  lock_path = path + ".lock"
  with portalocker.Lock(lock_path, timeout=LOCK_TIMEOUT):
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_")
    try:
      with os.fdopen(fd, 'wb') as tmp_file:
        tmp_file.write(data)
      os.replace(tmp_path, path)
    except BaseException:
      if os.path.exists(tmp_path):
        os.remove(tmp_path)
      raise
  try:
    os.remove(lock_path)
  except FileNotFoundError:   # Another writer already cleaned up
    pass


def _with_crc(payload: bytes) -> bytes:
  return payload + struct.pack('<I', zlib.crc32(payload))


def _check_crc(raw: bytes, magic: bytes, what: str) -> bytes:
  if len(raw) < len(magic) + 8:
    raise Input_Error(f"truncated {what} file")
  if raw[:4] != magic:
    raise Input_Error(f"bad magic for {what} file: expected {magic!r}, got {raw[:4]!r}")
  payload, (crc,) = raw[:-4], struct.unpack('<I', raw[-4:])
  if zlib.crc32(payload) != crc:
    raise Input_Error(f"corrupted {what} file (CRC mismatch)")
  return payload


# Sequential reader over a byte payload raising Input_Error on truncation
class _Reader:
  def __init__(self, data: bytes, what: str, offset: int = 0):
    self.data = data
    self.what = what
    self.offset = offset

  def take(self, n: int) -> bytes:
    if self.offset + n > len(self.data):
      raise Input_Error(f"truncated {self.what} file")
    chunk = self.data[self.offset:self.offset + n]
    self.offset += n
    return chunk

  def unpack(self, fmt: str):
    return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

  def array(self, dtype: str, count: int) -> np.ndarray:
    size = np.dtype(dtype).itemsize * count
    return np.frombuffer(self.take(size), dtype=dtype).astype(np.dtype(dtype).newbyteorder('='))

  def json(self):
    (length,) = self.unpack('<I')
    return json.loads(self.take(length).decode('utf-8'))


def _json_block(obj) -> bytes:
  raw = json.dumps(jsonify(obj), sort_keys=True).encode('utf-8')
  return struct.pack('<I', len(raw)) + raw


######## Run logs ########

# Append one JSON line under the run's log lock
def write_log(run_name: str, log: dict, log_name: str = TRAIN_LOG_NAME):
  os.makedirs(file_path(run_name, LOG_DIR), exist_ok=True)
  log_path = file_path(run_name, LOG_DIR, log_name)
  line = json.dumps(jsonify(dict(log))) + "\n"    # Not json.dump because want each log on a new line
  with portalocker.Lock(file_path(run_name, LOG_DIR, LOG_LOCK_NAME), timeout=LOCK_TIMEOUT):
    with open(log_path, 'a+') as log_file:
      log_file.write(line)


def read_log(run_name: str, log_name: str = TRAIN_LOG_NAME) -> list[dict]:
  log_path = file_path(run_name, LOG_DIR, log_name)
  with open(log_path, 'r') as log_file:
    return [json.loads(line) for line in log_file if line.strip()]


def write_error_log(run_name: str, error_log: dict):
  error_log = dict(error_log)
  error_log.setdefault('timestamp', time.strftime('%H:%M:%S', time.localtime()))
  write_log(run_name, error_log, ERROR_LOG_NAME)


# Pretty-printed configuration of a run
def write_run_info(run_name: str, info: dict):
  os.makedirs(file_path(run_name, RUN_INFO), exist_ok=True)
  options = jsbeautifier.default_options()
  options.indent_size = 2
  text = jsbeautifier.beautify(json.dumps(jsonify(info), sort_keys=True), options)
  atomic_write(file_path(run_name, RUN_INFO, RUN_INFO_NAME), text.encode('utf-8'))


def read_run_info(run_name: str) -> dict:
  with open(file_path(run_name, RUN_INFO, RUN_INFO_NAME), 'r') as info_file:
    return json.load(info_file)


######## Model files ########

# VXCN: magic, version, architecture JSON, parameter count, f64 parameters, optional Adam state, CRC32
def model_to_bytes(model: Model, include_adam: bool = True) -> bytes:
  header = {'architecture': model.arch.to_json(), 'adam': include_adam}
  out = [MODEL_MAGIC, struct.pack('<I', MODEL_VERSION), _json_block(header),
         struct.pack('<Q', len(model.vector)), model.vector.astype('<f8').tobytes()]
  if include_adam:
    out += [struct.pack('<Q', model.adam.t), model.adam.m.astype('<f8').tobytes(),
            model.adam.v.astype('<f8').tobytes()]
  return _with_crc(b"".join(out))


def model_from_bytes(raw: bytes, expected_side: int = None) -> Model:
  payload = _check_crc(raw, MODEL_MAGIC, "model")
  reader = _Reader(payload, "model", 4)
  (version,) = reader.unpack('<I')
  if version != MODEL_VERSION:
    raise Input_Error(f"model file version {version} is not supported (expected {MODEL_VERSION})")
  header = reader.json()
  arch = Architecture.from_json(header['architecture'])
  if expected_side is not None and arch.input_side != expected_side:
    raise Input_Error(f"model grid side {arch.input_side} does not match expected side {expected_side}")
  (count,) = reader.unpack('<Q')
  if count != arch.parameter_count():
    raise Input_Error(f"model declares {count} parameters, architecture needs {arch.parameter_count()}")
  vector = reader.array('<f8', count)
  adam = None
  if header.get('adam'):
    (t,) = reader.unpack('<Q')
    adam = Adam_State(reader.array('<f8', count), reader.array('<f8', count), int(t))
  if reader.offset != len(payload):
    raise Input_Error("model file has trailing bytes")
  return Model(arch, vector, adam)


def save_model(path: str, model: Model, include_adam: bool = True):
  atomic_write(path, model_to_bytes(model, include_adam))


def load_model(path: str, expected_side: int = None) -> Model:
  with open(path, 'rb') as model_file:
    return model_from_bytes(model_file.read(), expected_side)


######## Dataset files ########

# x-major bit order: x fastest, z slowest
def pack_grids(*grids: Occupancy_Grid) -> bytes:
  bits = np.concatenate([g.data.ravel(order='F') for g in grids])
  return np.packbits(bits, bitorder='little').tobytes()


def unpack_grids(raw: bytes, side: int, count: int) -> list[Occupancy_Grid]:
  n = side ** 3
  expected = (count * n + 7) // 8
  if len(raw) != expected:
    raise Input_Error(f"packed grid block has {len(raw)} bytes, expected {expected}")
  bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=count * n, bitorder='little').astype(bool)
  return [Occupancy_Grid(bits[i * n:(i + 1) * n].reshape((side,) * 3, order='F')) for i in range(count)]


# VXDS: magic, version, side, pair count, manifest JSON, zlib(X bits + Y bits) per pair, CRC32
def dataset_to_bytes(dataset: Dataset) -> bytes:
  out = [DATASET_MAGIC, struct.pack('<III', DATASET_VERSION, dataset.side, len(dataset)),
         _json_block(dataset.manifest())]
  for pair in dataset.pairs():
    block = zlib.compress(pack_grids(pair.x, pair.y), ZLIB_LEVEL)
    out += [struct.pack('<I', len(block)), block]
  return _with_crc(b"".join(out))


def dataset_from_bytes(raw: bytes) -> Dataset:
  payload = _check_crc(raw, DATASET_MAGIC, "dataset")
  reader = _Reader(payload, "dataset", 4)
  version, side, count = reader.unpack('<III')
  if version != DATASET_VERSION:
    raise Input_Error(f"dataset file version {version} is not supported (expected {DATASET_VERSION})")
  manifest = reader.json()
  if len(manifest) != count:
    raise Input_Error(f"dataset manifest lists {len(manifest)} pairs, header declares {count}")
  dataset = Dataset(side)
  for row in manifest:
    (length,) = reader.unpack('<I')
    try:
      x, y = unpack_grids(zlib.decompress(reader.take(length)), side, 2)
    except zlib.error as e:
      raise Input_Error(f"corrupted pair block: {e}") from e
    transform = Embed_Transform(row['scale'], np.array(row['offset']))
    for g in (x, y):
      g.voxel_size, g.origin = transform.voxel_size, transform.origin
    view = View_Spec(row['mesh_id'], Camera_Pose(np.array(row['position']), tuple(row['orientation'])),
                     Split(row['split']), int(row['view_index']))
    dataset.add(Training_Pair(x, y, view, transform))
  return dataset


def save_dataset(path: str, dataset: Dataset):
  atomic_write(path, dataset_to_bytes(dataset))


def load_dataset(path: str) -> Dataset:
  with open(path, 'rb') as dataset_file:
    return dataset_from_bytes(dataset_file.read())


######## Point clouds ########

# ASCII "x y z" per line (meters); blank lines and '#' comments ignored
def parse_xyz(text: str) -> PointCloud:
  points = []
  for line_no, line in enumerate(text.splitlines(), start=1):
    line = line.split('#', 1)[0].strip()
    if not line:
      continue
    fields = line.replace(',', ' ').split()
    if len(fields) != 3:
      raise Input_Error(f"line {line_no}: expected 3 coordinates, got {len(fields)}")
    try:
      point = [float(f) for f in fields]
    except ValueError as e:
      raise Input_Error(f"line {line_no}: {e}") from e
    if not np.all(np.isfinite(point)):
      raise Input_Error(f"line {line_no}: non-finite coordinate")
    points.append(point)
  return as_cloud(points)


def cloud_to_xyz(pc: PointCloud) -> bytes:
  return "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in as_cloud(pc).tolist()).encode('utf-8')


# VXPC: magic, version, point count, f32 triples (no CRC)
def cloud_to_vxpc(pc: PointCloud) -> bytes:
  pc = as_cloud(pc)
  return CLOUD_MAGIC + struct.pack('<IQ', CLOUD_VERSION, len(pc)) + pc.astype('<f4').tobytes()


def cloud_from_vxpc(raw: bytes) -> PointCloud:
  if raw[:4] != CLOUD_MAGIC:
    raise Input_Error(f"bad magic for cloud file: got {raw[:4]!r}")
  reader = _Reader(raw, "cloud", 4)
  version, count = reader.unpack('<IQ')
  if version != CLOUD_VERSION:
    raise Input_Error(f"cloud file version {version} is not supported (expected {CLOUD_VERSION})")
  points = reader.array('<f4', 3 * count).reshape(-1, 3)
  if reader.offset != len(raw):
    raise Input_Error("cloud file has trailing bytes")
  return points.astype(np.float64)


def read_cloud(path: str) -> PointCloud:
  with open(path, 'rb') as cloud_file:
    raw = cloud_file.read()
  if raw[:4] == CLOUD_MAGIC:
    return cloud_from_vxpc(raw)
  try:
    return parse_xyz(raw.decode('utf-8'))
  except UnicodeDecodeError as e:
    raise Input_Error(f"cloud file is neither VXPC nor ASCII XYZ: {e}") from e


def write_cloud(path: str, pc: PointCloud, binary: bool = False):
  atomic_write(path, cloud_to_vxpc(pc) if binary else cloud_to_xyz(pc))


######## Meshes ########

def mesh_to_off(m: Tri_Mesh) -> bytes:
  lines = ["OFF", f"{len(m.vertices)} {len(m.triangles)} 0"]
  lines += [f"{x!r} {y!r} {z!r}" for x, y, z in m.vertices.tolist()]
  lines += [f"3 {a} {b} {c}" for a, b, c in m.triangles.tolist()]
  return ("\n".join(lines) + "\n").encode('utf-8')


# OFF reader; polygons with more than 3 corners are fan-triangulated
def mesh_from_off(text: str) -> Tri_Mesh:
  tokens = []
  for line in text.splitlines():
    line = line.split('#', 1)[0].strip()
    if line:
      tokens.append(line)
  if not tokens or not tokens[0].startswith("OFF"):
    raise Input_Error("OFF file must start with 'OFF'")
  header = tokens[0][3:].split() or tokens.pop(1).split()
  try:
    n_vertices, n_faces = int(header[0]), int(header[1])
    body = tokens[1:]
    vertices = np.array([[float(v) for v in body[i].split()[:3]] for i in range(n_vertices)])
    triangles = []
    for line in body[n_vertices:n_vertices + n_faces]:
      values = [int(v) for v in line.split()]
      corners = values[1:1 + values[0]]
      triangles += [(corners[0], corners[i], corners[i + 1]) for i in range(1, len(corners) - 1)]
  except (IndexError, ValueError) as e:
    raise Input_Error(f"malformed OFF file: {e}") from e
  return Tri_Mesh(vertices, np.array(triangles, dtype=np.int64).reshape(-1, 3))


_STL_RECORD = np.dtype([('normal', '<f4', 3), ('corners', '<f4', (3, 3)), ('attr', '<u2')])


def mesh_to_stl(m: Tri_Mesh) -> bytes:
  c = m.corners()
  normals = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
  norms = np.linalg.norm(normals, axis=1, keepdims=True)
  normals = np.divide(normals, norms, out=np.zeros_like(normals), where=norms > 0)
  records = np.zeros(len(c), dtype=_STL_RECORD)
  records['normal'] = normals
  records['corners'] = c
  return b"\0" * 80 + struct.pack('<I', len(c)) + records.tobytes()


# Binary STL reader; coincident corners are merged into shared vertices
def mesh_from_stl(raw: bytes) -> Tri_Mesh:
  if len(raw) < 84:
    raise Input_Error("truncated STL file")
  (count,) = struct.unpack('<I', raw[80:84])
  if len(raw) != 84 + count * _STL_RECORD.itemsize:
    raise Input_Error(f"STL file size does not match its {count} triangles (ASCII STL is not supported)")
  records = np.frombuffer(raw[84:], dtype=_STL_RECORD)
  corners = records['corners'].astype(np.float64).reshape(-1, 3)
  vertices, inverse = np.unique(corners, axis=0, return_inverse=True)
  triangles = inverse.reshape(-1, 3)
  keep = (triangles[:, 0] != triangles[:, 1]) & (triangles[:, 1] != triangles[:, 2]) & \
         (triangles[:, 0] != triangles[:, 2])
  return Tri_Mesh(vertices, triangles[keep])


def read_mesh(path: str) -> Tri_Mesh:
  extension = os.path.splitext(path)[1].lower()
  with open(path, 'rb') as mesh_file:
    raw = mesh_file.read()
  if extension == ".off":
    return mesh_from_off(raw.decode('utf-8', errors='replace'))
  if extension == ".stl":
    return mesh_from_stl(raw)
  raise Input_Error(f"unsupported mesh format '{extension}' (expected .off or .stl)")


def write_mesh(path: str, m: Tri_Mesh):
  stl = os.path.splitext(path)[1].lower() == ".stl"
  atomic_write(path, mesh_to_stl(m) if stl else mesh_to_off(m))


######## Tables ########

def _cell(value) -> str:
  if isinstance(value, (float, np.floating)):
    return repr(float(value))
  return str(jsonify(value))


# Tab-separated table with a header row; optional '#'-prefixed comment rows come first
def tsv_bytes(header: list, rows: list, comments: list = None) -> bytes:
  lines = ["#" + "\t".join(_cell(v) for v in row) for row in comments or []]
  lines.append("\t".join(header))
  lines += ["\t".join(_cell(row[key] if isinstance(row, dict) else row[i]) for i, key in enumerate(header))
            for row in rows]
  return ("\n".join(lines) + "\n").encode('utf-8')


def write_tsv(path: str, header: list, rows: list, comments: list = None):
  atomic_write(path, tsv_bytes(header, rows, comments))


# Inputs: path; Outputs: (comment rows, list of dict rows keyed by header)
def read_tsv(path: str) -> tuple[list, list[dict]]:
  comments, rows, header = [], [], None
  with open(path, 'r') as tsv_file:
    for line in tsv_file:
      line = line.rstrip("\n")
      if line.startswith("#"):
        comments.append(line[1:].split("\t"))
      elif header is None:
        header = line.split("\t")
      elif line:
        rows.append(dict(zip(header, line.split("\t"))))
  return comments, rows
