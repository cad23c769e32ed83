from concurrent.futures import ThreadPoolExecutor
import os
from enum import Enum
import numpy as np
import pytest
from VOXC.Errors import Input_Error
from VOXC.File_IO import jsonify, atomic_write, save_model, load_model, model_to_bytes, model_from_bytes, \
  pack_grids, unpack_grids, dataset_to_bytes, dataset_from_bytes, save_dataset, load_dataset, parse_xyz, \
  cloud_to_vxpc, cloud_from_vxpc, read_cloud, write_cloud, mesh_to_off, mesh_from_off, read_mesh, write_mesh, \
  write_tsv, read_tsv, write_log, read_log, write_error_log, LOG_DIR, LOG_LOCK_NAME, ERROR_LOG_NAME
from VOXC.Gene import Architecture
from VOXC.Geometry import is_watertight
from VOXC.Grid import Occupancy_Grid
from VOXC.Network import init_model, forward_batch
from VOXC.Algorithm import Train_Config, adam_step
from VOXC.Shapes import box


@pytest.fixture
def model():
  m = init_model(Architecture.default(16, hidden=8), seed=3)
  adam_step(m, np.full(len(m.vector), 0.01), Train_Config())
  return m


######## Models ########

def test_model_round_trip(model, tmp_path, rng):
  path = str(tmp_path / "model.vxcn")
  save_model(path, model)
  loaded = load_model(path, expected_side=16)
  assert loaded.arch == model.arch
  np.testing.assert_array_equal(loaded.vector, model.vector)
  np.testing.assert_array_equal(loaded.adam.m, model.adam.m)
  assert loaded.adam.t == 1
  x = rng.random((2, 16, 16, 16)) < 0.2
  np.testing.assert_array_equal(forward_batch(loaded, x), forward_batch(model, x))


def test_model_without_optimizer_state(model):
  loaded = model_from_bytes(model_to_bytes(model, include_adam=False))
  np.testing.assert_array_equal(loaded.vector, model.vector)
  assert loaded.adam.t == 0
  assert len(model_to_bytes(model, include_adam=False)) < len(model_to_bytes(model))


def test_damaged_model_files(model):
  raw = model_to_bytes(model)
  flipped = bytearray(raw)
  flipped[len(raw) // 2] ^= 0xFF
  with pytest.raises(Input_Error, match="CRC"):
    model_from_bytes(bytes(flipped))
  with pytest.raises(Input_Error, match="magic"):
    model_from_bytes(b"XXXX" + raw[4:])
  with pytest.raises(Input_Error, match="truncated"):
    model_from_bytes(raw[:10])
  with pytest.raises(Input_Error, match="side"):
    model_from_bytes(raw, expected_side=24)


######## Datasets ########

def test_grid_bits_run_x_fastest():
  g = Occupancy_Grid.empty(2)
  g.data[1, 0, 0] = True
  assert pack_grids(g) == bytes([0b10])
  g.data[0, 0, 1] = True
  assert pack_grids(g) == bytes([0b10010])
  assert unpack_grids(pack_grids(g), 2, 1)[0] == g
  with pytest.raises(Input_Error):
    unpack_grids(b"\0\0", 2, 1)


def test_dataset_round_trip(small_dataset, tmp_path):
  path = str(tmp_path / "desk.vxds")
  save_dataset(path, small_dataset)
  loaded = load_dataset(path)
  assert len(loaded) == len(small_dataset)
  assert loaded.counts() == small_dataset.counts()
  assert loaded.manifest() == small_dataset.manifest()
  for a, b in zip(loaded.pairs(), small_dataset.pairs()):
    assert a.name == b.name
    assert a.x == b.x and a.y == b.y
    assert a.transform == b.transform


def test_damaged_dataset(small_dataset):
  raw = dataset_to_bytes(small_dataset)
  with pytest.raises(Input_Error):
    dataset_from_bytes(raw[:-1])
  with pytest.raises(Input_Error):
    dataset_from_bytes(model_to_bytes(init_model(Architecture(4, [], [64]), 0)))


######## Point clouds ########

def test_parse_xyz():
  pc = parse_xyz("# header\n0.1 0.2 0.3\n\n1,2,3  # trailing\n")
  np.testing.assert_array_equal(pc, [[0.1, 0.2, 0.3], [1.0, 2.0, 3.0]])
  assert parse_xyz("").shape == (0, 3)


@pytest.mark.parametrize("text, message", [("1 2\n", "line 1"), ("1 2 3\n1 2 x\n", "line 2"),
                                           ("nan 0 0\n", "non-finite")])
def test_parse_xyz_errors(text, message):
  with pytest.raises(Input_Error, match=message):
    parse_xyz(text)


def test_cloud_files(tmp_path, rng):
  pc = rng.normal(size=(50, 3))
  write_cloud(str(tmp_path / "a.xyz"), pc)
  np.testing.assert_array_equal(read_cloud(str(tmp_path / "a.xyz")), pc)
  write_cloud(str(tmp_path / "a.vxpc"), pc, binary=True)
  np.testing.assert_array_equal(read_cloud(str(tmp_path / "a.vxpc")), pc.astype(np.float32).astype(np.float64))
  with pytest.raises(Input_Error, match="trailing"):
    cloud_from_vxpc(cloud_to_vxpc(pc) + b"\0")
  with pytest.raises(Input_Error):
    cloud_from_vxpc(cloud_to_vxpc(pc)[:-4])


######## Meshes ########

def test_off_round_trip():
  cube = box((0.1, 0.2, 0.3))
  loaded = mesh_from_off(mesh_to_off(cube).decode('utf-8'))
  np.testing.assert_array_equal(loaded.vertices, cube.vertices)
  np.testing.assert_array_equal(loaded.triangles, cube.triangles)


def test_off_polygons_are_fanned():
  text = "OFF\n# a unit square\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
  m = mesh_from_off(text)
  np.testing.assert_array_equal(m.triangles, [[0, 1, 2], [0, 2, 3]])
  with pytest.raises(Input_Error):
    mesh_from_off("PLY\n")
  with pytest.raises(Input_Error):
    mesh_from_off("OFF\n4 1 0\n0 0 0\n")


def test_stl_files(tmp_path):
  cube = box((0.1, 0.2, 0.3))
  path = str(tmp_path / "cube.stl")
  write_mesh(path, cube)
  assert os.path.getsize(path) == 84 + 50 * len(cube.triangles)
  loaded = read_mesh(path)
  assert len(loaded.vertices) == len(cube.vertices)
  assert is_watertight(loaded)
  (tmp_path / "cube.obj").write_bytes(b"")
  with pytest.raises(Input_Error):
    read_mesh(str(tmp_path / "cube.obj"))


######## Tables and plumbing ########

def test_tsv_with_comments(tmp_path):
  path = str(tmp_path / "history.tsv")
  write_tsv(path, ['batch', 'split', 'jaccard'], [{'batch': 100, 'split': 'TrainView', 'jaccard': 0.25}],
            comments=[['learning_rate', 'batch_size'], [0.0001, 32]])
  comments, rows = read_tsv(path)
  assert comments == [['learning_rate', 'batch_size'], ['0.0001', '32']]
  assert rows == [{'batch': '100', 'split': 'TrainView', 'jaccard': '0.25'}]


def test_atomic_write_replaces_without_leftovers(tmp_path):
  path = str(tmp_path / "out" / "file.bin")
  atomic_write(path, b"first")
  atomic_write(path, b"second")
  with open(path, 'rb') as f:
    assert f.read() == b"second"
  assert os.listdir(tmp_path / "out") == ["file.bin"]


def test_jsonify():
  class Color(Enum):
    Red = "red"
  out = jsonify({1: (np.int64(2), np.arange(2)), 'c': Color.Red, 'f': np.float32(0.5)})
  assert out == {'1': [2, [0, 1]], 'c': "red", 'f': 0.5}


######## Run logs ########

def test_concurrent_log_lines_stay_whole(tmp_path):
  run = str(tmp_path / "run")

  def writer(worker):
    for i in range(25):
      write_log(run, {'worker': worker, 'i': i, 'payload': 'x' * 2000})

  with ThreadPoolExecutor(max_workers=8) as executor:
    list(executor.map(writer, range(8)))
  logs = read_log(run)
  assert len(logs) == 8 * 25
  assert sorted((log['worker'], log['i']) for log in logs) == [(w, i) for w in range(8) for i in range(25)]
  assert os.path.exists(os.path.join(run, LOG_DIR, LOG_LOCK_NAME))


def test_error_log_is_separate_and_stamped(tmp_path):
  run = str(tmp_path / "run")
  write_log(run, {'batch': 1})
  write_error_log(run, {'error': "gradient overflow"})
  assert read_log(run) == [{'batch': 1}]
  errors = read_log(run, ERROR_LOG_NAME)
  assert errors[0]['error'] == "gradient overflow"
  assert 'timestamp' in errors[0]
