import numpy as np
import pytest
from VOXC.Algorithm import Train_Config
from VOXC.Data_Gen import Split_Config, build_dataset
from VOXC.Gene import Architecture, DESK_HIDDEN
from VOXC.Geometry import Camera_Config
from VOXC.Local import train
from VOXC.Network import init_model
from VOXC.Shapes import desk_shapes

# Small settings that keep rendering and training fast in tests
TEST_SIDE = 16
TEST_CAMERA = Camera_Config(width=32, height=32)

# Desk-scale training runs shared by the slow tests
DESK_SIDE = 24
DESK_FAMILIES = ['box', 'cube', 'sphere', 'ellipsoid', 'cylinder', 'cone', 'wedge', 'l_prism']
DESK_SEEDS = (0, 1, 2)
DESK_TRAINING = dict(batch_size=32, learning_rate=1e-4, max_batches=2000, eval_every=500, eval_samples=50)


@pytest.fixture(scope="session")
def desk_meshes():
  return desk_shapes(['box', 'sphere', 'cylinder', 'cone', 'wedge'], per_family=1, seed=0)


@pytest.fixture(scope="session")
def small_dataset(desk_meshes):
  split_cfg = Split_Config(holdout_model_frac=0.2, holdout_view_frac=0.25, views=(2, 2, 2), camera=TEST_CAMERA)
  return build_dataset(desk_meshes, split_cfg, TEST_SIDE, seed=0)


@pytest.fixture(scope="session")
def desk_dataset():
  meshes = desk_shapes(DESK_FAMILIES, per_family=2, seed=0)
  return build_dataset(meshes, Split_Config(views=(3, 3, 4)), DESK_SIDE, seed=0)


# One (untrained, trained, history) triple per seed
@pytest.fixture(scope="session")
def desk_runs(desk_dataset):
  runs = []
  for seed in DESK_SEEDS:
    initial = init_model(Architecture.default(DESK_SIDE, DESK_HIDDEN), seed)
    model, history, _ = train(initial.copy(), desk_dataset, Train_Config(seed=seed, **DESK_TRAINING))
    runs.append((initial, model, history))
  return runs


@pytest.fixture
def rng():
  return np.random.default_rng(0)
