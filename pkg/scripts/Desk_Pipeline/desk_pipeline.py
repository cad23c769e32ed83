import numpy as np
from VOXC.Algorithm import Train_Config
from VOXC.Completion import Completer, Strategy, complete, complete_scene
from VOXC.Data_Gen import Split_Config, build_dataset
from VOXC.Gene import Architecture, DESK_HIDDEN
from VOXC.Geometry import Tri_Mesh, Camera_Pose, transform_mesh, render_depth, depth_to_cloud
from VOXC.Local import train
from VOXC.Metrics import Completion_Record, evaluate_suite
from VOXC.Network import init_model
from VOXC.Post_Process import reconstruct
from VOXC.Grid import grid_to_pointcloud
from VOXC.Shapes import desk_shapes, shape_family
from VOXC.File_IO import save_model, write_mesh, write_tsv


# Two objects side by side on a desk, seen from a camera looking down the +y axis
def desk_scene(seed: int) -> tuple[Tri_Mesh, Camera_Pose]:
  parts = [transform_mesh(shape_family('cylinder', 0.1, seed), translation=(-0.12, 0.0, 0.0)),
           transform_mesh(shape_family('box', 0.1, seed + 1), translation=(0.12, 0.0, 0.0))]
  vertices, triangles, offset = [], [], 0
  for part in parts:
    vertices.append(part.vertices)
    triangles.append(part.triangles + offset)
    offset += len(part.vertices)
  pose = Camera_Pose(position=(0.0, -0.7, 0.0), orientation=(-np.pi / 2, 0.0, 0.0))
  return Tri_Mesh(np.vstack(vertices), np.vstack(triangles)), pose


if __name__ == '__main__':
  # Run variables
  RUN_NAME = "Desk_Pipeline"
  GRID_SIDE = 24
  SEED = 0

  # Data
  meshes = desk_shapes(per_family=2, seed=SEED)
  split_cfg = Split_Config(holdout_model_frac=0.2, holdout_view_frac=0.2, views=(3, 3, 4))
  dataset = build_dataset(meshes, split_cfg, GRID_SIDE, SEED)
  print(dataset.counts())

  # Training
  model = init_model(Architecture.default(GRID_SIDE, DESK_HIDDEN), SEED)
  cfg = Train_Config(batch_size=16, learning_rate=1e-3, max_batches=400, eval_every=50, eval_samples=20, seed=SEED)
  model, history, peak = train(model, dataset, cfg, RUN_NAME)
  save_model(f"{RUN_NAME}/model.vxcn", peak)

  # Scene completion
  scene_mesh, pose = desk_scene(SEED)
  depth = render_depth(scene_mesh, pose)
  cloud = depth_to_cloud(depth)
  scene = complete_scene(cloud, Completer(Strategy.CNN, peak), GRID_SIDE, target_index=0)
  print(scene.timing.line())
  for i, mesh in enumerate(scene.meshes):
    write_mesh(f"{RUN_NAME}/object_{i}.off", mesh)

  # Evaluation on held-out models
  records = []
  for pair in dataset.pairs()[::10]:
    truth = reconstruct(pair.y, None, pair.transform, fast=True)
    observed = grid_to_pointcloud(pair.x, pair.transform)
    grid, _ = complete(Completer(Strategy.CNN, peak), observed, GRID_SIDE, pair.transform)
    completed = reconstruct(grid, observed, pair.transform, fast=True)
    records.append(Completion_Record('cnn', pair.view.split.value, completed, truth, pair.name))
  summary, _ = evaluate_suite(records, hausdorff_samples=1000, geodesic_samples=200)
  write_tsv(f"{RUN_NAME}/report.tsv", list(summary[0].keys()), summary)

  from VOXC.Plotting import plot_history
  plot_history(history, title="Desk pipeline", save_plot=f"{RUN_NAME}/history.png")
