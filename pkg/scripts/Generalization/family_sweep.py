from VOXC.Algorithm import Train_Config
from VOXC.Data_Gen import Split_Config, build_dataset
from VOXC.Gene import Architecture, DESK_HIDDEN
from VOXC.Local import train
from VOXC.Network import init_model
from VOXC.Shapes import SHAPE_FAMILIES, desk_shapes
from VOXC.File_IO import write_tsv

# Identical networks trained on growing sets of shape families
SWEEP = {
  'small': ['box', 'sphere', 'cylinder'],
  'medium': ['box', 'sphere', 'cylinder', 'cone', 'torus', 'wedge'],
  'large': list(SHAPE_FAMILIES),
}

if __name__ == '__main__':
  # Run variables
  GRID_SIDE = 24
  PER_FAMILY = 3
  SEED = 0

  rows = []
  for set_name, families in SWEEP.items():
    meshes = desk_shapes(families, PER_FAMILY, SEED)
    dataset = build_dataset(meshes, Split_Config(views=(3, 3, 4)), GRID_SIDE, SEED)
    model = init_model(Architecture.default(GRID_SIDE, DESK_HIDDEN), SEED)
    cfg = Train_Config(batch_size=16, learning_rate=1e-3, max_batches=600, eval_every=600, eval_samples=50, seed=SEED)
    _, history, _ = train(model, dataset, cfg, f"Generalization_{set_name}")
    for record in history:
      rows.append({'set': set_name, 'n_models': len(meshes), **record})
    print(set_name, [f"{r['split']}={r['jaccard']:.3f}" for r in history])

  write_tsv("family_sweep.tsv", ['set', 'n_models', 'batch', 'split', 'jaccard'], rows)
