import argparse
import glob
import logging
import os
import sys
from VOXC.Algorithm import Train_Config, DEFAULT_LEARNING_RATE, DEFAULT_BATCH_SIZE, DEFAULT_EVAL_SAMPLES
from VOXC.Completion import Completer, Strategy, complete_pair, complete_scene, CLUSTER_TOLERANCE
from VOXC.Config import DEFAULT_GRID_SIDE, DEFAULT_SEED
from VOXC.Data_Gen import Dataset, Split, Split_Config, build_dataset
from VOXC.Errors import Input_Error, Numerical_Error
from VOXC.File_IO import load_dataset, save_dataset, load_model, save_model, read_cloud, read_mesh, write_mesh, \
  write_tsv, read_tsv
from VOXC.Gene import Architecture, DEFAULT_HIDDEN
from VOXC.Geometry import Camera_Config, laplacian_smooth
from VOXC.Grid import grid_to_pointcloud
from VOXC.Local import train
from VOXC.Metrics import Completion_Record, evaluate_suite, jaccard, HAUSDORFF_SAMPLES, GEODESIC_SAMPLES, \
  GMM_COMPONENTS, MESH_JACCARD_SIDE
from VOXC.Network import Model, init_model
from VOXC.Plotting import plot_history
from VOXC.Post_Process import reconstruct
from VOXC.Shapes import SHAPE_FAMILIES, desk_shapes

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

MESH_EXTENSIONS = (".off", ".stl")
HISTORY_HEADER = ['batch', 'split', 'jaccard']
SUMMARY_HEADER = ['method', 'split', 'n', 'jaccard', 'hausdorff_mm', 'geodesic_js']
PAIR_HEADER = ['method', 'split', 'pair', 'jaccard', 'hausdorff_mm', 'geodesic_js']
ORACLE = "oracle"            # Ground-truth passthrough, checks the evaluation plumbing


def parse_views(text: str) -> tuple:
  try:
    views = tuple(int(v) for v in text.lower().split("x"))
  except ValueError:
    raise argparse.ArgumentTypeError(f"views must look like RxPxY, got '{text}'") from None
  if len(views) != 3 or min(views) < 1:
    raise argparse.ArgumentTypeError(f"views must be three positive counts RxPxY, got '{text}'")
  return views


def _with_suffix(path: str, suffix: str, extension: str = None) -> str:
  stem, ext = os.path.splitext(path)
  return f"{stem}{suffix}{ext if extension is None else extension}"


######## gen-data ########

# (mesh_id, mesh) for every readable .off/.stl file in a folder, sorted by file name
def load_mesh_dir(mesh_dir: str) -> list:
  if not os.path.isdir(mesh_dir):
    raise Input_Error(f"mesh directory '{mesh_dir}' does not exist")
  meshes = []
  for path in sorted(glob.glob(os.path.join(mesh_dir, "*"))):
    if os.path.splitext(path)[1].lower() not in MESH_EXTENSIONS:
      continue
    try:
      mesh = read_mesh(path)
      if mesh.is_empty():
        raise Input_Error("mesh has no triangles")
    except (Input_Error, OSError) as e:
      logger.warning("skipping unreadable mesh %s: %s", path, e)
      continue
    meshes.append((os.path.splitext(os.path.basename(path))[0], mesh))
  return meshes


def cmd_gen_data(args) -> int:
  meshes = load_mesh_dir(args.mesh_dir)
  if not meshes:
    raise Input_Error(f"no usable meshes in '{args.mesh_dir}'")
  split_cfg = Split_Config(holdout_model_frac=args.holdout_frac, holdout_view_frac=args.holdout_view_frac,
                           views=args.views, camera=Camera_Config(width=args.image_side, height=args.image_side))
  dataset = build_dataset(meshes, split_cfg, args.grid_side, args.seed)
  save_dataset(args.out_file, dataset)
  for split, count in dataset.counts().items():
    print(f"{split}\t{count}")
  return EXIT_OK


def cmd_make_shapes(args) -> int:
  families = args.families.split(",") if args.families else None
  os.makedirs(args.out_dir, exist_ok=True)
  for mesh_id, mesh in desk_shapes(families, args.per_family, args.seed):
    write_mesh(os.path.join(args.out_dir, f"{mesh_id}.{args.format}"), mesh)
  return EXIT_OK


######## train ########

def history_comments(cfg: Train_Config) -> list:
  info = {'lr': cfg.learning_rate, 'batch_size': cfg.batch_size, 'batches': cfg.max_batches, 'seed': cfg.seed,
          'eval_every': cfg.eval_every, 'beta1': cfg.beta1, 'beta2': cfg.beta2, 'epsilon': cfg.epsilon}
  return [list(info.keys()), list(info.values())]


def cmd_train(args) -> int:
  dataset = load_dataset(args.dataset)
  cfg = Train_Config(batch_size=args.batch_size, learning_rate=args.lr, max_batches=args.batches,
                     eval_every=args.eval_every, eval_samples=args.eval_samples, seed=args.seed).validate()
  if args.resume:
    model = load_model(args.resume, expected_side=dataset.side)
  else:
    model = init_model(Architecture.default(dataset.side, args.hidden), cfg.seed)
  model, history, peak = train(model, dataset, cfg, args.run_dir)

  save_model(args.out_model, model)
  save_model(_with_suffix(args.out_model, ".peak"), peak)
  history_path = args.history or _with_suffix(args.out_model, ".history", ".tsv")
  write_tsv(history_path, HISTORY_HEADER, history, history_comments(cfg))
  if args.plot:
    plot_history(history, save_plot=args.plot)
  return EXIT_OK


def cmd_plot(args) -> int:
  _, rows = read_tsv(args.history)
  plot_history(rows, title=args.title, save_plot=args.out)
  return EXIT_OK


######## complete ########

def _completer(method: str, model_path: str, side: int) -> tuple[Completer, int]:
  if method != Strategy.CNN.value:
    return Completer.from_name(method), side
  if model_path is None:
    raise Input_Error("--model is required for --method cnn")
  model = load_model(model_path)
  return Completer(Strategy.CNN, model), model.input_side


def cmd_complete(args) -> int:
  pc = read_cloud(args.cloud_file)
  completer, side = _completer(args.method, args.model, args.grid_side)
  scene = complete_scene(pc, completer, side, args.cluster_index, args.tol, fast_target=args.fast,
                         all_objects=args.scene)
  out = args.out if not args.stl else _with_suffix(args.out, "", ".stl")
  write_mesh(out, scene.meshes[scene.target_index])
  if args.scene:
    for i, mesh in enumerate(scene.meshes):
      if i != scene.target_index:
        write_mesh(_with_suffix(out, f"_{i}"), mesh)
  print(scene.timing.line())
  return EXIT_OK


######## evaluate ########

# Completed meshes (world frame) for every requested method on every dataset pair
# Inputs: dataset, method names, model (cnn only), optional per-split cap, mesh-jaccard side (None: grid jaccard)
# Outputs: list of Completion_Record in (pair, method) order
def completion_records(dataset: Dataset, methods: list, model: Model = None, max_pairs: int = None,
                       mesh_jaccard_side: int = None) -> list:
  if not methods:
    raise Input_Error("no methods to evaluate")
  completers = {}
  for method in methods:
    if method == ORACLE:
      continue
    if method == Strategy.CNN.value:
      if model is None:
        raise Input_Error("the cnn method needs a model")
      if model.input_side != dataset.side:
        raise Input_Error(f"model side {model.input_side} does not match dataset side {dataset.side}")
    completers[method] = Completer.from_name(method, model if method == Strategy.CNN.value else None)

  pairs = []
  for split in Split:
    split_pairs = dataset.pairs(split)
    pairs += split_pairs if max_pairs is None else split_pairs[:max_pairs]

  records = []
  for pair in pairs:
    t = pair.transform
    truth = reconstruct(pair.y, None, t, fast=True)
    if truth.is_empty():
      logger.warning("skipping pair %s: empty ground truth", pair.name)
      continue
    observed = grid_to_pointcloud(pair.x, t)
    for method in methods:
      if method == ORACLE:
        grid, mesh = pair.y, truth
      else:
        grid = complete_pair(completers[method], pair)
        mesh = reconstruct(grid, observed, t, fast=True)
        if method == Strategy.Partial.value:
          mesh = laplacian_smooth(mesh)
      records.append(Completion_Record(method, pair.view.split.value, mesh, truth, pair.name,
                                       None if mesh_jaccard_side else jaccard(grid, pair.y)))
  return records


def cmd_evaluate(args) -> int:
  methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
  if not methods:
    raise Input_Error("--methods is empty")
  dataset = load_dataset(args.dataset)
  model = load_model(args.model, expected_side=dataset.side) if args.model else None
  records = completion_records(dataset, methods, model, args.max_pairs, args.mesh_jaccard_side)
  summary, pair_rows = evaluate_suite(records, args.mesh_jaccard_side or MESH_JACCARD_SIDE, args.hausdorff_samples,
                                      args.geodesic_samples, args.gmm_k, args.seed)
  write_tsv(args.out, SUMMARY_HEADER, summary)
  write_tsv(_with_suffix(args.out, "_pairs"), PAIR_HEADER, pair_rows)
  for row in summary:
    print("\t".join(str(row[key]) for key in SUMMARY_HEADER))
  return EXIT_OK


######## Entry point ########

def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(prog="voxc", description="Voxel shape completion from single depth views")
  parser.add_argument('--verbose', '-v', action='store_true', help="debug logging")
  commands = parser.add_subparsers(dest='command', required=True)

  p = commands.add_parser('gen-data', help="render training pairs from a folder of meshes")
  p.add_argument('mesh_dir')
  p.add_argument('out_file')
  p.add_argument('--grid-side', type=int, default=DEFAULT_GRID_SIDE)
  p.add_argument('--views', type=parse_views, default=(4, 3, 4), help="roll x pitch x yaw lattice, e.g. 11x6x11")
  p.add_argument('--holdout-frac', type=float, default=0.2, help="fraction of meshes held out entirely")
  p.add_argument('--holdout-view-frac', type=float, default=0.2, help="fraction of views held out per mesh")
  p.add_argument('--image-side', type=int, default=64)
  p.add_argument('--seed', type=int, default=DEFAULT_SEED)
  p.set_defaults(func=cmd_gen_data)

  p = commands.add_parser('make-shapes', help="write procedural desk-scale meshes")
  p.add_argument('out_dir')
  p.add_argument('--families', default=None, help=f"comma list from {','.join(SHAPE_FAMILIES)}")
  p.add_argument('--per-family', type=int, default=2)
  p.add_argument('--format', choices=['off', 'stl'], default='off')
  p.add_argument('--seed', type=int, default=DEFAULT_SEED)
  p.set_defaults(func=cmd_make_shapes)

  p = commands.add_parser('train', help="train the completion network")
  p.add_argument('dataset')
  p.add_argument('out_model')
  p.add_argument('--batches', type=int, default=2000)
  p.add_argument('--lr', type=float, default=DEFAULT_LEARNING_RATE)
  p.add_argument('--batch-size', type=int, default=DEFAULT_BATCH_SIZE)
  p.add_argument('--eval-every', type=int, default=100)
  p.add_argument('--eval-samples', type=int, default=DEFAULT_EVAL_SAMPLES)
  p.add_argument('--hidden', type=int, default=DEFAULT_HIDDEN)
  p.add_argument('--seed', type=int, default=DEFAULT_SEED)
  p.add_argument('--history', default=None, help="history table path (default <out_model>.history.tsv)")
  p.add_argument('--run-dir', default=None, help="folder for JSON-lines logs and run info")
  p.add_argument('--resume', default=None, help="model file to continue training from")
  p.add_argument('--plot', default=None, help="write a Jaccard-vs-batch image here")
  p.set_defaults(func=cmd_train)

  p = commands.add_parser('complete', help="complete one object of a point cloud scene")
  p.add_argument('cloud_file')
  p.add_argument('--model', default=None)
  p.add_argument('--method', choices=[s.value for s in Strategy], default=Strategy.CNN.value)
  p.add_argument('--fast', action='store_true', help="marching cubes on the completion only")
  p.add_argument('--out', default="completion.off")
  p.add_argument('--stl', action='store_true', help="write binary STL instead of OFF")
  p.add_argument('--cluster-index', type=int, default=0)
  p.add_argument('--tol', type=float, default=CLUSTER_TOLERANCE)
  p.add_argument('--grid-side', type=int, default=DEFAULT_GRID_SIDE, help="grid side for partial/mirror")
  p.add_argument('--scene', action='store_true', help="also complete every other cluster with the fast path")
  p.set_defaults(func=cmd_complete)

  p = commands.add_parser('evaluate', help="score completion methods on a dataset")
  p.add_argument('dataset')
  p.add_argument('--model', default=None)
  p.add_argument('--methods', default="partial,mirror,cnn")
  p.add_argument('--out', default="report.tsv")
  p.add_argument('--max-pairs', type=int, default=None, help="cap on pairs per split")
  p.add_argument('--mesh-jaccard-side', type=int, default=None)
  p.add_argument('--hausdorff-samples', type=int, default=HAUSDORFF_SAMPLES)
  p.add_argument('--geodesic-samples', type=int, default=GEODESIC_SAMPLES)
  p.add_argument('--gmm-k', type=int, default=GMM_COMPONENTS)
  p.add_argument('--seed', type=int, default=DEFAULT_SEED)
  p.set_defaults(func=cmd_evaluate)

  p = commands.add_parser('plot', help="plot a training history table")
  p.add_argument('history')
  p.add_argument('--out', default="history.png")
  p.add_argument('--title', default="Jaccard vs. Batch")
  p.set_defaults(func=cmd_plot)
  return parser


def main(argv: list = None) -> int:
  args = build_parser().parse_args(argv)
  logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                      format="%(asctime)s %(levelname)s %(name)s: %(message)s")
  try:
    return args.func(args)
  except Input_Error as e:
    logger.error("%s", e)
    return EXIT_INPUT
  except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
    logger.error("%s", e)
    return EXIT_INPUT
  except Numerical_Error as e:
    logger.error("numerical failure: %s", e)
    return EXIT_NUMERICAL


if __name__ == '__main__':
  sys.exit(main())
