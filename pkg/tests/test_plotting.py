import matplotlib
matplotlib.use("Agg")
from VOXC.Plotting import plot_history

HISTORY = [{'batch': 100, 'split': 'TrainView', 'jaccard': 0.2},
           {'batch': 100, 'split': 'HoldoutModel', 'jaccard': 0.1},
           {'batch': 200, 'split': 'TrainView', 'jaccard': 0.4},
           {'batch': 200, 'split': 'HoldoutModel', 'jaccard': 0.15}]


def test_one_curve_per_split(tmp_path):
  path = tmp_path / "history.png"
  ax = plot_history(HISTORY, title="desk", save_plot=str(path))
  assert [line.get_label() for line in ax.get_lines()] == ['TrainView', 'HoldoutModel']
  assert list(ax.get_lines()[0].get_ydata()) == [0.2, 0.4]
  assert ax.get_title() == "desk"
  assert path.stat().st_size > 0


def test_rows_read_back_from_tsv_are_strings():
  rows = [{k: str(v) for k, v in row.items()} for row in HISTORY]
  ax = plot_history(rows)
  assert list(ax.get_lines()[1].get_xdata()) == [100, 200]
