from matplotlib import pyplot as plt
from VOXC.Data_Gen import Split


# Jaccard vs. batch, one curve per split
# Inputs: history rows {batch, split, jaccard}, optional axes, show/save switches (save_plot = image path)
def plot_history(history: list[dict], ax=None, title: str = "Jaccard vs. Batch", show_plot: bool = False,
                 save_plot: bool | str = False):
  own_figure = ax is None
  if own_figure:
    fig, ax = plt.subplots()
  for split in Split:
    rows = [row for row in history if row['split'] == split.value]
    if not rows:
      continue
    x = [int(row['batch']) for row in rows]
    y = [float(row['jaccard']) for row in rows]
    ax.plot(x, y, label=split.value)

  ax.set_title(title)
  ax.set_xlabel("Batch")
  ax.set_ylabel("Jaccard")
  ax.set_ylim(0, 1)
  ax.legend()

  if show_plot:
    plt.show()

  if save_plot:
    ax.figure.savefig(save_plot)
    if own_figure:
      plt.close(ax.figure)
  return ax
