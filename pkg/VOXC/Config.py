import os

# Environment variable capping worker threads (0 or unset = hardware default)
THREADS_ENV = "VOXC_THREADS"

DEFAULT_GRID_SIDE = 40
DEFAULT_SEED = 0


# Number of worker threads for parallel sections
# Inputs: None
# Outputs: int >= 1
def worker_count() -> int:
  hardware = os.cpu_count() or 1
  raw = os.environ.get(THREADS_ENV, "0").strip()
  try:
    cap = int(raw)
  except ValueError:
    cap = 0
  if cap <= 0:
    return hardware
  return min(cap, hardware)
