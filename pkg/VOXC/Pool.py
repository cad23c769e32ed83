# Training pairs keyed by pair name; registered subsets mirror the pairs that pass their condition
class Pair_Pool(dict):
  def __init__(self):
    self.subset_pools = []
    super().__init__()

  def add_subset_pool(self, subset_pool: 'Subset_Pool'):
    self.subset_pools.append(subset_pool)
    subset_pool.extend(self)

  # Keep every subset in step with one key of the parent
  def _route(self, key, value):
    for sub_pool in self.subset_pools:
      if sub_pool.accepts(key, value):
        sub_pool[key] = value
      else:
        sub_pool.pop(key, None)

  def __setitem__(self, key, value):
    self._route(key, value)
    super().__setitem__(key, value)

  def __delitem__(self, key):
    for sub_pool in self.subset_pools:
      sub_pool.pop(key, None)
    super().__delitem__(key)

  def extend(self, other: dict):
    for key, value in other.items():
      self[key] = value


class Subset_Pool(Pair_Pool):
  def __init__(self, condition: callable):
    self.condition = condition    # condition(key, value) -> bool
    super().__init__()

  def accepts(self, key, value) -> bool:
    return bool(self.condition(key, value))

  def __setitem__(self, key, value):
    if self.accepts(key, value):
      super().__setitem__(key, value)

  def pop(self, key, *default):
    for sub_pool in self.subset_pools:
      sub_pool.pop(key, None)
    return super().pop(key, *default)


# Subset holding the pairs of one split
def split_pool(split) -> Subset_Pool:
  return Subset_Pool(lambda name, pair: pair.view.split == split)
