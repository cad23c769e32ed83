import os
from VOXC.Config import THREADS_ENV, worker_count
from VOXC.Pool import Pair_Pool, Subset_Pool


def even_pool() -> Subset_Pool:
  return Subset_Pool(lambda key, value: value % 2 == 0)


def test_subsets_follow_the_parent():
  pool = Pair_Pool()
  pool['a'] = 2
  evens = even_pool()
  pool.add_subset_pool(evens)
  assert dict(evens) == {'a': 2}

  pool.extend({'b': 3, 'c': 4})
  assert list(evens) == ['a', 'c']
  pool['a'] = 5                     # Moves out of the subset
  assert 'a' not in evens
  del pool['c']
  assert dict(evens) == {}
  assert list(pool) == ['a', 'b']


def test_subset_rejects_items_directly():
  evens = even_pool()
  evens['x'] = 1
  evens['y'] = 2
  assert list(evens) == ['y']


def test_worker_count(monkeypatch):
  hardware = os.cpu_count() or 1
  monkeypatch.setenv(THREADS_ENV, "1")
  assert worker_count() == 1
  monkeypatch.setenv(THREADS_ENV, "bogus")
  assert worker_count() == hardware
  monkeypatch.setenv(THREADS_ENV, str(hardware + 5))
  assert worker_count() == hardware
  monkeypatch.delenv(THREADS_ENV)
  assert worker_count() == hardware
