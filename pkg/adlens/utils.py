"""Small helpers shared by the pipeline stages: worker pools, seeds, summation."""
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
import hashlib
import math
from pathlib import Path
import shutil
import typing as tp


def derive_seed(master_seed: int, unit_index: int) -> int:
    """Seed for one parallel unit (fold, grid point, tree batch).

    Derived from a hash of `(master_seed, unit_index)` so that results do not
    depend on which worker picks the unit up, nor on `PYTHONHASHSEED`.
    """
    digest = hashlib.sha256(f"{master_seed}:{unit_index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def human_seconds(seconds, display='.2f'):
    """
    Given `seconds` seconds, return human readable duration.
    """
    value = seconds * 1e6
    ratios = [1e3, 1e3, 60, 60, 24]
    names = ['us', 'ms', 's', 'min', 'hrs', 'days']
    last = names.pop(0)
    for name, ratio in zip(names, ratios):
        if value / ratio < 0.3:
            break
        value /= ratio
        last = name
    return f"{format(value, display)} {last}"


def stable_sum(values: tp.Iterable[float]) -> float:
    # exactly rounded, hence independent of the order values arrive in
    return math.fsum(values)


class DummyPoolExecutor:
    """Runs submitted work inline; same interface as `ThreadPoolExecutor`."""

    class DummyResult:
        def __init__(self, func, *args, **kwargs):
            self.func = func
            self.args = args
            self.kwargs = kwargs

        def result(self):
            return self.func(*self.args, **self.kwargs)

    def __init__(self, workers=0):
        pass

    def submit(self, func, *args, **kwargs):
        return DummyPoolExecutor.DummyResult(func, *args, **kwargs)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, exc_tb):
        return


def get_pool(workers: int = 0):
    if workers > 0:
        return ThreadPoolExecutor(workers)
    return DummyPoolExecutor()


def ordered_map(func: tp.Callable, items: tp.Sequence, workers: int = 0) -> list:
    """Apply `func` to every item, possibly in parallel, keeping input order."""
    with get_pool(workers) as pool:
        futures = [pool.submit(func, item) for item in items]
        return [future.result() for future in futures]


@contextmanager
def atomic_output(target: Path, directory: bool = True):
    """Yield a temporary sibling of `target`, renamed onto it only when the block succeeds."""
    target = Path(target)
    tmp = target.with_name(target.name + ".tmp")
    _remove(tmp)
    target.parent.mkdir(parents=True, exist_ok=True)
    if directory:
        tmp.mkdir()
    try:
        yield tmp
    except BaseException:
        _remove(tmp)
        raise
    _remove(target)
    tmp.rename(target)


def _remove(path: Path):
    if path.is_dir():
        shutil.rmtree(path)
    elif path.exists():
        path.unlink()
