"""
Utilities to save and load trained stance pipelines.

A saved pipeline is a package dict (`version`, `klass`, `specs`, `state`)
serialized with joblib under `<name>-<sha256[:8]>.joblib`; the checksum is
verified when loading.
"""
from hashlib import sha256
from pathlib import Path
import re
import typing as tp

import joblib

from ..__version__ import VERSION
from ..errors import ModelLoadingError
from .pipeline import StancePipeline

PACKAGE_VERSION = 1
SIGNATURE_RE = re.compile(r"^(?P<name>.+)-(?P<checksum>[0-9a-f]{8})\.joblib$")


def file_checksum(path: Path) -> str:
    sha = sha256()
    with open(path, 'rb') as file:
        while True:
            buf = file.read(2**20)
            if not buf:
                break
            sha.update(buf)
    return sha.hexdigest()


def check_checksum(path: Path, checksum: str):
    actual_checksum = file_checksum(path)[:len(checksum)]
    if actual_checksum != checksum:
        raise ModelLoadingError(f'Invalid checksum for file {path}, '
                                f'expected {checksum} but got {actual_checksum}')


def serialize_pipeline(pipeline: StancePipeline) -> dict:
    return {
        "version": PACKAGE_VERSION,
        "adlens": VERSION,
        "klass": type(pipeline).__name__,
        "specs": {"relevance": pipeline.relevance_model.spec.describe(),
                  "leaning": pipeline.leaning_model.spec.describe()},
        "state": pipeline,
    }


def save_pipeline(pipeline: StancePipeline, directory: tp.Union[str, Path], name: str = "stance") -> Path:
    """Save with the checksum in the file name, writing to a temporary file first."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tmp = directory / f"{name}.joblib.tmp"
    joblib.dump(serialize_pipeline(pipeline), tmp, compress=0)
    path = directory / f"{name}-{file_checksum(tmp)[:8]}.joblib"
    tmp.replace(path)
    return path


def find_pipeline(directory: tp.Union[str, Path], name: str = "stance") -> Path:
    candidates = sorted(p for p in Path(directory).glob(f"{name}-*.joblib") if SIGNATURE_RE.match(p.name))
    if not candidates:
        raise ModelLoadingError(f"no saved {name} pipeline in {directory}")
    if len(candidates) > 1:
        raise ModelLoadingError(f"several saved {name} pipelines in {directory}: "
                                f"{[p.name for p in candidates]}")
    return candidates[0]


def load_pipeline(path: tp.Union[str, Path]) -> StancePipeline:
    path = Path(path)
    match = SIGNATURE_RE.match(path.name)
    if match is None:
        raise ModelLoadingError(f"{path.name} is not a <name>-<checksum>.joblib file")
    if not path.is_file():
        raise ModelLoadingError(f"missing model file {path}")
    check_checksum(path, match.group("checksum"))
    package = joblib.load(path)
    if not isinstance(package, dict) or package.get("version") != PACKAGE_VERSION:
        raise ModelLoadingError(f"{path} holds an unsupported package version "
                                f"{package.get('version') if isinstance(package, dict) else None}")
    if package.get("klass") != StancePipeline.__name__:
        raise ModelLoadingError(f"{path} holds a {package.get('klass')}, not a stance pipeline")
    return package["state"]
