"""Named random streams derived from a single run seed."""
import hashlib
import zlib
from pathlib import Path
from typing import Iterable

import numpy as np

STREAMS = ("init", "data_order", "dropout", "sampling", "scene", "split", "backgrounds")


class SeedStreams:
    """Expands one seed into independent generators keyed by (stream, *keys).

    Drawing from one stream never shifts another, so changing e.g. the number
    of epochs leaves the initialization untouched.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, name: str, *keys: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(name, *keys))

    def sequence(self, name: str, *keys: int) -> np.random.SeedSequence:
        spawn_key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(k) for k in keys)
        return np.random.SeedSequence(entropy=self.seed, spawn_key=spawn_key)

    def integer(self, name: str, *keys: int) -> int:
        return int(self.sequence(name, *keys).generate_state(1)[0])


def stable_key(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def content_hash(paths: Iterable[Path]) -> str:
    """sha256 over the sorted file list (relative names and bytes)."""
    digest = hashlib.sha256()
    for path in sorted(Path(p) for p in paths):
        if path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file():
                    digest.update(str(child.relative_to(path)).encode("utf-8"))
                    digest.update(child.read_bytes())
        elif path.is_file():
            digest.update(path.name.encode("utf-8"))
            digest.update(path.read_bytes())
    return digest.hexdigest()
