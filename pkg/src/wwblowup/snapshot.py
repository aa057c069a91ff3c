"""WWBK snapshot files.

Layout (all integers little-endian)::

    b"WWBK"                 magic
    u32                     format version
    u32 n, n bytes          config hash (ASCII hex)
    u32 n, n bytes          UTF-8 JSON header
    raw float64 '<f8'       array payloads, in header order

The header is ``{"config": <toml text>, "meta": {...}, "arrays": [{"name", "dims", "shape"}, ...]}``
serialized with sorted keys, so loading and saving again reproduces the bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"WWBK"
VERSION = 1


class SnapshotError(ValueError):
    pass


@dataclass
class Snapshot:
    config_hash: str
    config_text: str
    meta: dict
    arrays: dict = field(default_factory=dict)   # name -> (dims tuple, ndarray)
    version: int = VERSION

    def to_bytes(self) -> bytes:
        entries = []
        payload = []
        for name, (dims, arr) in self.arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            if len(dims) != a.ndim:
                raise SnapshotError(f"array {name}: {len(dims)} dim names for {a.ndim} axes")
            entries.append({"name": name, "dims": list(dims), "shape": list(a.shape)})
            payload.append(a.tobytes())
        header = json.dumps({"config": self.config_text, "meta": self.meta, "arrays": entries},
                            sort_keys=True, allow_nan=True).encode()
        h = self.config_hash.encode("ascii")
        return b"".join([MAGIC, struct.pack("<I", self.version), struct.pack("<I", len(h)), h,
                         struct.pack("<I", len(header)), header] + payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Snapshot":
        if data[:4] != MAGIC:
            raise SnapshotError("not a WWBK snapshot")
        (version,) = struct.unpack_from("<I", data, 4)
        if version != VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        pos = 8
        (n,) = struct.unpack_from("<I", data, pos)
        chash = data[pos + 4: pos + 4 + n].decode("ascii")
        pos += 4 + n
        (n,) = struct.unpack_from("<I", data, pos)
        header = json.loads(data[pos + 4: pos + 4 + n])
        pos += 4 + n
        arrays = {}
        for e in header["arrays"]:
            count = int(np.prod(e["shape"], dtype=np.int64))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(e["shape"]).astype(float)
            pos += 8 * count
            arrays[e["name"]] = (tuple(e["dims"]), arr)
        if pos != len(data):
            raise SnapshotError("trailing bytes after array payload")
        return cls(chash, header["config"], header["meta"], arrays, version)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Snapshot":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
