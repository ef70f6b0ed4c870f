"""Binary checkpoint format.

Layout (all integers little-endian uint32):

    magic "WZSR" | format version | meta length | meta JSON (UTF-8)
    | manifest length | manifest JSON | payload

The metadata block holds the full run configuration, the seed, epochs
completed, final temperature, and the tool version.  The manifest is an
ordered list of {name, shape, offset} records; offsets are byte positions
into the payload, strictly increasing.  The payload is the concatenated
parameter values as little-endian float64.  Both JSON blocks are written
canonically (sorted keys, fixed separators), so load followed by save
reproduces identical bytes.
"""

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from wzsr import __version__
from wzsr import model as mdl
from wzsr.config import RunConfig
from wzsr.errors import CheckpointError, CheckpointVersionError

MAGIC = b"WZSR"
FORMAT_VERSION = 1


def _canon(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class Checkpoint:
    run_config: RunConfig
    seed: int
    epochs_completed: int
    final_tau: float
    tool_version: str
    manifest: list  # [(name, shape tuple, offset), ...]
    params: dict  # name -> float64 array

    def to_bytes(self):
        meta = _canon({
            "config": self.run_config.to_dict(),
            "seed": self.seed,
            "epochs_completed": self.epochs_completed,
            "final_tau": self.final_tau,
            "tool_version": self.tool_version,
        })
        manifest = _canon([
            {"name": name, "shape": list(shape), "offset": offset}
            for name, shape, offset in self.manifest
        ])
        payload = bytearray()
        for name, shape, offset in self.manifest:
            if offset != len(payload):
                raise CheckpointError(f"manifest offset mismatch for {name!r}")
            payload += self.params[name].astype("<f8").tobytes()
        return (MAGIC + struct.pack("<I", FORMAT_VERSION)
                + struct.pack("<I", len(meta)) + meta
                + struct.pack("<I", len(manifest)) + manifest
                + bytes(payload))

    def save(self, path):
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return hashlib.sha256(data).hexdigest()

    def build_model(self):
        """Instantiate a RefineModel carrying these parameters."""
        from wzsr import sampling

        model = mdl.init_params(self.run_config.model_config(),
                                sampling.make_stream(0, sampling.DOMAIN_INIT))
        for name, p in model.named_parameters():
            if name not in self.params:
                raise CheckpointError(f"checkpoint missing parameter {name!r}")
            stored = self.params[name]
            if stored.shape != p.values.shape:
                raise CheckpointError(
                    f"parameter {name!r} shape {stored.shape} != expected {p.values.shape}"
                )
            p.values[...] = stored
        return model


def from_model(model, run_config, *, epochs_completed, final_tau):
    """Checkpoint record for a trained model."""
    manifest = []
    params = {}
    offset = 0
    for name, p in model.named_parameters():
        manifest.append((name, p.values.shape, offset))
        params[name] = p.values.copy()
        offset += p.values.nbytes
    return Checkpoint(
        run_config=run_config,
        seed=run_config.seed,
        epochs_completed=epochs_completed,
        final_tau=final_tau,
        tool_version=__version__,
        manifest=manifest,
        params=params,
    )


def load(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return from_bytes(data)


def from_bytes(data):
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}; not a checkpoint file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    pos = 8
    (meta_len,) = struct.unpack_from("<I", data, pos)
    pos += 4
    meta = json.loads(data[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (man_len,) = struct.unpack_from("<I", data, pos)
    pos += 4
    manifest_raw = json.loads(data[pos:pos + man_len].decode("utf-8"))
    pos += man_len
    payload = data[pos:]

    manifest = []
    params = {}
    prev_offset = -1
    for entry in manifest_raw:
        name = entry["name"]
        shape = tuple(entry["shape"])
        offset = entry["offset"]
        if offset <= prev_offset:
            raise CheckpointError(f"manifest offsets not strictly increasing at {name!r}")
        prev_offset = offset
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(payload):
            raise CheckpointError(f"parameter {name!r} extends past payload end")
        params[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        manifest.append((name, shape, offset))

    return Checkpoint(
        run_config=RunConfig.from_dict(meta["config"]),
        seed=meta["seed"],
        epochs_completed=meta["epochs_completed"],
        final_tau=meta["final_tau"],
        tool_version=meta["tool_version"],
        manifest=manifest,
        params=params,
    )


def file_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
