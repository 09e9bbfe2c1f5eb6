"""Binary network-bundle checkpoints.

Layout (little endian):

    magic        8 bytes   b"SINNCKPT"
    version      uint32
    p            uint32    sub-network count
    activation   uint32    Activation.code
    n_layers     uint32    number of layer sizes that follow
    sizes        uint32 * n_layers
    output_scale float64
    params       float64 * (p * parameter_count(sizes))
"""
import logging
import struct
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError
from .nets import Activation, NetworkBundle, parameter_count

logger = logging.getLogger(__name__)

MAGIC = b"SINNCKPT"
VERSION = 1


def write_checkpoint(path, bundle):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sizes = bundle.layer_sizes
    header = MAGIC + struct.pack(
        f"<4I{len(sizes)}Id", VERSION, bundle.p, bundle.activation.code, len(sizes), *sizes, bundle.output_scale
    )
    payload = bundle.theta.detach().numpy().astype("<f8").tobytes()
    path.write_bytes(header + payload)
    logger.debug("checkpoint %s: p=%d sizes=%s", path, bundle.p, sizes)
    return path


def read_checkpoint(path):
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a bundle checkpoint")
    try:
        version, p, code, n_layers = struct.unpack_from("<4I", blob, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        offset = 8 + 16
        sizes = struct.unpack_from(f"<{n_layers}I", blob, offset)
        offset += 4 * n_layers
        (output_scale,) = struct.unpack_from("<d", blob, offset)
        offset += 8
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    if (len(blob) - offset) % 8:
        raise CheckpointError(f"{path}: parameter block is not a whole number of float64 values")
    params = np.frombuffer(blob, dtype="<f8", offset=offset)
    expected = p * parameter_count(sizes)
    if params.size != expected:
        raise CheckpointError(f"{path}: {params.size} parameters stored, layers {sizes} x {p} need {expected}")
    return NetworkBundle(sizes, Activation.from_code(code), p, params.copy(), output_scale)
