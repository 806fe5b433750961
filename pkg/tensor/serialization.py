import struct

import numpy as np

from tensor.tensor import Tensor

MAGIC = b"TNSR"


def tensor_to_bytes(tensor):
    data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor, dtype=np.float64)
    header = MAGIC + struct.pack("<I", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    return header + np.ascontiguousarray(data, dtype="<f8").tobytes()


def tensor_from_bytes(payload, requires_grad=False):
    if payload[:4] != MAGIC:
        raise ValueError(f"En-tête de tenseur invalide: {payload[:4]!r}")
    (rank,) = struct.unpack_from("<I", payload, 4)
    shape = struct.unpack_from(f"<{rank}I", payload, 8)
    offset = 8 + 4 * rank
    count = int(np.prod(shape)) if rank else 1
    expected = offset + 8 * count
    if len(payload) != expected:
        raise ValueError(f"Taille de tenseur incohérente: {len(payload)} octets, {expected} attendus")
    data = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
    return Tensor(data.astype(np.float64), requires_grad=requires_grad)


def save_tensor(tensor, filename):
    with open(filename, "wb") as f:
        f.write(tensor_to_bytes(tensor))


def load_tensor(filename, requires_grad=False):
    with open(filename, "rb") as f:
        return tensor_from_bytes(f.read(), requires_grad=requires_grad)
