"""Binary little-endian PLY reader/writer for trained splat point clouds.

The reader accepts any float32 per-vertex property layout that contains
the fields a trained splat export carries (x, y, z, f_dc_*, f_rest_*,
opacity, scale_*, rot_*); extra properties such as normals are skipped.
The rest coefficients are stored channel-major on disk: f_rest_0..14 are
the red coefficients for degrees 1..3, then green, then blue. The writer
emits exactly the required fields, so write-then-read is an identity on
scenes (parameters are float32 end to end).
"""

from __future__ import annotations

import numpy as np

from .scene import Scene

N_REST = 45  # 15 coefficients per color channel, degrees 1..3


class PlyParseError(ValueError):
    """Malformed PLY input; message names the byte offset and field."""

    def __init__(self, message: str, *, offset: int | None = None, fld: str | None = None):
        detail = message
        if fld is not None:
            detail += f" (field: {fld})"
        if offset is not None:
            detail += f" (byte offset: {offset})"
        super().__init__(detail)
        self.offset = offset
        self.field = fld


REQUIRED_FIELDS = (
    ["x", "y", "z"]
    + [f"f_dc_{i}" for i in range(3)]
    + [f"f_rest_{i}" for i in range(N_REST)]
    + ["opacity"]
    + [f"scale_{i}" for i in range(3)]
    + [f"rot_{i}" for i in range(4)]
)


def _parse_header(data: bytes) -> tuple[int, int, list[str]]:
    """Returns (payload offset, vertex count, ordered property names)."""
    end_marker = b"end_header\n"
    end = data.find(end_marker)
    if not data.startswith(b"ply\n") or end < 0:
        raise PlyParseError("not a PLY file: missing 'ply' magic or 'end_header'", offset=0)
    header = data[:end].decode("ascii", errors="replace")
    payload_offset = end + len(end_marker)
    vertex_count = None
    properties: list[str] = []
    fmt_seen = False
    in_vertex_element = False
    offset = 0
    for line in header.split("\n"):
        stripped = line.strip()
        parts = stripped.split()
        if not parts:
            offset += len(line) + 1
            continue
        if parts[0] == "format":
            if parts[1:2] != ["binary_little_endian"]:
                raise PlyParseError(f"unsupported format {stripped!r}; need binary_little_endian",
                                    offset=offset)
            fmt_seen = True
        elif parts[0] == "element":
            in_vertex_element = parts[1] == "vertex"
            if in_vertex_element:
                try:
                    vertex_count = int(parts[2])
                except (IndexError, ValueError):
                    raise PlyParseError("malformed element vertex line", offset=offset) from None
            elif vertex_count is not None:
                # Only the vertex element is supported; trailing elements
                # would make vertex payload size ambiguous.
                raise PlyParseError(f"unsupported extra element {parts[1]!r}", offset=offset)
        elif parts[0] == "property" and in_vertex_element:
            if len(parts) != 3:
                raise PlyParseError(f"malformed property line {stripped!r}", offset=offset)
            dtype, name = parts[1], parts[2]
            if dtype != "float":
                raise PlyParseError(f"unsupported property type {dtype!r}", offset=offset, fld=name)
            properties.append(name)
        offset += len(line) + 1
    if not fmt_seen:
        raise PlyParseError("missing format line", offset=0)
    if vertex_count is None:
        raise PlyParseError("missing 'element vertex' line", offset=0)
    return payload_offset, vertex_count, properties


def load_ply(data: bytes) -> Scene:
    """Parse trained splat parameters from binary PLY bytes.

    Splat ids are assigned in file order. Raises :class:`PlyParseError`
    naming the offending byte offset and field on malformed input.
    """
    payload_offset, count, properties = _parse_header(data)
    col = {name: i for i, name in enumerate(properties)}
    for name in REQUIRED_FIELDS:
        if name not in col:
            raise PlyParseError("missing required vertex field", offset=payload_offset, fld=name)
    stride = 4 * len(properties)
    need = count * stride
    payload = data[payload_offset:payload_offset + need]
    if len(payload) < need:
        # Report the field where the payload ran out.
        have = len(payload)
        vertex = have // stride
        fld_idx = (have % stride) // 4
        raise PlyParseError(
            f"truncated payload: expected {need} bytes for {count} vertices, got {have} "
            f"(failed at vertex {vertex})",
            offset=payload_offset + have, fld=properties[min(fld_idx, len(properties) - 1)])
    values = np.frombuffer(payload, dtype="<f4").reshape(count, len(properties))

    def take(names: list[str]) -> np.ndarray:
        return values[:, [col[n] for n in names]]

    means = take(["x", "y", "z"])
    dc = take([f"f_dc_{i}" for i in range(3)])
    rest = take([f"f_rest_{i}" for i in range(N_REST)]).reshape(count, 3, 15)
    sh = np.concatenate([dc[:, None, :], np.transpose(rest, (0, 2, 1))], axis=1)
    return Scene(
        means=means,
        log_scales=take([f"scale_{i}" for i in range(3)]),
        rotations=take([f"rot_{i}" for i in range(4)]),
        opacity_logits=values[:, col["opacity"]],
        sh=sh,
    )


def save_ply(scene: Scene) -> bytes:
    """Serialize a scene to binary little-endian PLY bytes."""
    n = len(scene)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in REQUIRED_FIELDS]
    header.append("end_header")
    out = np.empty((n, len(REQUIRED_FIELDS)), dtype="<f4")
    out[:, 0:3] = scene.means
    out[:, 3:6] = scene.sh[:, 0, :]
    k = scene.sh.shape[1]
    rest = np.zeros((n, 15, 3), dtype=np.float32)
    rest[:, :k - 1, :] = scene.sh[:, 1:, :]
    out[:, 6:51] = np.transpose(rest, (0, 2, 1)).reshape(n, N_REST)
    out[:, 51] = scene.opacity_logits
    out[:, 52:55] = scene.log_scales
    out[:, 55:59] = scene.rotations
    return ("\n".join(header) + "\n").encode("ascii") + out.tobytes()


def load_ply_file(path) -> Scene:
    with open(path, "rb") as fh:
        return load_ply(fh.read())


def save_ply_file(scene: Scene, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_ply(scene))
