"""PLY reader/writer for colored point clouds.

Supports ASCII and binary-little-endian PLY with float32 x/y/z and uint8
red/green/blue vertex properties. Extra fixed-size scalar properties are
skipped; other layouts are rejected.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud


class PlyParseError(ValueError):
    """Malformed PLY content; carries the offending header line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"{message} (header line {line})"
        super().__init__(message)
        self.line = line


_SCALAR_SIZES = {
    "char": 1, "int8": 1,
    "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2,
    "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4,
    "uint": 4, "uint32": 4,
    "float": 4, "float32": 4,
    "double": 8, "float64": 8,
}

_STRUCT_CODES = {1: "b", 2: "h", 4: "i", 8: "q"}


def _parse_header(fh):
    """Returns (format, vertex_count, properties, data_offset)."""
    line_no = 0

    def next_line():
        nonlocal line_no
        raw = fh.readline()
        if not raw:
            raise PlyParseError("unexpected end of header", line_no)
        line_no += 1
        return raw.decode("ascii", errors="replace").strip()

    if next_line() != "ply":
        raise PlyParseError("missing 'ply' magic", 1)

    fmt = None
    vertex_count = None
    properties = []  # (name, type) for the vertex element only
    element = None

    while True:
        line = next_line()
        if line == "end_header":
            break
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyParseError(f"unsupported format {parts[1:]}", line_no)
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyParseError("malformed element line", line_no)
            element = parts[1]
            if element == "vertex":
                if properties:
                    raise PlyParseError("duplicate vertex element", line_no)
                try:
                    vertex_count = int(parts[2])
                except ValueError:
                    raise PlyParseError("bad vertex count", line_no) from None
            elif vertex_count is None:
                # an element with unreadable size before vertex data would
                # make the vertex offset ambiguous
                raise PlyParseError(
                    f"element '{element}' precedes vertex element", line_no
                )
        elif parts[0] == "property":
            if element != "vertex":
                continue  # properties of trailing elements are irrelevant
            if parts[1] == "list":
                raise PlyParseError("list properties unsupported in vertex element", line_no)
            if len(parts) != 3:
                raise PlyParseError("malformed property line", line_no)
            if parts[1] not in _SCALAR_SIZES:
                raise PlyParseError(f"unknown property type '{parts[1]}'", line_no)
            properties.append((parts[2], parts[1]))
        else:
            raise PlyParseError(f"unknown header keyword '{parts[0]}'", line_no)

    if fmt is None:
        raise PlyParseError("missing format line", line_no)
    if vertex_count is None:
        raise PlyParseError("missing vertex element", line_no)
    return fmt, vertex_count, properties


def _column_layout(properties):
    names = [p[0] for p in properties]
    for coord in ("x", "y", "z"):
        if coord not in names:
            raise PlyParseError(f"missing '{coord}' property")
        ptype = properties[names.index(coord)][1]
        if ptype not in ("float", "float32"):
            raise PlyParseError(f"property '{coord}' must be float32, got {ptype}")
    has_color = all(c in names for c in ("red", "green", "blue"))
    if has_color:
        for c in ("red", "green", "blue"):
            ptype = properties[names.index(c)][1]
            if ptype not in ("uchar", "uint8"):
                raise PlyParseError(f"property '{c}' must be uchar, got {ptype}")
    return names, has_color


def read_ply(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Low-level read: (positions float64 with float32-exact values, colors|None)."""
    with open(path, "rb") as fh:
        fmt, count, properties = _parse_header(fh)
        names, has_color = _column_layout(properties)
        if count < 1:
            raise PlyParseError("vertex count must be >= 1")

        if fmt == "ascii":
            rows = []
            for i in range(count):
                raw = fh.readline()
                if not raw:
                    raise PlyParseError(f"truncated ASCII data at vertex {i}")
                fields = raw.split()
                if len(fields) != len(properties):
                    raise PlyParseError(f"vertex {i}: expected {len(properties)} fields")
                rows.append(fields)
            cols = {name: [r[j] for r in rows] for j, (name, _) in enumerate(properties)}
            try:
                xyz = np.stack(
                    [np.asarray(cols[c], dtype=np.float32) for c in ("x", "y", "z")],
                    axis=1,
                )
                positions = xyz.astype(np.float64)
                colors = None
                if has_color:
                    colors = np.stack(
                        [np.asarray(cols[c], dtype=np.int64) for c in ("red", "green", "blue")],
                        axis=1,
                    )
            except ValueError as exc:
                raise PlyParseError(f"bad ASCII vertex value: {exc}") from None
            if has_color:
                if colors.min() < 0 or colors.max() > 255:
                    raise PlyParseError("color channel outside [0, 255]")
                colors = colors.astype(np.uint8)
            return positions, colors

        # binary_little_endian: build one structured dtype per vertex
        dtype_fields = []
        for name, ptype in properties:
            size = _SCALAR_SIZES[ptype]
            if ptype in ("float", "float32"):
                code = "<f4"
            elif ptype in ("double", "float64"):
                code = "<f8"
            else:
                base = _STRUCT_CODES[size]
                code = "<" + (base.upper() if ptype.startswith("u") else base)
            dtype_fields.append((name, code))
        dtype = np.dtype(dtype_fields)
        raw = fh.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise PlyParseError("truncated binary vertex data")
        table = np.frombuffer(raw, dtype=dtype)
        positions = np.stack(
            [table[c].astype(np.float64) for c in ("x", "y", "z")], axis=1
        )
        colors = None
        if has_color:
            colors = np.stack(
                [table[c] for c in ("red", "green", "blue")], axis=1
            ).astype(np.uint8)
        return positions, colors


def load_ply(path) -> PointCloud:
    """Load a colored point cloud; raises if the file has no attributes."""
    positions, colors = read_ply(path)
    if colors is None:
        raise PlyParseError("no attributes: file lacks red/green/blue properties")
    return PointCloud(positions, colors)


def load_geometry(path) -> np.ndarray:
    """Load positions only; colors, if present, are ignored."""
    positions, _ = read_ply(path)
    return positions


def save_ply(pc: PointCloud, path, binary: bool = True) -> None:
    """Write a cloud as PLY; binary mode round-trips bit-exactly.

    Positions are stored as float32 (the format's precision).
    """
    pos = pc.positions.astype("<f4")
    att = pc.attributes
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {pc.n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            record = np.empty(
                pc.n,
                dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                       ("red", "u1"), ("green", "u1"), ("blue", "u1")],
            )
            record["x"], record["y"], record["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
            record["red"], record["green"], record["blue"] = att[:, 0], att[:, 1], att[:, 2]
            fh.write(record.tobytes())
        else:
            # 9 significant digits pin the float32 value exactly
            for (x, y, z), (r, g, b) in zip(pos, att):
                fh.write(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}\n".encode("ascii"))
