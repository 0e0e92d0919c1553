import io
import json
import zipfile
from typing import Any, Dict, Tuple

import numpy as np

from common.errors import DataError

FORMAT_VERSION = 1

# Fixed member timestamp: same content -> same bytes.
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_archive(
    path: str,
    kind: str,
    arrays: Dict[str, np.ndarray],
    meta: Dict[str, Any] | None = None,
) -> None:
    """
    Writes a versioned binary archive: one `.npy` member per array plus
    `meta.json` carrying kind / format_version and any JSON metadata.
    """
    header = {"kind": kind, "format_version": FORMAT_VERSION, "meta": meta or {}}

    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(
            _member("meta.json"),
            json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8"),
        )
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(_member(f"{name}.npy"), buf.getvalue())


def load_archive(path: str, kind: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as e:
        raise DataError(f"Cannot open archive '{path}': {e}") from e

    with zf:
        try:
            header = json.loads(zf.read("meta.json").decode("utf-8"))
        except KeyError as e:
            raise DataError(f"Archive '{path}' has no meta.json") from e

        if header.get("kind") != kind:
            raise DataError(
                f"Archive '{path}' holds '{header.get('kind')}', expected '{kind}'"
            )
        if header.get("format_version") != FORMAT_VERSION:
            raise DataError(
                f"Archive '{path}' has format_version={header.get('format_version')}, "
                f"this build reads {FORMAT_VERSION}"
            )

        arrays = {}
        for name in zf.namelist():
            if not name.endswith(".npy"):
                continue
            with zf.open(name) as fh:
                arrays[name[: -len(".npy")]] = np.load(
                    io.BytesIO(fh.read()), allow_pickle=False
                )

    return arrays, header["meta"]
