"""Kernel-identity extraction from observed CUDA kernel names.

There is no offline API that reports which GEMM kernel the library chose,
but the launched kernel's mangled name encodes most of the configuration:
`ampere_sgemm_128x64_nn` carries the tile size and transpose mode,
`..._splitk_...` marks split-K variants, CUTLASS names carry stage counts.
Parsing the name recovers a stable kernel identity; fields the name does
not encode stay at their defaults and the full name is hashed into
algorithm_id so distinct implementations never collide.
"""

from __future__ import annotations

import hashlib
import re
from typing import Optional

from .emit import kernel_key_obj

_TILE_RE = re.compile(r"(?<![0-9])(\d{2,3})x(\d{2,3})(?![0-9])")
_TRANSPOSE_RE = re.compile(r"_(nn|nt|tn|tt)(?:_|$)")
_STAGES_RE = re.compile(r"stages_(\d+)x(\d+)|_(\d+)stage")
_SPLITK_RE = re.compile(r"split_?k|_sliced(\d+)x(\d+)")


def stable_algorithm_id(kernel_name: str) -> int:
    digest = hashlib.blake2b(kernel_name.encode(), digest_size=4).digest()
    return int.from_bytes(digest, "big") & 0x7FFFFFFF


def parse_kernel_name(kernel_name: str, family: str, dtype: str,
                      default_transpose: str = "nn") -> Optional[dict]:
    """Best-effort kernel key from a launched kernel's name; None when the
    name carries no tile information at all."""
    name = kernel_name.lower()
    tile = _TILE_RE.search(name)
    if tile is None:
        return None
    tile_m, tile_n = int(tile.group(1)), int(tile.group(2))
    transpose = default_transpose
    transpose_match = _TRANSPOSE_RE.search(name)
    if transpose_match:
        transpose = transpose_match.group(1)
    if "cutlass" in name:
        library = "cutlass"
    elif "triton" in name:
        library = "triton"
    elif "gemm" in name or "cublas" in name:
        library = "cublas"
    else:
        library = "custom"
    stages = 0
    stages_match = _STAGES_RE.search(name)
    if stages_match:
        stages = int(next(g for g in stages_match.groups()[::-1] if g))
    split_k = 1
    splitk_match = _SPLITK_RE.search(name)
    if splitk_match:
        slices = splitk_match.groups()
        if slices[0] and slices[1]:
            split_k = int(slices[0]) * int(slices[1])
        else:
            split_k = 2
    return kernel_key_obj(
        family=family, dtype=dtype, library=library,
        algorithm_id=stable_algorithm_id(name),
        tile_m=tile_m, tile_n=tile_n, transpose_mode=transpose,
        split_k=split_k, stages=stages,
        reduction_scheme=1 if split_k > 1 else 0)
