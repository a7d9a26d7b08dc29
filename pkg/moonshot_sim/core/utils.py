# moonshot_sim/core/utils.py

import os
import re
from typing import Optional, Tuple

_SEED_RANGE_RE = re.compile(r"^\s*(\d+)\s*(?:\.\.\s*(\d+))?\s*$")


def parse_seed_range(text: str) -> Tuple[int, int]:
    """
    Parses an inclusive seed range written ``A..B`` (or a single seed ``A``).

    Args:
        text: The range as given on the command line.

    Returns:
        The pair ``(first, last)`` with ``first <= last``.

    Raises:
        ValueError: If the text is not a range of non-negative integers or
            if ``B < A``.
    """
    match = _SEED_RANGE_RE.match(text)
    if not match:
        raise ValueError(f"invalid seed range '{text}', expected A..B")
    first = int(match.group(1))
    last = int(match.group(2)) if match.group(2) is not None else first
    if last < first:
        raise ValueError(f"invalid seed range '{text}': {last} < {first}")
    return first, last


def output_path(out_dir: Optional[str], template: str, seed: int) -> Optional[str]:
    """Joins ``out_dir`` with a filename template, creating the directory."""
    if out_dir is None:
        return None
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, template.format(seed=seed))
