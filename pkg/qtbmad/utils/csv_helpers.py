import os
import tempfile
from numbers import Integral
from typing import Iterable, List, Sequence, Tuple


def format_number(x) -> str:
    """Integers verbatim, reals with 17 significant digits."""
    if isinstance(x, Integral) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.16e}"


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(format_number(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write atomically: a temp file in the target directory, then rename."""
    text = render_csv(header, rows)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def parse_floats(text: str) -> List[float]:
    """'0.1, 0.2' -> [0.1, 0.2]; empty text gives []."""
    return [float(s) for s in text.split(",") if s.strip()]


def parse_pairs(text: str) -> List[Tuple[float, float]]:
    """'0.1:0.002, 0.2:0.004' -> [(0.1, 0.002), (0.2, 0.004)]."""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        left, sep, right = item.partition(":")
        if not sep:
            raise ValueError(f"expected V:I pair, got {item!r}")
        pairs.append((float(left), float(right)))
    return pairs
