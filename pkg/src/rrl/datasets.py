"""Writers for the benchmark datasets used by the test and acceptance suites.

Each writer produces `<name>.csv` plus a `<name>.schema` sidecar in the target
directory and returns both paths.
"""
from __future__ import annotations

import csv
import os
from pathlib import Path

SQUARES = [
    "top-left-square", "top-middle-square", "top-right-square",
    "middle-left-square", "middle-middle-square", "middle-right-square",
    "bottom-left-square", "bottom-middle-square", "bottom-right-square",
]
LINES = [(0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6)]

WINE_FEATURES = [
    "alcohol", "malic_acid", "ash", "alcalinity_of_ash", "magnesium", "total_phenols",
    "flavanoids", "nonflavanoid_phenols", "proanthocyanins", "color_intensity", "hue",
    "od280/od315_of_diluted_wines", "proline",
]
BANKNOTE_FEATURES = ["variance", "skewness", "curtosis", "entropy"]


def _winner(board: list[str]) -> str | None:
    for a, b, c in LINES:
        if board[a] != "b" and board[a] == board[b] == board[c]:
            return board[a]
    return None


def tictactoe_endgames() -> list[tuple[tuple[str, ...], str]]:
    """All terminal boards of games where x moves first, labelled by whether x won.

    This enumerates the UCI Tic-Tac-Toe Endgame set exactly (958 boards), in a
    canonical sorted order.
    """
    found: dict[tuple[str, ...], str] = {}

    def play(board: list[str], player: str) -> None:
        w = _winner(board)
        if w is not None or "b" not in board:
            found[tuple(board)] = "positive" if w == "x" else "negative"
            return
        nxt = "o" if player == "x" else "x"
        for i in range(9):
            if board[i] == "b":
                board[i] = player
                play(board, nxt)
                board[i] = "b"

    play(["b"] * 9, "x")
    return sorted(found.items())


def _write(out_dir: Path, name: str, header: list[str], rows, kinds: list[str]) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    data, schema = out_dir / f"{name}.csv", out_dir / f"{name}.schema"
    with data.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    with schema.open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(zip(header, kinds))
    return data, schema


def write_tictactoe(out_dir: str | Path) -> tuple[Path, Path]:
    rows = [list(board) + [label] for board, label in tictactoe_endgames()]
    return _write(Path(out_dir), "tic-tac-toe", SQUARES + ["class"], rows,
                  ["discrete"] * 9 + ["label"])


def write_wine(out_dir: str | Path) -> tuple[Path, Path]:
    """UCI wine, read from the copy bundled with scikit-learn."""
    from sklearn.datasets import load_wine

    bunch = load_wine()
    rows = [[repr(float(v)) for v in x] + [f"class_{int(t)}"] for x, t in zip(bunch.data, bunch.target)]
    return _write(Path(out_dir), "wine", WINE_FEATURES + ["class"], rows,
                  ["continuous"] * 13 + ["label"])


def write_banknote(out_dir: str | Path, source: str | Path | None = None) -> tuple[Path, Path]:
    """UCI banknote authentication from a local copy of `data_banknote_authentication.txt`.

    `source` defaults to the `RRL_BANKNOTE` environment variable. The file is
    not redistributable from any installed package, so it must be supplied.
    """
    source = source or os.environ.get("RRL_BANKNOTE")
    if not source or not Path(source).is_file():
        raise FileNotFoundError(
            "banknote data not found; set RRL_BANKNOTE to data_banknote_authentication.txt")
    rows = []
    with Path(source).open(newline="", encoding="utf-8") as fh:
        for r in csv.reader(fh):
            if not r or not "".join(r).strip():
                continue
            if len(r) != 5:
                raise ValueError(f"{source}: expected 5 fields per row, got {len(r)}")
            rows.append([c.strip() for c in r[:4]] + [f"class_{r[4].strip()}"])
    return _write(Path(out_dir), "banknote", BANKNOTE_FEATURES + ["class"], rows,
                  ["continuous"] * 4 + ["label"])
