import csv
import io
import os
import tempfile
from typing import Any, Iterable, Sequence

import numpy as np


# Enough digits for an exact float64 round trip through text
FLOAT_FORMAT = "%.17g"


class MatrixFileError(Exception):
    """Exception for unreadable or unwritable matrix files"""
    pass


class FileManager:
    """Verantwortlich für Datei-Operationen (Matrizen, CSV, Text)"""

    @staticmethod
    def ensure_directory(path: str) -> None:
        """Stellt sicher, dass das Verzeichnis existiert"""
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as e:
            raise MatrixFileError(f"Cannot create directory {path}: {str(e)}")

    @staticmethod
    def write_text_file(filepath: str, content: str) -> None:
        """Writes text atomically: temp file in the target directory, then rename."""
        directory = os.path.dirname(os.path.abspath(filepath))
        FileManager.ensure_directory(directory)
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".part")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(content)
            os.replace(tmp_path, filepath)
        except OSError as e:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise MatrixFileError(f"Cannot write {filepath}: {str(e)}")

    @staticmethod
    def write_matrix(filepath: str, matrix: np.ndarray) -> None:
        """Writes a 1-D or 2-D array as comma-separated text without header.

        1-D integer arrays (labels) are written one value per line.
        """
        arr = np.asarray(matrix)
        buffer = io.StringIO()
        if arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer):
            np.savetxt(buffer, arr.reshape(-1, 1), fmt="%d", delimiter=",")
        else:
            np.savetxt(buffer, np.atleast_2d(arr), fmt=FLOAT_FORMAT, delimiter=",")
        FileManager.write_text_file(filepath, buffer.getvalue())

    @staticmethod
    def read_matrix(filepath: str) -> np.ndarray:
        """Reads a comma-separated numeric file into a 2-D float64 array.

        Raises:
            MatrixFileError: If the file is missing, empty or not numeric
        """
        if not os.path.isfile(filepath):
            raise MatrixFileError(f"File does not exist: {filepath}")
        try:
            data = np.loadtxt(filepath, delimiter=",", dtype=np.float64, ndmin=2)
        except ValueError as e:
            raise MatrixFileError(f"Malformed numeric file {filepath}: {str(e)}")
        if data.size == 0:
            raise MatrixFileError(f"File contains no values: {filepath}")
        return data

    @staticmethod
    def write_csv(filepath: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        """Writes a CSV file with header; floats are formatted for exact round trip."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(value) for value in row])
        FileManager.write_text_file(filepath, buffer.getvalue())


def _format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    return str(value)
