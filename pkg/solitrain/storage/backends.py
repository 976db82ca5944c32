from abc import ABC, abstractmethod
from pathlib import Path
from typing import List, Optional
import logging

from solitrain.errors import CalibrationError, FingerprintMismatchError
from solitrain.services.calibration import CalibrationTable
from solitrain.services.protocol import CritConstants

logger = logging.getLogger(__name__)

HEADER_KEYS = ("branch", "c_up", "c_down", "fingerprint")


class TableBackend(ABC):
    """Abstract base class for calibration-table storage"""

    @abstractmethod
    def save_table(self, table: CalibrationTable, name: str) -> Path:
        """
        Persist a calibration table

        Args:
            table: Table to store
            name: File name or path of the table

        Returns:
            Path the table was written to
        """
        pass

    @abstractmethod
    def load_table(self, name: str, expected_fingerprint: Optional[str] = None,
                   strict: bool = True) -> CalibrationTable:
        """
        Load a calibration table and check it against a simulator config

        Args:
            name: File name or path of the table
            expected_fingerprint: Fingerprint of the config the table will be used with
            strict: Refuse a mismatching fingerprint (otherwise only warn)

        Returns:
            Validated CalibrationTable

        Raises:
            CalibrationError: On malformed or non-monotone data
            FingerprintMismatchError: On mismatch in strict mode
        """
        pass

    @abstractmethod
    def list_tables(self) -> List[str]:
        """Names of the stored tables"""
        pass


def check_fingerprint(table: CalibrationTable, expected: Optional[str], strict: bool = True):
    """
    Compare a table's fingerprint with the config it is about to be used with

    Raises:
        FingerprintMismatchError: On mismatch when strict
    """
    if expected is None or table.fingerprint == expected:
        return
    if strict:
        raise FingerprintMismatchError(expected=expected, found=table.fingerprint or None)
    logger.warning(
        f"Calibration table fingerprint {table.fingerprint or '<none>'} does not match config "
        f"fingerprint {expected}; continuing in warn-only mode"
    )


class CSVTableBackend(TableBackend):
    """
    Tables as CSV files under a base directory

    Layout:
        # branch=<r|ra>
        # c_up=<v>
        # c_down=<v>
        # fingerprint=<hex>
        s,f
        <s>,<f>
        ...
    Gap samples (blow-up points) are kept in an optional `# gaps=` header line.
    """

    def __init__(self, base_dir: str = "./tables"):
        self.base_dir = Path(base_dir)

    def _resolve(self, name: str) -> Path:
        path = Path(name)
        if path.suffix != ".csv":
            path = path.with_suffix(".csv")
        if path.is_absolute() or path.parent != Path("."):
            return path
        return self.base_dir / path

    def save_table(self, table: CalibrationTable, name: str) -> Path:
        path = self._resolve(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [
            f"# branch={table.branch}",
            f"# c_up={table.crit.c_up!r}",
            f"# c_down={table.crit.c_down!r}",
            f"# fingerprint={table.fingerprint}",
        ]
        if table.gap_samples:
            lines.append("# gaps=" + ";".join(repr(float(s)) for s in table.gap_samples))
        lines.append("s,f")
        lines.extend(f"{s!r},{f!r}" for s, f in table.samples)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        logger.debug(f"Saved {table.branch} table with {len(table.samples)} sample(s) to {path}")
        return path

    def load_table(self, name: str, expected_fingerprint: Optional[str] = None,
                   strict: bool = True) -> CalibrationTable:
        path = self._resolve(name)
        if not path.is_file():
            raise CalibrationError(f"calibration table not found: {path}")

        header = {}
        samples = []
        seen_columns = False
        with open(path, "r", encoding="utf-8") as fh:
            for number, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, sep, value = line[1:].strip().partition("=")
                    if not sep:
                        raise CalibrationError(f"{path}:{number}: malformed header line {line!r}")
                    header[key.strip()] = value.strip()
                    continue
                if not seen_columns:
                    if line.replace(" ", "") != "s,f":
                        raise CalibrationError(f"{path}:{number}: expected column header 's,f', got {line!r}")
                    seen_columns = True
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise CalibrationError(f"{path}:{number}: expected 's,f', got {line!r}")
                try:
                    samples.append((float(parts[0]), float(parts[1])))
                except ValueError:
                    raise CalibrationError(f"{path}:{number}: non-numeric sample {line!r}")

        missing = [key for key in HEADER_KEYS if key not in header]
        if missing:
            raise CalibrationError(f"{path}: missing header line(s) {', '.join(missing)}")
        try:
            crit = CritConstants(c_up=float(header["c_up"]), c_down=float(header["c_down"]))
            gaps = [float(s) for s in header["gaps"].split(";")] if header.get("gaps") else []
        except ValueError as e:
            raise CalibrationError(f"{path}: malformed header value: {e}")

        table = CalibrationTable(
            branch=header["branch"],
            samples=samples,
            crit=crit,
            fingerprint=header["fingerprint"],
            gap_samples=gaps,
        )
        check_fingerprint(table, expected_fingerprint, strict)
        logger.debug(f"Loaded {table.branch} table with {len(samples)} sample(s) from {path}")
        return table

    def list_tables(self) -> List[str]:
        if not self.base_dir.is_dir():
            return []
        return sorted(p.name for p in self.base_dir.glob("*.csv"))


def create_table_backend(**kwargs) -> TableBackend:
    """
    Factory function to create a calibration-table backend

    Args:
        backend_type: Only "csv" is supported (default)
        table_dir: Base directory for relative table names (default: ./tables)

    Returns:
        TableBackend instance

    Raises:
        ValueError: If the backend type is unknown
    """
    backend_type = kwargs.get("backend_type", "csv")
    table_dir = kwargs.get("table_dir") or "./tables"

    if backend_type != "csv":
        raise ValueError(f"Unknown table backend: {backend_type}")

    logger.debug(f"Initializing CSV table backend (table_dir={table_dir})")
    return CSVTableBackend(base_dir=table_dir)
