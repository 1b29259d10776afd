"""
Writers for simulation output: delimited time series with a provenance
preamble, JSON run summaries, coefficient tables and Excel workbooks.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Union

from core import __version__
from core.errors import SimulationAborted

logger = logging.getLogger(__name__)

COMMENT = "#"


def format_value(value) -> str:
    """Shortest text that parses back to the same float; strings pass through."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


class CsvRowWriter:
    """
    Streams rows to a delimited text file as the engine produces them.

    Layout: ``# key=value`` preamble lines, one header line, data rows and,
    when a run aborts, a ``# error: ...`` trailer.
    """

    def __init__(self, stream: IO[str], metadata: Optional[Dict[str, object]] = None, delimiter: str = ","):
        self.stream = stream
        self.metadata = dict(metadata or {})
        self._writer = csv.writer(stream, delimiter=delimiter, lineterminator="\n")
        self.columns: List[str] = []
        self.rows_written = 0

    def write_header(self, columns: Sequence[str]):
        for key, value in self.metadata.items():
            self.stream.write(f"{COMMENT} {key}={format_value(value)}\n")
        self.columns = list(columns)
        self._writer.writerow(self.columns)

    def write_row(self, row: Sequence):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values but the header has {len(self.columns)} columns")
        self._writer.writerow([format_value(v) for v in row])
        self.rows_written += 1

    def write_error(self, error: SimulationAborted):
        self.stream.write(f"{COMMENT} error: {error}\n")
        self.stream.flush()


def run_metadata(scenario, dt: float) -> Dict[str, object]:
    return {"scenario": scenario.name, "scenario_sha256": scenario.digest(), "version": __version__,
            "dt": float(dt)}


def read_series(path: Union[str, Path]) -> Dict[str, object]:
    """
    Load a file written by CsvRowWriter.

    Returns a dict with ``metadata``, ``columns``, ``rows`` (strings) and
    ``error`` (trailer text or None).
    """
    metadata: Dict[str, str] = {}
    columns: List[str] = []
    rows: List[List[str]] = []
    error = None
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith(COMMENT):
                body = line[len(COMMENT):].strip()
                if body.startswith("error:"):
                    error = body[len("error:"):].strip()
                elif "=" in body:
                    key, value = body.split("=", 1)
                    metadata[key] = value
                continue
            if not line:
                continue
            values = next(csv.reader([line]))
            if not columns:
                columns = values
            else:
                rows.append(values)
    return {"metadata": metadata, "columns": columns, "rows": rows, "error": error}


class Exporter:
    """Writes run outputs to files; failures are logged and reported as False."""

    def _prepare(self, output_path: Union[str, Path]) -> Path:
        output_file = Path(output_path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        return output_file

    def open_series(self, output_path: Union[str, Path], scenario, dt: float):
        """Open ``output_path`` and return (file handle, CsvRowWriter). The caller closes the file."""
        output_file = self._prepare(output_path)
        handle = open(output_file, "w", encoding="utf-8", newline="")
        return handle, CsvRowWriter(handle, run_metadata(scenario, dt))

    def export_to_csv(self, result, output_path: Union[str, Path], metadata: Optional[Dict] = None) -> bool:
        """Write an already collected SimResult in the streaming layout."""
        try:
            output_file = self._prepare(output_path)
            with open(output_file, "w", encoding="utf-8", newline="") as f:
                writer = CsvRowWriter(f, metadata)
                writer.write_header(result.columns)
                for row in result.rows:
                    writer.write_row(row)
                if result.error is not None:
                    writer.write_error(result.error)
            return True
        except OSError as e:
            logger.error(f"Error exporting to CSV: {e}")
            return False

    def export_summary_json(self, summary: Dict[str, object], output_path: Union[str, Path]) -> bool:
        try:
            output_file = self._prepare(output_path)
            with open(output_file, "w", encoding="utf-8") as f:
                json.dump(summary, f, indent=2, sort_keys=True, default=str)
                f.write("\n")
            return True
        except (OSError, TypeError) as e:
            logger.error(f"Error exporting to JSON: {e}")
            return False

    def export_coefficients(self, rows: Sequence[Sequence[float]], stream: IO[str]):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["alpha_deg", "CL", "CD"])
        for row in rows:
            writer.writerow([format_value(float(v)) for v in row])

    def export_to_excel(self, result, output_path: Union[str, Path], metadata: Optional[Dict] = None) -> bool:
        """Time series on one sheet, run metadata and mode transitions on another."""
        try:
            from openpyxl import Workbook
            from openpyxl.styles import Alignment, Font, PatternFill

            output_file = self._prepare(output_path)
            wb = Workbook()
            ws = wb.active
            ws.title = "Series"
            for col, header in enumerate(result.columns, 1):
                cell = ws.cell(row=1, column=col, value=header)
                cell.font = Font(bold=True)
                cell.fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
                cell.alignment = Alignment(horizontal="center")
            for r, row in enumerate(result.rows, 2):
                for c, value in enumerate(row, 1):
                    if isinstance(value, float) and math.isnan(value):
                        value = None
                    ws.cell(row=r, column=c, value=value)
            ws.freeze_panes = "B2"

            info = wb.create_sheet("Run")
            info.append(["key", "value"])
            for key, value in (metadata or {}).items():
                info.append([key, str(value)])
            info.append([])
            info.append(["t_s", "from", "to"])
            for t, old, new in result.transitions:
                info.append([t, old, new])
            if result.error is not None:
                info.append(["error", str(result.error)])
            info.column_dimensions["A"].width = 20
            info.column_dimensions["B"].width = 70

            wb.save(output_file)
            return True

        except ImportError:
            logger.error("openpyxl not installed. Install with: pip install openpyxl")
            return False
        except OSError as e:
            logger.error(f"Error exporting to Excel: {e}")
            return False

    def export(self, result, output_path: Union[str, Path], format: str = "csv",
               metadata: Optional[Dict] = None) -> bool:
        format = format.lower()
        if format == "csv":
            return self.export_to_csv(result, output_path, metadata)
        if format == "xlsx":
            return self.export_to_excel(result, output_path, metadata)
        logger.error(f"Unsupported export format: {format}")
        return False
