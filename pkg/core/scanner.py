import logging
import os
from pathlib import Path
from typing import List, Set

logger = logging.getLogger(__name__)


class Scanner:
    """Finds scenario files below one or more directories."""

    SUPPORTED_EXTENSIONS = {'.json'}

    def __init__(self):
        self.files_found: List[Path] = []
        self.total_size: int = 0

    def scan_directory(self, directory_path: str) -> List[Path]:
        self.files_found = []
        self.total_size = 0

        directory = Path(directory_path)
        if not directory.exists():
            raise FileNotFoundError(f"Directory not found: {directory_path}")
        if not directory.is_dir():
            raise NotADirectoryError(f"Not a directory: {directory_path}")

        for root, dirs, files in os.walk(directory):
            # Skip hidden directories
            dirs[:] = sorted(d for d in dirs if not d.startswith('.'))
            for file in sorted(files):
                file_path = Path(root) / file
                if file_path.suffix.lower() in self.SUPPORTED_EXTENSIONS and os.access(file_path, os.R_OK):
                    try:
                        self.total_size += file_path.stat().st_size
                    except OSError:
                        continue
                    self.files_found.append(file_path)

        return self.files_found

    def scan_multiple_directories(self, directory_paths: List[str]) -> List[Path]:
        all_files: Set[Path] = set()
        for directory_path in directory_paths:
            try:
                all_files.update(self.scan_directory(directory_path))
            except (FileNotFoundError, NotADirectoryError) as e:
                logger.warning(f"{e}")
                continue

        self.files_found = sorted(all_files)
        self.total_size = sum(f.stat().st_size for f in self.files_found)
        return self.files_found

    def get_stats(self) -> dict:
        return {
            'total_files': len(self.files_found),
            'total_size_bytes': self.total_size,
            'total_size_kb': round(self.total_size / 1024, 2),
        }

    @staticmethod
    def is_supported_file(file_path: str) -> bool:
        return Path(file_path).suffix.lower() in Scanner.SUPPORTED_EXTENSIONS
