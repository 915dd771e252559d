import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from markset.services.simulate import MarkedSetSample

logger = logging.getLogger(__name__)


class DataProcessor:
    """Handles writing of curves, reports, samples and manifests."""

    @staticmethod
    def get_output_dir(base_dir: Union[str, Path], experiment: str) -> Path:
        """Get the output directory for an experiment, creating it if needed."""
        out = Path(base_dir) / experiment
        out.mkdir(parents=True, exist_ok=True)
        return out

    @staticmethod
    def save_json(data: Union[BaseModel, Dict[str, Any], List[Any]], output_path: Path) -> str:
        """Save a pydantic model or plain structure to a JSON file."""
        try:
            output_path = Path(output_path)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            if isinstance(data, BaseModel):
                text = data.model_dump_json(indent=2)
            else:
                text = json.dumps(data, indent=2, default=_json_default)
            output_path.write_text(text, encoding="utf-8")
            logger.info(f"Saved {output_path.name} to {output_path.parent}")
            return str(output_path)
        except Exception as e:
            logger.error(f"Error saving JSON {output_path}: {str(e)}")
            raise

    @staticmethod
    def save_table(rows: Union[pd.DataFrame, List[Dict[str, Any]]], output_path: Path) -> str:
        """Save tabular rows as CSV with full float precision."""
        try:
            output_path = Path(output_path)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
            frame.to_csv(output_path, index=False, float_format="%.17g", lineterminator="\n")
            logger.info(f"Saved {len(frame)} rows to {output_path}")
            return str(output_path)
        except Exception as e:
            logger.error(f"Error saving table {output_path}: {str(e)}")
            raise

    @staticmethod
    def save_sample(sample: MarkedSetSample, output_path: Path) -> str:
        """Export a sample as CSV (``.csv``) or numpy archive (``.npz``)."""
        try:
            output_path = Path(output_path)
            if output_path.suffix not in (".csv", ".npz"):
                raise ValueError(f"unsupported sample format {output_path.suffix!r}")
            if output_path.suffix == ".csv":
                return DataProcessor.save_table(sample.to_frame(), output_path)
            output_path.parent.mkdir(parents=True, exist_ok=True)
            np.savez(
                output_path,
                coordinates=sample.grid.coordinates(),
                membership=sample.membership.ravel(),
                atomic=sample.atomic.ravel(),
                marks=sample.marks.ravel(),
                spacing=sample.grid.spacing,
                periodic=sample.grid.periodic,
            )
            logger.info(f"Saved sample archive to {output_path}")
            return str(output_path)
        except Exception as e:
            logger.error(f"Error saving sample {output_path}: {str(e)}")
            raise


def _json_default(value: Any):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, BaseModel):
        return value.model_dump()
    return str(value)
