import json
import logging
from pathlib import Path
from typing import Iterable, Optional, Union

import click
import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("table", "csv", "json")


class ReportError(ValueError):
    pass


def to_frame(rows: Iterable[BaseModel]) -> pd.DataFrame:
    records = []
    for row in rows:
        record = row.model_dump()
        for key, value in record.items():
            if isinstance(value, list):
                record[key] = ";".join(str(v) for v in value)
        records.append(record)
    return pd.DataFrame.from_records(records)


def render(rows: Iterable[BaseModel], fmt: str = "table", decimals: int = 6) -> str:
    """
    Render report rows. table is aligned plain text, csv has a header row,
    json is one object per line. Output carries no timestamps.
    """
    rows = list(rows)
    if fmt not in REPORT_FORMATS:
        raise ReportError(f"unknown report format '{fmt}', expected one of {REPORT_FORMATS}")

    if fmt == "json":
        lines = [json.dumps(row.model_dump(mode="json"), sort_keys=False) for row in rows]
        return "\n".join(lines) + ("\n" if lines else "")

    frame = to_frame(rows)
    float_format = f"{{:.{decimals}f}}".format
    if fmt == "csv":
        return frame.to_csv(index=False, float_format=f"%.{decimals}f", lineterminator="\n")
    if frame.empty:
        return "(no rows)\n"
    return frame.to_string(index=False, float_format=float_format, na_rep="-") + "\n"


def emit(text: str, out: Optional[Union[str, Path]] = None) -> None:
    if out is None:
        click.echo(text, nl=False)
        return
    Path(out).write_text(text, encoding="utf-8")
    logger.info(f"💾 Report written to {out}")
