import os
import json
import datetime
import uuid
from typing import Dict, Optional

from evaluation.metrics import EvalReport


def append_jsonl(path: str, record: Dict) -> None:
    """One JSON object per line; keys sorted so equal records give equal bytes."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def log_epoch(path: str, epoch: int, losses: Dict[str, float], valid: Dict[str, float], improved: bool) -> Dict:
    """
    Training log line. No wall-clock fields: a fixed seed must reproduce
    the file byte for byte.
    """
    record = {
        "epoch": epoch,
        "L_bpr": losses.get("bpr", 0.0),
        "L_rs": losses.get("rsp", 0.0) + losses.get("rsu", 0.0) + losses.get("rsc", 0.0),
        "L_dr": losses.get("dr", 0.0),
        "reg": losses.get("reg", 0.0),
        "total": losses.get("total", 0.0),
        **valid,
        "improved": improved,
    }
    append_jsonl(path, record)
    return record


def log_evaluation(
    report: EvalReport,
    run: Dict,
    output_path: str = "logs/evaluations_detailed.jsonl",
    execution_id: Optional[str] = None,
):
    """
    Guarda en disco un registro auditable y trazable de una evaluación:
    configuración de la ejecución, métricas y flags derivadas.
    """

    if execution_id is None:
        execution_id = str(uuid.uuid4())

    hr5 = report.hr.get(5)

    record = {
        "execution_id": execution_id,
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),

        # Ejecución (split, ablación, semillas, checkpoint)
        "run": run,

        # Métricas
        "report": report.to_dict(),

        # Flags derivadas (clave para análisis posterior)
        "flags": {
            "has_interval": any(v is not None for v in report.hr_ci.values()),
            "beats_random_hr5": hr5 is not None and hr5 > 0.05,
            "has_skipped_users": report.skipped > 0,
        },
    }

    append_jsonl(output_path, record)
    return record
