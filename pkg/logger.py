import json
import time
from typing import Any, Dict, Optional


def log_run(
    log_path: str,
    benchmark: str,
    stepper: str,
    tau: float,
    delta: float,
    horizon: float,
    ensemble: int,
    seed: int,
    wall_s: float,
    note: str = "",
    step_counts: Optional[Dict[str, Any]] = None,
    *,
    status: str = "ok",
    out_dir: str = "",
    failure: str = "",
) -> None:
    entry = {
        "ts": time.time(),
        "benchmark": benchmark,
        "stepper": stepper,
        "tau": tau,
        "delta": delta,
        "horizon": horizon,
        "ensemble": ensemble,
        "seed": seed,
        "wall_s": wall_s,
        "note": note,
        "status": status,
        "out_dir": out_dir,
        "failure": failure,
    }
    if step_counts:
        entry["step_counts"] = step_counts

    with open(log_path, "a", encoding="utf-8") as f:
        f.write(json.dumps(entry, ensure_ascii=False) + "\n")


def log_event(log_path: str, event: str, **fields: Any) -> None:
    entry = {"ts": time.time(), "event": event}
    entry.update(fields)
    with open(log_path, "a", encoding="utf-8") as f:
        f.write(json.dumps(entry, ensure_ascii=False, default=str) + "\n")
