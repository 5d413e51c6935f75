import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from .utils.io import write_csv, write_json, write_text

logger = logging.getLogger(__name__)

STEP_COLUMNS = ["step", "t_mean", "loss", "node_loss", "edge_loss", "grad_norm"]


class TrainingLogger:
    def __init__(self, base_dir: Union[str, Path] = "runs"):
        """Initialize the run logger.

        Args:
            base_dir: Parent directory for run folders
        """
        self.base_dir = Path(base_dir)
        self.current_run_dir: Optional[Path] = None
        self.step_logs: List[Dict[str, float]] = []

    def start_new_run(self, run_dir: Optional[Union[str, Path]] = None) -> Path:
        """Create the directory for this run (timestamped unless given)."""
        if run_dir is None:
            timestamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
            run_dir = self.base_dir / f"train_{timestamp}"
        self.current_run_dir = Path(run_dir)
        os.makedirs(self.current_run_dir, exist_ok=True)
        self.step_logs = []
        return self.current_run_dir

    def log_step(self, step: int, t_mean: float, loss: float, node_loss: float,
                 edge_loss: float, grad_norm: float) -> None:
        """Record one optimizer step."""
        self.step_logs.append({
            "step": step,
            "t_mean": t_mean,
            "loss": loss,
            "node_loss": node_loss,
            "edge_loss": edge_loss,
            "grad_norm": grad_norm,
        })

    def get_step_data(self) -> pd.DataFrame:
        return pd.DataFrame(self.step_logs, columns=STEP_COLUMNS)

    def summary(self) -> Dict[str, Any]:
        """Loss statistics over the logged steps."""
        data = self.get_step_data()
        if data.empty:
            return {"steps": 0}
        head = data["loss"].head(10).mean()
        tail = data["loss"].tail(10).mean()
        return {
            "steps": int(len(data)),
            "first_step": int(data["step"].iloc[0]),
            "last_step": int(data["step"].iloc[-1]),
            "initial_loss_mean10": float(head),
            "final_loss_mean10": float(tail),
            "loss_ratio": float(tail / head) if head else None,
            "mean_grad_norm": float(data["grad_norm"].mean()),
        }

    def save_logs(self, extra: Optional[Dict[str, Any]] = None) -> None:
        """Write train_log.csv, summary.json and summary.txt into the run directory."""
        if not self.current_run_dir:
            raise RuntimeError("No active training run. Call start_new_run() first.")
        write_csv(self.current_run_dir / "train_log.csv", self.get_step_data())
        summary = {**self.summary(), **(extra or {})}
        write_json(self.current_run_dir / "summary.json", summary)

        lines = ["Training summary", "================", ""]
        for key, value in summary.items():
            if isinstance(value, float):
                value = f"{value:.6g}"
            elif isinstance(value, (dict, list)):
                value = json.dumps(value)
            lines.append(f"{key}: {value}")
        write_text(self.current_run_dir / "summary.txt", "\n".join(lines) + "\n")
        logger.info("training logs saved to %s", self.current_run_dir)
