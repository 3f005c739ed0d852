"""Run logger recording pipeline events to a JSON-lines file."""

import json
import os
from datetime import datetime


class RunLogger:
    """Appends one JSON record per pipeline event to ``<run_dir>/logs/run.jsonl``."""

    def __init__(self, run_dir, echo=True):
        self.log_dir = os.path.join(run_dir, "logs")
        os.makedirs(self.log_dir, exist_ok=True)
        self.current_log_file = os.path.join(self.log_dir, "run.jsonl")
        self.echo = echo

    def log_event(self, stage, event, message=None, **data):
        record = {
            "timestamp": datetime.now().isoformat(),
            "stage": stage,
            "event": event,
            "metadata": data,
        }
        with open(self.current_log_file, "a") as f:
            f.write(json.dumps(record, default=str) + "\n")
        if self.echo:
            print(f"[{stage.upper()}] {message or event}")
        return record

    def epoch_callback(self, stage, every=10):
        """Progress hook for training loops; logs every ``every`` epochs."""
        def callback(entry):
            if every and entry["epoch"] % every == 0:
                self.log_event(stage, "epoch", f"epoch {entry['epoch']} loss={entry['loss']:.4f}", **entry)
        return callback

    def read(self):
        if not os.path.exists(self.current_log_file):
            return []
        with open(self.current_log_file) as f:
            return [json.loads(line) for line in f if line.strip()]
