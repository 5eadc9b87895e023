"""Reference adapter: predicts the most frequent training class.

Run as ``python -m emerbench.adapters.majority``. Speaks the adapter
protocol on stdin/stdout and serves as a template for wrapping external
models.
"""
import json
import sys

import numpy as np

from emerbench.container import read_container, read_header
from emerbench.metrics import confusion_metrics

PROTOCOL = "emerbench-adapter/1"


def emit(obj):
    sys.stdout.write(json.dumps({"protocol": PROTOCOL, **obj}) + "\n")
    sys.stdout.flush()


def main():
    classes = None
    majority = None
    for line in sys.stdin:
        if not line.strip():
            continue
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "init":
            classes = int(msg["classes"])
            emit({"type": "ack", "name": "majority"})
        elif kind == "fit":
            y = read_container(msg["train"]["labels"])[0].ravel().astype(np.int64)
            counts = np.bincount(y, minlength=classes)
            majority = int(np.argmax(counts))  # ties -> smallest class index
            yv = read_container(msg["val"]["labels"])[0].ravel().astype(np.int64)
            m, _ = confusion_metrics(np.full(yv.size, majority), yv, classes)
            emit({"type": "epoch", "epoch": 1, "train_loss": None, "val_accuracy": m.accuracy, "val_f1": m.macro_f1})
            emit({"type": "fitted", "epochs": 1})
        elif kind == "predict":
            any_path = next(iter(msg["test"]["features"].values()))
            n = read_header(any_path).samples
            emit({"type": "predictions", "labels": [majority] * n})
        elif kind == "shutdown":
            return 0
        else:
            emit({"type": "error", "message": f"unsupported message type {kind!r}"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
