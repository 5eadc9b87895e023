"""Supervisor for external models speaking the newline-delimited JSON protocol.

The wire format is documented in ``docs/adapter-protocol.md``. The engine
writes feature files, sends paths, and receives per-epoch validation metrics
and test predictions. Test labels are never written or sent; the engine
scores predictions itself.
"""
import collections
import json
import logging
import queue
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import container
from ..errors import AdapterTimeout, NonZeroExit, ProtocolViolation
from .base import EpochRecord, ModelRun, select_epoch

log = logging.getLogger(__name__)

PROTOCOL = "emerbench-adapter/1"
_EOF = object()


@dataclass(frozen=True)
class AdapterConfig:
    timeout: float = 60.0  # seconds allowed for each expected reply
    task: str = "SubjectDependent"
    seed: int = 0
    stderr_lines: int = 40


class AdapterSession:
    """One supervised child process; records every line sent and received."""

    def __init__(self, command, timeout=60.0, stderr_lines=40, cwd=None):
        self.timeout = timeout
        self.transcript = []  # ("send" | "recv", line)
        self._stderr = collections.deque(maxlen=stderr_lines)
        self._lines = queue.Queue()
        try:
            self.proc = subprocess.Popen(
                list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                text=True, bufsize=1, cwd=cwd,
            )
        except OSError as exc:
            raise NonZeroExit(f"cannot start adapter {command!r}: {exc}") from exc
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()

    def _pump_stdout(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _pump_stderr(self):
        for line in self.proc.stderr:
            self._stderr.append(line.rstrip("\n"))

    @property
    def stderr_tail(self) -> str:
        return "\n".join(self._stderr)

    def send(self, message):
        line = json.dumps({"protocol": PROTOCOL, **message}, sort_keys=True)
        self.transcript.append(("send", line))
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._raise_exit(f"adapter closed its input before {message.get('type')!r}")

    def _raise_exit(self, what):
        try:
            code = self.proc.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            self.kill()
            raise AdapterTimeout(f"{what}; adapter did not exit", self.stderr_tail) from None
        if code != 0:
            raise NonZeroExit(f"{what}; adapter exited with status {code}", self.stderr_tail)
        raise ProtocolViolation(f"{what}; adapter exited early with status 0", self.stderr_tail)

    def receive(self, expected):
        """Next non-log message, which must have one of the ``expected`` types."""
        while True:
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                self.kill()
                raise AdapterTimeout(
                    f"no reply within {self.timeout:g} s while waiting for {'/'.join(expected)}", self.stderr_tail
                ) from None
            if line is _EOF:
                self._raise_exit(f"adapter output ended while waiting for {'/'.join(expected)}")
            line = line.rstrip("\n")
            self.transcript.append(("recv", line))
            if not line.strip():
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                raise ProtocolViolation(f"adapter sent non-JSON line: {line[:200]!r}", self.stderr_tail) from None
            if not isinstance(msg, dict) or "type" not in msg:
                raise ProtocolViolation(f"adapter message lacks a type: {line[:200]!r}", self.stderr_tail)
            if msg.get("protocol", PROTOCOL) != PROTOCOL:
                raise ProtocolViolation(f"unsupported protocol {msg.get('protocol')!r}", self.stderr_tail)
            if msg["type"] == "log":
                log.info("adapter: %s", msg.get("message", ""))
                continue
            if msg["type"] == "error":
                raise ProtocolViolation(f"adapter reported an error: {msg.get('message', '')}", self.stderr_tail)
            if msg["type"] not in expected:
                raise ProtocolViolation(
                    f"expected {'/'.join(expected)}, adapter sent {msg['type']!r}", self.stderr_tail
                )
            return msg

    def close(self):
        if self.proc.poll() is None:
            try:
                self.send({"type": "shutdown"})
                self.proc.stdin.close()
            except Exception:
                pass
            try:
                code = self.proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                self.kill()
                raise AdapterTimeout("adapter ignored shutdown", self.stderr_tail) from None
            if code != 0:
                raise NonZeroExit(f"adapter exited with status {code} after shutdown", self.stderr_tail)

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()


def _write_split(directory, name, sample_set, with_labels):
    features = {}
    for modality, X in sorted(sample_set.X.items()):
        path = Path(directory) / f"{name}_{modality}.emrc"
        container.write_container(path, np.asarray(X).T, 1.0)
        features[modality] = str(path)
    out = {"features": features, "n": len(sample_set)}
    if with_labels:
        path = Path(directory) / f"{name}_labels.emrc"
        container.write_container(path, np.asarray(sample_set.y, dtype=np.float64)[None, :], 1.0)
        out["labels"] = str(path)
    return out


def _as_float(msg, key):
    v = msg.get(key)
    if v is None and key == "train_loss":
        return float("nan")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProtocolViolation(f"epoch message field {key!r} must be a number, got {v!r}")
    return float(v)


def adapter_run(command, splits, config: AdapterConfig = AdapterConfig(), n_classes=None, model_id="adapter",
                workdir=None, session_hook=None) -> ModelRun:
    """Train and query an external model; ``ModelRun.test_predictions`` holds its test labels.

    ``splits`` maps ``train``/``val``/``test`` to ``SampleSet``s. Only train
    and val labels are written to disk for the child.
    """
    train, val, test = splits["train"], splits["val"], splits["test"]
    k = int(n_classes if n_classes is not None else max(train.y.max(), val.y.max()) + 1)
    with tempfile.TemporaryDirectory(prefix="emerbench-adapter-", dir=workdir) as tmp:
        files = {
            "train": _write_split(tmp, "train", train, True),
            "val": _write_split(tmp, "val", val, True),
            "test": _write_split(tmp, "test", test, False),
        }
        session = AdapterSession(command, config.timeout, config.stderr_lines, cwd=tmp)
        if session_hook is not None:
            session_hook(session)
        try:
            dims = {m: int(np.asarray(X).shape[1]) for m, X in sorted(train.X.items())}
            session.send({"type": "init", "task": config.task, "dims": dims, "classes": k, "seed": config.seed})
            session.receive(["ack"])
            session.send({"type": "fit", "train": files["train"], "val": files["val"]})
            history = []
            while True:
                msg = session.receive(["epoch", "fitted"])
                if msg["type"] == "fitted":
                    break
                epoch = msg.get("epoch")
                if not isinstance(epoch, int) or epoch != len(history) + 1:
                    raise ProtocolViolation(f"epochs must be numbered 1, 2, ...; got {epoch!r}", session.stderr_tail)
                acc, f1 = _as_float(msg, "val_accuracy"), _as_float(msg, "val_f1")
                if not (0 <= acc <= 1 and 0 <= f1 <= 1):
                    raise ProtocolViolation(f"validation metrics outside [0, 1] at epoch {epoch}", session.stderr_tail)
                history.append(EpochRecord(epoch, _as_float(msg, "train_loss"), acc, f1))
            if not history:
                raise ProtocolViolation("adapter finished fitting without reporting any epoch", session.stderr_tail)
            selected = select_epoch(history)
            session.send({"type": "predict", "test": files["test"], "epoch": selected})
            msg = session.receive(["predictions"])
            labels = msg.get("labels")
            if not isinstance(labels, list) or len(labels) != len(test):
                got = len(labels) if isinstance(labels, list) else type(labels).__name__
                raise ProtocolViolation(f"expected {len(test)} predictions, got {got}", session.stderr_tail)
            if not all(isinstance(v, int) and not isinstance(v, bool) and 0 <= v < k for v in labels):
                raise ProtocolViolation(f"predictions must be integers in 0..{k - 1}", session.stderr_tail)
            session.close()
        finally:
            session.kill()
    return ModelRun(
        model_id, history, selected, config.seed, {}, {"command": list(command), "timeout": config.timeout},
        test_predictions=np.array(labels, dtype=np.int64), transcript=list(session.transcript),
    )
