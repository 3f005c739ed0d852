from core.event_logger import RunLogger
from utils.stage_timer import StageTimer


def test_events_are_appended_as_json_lines(tmp_path, capsys):
    logger = RunLogger(str(tmp_path), echo=True)
    logger.log_event("tile", "patches", "120 patches", count=120)
    logger.log_event("evaluate", "metrics")
    records = logger.read()
    assert [r["stage"] for r in records] == ["tile", "evaluate"]
    assert records[0]["metadata"] == {"count": 120}
    out = capsys.readouterr().out
    assert "[TILE] 120 patches" in out
    assert "[EVALUATE] metrics" in out


def test_epoch_callback_logs_every_nth_epoch(tmp_path):
    logger = RunLogger(str(tmp_path), echo=False)
    callback = logger.epoch_callback("train-grader", every=2)
    for epoch in range(1, 6):
        callback({"epoch": epoch, "loss": 1.0 / epoch, "accuracy": 0.5})
    assert [r["metadata"]["epoch"] for r in logger.read()] == [2, 4]


def test_stage_timer_accumulates():
    timer = StageTimer()
    with timer.measure("tile"):
        pass
    with timer.measure("tile"):
        pass
    assert timer.elapsed("tile") >= 0.0
    assert timer.elapsed("predict") == 0.0
    assert timer.total() == timer.elapsed("tile")
