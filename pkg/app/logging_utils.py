import json
import logging
import sys

_LEVEL = "INFO"


def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        formatter = JSONLogFormatter()
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        logger.propagate = False
    logger.setLevel(_LEVEL)
    return logger


def set_level(level: str) -> None:
    """Apply a level to every logger handed out by get_logger (CLI --verbose)."""
    global _LEVEL
    _LEVEL = level
    for name in list(logging.root.manager.loggerDict):
        logger = logging.getLogger(name)
        if any(isinstance(h.formatter, JSONLogFormatter) for h in logger.handlers):
            logger.setLevel(level)


class JSONLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "level": record.levelname,
            "logger": record.name,
            "message": record.msg if isinstance(record.msg, str) else str(record.msg),
        }
        if isinstance(record.msg, dict):
            payload["message"] = record.msg.get("event", "")
            payload.update(record.msg)
        if hasattr(record, "pathname"):
            payload["path"] = record.pathname
        if hasattr(record, "lineno"):
            payload["lineno"] = record.lineno
        if isinstance(record.args, dict):
            payload.update(record.args)
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False, default=str)
