"""Multimodal answer insertion: parsing, metrics and rollout rewards."""

from ._core import (
    M2ioError,
    Scorer,
    Server,
    canonical_completion,
    f1,
    f1_from,
    max_weight_assignment,
    order_score,
    parse_inserter_output,
    position_score,
    precision,
    recall,
    rouge_l,
    score_rollout,
    split_sentences,
    to_sequence,
    weighted_edit_distance,
)

__all__ = [
    "M2ioError",
    "RewardServer",
    "Scorer",
    "Server",
    "canonical_completion",
    "f1",
    "f1_from",
    "max_weight_assignment",
    "order_score",
    "parse_inserter_output",
    "position_score",
    "precision",
    "recall",
    "rouge_l",
    "score_rollout",
    "split_sentences",
    "to_sequence",
    "weighted_edit_distance",
]


class RewardServer:
    """Reward service on a background thread, usable as a context manager.

    >>> with RewardServer(Scorer("data.jsonl")) as srv:
    ...     srv.url
    """

    def __init__(self, scorer, host="127.0.0.1", port=0, alpha=0.8, workers=8):
        self._server = Server(scorer, alpha=alpha, workers=workers)
        self._host = host
        self._port = port
        self.port = None

    @property
    def url(self):
        return f"http://{self._host}:{self.port}"

    def start(self):
        self.port = self._server.start(self._host, self._port)
        return self

    def stop(self):
        self._server.stop()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
