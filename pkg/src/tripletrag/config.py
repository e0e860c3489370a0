from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class RunConfig:
    """Every knob of an indexing, query or evaluation run.

    Defaults reproduce the reference setup: 1200-token chunks with 100
    tokens of overlap, k=5 unique chunks per round, at most 3 rounds.
    """

    k: int = 5
    max_rounds: int = 3
    chunk_size: int = 1200
    overlap: int = 100
    pool_mult: int = 8
    prepend_title: bool = True
    dedup_rounds: bool = False
    propagate_bindings: bool = False
    chunk_char_budget: int | None = None
    embed_batch_size: int = 64
    workers: int = 1
    backend: str = "mock"
    transcript: str | None = None
    strict_mock: bool = True
    mock_dim: int = 512
    endpoint: str | None = None
    model: str | None = None
    embed_model: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    error_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if not 0 <= self.overlap < self.chunk_size:
            raise ValueError("overlap must satisfy 0 <= overlap < chunk_size")
        if self.pool_mult < 1:
            raise ValueError("pool_mult must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def pool_width(self) -> int:
        return self.pool_mult * self.k

    def to_dict(self) -> dict:
        return asdict(self)
