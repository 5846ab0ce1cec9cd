import numpy as np

from limset.errors import ParameterError

UINT64 = 1 << 64


class RngStream:
    """
    Philox stream keyed by (seed, stream_id). The counter starts at zero, so the pair
    fixes every draw; antithetic streams share the key and negate their increments.
    """

    def __init__(self, seed: int, stream_id: int = 0, antithetic: bool = False):
        if not 0 <= seed < UINT64 or not 0 <= stream_id < UINT64:
            raise ParameterError(f"seed and stream_id must be 64-bit unsigned, got {seed}, {stream_id}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.antithetic = antithetic
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    @property
    def sign(self) -> float:
        return -1.0 if self.antithetic else 1.0

    def fresh(self) -> "RngStream":
        """Same stream rewound to counter zero."""
        return RngStream(self.seed, self.stream_id, self.antithetic)

    def mirror(self) -> "RngStream":
        return RngStream(self.seed, self.stream_id, not self.antithetic)

    def to_json(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id, "antithetic": self.antithetic}

    def __repr__(self) -> str:
        flag = ", antithetic" if self.antithetic else ""
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}{flag})"


def streams(seed: int, count: int) -> list[RngStream]:
    if count < 1:
        raise ParameterError(f"need at least one stream, got {count}")
    return [RngStream(seed, i) for i in range(count)]
