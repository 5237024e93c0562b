import math

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from fractal_cut_locus.config import Config


def canonical_dimension_n(k: int) -> int:
    return (3 ** (k - 1) + 3) // 2


class ConstructionParams(BaseModel):
    """Global knobs consumed by every formula of the construction.

    k is the differentiability order, n the ambient dimension, phi the opening
    angle of the root cone, epsilon the dilatation distance and tail_tol the
    relative truncation tolerance for infinite sums.
    """

    model_config = ConfigDict(frozen=True)

    k: int = Field(default=3, ge=2)
    n: int = Field(default=3, ge=2)
    phi: float = math.pi / 4
    epsilon: float = 0.1
    tail_tol: float = Field(default_factory=Config.tail_tol)
    canonical: bool = False

    @field_validator("phi")
    @classmethod
    def validate_phi(cls, v: float) -> float:
        if not 0.0 < v < math.pi / 2:
            raise ValueError(f"phi must lie in (0, pi/2), got {v}")
        return v

    @field_validator("epsilon")
    @classmethod
    def validate_epsilon(cls, v: float) -> float:
        if v <= 0.0:
            raise ValueError(f"epsilon must be positive, got {v}")
        return v

    @field_validator("tail_tol")
    @classmethod
    def validate_tail_tol(cls, v: float) -> float:
        if not 0.0 < v <= 1e-6:
            raise ValueError(f"tail_tol must lie in (0, 1e-6], got {v}")
        return v

    @model_validator(mode="after")
    def validate_canonical(self) -> "ConstructionParams":
        if self.canonical and self.n != canonical_dimension_n(self.k):
            raise ValueError(
                f"canonical mode requires n = {canonical_dimension_n(self.k)} for k = {self.k}, got n = {self.n}"
            )
        return self

    @classmethod
    def canonical_for(cls, k: int, **kwargs) -> "ConstructionParams":
        return cls(k=k, n=canonical_dimension_n(k), canonical=True, **kwargs)

    @property
    def contraction(self) -> float:
        return 3.0 ** (1 - self.k)

    @property
    def alphabet(self) -> tuple[int, ...]:
        return tuple(range(-(self.n - 1), self.n))

    @property
    def branching(self) -> int:
        return 2 * self.n - 1
