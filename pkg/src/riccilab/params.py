"""Global scale and regularity parameters shared across modules."""

from dataclasses import dataclass

from .errors import RicciLabError


@dataclass(frozen=True)
class FlowParams:
    """Fixed soliton scale tau, dimension n, and Holder-proxy indices (k, gamma)."""

    tau: float = 1.0
    dim: int = 3
    holder_k: int = 2
    holder_gamma: float = 0.5

    def __post_init__(self):
        if not self.tau > 0:
            raise RicciLabError(f"tau must be positive, got {self.tau}")
        if self.dim < 2:
            raise RicciLabError(f"dim must be >= 2, got {self.dim}")
        if not self.holder_k > 1:
            raise RicciLabError(f"holder_k must be > 1, got {self.holder_k}")
        if not 0.0 < self.holder_gamma < 1.0:
            raise RicciLabError(
                f"holder_gamma must lie in (0,1), got {self.holder_gamma}"
            )

    @property
    def soliton_scale(self) -> float:
        """Round-soliton conformal factor 2*tau*(n-1)."""
        return 2.0 * self.tau * (self.dim - 1)
