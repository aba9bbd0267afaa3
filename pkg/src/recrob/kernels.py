"""Backend selection for the risk-evaluation kernels.

The compiled extension is preferred when importable; otherwise the numpy
implementation is used. Both expose the same functions and semantics, so
callers never need to know which one is active (``BACKEND`` says).
"""

try:
    from ._riskeval import BACKEND, risk_and_subgrad, risk_many
except ImportError:  # pragma: no cover - depends on how the wheel was built
    from ._riskeval_py import BACKEND, risk_and_subgrad, risk_many

__all__ = ["BACKEND", "risk_many", "risk_and_subgrad"]
