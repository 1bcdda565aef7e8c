"""Exception types shared by every module"""
from typing import Any, Dict, Optional


class DsaaeError(Exception):
    """Base class for all errors raised by this package"""


class ValidationError(DsaaeError, ValueError):
    """Bad value: non-finite numbers, empty inputs, out-of-range settings"""


class ShapeError(ValidationError):
    """Dimension mismatch between matrices or against a model"""


class ConfigError(ValidationError):
    """Unknown config key, uncoercible value or broken config invariant"""


class ContractError(DsaaeError, RuntimeError):
    """Forward cache used out of order (stale or mismatched)"""


class FormatError(DsaaeError, ValueError):
    """File content does not follow the expected container layout"""


class TruncatedFileError(FormatError):
    """File payload shorter than its header announces"""


class ConsistencyError(FormatError):
    """Paired files disagree (e.g. image count vs label count)"""


class TrainingDivergedError(ValidationError):
    """Loss became non-finite during training"""

    def __init__(self, message: str, epoch: Optional[int] = None,
                 step: Optional[int] = None,
                 components: Optional[Dict[str, Any]] = None):
        self.epoch = epoch
        self.step = step
        self.components = components or {}
        details = ", ".join(f"{k}={v}" for k, v in self.components.items())
        where = f" (epoch {epoch}, step {step})" if epoch is not None else ""
        super().__init__(f"{message}{where}" + (f": {details}" if details else ""))
