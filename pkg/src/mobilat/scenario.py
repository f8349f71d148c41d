"""Hardware scenario keys."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class ScenarioKey:
    """One hardware configuration, written ``device:accelerator:core_combo:dtype``.

    ``core_combo`` names big.LITTLE core choices such as ``1L`` or ``1L+4S`` and
    is empty for GPU scenarios.
    """

    device: str
    accelerator: str
    core_combo: str = ""
    dtype: str = "f32"

    def __post_init__(self):
        if not self.device or ":" in self.device:
            raise ValueError(f"bad device name {self.device!r}")
        if self.accelerator not in ("cpu", "gpu"):
            raise ValueError(f"accelerator must be 'cpu' or 'gpu', got {self.accelerator!r}")
        if self.dtype not in ("f32", "i8"):
            raise ValueError(f"dtype must be 'f32' or 'i8', got {self.dtype!r}")
        if self.accelerator == "gpu" and self.dtype != "f32":
            raise ValueError("GPU scenarios are float32 only")
        if self.accelerator == "gpu" and self.core_combo:
            raise ValueError("GPU scenarios take no core combination")
        if ":" in self.core_combo:
            raise ValueError(f"bad core combination {self.core_combo!r}")

    @property
    def is_gpu(self) -> bool:
        return self.accelerator == "gpu"

    def __str__(self):
        return f"{self.device}:{self.accelerator}:{self.core_combo}:{self.dtype}"

    @classmethod
    def parse(cls, text: str) -> "ScenarioKey":
        parts = text.split(":")
        if len(parts) == 2:
            parts += ["", "f32"]
        elif len(parts) == 3:
            parts.append("f32")
        if len(parts) != 4:
            raise ValueError(f"scenario must look like device:accelerator[:cores[:dtype]], got {text!r}")
        return cls(*parts)
