from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict

from filmlab.mesh import Field, mean


class StopRecord(BaseModel):
    """When and why a path stopped."""
    time: float
    cause: Literal["energy", "mass"]


class PathState(BaseModel):
    """The 'working state' of one path: current field, time and stop status."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: Field
    t: float = 0.0
    stopped: StopRecord | None = None
    initial_mean: float

    @classmethod
    def start(cls, u0: Field) -> PathState:
        return cls(u=u0, t=0.0, initial_mean=mean(u0))

    @property
    def is_stopped(self) -> bool:
        return self.stopped is not None

    def advanced(self, u: Field, dt: float) -> PathState:
        return self.model_copy(update={"u": u, "t": self.t + dt})

    def frozen_at(self, time: float, cause: Literal["energy", "mass"]) -> PathState:
        return self.model_copy(update={"stopped": StopRecord(time=time, cause=cause)})

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, exclude={"u"})
