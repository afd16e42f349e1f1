from pydantic import BaseModel


class FrozenModel(BaseModel):
    """Immutable, hashable parameter set shared by every service module."""

    class Config:
        frozen = True
        extra = "forbid"
