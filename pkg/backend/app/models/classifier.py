"""
Linear classifier models.
Defines the one-against-all linear SVM over sparse codes.
"""

import numpy as np
from pydantic import BaseModel, Field, validator, root_validator


class LinearSvmModel(BaseModel):
    """C binary linear machines, machine c separating class c from the rest."""

    weights: np.ndarray = Field(..., description="C x K weight matrix, row c is w_c")
    biases: np.ndarray = Field(..., description="Length-C bias vector")
    c_svm: float = Field(..., gt=0, description="Regularization constant used in training")

    class Config:
        arbitrary_types_allowed = True

    @validator("weights", pre=True)
    def validate_weights(cls, v):
        v = np.array(v, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("weights must be a C x K matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("weights must be finite")
        return v

    @validator("biases", pre=True)
    def validate_biases(cls, v):
        v = np.array(v, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("biases must be finite")
        return v

    @root_validator(skip_on_failure=True)
    def validate_machine_count(cls, values):
        if values["weights"].shape[0] != values["biases"].shape[0]:
            raise ValueError("one bias per binary machine is required")
        return values

    @property
    def n_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[1])
