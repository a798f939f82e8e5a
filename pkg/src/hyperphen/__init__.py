"""Self-explaining next-visit diagnosis prediction over patient hypergraphs.

Patients are hypergraphs (codes = nodes, visits = hyperedges).  The model
personalizes hierarchical code embeddings by message passing, repairs likely
false-negative diagnoses, extracts K editable temporal phenotypes, and
predicts the next visit's codes from the phenotypes alone — so clinicians can
edit an explanation and watch the prediction follow.
"""

from .data import Dataset, DiagnosisCode, PatientRecord, Visit, load_dataset, mask_diagnoses, split_dataset
from .model import ModelConfig, PhenotypeModel, load_checkpoint, save_checkpoint
from .synthetic import SyntheticConfig, generate_synthetic
from .training import TrainConfig, evaluate, train, train_single

__all__ = [
    "Dataset",
    "DiagnosisCode",
    "PatientRecord",
    "Visit",
    "load_dataset",
    "mask_diagnoses",
    "split_dataset",
    "ModelConfig",
    "PhenotypeModel",
    "load_checkpoint",
    "save_checkpoint",
    "SyntheticConfig",
    "generate_synthetic",
    "TrainConfig",
    "evaluate",
    "train",
    "train_single",
]

__version__ = "0.1.0"
