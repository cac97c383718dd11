from .checkpoint import Checkpoint, file_fingerprint
from .layers import MLP, Embedding, Linear, Module, Parameter, ReLU, ResidualBlock, f32, sinusoidal_encoding
from .optim import Adam, EarlyStopping, adam_step, lr_at
from .tape import Node, Tape

__all__ = [
    "Adam",
    "Checkpoint",
    "EarlyStopping",
    "Embedding",
    "Linear",
    "MLP",
    "Module",
    "Node",
    "Parameter",
    "ReLU",
    "ResidualBlock",
    "Tape",
    "adam_step",
    "f32",
    "file_fingerprint",
    "lr_at",
    "sinusoidal_encoding",
]
