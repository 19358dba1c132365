from .data import setup_data_commands
from .evaluation import setup_evaluation_commands
from .training import setup_training_commands

__all__ = [
    "setup_data_commands",
    "setup_evaluation_commands",
    "setup_training_commands",
]
