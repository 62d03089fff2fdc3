from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .filesystem import RunDirectory
from .index import CheckpointIndex
from .serialization import Serializer

__all__ = ["Checkpoint", "CheckpointIndex", "RunDirectory", "Serializer", "load_checkpoint", "save_checkpoint"]
