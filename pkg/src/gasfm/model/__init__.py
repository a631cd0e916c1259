from .layers import PatchEmbedding, RotaryAttention, num_patches
from .network import CheckpointError, GasFM, build_model, clone_model, load_checkpoint, save_checkpoint
from .rope import apply_rope, rope_pair
